#pragma once

// Synthetic moving-sprites sequences with reflective boundary dynamics, IDX
// image ingestion for glyph sprites, the last-frame baseline, and the binary
// sequence file format.

#include <fstream>
#include <memory>

#include "frnn/io.hpp"
#include "frnn/sequence.hpp"

namespace frnn {

enum class SpriteSource { blobs, glyphs };

struct SpriteConfig {
    std::size_t canvas_height = 32;
    std::size_t canvas_width = 32;
    std::size_t frames = 20;
    std::size_t sprites = 2;
    SpriteSource source = SpriteSource::blobs;
    std::size_t sprite_size = 5;  // procedural blob box extent
    std::int64_t speed_min = 1;   // per-axis magnitude, pixels per frame
    std::int64_t speed_max = 2;
    std::uint64_t seed = 0;
    std::shared_ptr<Tensor<float>> glyphs;  // [n h w], required for glyph source

    void validate() const {
        if (frames < 2) throw ShapeError("sprites: frames must be >= 2");
        if (sprites < 1) throw ShapeError("sprites: need at least one sprite");
        if (speed_min < 0 || speed_max < speed_min)
            throw ShapeError("sprites: speed range must satisfy 0 <= min <= max");
        const auto [sh, sw] = sprite_extent();
        if (sh >= canvas_height || sw >= canvas_width)
            throw ShapeError("sprites: sprite " + std::to_string(sh) + "x" + std::to_string(sw) +
                             " does not fit a " + std::to_string(canvas_height) + "x" +
                             std::to_string(canvas_width) + " canvas");
    }

    std::pair<std::size_t, std::size_t> sprite_extent() const {
        if (source == SpriteSource::blobs) return {sprite_size, sprite_size};
        if (!glyphs || glyphs->shape().size() != 3)
            throw ShapeError("sprites: glyph source needs a [n h w] glyph tensor");
        return {glyphs->shape()[1], glyphs->shape()[2]};
    }
};

struct SpriteTrack {
    Tensor<float> image;                                // [sh sw], values in [0,1]
    std::vector<std::pair<std::int64_t, std::int64_t>> positions;  // per frame (y, x)
};

// One axis step with reflection at [0, bound]: on contact the position
// mirrors, new_pos = 2*bound - (pos + v), and that velocity component flips.
inline std::pair<std::int64_t, std::int64_t> advance_position(std::int64_t pos, std::int64_t v,
                                                              std::int64_t bound) {
    std::int64_t next = pos + v;
    if (next > bound) {
        next = 2 * bound - next;
        v = -v;
    } else if (next < 0) {
        next = -next;
        v = -v;
    }
    return {next, v};
}

namespace detail {

inline Tensor<float> blob_image(std::size_t size) {
    Tensor<float> img({size, size});
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    const double radius = static_cast<double>(size) / 2.0;
    auto d = img.data();
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - c;
            const double dx = static_cast<double>(x) - c;
            const double v = 1.0 - std::sqrt(dy * dy + dx * dx) / radius;
            d[y * size + x] = static_cast<float>(std::max(0.0, v));
        }
    return img;
}

}  // namespace detail

// Sprite draws and trajectories for one sequence; pure in (cfg, index).
inline std::vector<SpriteTrack> sample_tracks(const SpriteConfig& cfg, std::uint64_t sequence_index) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(sequence_index);
    const auto [sh, sw] = cfg.sprite_extent();
    const auto bound_y = static_cast<std::int64_t>(cfg.canvas_height - sh);
    const auto bound_x = static_cast<std::int64_t>(cfg.canvas_width - sw);
    // keep to single-reflection dynamics: one bounce per axis per frame
    const std::int64_t vmax_y = std::min(cfg.speed_max, bound_y);
    const std::int64_t vmax_x = std::min(cfg.speed_max, bound_x);

    std::vector<SpriteTrack> tracks(cfg.sprites);
    for (auto& track : tracks) {
        if (cfg.source == SpriteSource::blobs) {
            track.image = detail::blob_image(cfg.sprite_size);
        } else {
            const auto n = cfg.glyphs->shape()[0];
            const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            track.image = Tensor<float>({sh, sw});
            auto src = cfg.glyphs->data();
            std::copy(src.begin() + pick * sh * sw, src.begin() + (pick + 1) * sh * sw,
                      track.image.data().begin());
        }
        std::int64_t y = rng.uniform_int(0, bound_y);
        std::int64_t x = rng.uniform_int(0, bound_x);
        std::int64_t vy = 0, vx = 0;
        do {
            const std::int64_t my = std::min(cfg.speed_min, vmax_y);
            const std::int64_t mx = std::min(cfg.speed_min, vmax_x);
            vy = rng.uniform_int(my, vmax_y) * (rng.uniform_int(0, 1) ? 1 : -1);
            vx = rng.uniform_int(mx, vmax_x) * (rng.uniform_int(0, 1) ? 1 : -1);
        } while (vy == 0 && vx == 0);
        track.positions.reserve(cfg.frames);
        track.positions.emplace_back(y, x);
        for (std::size_t t = 1; t < cfg.frames; ++t) {
            std::tie(y, vy) = advance_position(y, vy, bound_y);
            std::tie(x, vx) = advance_position(x, vx, bound_x);
            track.positions.emplace_back(y, x);
        }
    }
    return tracks;
}

// Pastes tracks onto a zero canvas with per-pixel maximum on overlap.
inline Tensor<float> render_tracks(const std::vector<SpriteTrack>& tracks, std::size_t frames,
                                   std::size_t canvas_height, std::size_t canvas_width) {
    Tensor<float> out({frames, 1, canvas_height, canvas_width});
    auto o = out.data();
    for (const auto& track : tracks) {
        const std::size_t sh = track.image.shape()[0], sw = track.image.shape()[1];
        auto img = track.image.data();
        for (std::size_t t = 0; t < frames; ++t) {
            const auto [y, x] = track.positions[t];
            float* frame = o.data() + t * canvas_height * canvas_width;
            for (std::size_t iy = 0; iy < sh; ++iy) {
                float* row = frame + (static_cast<std::size_t>(y) + iy) * canvas_width +
                             static_cast<std::size_t>(x);
                const float* src = img.data() + iy * sw;
                for (std::size_t ix = 0; ix < sw; ++ix) row[ix] = std::max(row[ix], src[ix]);
            }
        }
    }
    return out;
}

// `count` sequences of cfg.frames frames; deterministic given cfg.seed.
inline SequenceBatch<float> gen_sequences(const SpriteConfig& cfg, std::size_t count) {
    if (count < 1) throw ShapeError("gen_sequences: count must be >= 1");
    cfg.validate();
    Tensor<float> out({count, cfg.frames, 1, cfg.canvas_height, cfg.canvas_width});
    const std::size_t seq_len = cfg.frames * cfg.canvas_height * cfg.canvas_width;
    auto dst = out.data();
    for (std::size_t s = 0; s < count; ++s) {
        auto rendered = render_tracks(sample_tracks(cfg, s), cfg.frames, cfg.canvas_height, cfg.canvas_width);
        std::copy(rendered.data().begin(), rendered.data().end(), dst.begin() + s * seq_len);
    }
    return SequenceBatch<float>(std::move(out));
}

// ---------------------------------------------------------------------------
// IDX container parsing: 00 00 <type> <ndim>, big-endian u32 extents, u8
// payload scaled to [0,1].

inline Tensor<float> parse_idx(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4) throw FileError("idx: truncated header");
    if (bytes[0] != 0 || bytes[1] != 0) throw FileError("idx: bad magic");
    if (bytes[2] != 0x08)
        throw FileError("idx: unsupported type byte 0x" + std::to_string(bytes[2]) + ", only u8 (0x08)");
    const std::size_t ndim = bytes[3];
    if (ndim < 1 || ndim > 4) throw FileError("idx: unsupported dimension count " + std::to_string(ndim));
    if (bytes.size() < 4 + 4 * ndim) throw FileError("idx: truncated extent table");
    Shape shape(ndim);
    std::size_t numel = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
        const std::size_t off = 4 + 4 * d;
        shape[d] = (std::size_t(bytes[off]) << 24) | (std::size_t(bytes[off + 1]) << 16) |
                   (std::size_t(bytes[off + 2]) << 8) | std::size_t(bytes[off + 3]);
        if (shape[d] == 0) throw FileError("idx: zero extent");
        numel *= shape[d];
    }
    const std::size_t payload = 4 + 4 * ndim;
    if (bytes.size() < payload + numel) throw FileError("idx: truncated payload");
    Tensor<float> out(shape);
    auto o = out.data();
    for (std::size_t i = 0; i < numel; ++i) o[i] = static_cast<float>(bytes[payload + i]) / 255.0f;
    return out;
}

inline Tensor<float> load_idx(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
    return parse_idx(bytes);
}

// ---------------------------------------------------------------------------

// The final input frame repeated p times.
template <typename S>
SequenceBatch<S> last_frame_baseline(const SequenceBatch<S>& inputs, std::size_t p) {
    if (p < 1) throw ShapeError("last_frame_baseline: p must be >= 1");
    const std::size_t b = inputs.batch(), chw = inputs.channels() * inputs.height() * inputs.width();
    Tensor<S> out({b, p, inputs.channels(), inputs.height(), inputs.width()});
    auto last = inputs.frame(inputs.time() - 1);
    auto src = last.data();
    auto dst = out.data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t t = 0; t < p; ++t)
            std::copy(src.begin() + bi * chw, src.begin() + (bi + 1) * chw,
                      dst.begin() + (bi * p + t) * chw);
    return SequenceBatch<S>(std::move(out));
}

// ---------------------------------------------------------------------------
// Sequence files: magic "FRSQ", u32 version, u32 x5 shape, f32 payload.

inline constexpr char kSequenceMagic[4] = {'F', 'R', 'S', 'Q'};
inline constexpr std::uint32_t kSequenceVersion = 1;

inline void write_seq(const std::string& path, const SequenceBatch<float>& batch) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FileError("cannot open '" + path + "' for writing");
    io::write_magic(os, kSequenceMagic);
    io::write_u32(os, kSequenceVersion);
    for (std::size_t e : batch.values().shape()) io::write_u32(os, static_cast<std::uint32_t>(e));
    io::write_f32_array(os, batch.values().data().data(), batch.values().size());
    if (!os) throw FileError("write failed for '" + path + "'");
}

inline SequenceBatch<float> read_seq(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("cannot open '" + path + "' for reading");
    io::expect_magic(is, kSequenceMagic, "sequence");
    const std::uint32_t version = io::read_u32(is, "sequence version");
    if (version != kSequenceVersion)
        throw FileError("sequence version " + std::to_string(version) + " is not supported");
    Shape shape(5);
    for (auto& e : shape) e = io::read_u32(is, "sequence shape");
    Tensor<float> values(shape);
    io::read_f32_array(is, values.data().data(), values.size(), "sequence payload");
    return SequenceBatch<float>(std::move(values));
}

}  // namespace frnn
