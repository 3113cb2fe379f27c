#pragma once

// Plain (ASCII P2) portable-graymap grids for qualitative frame dumps: one
// image row per frame row, cells separated by a single black column/line.

#include <fstream>

#include "frnn/tensor.hpp"

namespace frnn {

// rows: lists of [c h w] frames, left-aligned; empty cells render black.
// Channel 0 is shown. `cols` fixes the grid width.
inline std::string pgm_grid(const std::vector<std::vector<Tensor<float>>>& rows, std::size_t cols,
                            std::size_t frame_h, std::size_t frame_w) {
    const std::size_t sep = 1;
    const std::size_t grid_h = rows.size() * frame_h + (rows.size() - 1) * sep;
    const std::size_t grid_w = cols * frame_w + (cols - 1) * sep;
    std::vector<int> px(grid_h * grid_w, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size() && c < cols; ++c) {
            const Tensor<float>& f = rows[r][c];
            if (f.empty()) continue;
            auto d = f.data();
            for (std::size_t y = 0; y < frame_h; ++y)
                for (std::size_t x = 0; x < frame_w; ++x) {
                    const float v = d[y * frame_w + x];
                    px[(r * (frame_h + sep) + y) * grid_w + c * (frame_w + sep) + x] =
                        static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                }
        }
    }
    std::ostringstream os;
    os << "P2\n" << grid_w << ' ' << grid_h << "\n255\n";
    for (std::size_t y = 0; y < grid_h; ++y) {
        for (std::size_t x = 0; x < grid_w; ++x) {
            if (x) os << ' ';
            os << px[y * grid_w + x];
        }
        os << '\n';
    }
    return os.str();
}

inline void write_pgm_grid(const std::string& path, const std::vector<std::vector<Tensor<float>>>& rows,
                           std::size_t cols, std::size_t frame_h, std::size_t frame_w) {
    std::ofstream os(path);
    if (!os) throw FileError("cannot open '" + path + "' for writing");
    os << pgm_grid(rows, cols, frame_h, frame_w);
    if (!os) throw FileError("write failed for '" + path + "'");
}

}  // namespace frnn
