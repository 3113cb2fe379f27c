#pragma once

// Frame sequences as [batch, time, channel, height, width] tensors with
// values in [0, 1], plus the slice/stack plumbing between sequences and the
// per-frame tensors the model consumes.

#include "frnn/tensor.hpp"

namespace frnn {

template <typename S>
class SequenceBatch {
public:
    SequenceBatch() = default;

    explicit SequenceBatch(Tensor<S> values) : values_(std::move(values)) {
        if (values_.shape().size() != 5)
            throw ShapeError("sequence batch: shape " + shape_str(values_.shape()) +
                             ", expected [b t c h w]");
        for (S v : values_.data())
            if (!(v >= S(0) && v <= S(1)))
                throw std::runtime_error("sequence batch: value " + std::to_string(double(v)) +
                                         " outside [0, 1]");
    }

    const Tensor<S>& values() const { return values_; }
    Tensor<S>& values() { return values_; }

    std::size_t batch() const { return values_.shape()[0]; }
    std::size_t time() const { return values_.shape()[1]; }
    std::size_t channels() const { return values_.shape()[2]; }
    std::size_t height() const { return values_.shape()[3]; }
    std::size_t width() const { return values_.shape()[4]; }

    // Untracked copy of one time step, [b c h w].
    Tensor<S> frame(std::size_t t) const {
        const std::size_t b = batch(), chw = channels() * height() * width();
        Tensor<S> out({b, channels(), height(), width()});
        auto src = values_.data();
        auto dst = out.data();
        for (std::size_t bi = 0; bi < b; ++bi)
            std::copy(src.begin() + (bi * time() + t) * chw, src.begin() + (bi * time() + t + 1) * chw,
                      dst.begin() + bi * chw);
        return out;
    }

    // Untracked copy of a [t0, t0+len) window.
    SequenceBatch window(std::size_t t0, std::size_t len) const {
        if (t0 + len > time())
            throw ShapeError("sequence window [" + std::to_string(t0) + ", " +
                             std::to_string(t0 + len) + ") exceeds length " + std::to_string(time()));
        const std::size_t b = batch(), chw = channels() * height() * width();
        Tensor<S> out({b, len, channels(), height(), width()});
        auto src = values_.data();
        auto dst = out.data();
        for (std::size_t bi = 0; bi < b; ++bi)
            std::copy(src.begin() + (bi * time() + t0) * chw,
                      src.begin() + (bi * time() + t0 + len) * chw, dst.begin() + bi * len * chw);
        return SequenceBatch(out);
    }

private:
    Tensor<S> values_;
};

// Packs per-step frames [b c h w] into [b T c h w]; differentiable, so losses
// over whole predicted sequences reach every step.
template <typename S>
Tensor<S> stack_frames(const std::vector<Tensor<S>>& frames) {
    if (frames.empty()) throw ShapeError("stack_frames: no frames");
    const auto& fs = frames.front().shape();
    if (fs.size() != 4) throw ShapeError("stack_frames: frame shape " + shape_str(fs));
    const std::size_t b = fs[0], chw = fs[1] * fs[2] * fs[3], T = frames.size();
    Tensor<S> out({b, T, fs[1], fs[2], fs[3]});
    auto dst = out.data();
    Tape<S>* tp = nullptr;
    for (std::size_t t = 0; t < T; ++t) {
        detail::check_same_shape(frames[t], frames.front(), "stack_frames");
        auto src = frames[t].data();
        for (std::size_t bi = 0; bi < b; ++bi)
            std::copy(src.begin() + bi * chw, src.begin() + (bi + 1) * chw,
                      dst.begin() + (bi * T + t) * chw);
        if (frames[t].requires_grad()) {
            if (tp && tp != frames[t].tape())
                throw std::logic_error("stack_frames: frames on different tapes");
            tp = frames[t].tape();
        }
    }
    if (tp) {
        tp->attach(out);
        const int oid = out.node();
        std::vector<int> ids(T);
        for (std::size_t t = 0; t < T; ++t) ids[t] = frames[t].node();
        tp->record([oid, ids, b, chw, T](Tape<S>& tape) {
            if (!tape.grad_present(oid)) return;
            const auto& go = tape.grad_ref(oid);
            for (std::size_t t = 0; t < T; ++t) {
                if (ids[t] < 0) continue;
                auto& gf = tape.grad_ref(ids[t]);
                for (std::size_t bi = 0; bi < b; ++bi)
                    for (std::size_t i = 0; i < chw; ++i)
                        gf[bi * chw + i] += go[(bi * T + t) * chw + i];
            }
        });
    }
    return out;
}

}  // namespace frnn
