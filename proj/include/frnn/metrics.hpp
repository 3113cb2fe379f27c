#pragma once

// Evaluation metrics over [0,1] frames: MSE, PSNR (dynamic range 1), and
// DSSIM = (1 - mean SSIM) / 2 with an 11x11 Gaussian window, sigma 1.5,
// valid-window coverage and per-channel averaging. All statistics are
// accumulated in double regardless of the frame scalar type.

#include <array>
#include <cstdio>
#include <limits>

#include "frnn/sequence.hpp"

namespace frnn {

template <typename S>
double mse(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mse");
    double acc = 0;
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = double(av[i]) - double(bv[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(av.size());
}

// 10 log10(1 / mse) dB; identical frames give +infinity.
template <typename S>
double psnr(const Tensor<S>& a, const Tensor<S>& b) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

namespace detail {

inline const std::array<double, 11>& ssim_window() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> v{};
        const double sigma = 1.5;
        double norm = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5;
            v[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
            norm += v[static_cast<std::size_t>(i)];
        }
        for (auto& x : v) x /= norm;
        return v;
    }();
    return w;
}

// Separable valid filtering of one [h x w] plane with the normalized window:
// horizontal pass into [h x (w-10)], vertical pass into [(h-10) x (w-10)].
inline void ssim_filter(const double* src, std::size_t h, std::size_t w, std::vector<double>& tmp,
                        std::vector<double>& dst) {
    const auto& win = ssim_window();
    const std::size_t wo = w - 10, ho = h - 10;
    tmp.assign(h * wo, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0;
            for (std::size_t k = 0; k < 11; ++k) acc += win[k] * src[y * w + x + k];
            tmp[y * wo + x] = acc;
        }
    dst.assign(ho * wo, 0.0);
    for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0;
            for (std::size_t k = 0; k < 11; ++k) acc += win[k] * tmp[(y + k) * wo + x];
            dst[y * wo + x] = acc;
        }
}

}  // namespace detail

// Mean SSIM over all valid window positions and channels.
template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "ssim");
    const auto& shape = a.shape();
    if (shape.size() < 2)
        throw ShapeError("ssim: frame shape " + shape_str(shape) + ", expected spatial extents");
    const std::size_t h = shape[shape.size() - 2], w = shape[shape.size() - 1];
    if (h < 11 || w < 11)
        throw ShapeError("ssim: frame " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the 11x11 window");
    std::size_t channels = 1;
    for (std::size_t d = 0; d + 2 < shape.size(); ++d) channels *= shape[d];

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // (k L)^2 with L = 1
    std::vector<double> pa(h * w), pb(h * w), prod(h * w);
    std::vector<double> tmp, mu_a, mu_b, m_aa, m_bb, m_ab;
    double total = 0;
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t off = c * h * w;
        for (std::size_t i = 0; i < h * w; ++i) {
            pa[i] = double(av[off + i]);
            pb[i] = double(bv[off + i]);
        }
        detail::ssim_filter(pa.data(), h, w, tmp, mu_a);
        detail::ssim_filter(pb.data(), h, w, tmp, mu_b);
        for (std::size_t i = 0; i < h * w; ++i) prod[i] = pa[i] * pa[i];
        detail::ssim_filter(prod.data(), h, w, tmp, m_aa);
        for (std::size_t i = 0; i < h * w; ++i) prod[i] = pb[i] * pb[i];
        detail::ssim_filter(prod.data(), h, w, tmp, m_bb);
        for (std::size_t i = 0; i < h * w; ++i) prod[i] = pa[i] * pb[i];
        detail::ssim_filter(prod.data(), h, w, tmp, m_ab);

        double acc = 0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = m_aa[i] - ma * ma;
            const double vb = m_bb[i] - mb * mb;
            const double cov = m_ab[i] - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(channels);
}

template <typename S>
double dssim(const Tensor<S>& a, const Tensor<S>& b) {
    return (1.0 - ssim(a, b)) / 2.0;
}

// Per-timestep means across the evaluation set, plus overall means. PSNR is
// infinite for identical frames; such frames are excluded from the mean and
// tracked in psnr_finite.
struct EvalReport {
    std::vector<double> mse;
    std::vector<double> psnr;
    std::vector<double> dssim;
    std::vector<std::size_t> psnr_finite;  // finite-psnr frame count per step
    std::size_t frames_per_step = 0;
    double mean_mse = 0;
    double mean_psnr = 0;
    double mean_dssim = 0;
};

template <typename S>
EvalReport evaluate(const SequenceBatch<S>& predictions, const SequenceBatch<S>& targets) {
    detail::check_same_shape(predictions.values(), targets.values(), "evaluate");
    const std::size_t b = predictions.batch(), p = predictions.time();
    EvalReport r;
    r.mse.assign(p, 0.0);
    r.psnr.assign(p, 0.0);
    r.dssim.assign(p, 0.0);
    r.psnr_finite.assign(p, 0);
    r.frames_per_step = b;
    const std::size_t chw = predictions.channels() * predictions.height() * predictions.width();
    const Shape frame_shape{predictions.channels(), predictions.height(), predictions.width()};
    auto pv = predictions.values().data();
    auto tv = targets.values().data();
    for (std::size_t t = 0; t < p; ++t) {
        double psnr_acc = 0;
        for (std::size_t bi = 0; bi < b; ++bi) {
            Tensor<S> pf(frame_shape), tf(frame_shape);
            const std::size_t off = (bi * p + t) * chw;
            std::copy(pv.begin() + off, pv.begin() + off + chw, pf.data().begin());
            std::copy(tv.begin() + off, tv.begin() + off + chw, tf.data().begin());
            const double m = mse(pf, tf);
            r.mse[t] += m;
            r.dssim[t] += dssim(pf, tf);
            const double q = psnr(pf, tf);
            if (std::isfinite(q)) {
                psnr_acc += q;
                ++r.psnr_finite[t];
            }
        }
        r.mse[t] /= static_cast<double>(b);
        r.dssim[t] /= static_cast<double>(b);
        r.psnr[t] = r.psnr_finite[t] ? psnr_acc / static_cast<double>(r.psnr_finite[t])
                                     : std::numeric_limits<double>::infinity();
    }
    std::size_t finite_steps = 0;
    for (std::size_t t = 0; t < p; ++t) {
        r.mean_mse += r.mse[t];
        r.mean_dssim += r.dssim[t];
        if (std::isfinite(r.psnr[t])) {
            r.mean_psnr += r.psnr[t];
            ++finite_steps;
        }
    }
    r.mean_mse /= static_cast<double>(p);
    r.mean_dssim /= static_cast<double>(p);
    r.mean_psnr = finite_steps ? r.mean_psnr / static_cast<double>(finite_steps)
                               : std::numeric_limits<double>::infinity();
    return r;
}

// One row per time step: step, mse, psnr, dssim; trailing mean row.
inline std::string report_table(const EvalReport& r) {
    auto fmt = [](double v) {
        if (!std::isfinite(v)) return std::string("inf");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    std::string out = "# step mse psnr dssim\n";
    for (std::size_t t = 0; t < r.mse.size(); ++t)
        out += std::to_string(t + 1) + " " + fmt(r.mse[t]) + " " + fmt(r.psnr[t]) + " " +
               fmt(r.dssim[t]) + "\n";
    out += "# mean " + fmt(r.mean_mse) + " " + fmt(r.mean_psnr) + " " + fmt(r.mean_dssim) + "\n";
    return out;
}

}  // namespace frnn
