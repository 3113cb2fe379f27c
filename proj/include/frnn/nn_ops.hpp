#pragma once

// Spatial primitives: same-padded stride-1 convolution and its transpose,
// 2x2 max pooling, nearest-neighbour upsampling, orthogonal initialization.
// Convolutions lower to im2col + a small blocked GEMM.

#include <cstring>

#include "frnn/tensor.hpp"

namespace frnn {

// Convolution weights [out_ch, in_ch, k, k] plus an optional per-channel
// bias [out_ch]; an empty bias tensor means no bias term.
template <typename S>
struct ConvKernel {
    Tensor<S> weights;
    Tensor<S> bias;

    std::size_t out_channels() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[1]; }
    std::size_t kernel() const { return weights.shape()[2]; }
};

template <typename S>
ConvKernel<S> make_kernel(std::size_t out_ch, std::size_t in_ch, std::size_t k, bool with_bias = true) {
    if (k % 2 == 0) throw ShapeError("kernel extent must be odd, got " + std::to_string(k));
    ConvKernel<S> kr;
    kr.weights = Tensor<S>::zeros({out_ch, in_ch, k, k});
    if (with_bias) kr.bias = Tensor<S>::zeros({out_ch});
    return kr;
}

namespace detail {

// Dot product with eight independent accumulators; the explicit chains let
// the compiler vectorize without reassociating a single serial reduction.
template <typename S>
S dot_span(const S* a, const S* b, std::size_t n) {
    S acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t u = 0; u < 8; ++u) acc[u] += a[i + u] * b[i + u];
    for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// C[M x N] += A[M x K] * B[K x N], row-major contiguous. Four output rows
// share each pass over a B row.
template <typename S>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B, S* C) {
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
        S* c0 = C + m * N;
        S* c1 = c0 + N;
        S* c2 = c1 + N;
        S* c3 = c2 + N;
        const S* a = A + m * K;
        for (std::size_t k = 0; k < K; ++k) {
            const S a0 = a[k], a1 = a[K + k], a2 = a[2 * K + k], a3 = a[3 * K + k];
            if (a0 == S(0) && a1 == S(0) && a2 == S(0) && a3 == S(0)) continue;
            const S* b = B + k * N;
            for (std::size_t n = 0; n < N; ++n) {
                const S bv = b[n];
                c0[n] += a0 * bv;
                c1[n] += a1 * bv;
                c2[n] += a2 * bv;
                c3[n] += a3 * bv;
            }
        }
    }
    for (; m < M; ++m) {
        S* c = C + m * N;
        const S* a = A + m * K;
        for (std::size_t k = 0; k < K; ++k) {
            const S av = a[k];
            if (av == S(0)) continue;
            const S* b = B + k * N;
            for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}


// C[K x N] = A[M x K]^T * B[M x N], overwriting C. Four input rows fold into
// each pass over an output row; the first pass writes, later ones accumulate.
template <typename S>
void gemm_set_tn(std::size_t K, std::size_t N, std::size_t M, const S* A, const S* B, S* C) {
    bool first = true;
    std::size_t m = 0;
    if (M >= 4) {
        for (; m + 4 <= M; m += 4) {
            const S* a = A + m * K;
            const S* b0 = B + m * N;
            const S* b1 = b0 + N;
            const S* b2 = b1 + N;
            const S* b3 = b2 + N;
            for (std::size_t k = 0; k < K; ++k) {
                const S a0 = a[k], a1 = a[K + k], a2 = a[2 * K + k], a3 = a[3 * K + k];
                S* c = C + k * N;
                if (first) {
                    for (std::size_t n = 0; n < N; ++n)
                        c[n] = a0 * b0[n] + a1 * b1[n] + a2 * b2[n] + a3 * b3[n];
                } else {
                    if (a0 == S(0) && a1 == S(0) && a2 == S(0) && a3 == S(0)) continue;
                    for (std::size_t n = 0; n < N; ++n)
                        c[n] += a0 * b0[n] + a1 * b1[n] + a2 * b2[n] + a3 * b3[n];
                }
            }
            first = false;
        }
    }
    for (; m < M; ++m) {
        const S* a = A + m * K;
        const S* b = B + m * N;
        for (std::size_t k = 0; k < K; ++k) {
            const S av = a[k];
            S* c = C + k * N;
            if (first) {
                for (std::size_t n = 0; n < N; ++n) c[n] = av * b[n];
            } else if (av != S(0)) {
                for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
            }
        }
        first = false;
    }
}

// Per-thread scratch for im2col patch matrices.
template <typename S>
std::vector<S>& col_scratch(std::size_t n) {
    thread_local std::vector<S> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// Patch matrix [in_ch*k*k x h*w] for one batch item, zero padding (k-1)/2.
template <typename S>
void im2col(const S* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, S* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        const S* plane = x + ci * hw;
        for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx, ++row) {
                S* dst = col + row * hw;
                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
                    S* d = dst + y * w;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(d, d + w, S(0));
                        continue;
                    }
                    const S* src = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t xo = 0; xo < w; ++xo) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo) + ox;
                        d[xo] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? S(0)
                                                                                 : src[static_cast<std::size_t>(sx)];
                    }
                }
            }
        }
    }
}

// Patch matrix in the transposed layout [h*w x in_ch*k*k]; weight gradients
// contract over positions, and this layout keeps that contraction on
// contiguous rows.
template <typename S>
void im2row(const S* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, S* rows) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    const std::size_t K = c_in * k * k;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xo = 0; xo < w; ++xo) {
            S* dst = rows + (y * w + xo) * K;
            std::size_t col = 0;
            for (std::size_t ci = 0; ci < c_in; ++ci) {
                const S* plane = x + ci * hw;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - pad;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                        for (std::size_t dx = 0; dx < k; ++dx) dst[col++] = S(0);
                        continue;
                    }
                    const S* src = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo + dx) - pad;
                        dst[col++] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w))
                                         ? S(0)
                                         : src[static_cast<std::size_t>(sx)];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds the patch matrix back onto the image.
template <typename S>
void col2im_acc(const S* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, S* x) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t hw = h * w;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        S* plane = x + ci * hw;
        for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx, ++row) {
                const S* src_row = col + row * hw;
                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const S* s = src_row + y * w;
                    S* dplane = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t xo = 0; xo < w; ++xo) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo) + ox;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        dplane[static_cast<std::size_t>(sx)] += s[xo];
                    }
                }
            }
        }
    }
}

template <typename S>
std::vector<S> flip_spatial(const Tensor<S>& weights) {
    const auto& s = weights.shape();
    const std::size_t co = s[0], ci = s[1], kh = s[2], kw = s[3];
    std::vector<S> out(weights.size());
    auto wv = weights.data();
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t a = 0; a < kh; ++a)
                for (std::size_t b = 0; b < kw; ++b)
                    out[((o * ci + i) * kh + (kh - 1 - a)) * kw + (kw - 1 - b)] =
                        wv[((o * ci + i) * kh + a) * kw + b];
    return out;
}

// Shared body for conv2d and conv2d_transpose (the latter correlates with
// the spatially flipped kernel, which makes it the adjoint of the former).
template <typename S>
Tensor<S> conv2d_impl(const Tensor<S>& x, const ConvKernel<S>& kr, bool flip) {
    if (x.shape().size() != 4)
        throw ShapeError("conv2d: input has shape " + shape_str(x.shape()) + ", expected [b c h w]");
    if (kr.weights.shape().size() != 4)
        throw ShapeError("conv2d: weights have shape " + shape_str(kr.weights.shape()) +
                         ", expected [out in k k]");
    const std::size_t b = x.shape()[0], c_in = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::size_t c_out = kr.out_channels(), k = kr.kernel();
    if (kr.in_channels() != c_in)
        throw ShapeError("conv2d: kernel expects " + std::to_string(kr.in_channels()) +
                         " input channels, input has " + std::to_string(c_in));
    if (k != kr.weights.shape()[3] || k % 2 == 0)
        throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                         shape_str(kr.weights.shape()));
    const bool with_bias = !kr.bias.empty();
    if (with_bias && kr.bias.shape() != Shape{c_out})
        throw ShapeError("conv2d: bias shape " + shape_str(kr.bias.shape()) + ", expected [" +
                         std::to_string(c_out) + "]");

    const std::size_t hw = h * w;
    const std::size_t K = c_in * k * k;
    Tensor<S> out({b, c_out, h, w});

    std::vector<S> weights = flip ? flip_spatial(kr.weights)
                                  : std::vector<S>(kr.weights.data().begin(), kr.weights.data().end());
    auto& col = col_scratch<S>(K * hw);
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t bi = 0; bi < b; ++bi) {
        im2col(xv.data() + bi * c_in * hw, c_in, h, w, k, col.data());
        S* out_b = o.data() + bi * c_out * hw;
        gemm_acc(c_out, hw, K, weights.data(), col.data(), out_b);
        if (with_bias) {
            auto bias = kr.bias.data();
            for (std::size_t co = 0; co < c_out; ++co) {
                const S bv = bias[co];
                S* plane = out_b + co * hw;
                for (std::size_t i = 0; i < hw; ++i) plane[i] += bv;
            }
        }
    }

    Tape<S>* tp = nullptr;
    {
        const Tensor<S>* parts[3] = {&x, &kr.weights, with_bias ? &kr.bias : &kr.weights};
        for (const Tensor<S>* t : parts) {
            if (!t->requires_grad()) continue;
            if (tp && tp != t->tape()) throw std::logic_error("conv2d: operands on different tapes");
            tp = t->tape();
        }
    }
    if (tp) {
        tp->attach(out);
        const int oid = out.node(), xid = x.node(), wid = kr.weights.node();
        const int bid = with_bias ? kr.bias.node() : -1;
        auto xbuf = x.buffer();
        auto wflip = std::make_shared<std::vector<S>>(std::move(weights));
        tp->record([=](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& colb = col_scratch<S>(K * hw);
            std::vector<S> dw_flipped;
            if (wid >= 0) dw_flipped.assign(c_out * K, S(0));
            for (std::size_t bi = 0; bi < b; ++bi) {
                const S* go_b = go.data() + bi * c_out * hw;
                if (wid >= 0) {
                    im2row(xbuf->data() + bi * c_in * hw, c_in, h, w, k, colb.data());
                    gemm_acc(c_out, K, hw, go_b, colb.data(), dw_flipped.data());
                }
                if (xid >= 0) {
                    gemm_set_tn(K, hw, c_out, wflip->data(), go_b, colb.data());
                    col2im_acc(colb.data(), c_in, h, w, k, t.grad_ref(xid).data() + bi * c_in * hw);
                }
                if (bid >= 0) {
                    auto& gb = t.grad_ref(bid);
                    for (std::size_t co = 0; co < c_out; ++co) {
                        const S* plane = go_b + co * hw;
                        S acc = 0;
                        for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
                        gb[co] += acc;
                    }
                }
            }
            if (wid >= 0) {
                auto& gw = t.grad_ref(wid);
                if (!flip) {
                    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw_flipped[i];
                } else {
                    // accumulated against the flipped kernel; unflip on the way back
                    const std::size_t kk = k * k;
                    for (std::size_t oc = 0; oc < c_out * c_in; ++oc)
                        for (std::size_t a = 0; a < kk; ++a)
                            gw[oc * kk + (kk - 1 - a)] += dw_flipped[oc * kk + a];
                }
            }
        });
    }
    return out;
}

}  // namespace detail

// Same-padded stride-1 cross-correlation plus bias; spatial extents preserved.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const ConvKernel<S>& k) {
    return detail::conv2d_impl(x, k, false);
}

// Adjoint of conv2d with respect to its input (transposed convolution), plus bias.
template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const ConvKernel<S>& k) {
    return detail::conv2d_impl(x, k, true);
}

// Per 2x2 block maximum; gradient routes to the argmax, ties resolved to the
// first element in row-major scan order.
template <typename S>
Tensor<S> maxpool2(const Tensor<S>& x) {
    if (x.shape().size() != 4)
        throw ShapeError("maxpool2: input has shape " + shape_str(x.shape()) + ", expected [b c h w]");
    const std::size_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("maxpool2: odd spatial extent in " + shape_str(x.shape()));
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor<S> out({b, c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
    auto xv = x.data();
    auto o = out.data();
    std::size_t oi = 0;
    for (std::size_t bc = 0; bc < b * c; ++bc) {
        const S* plane = xv.data() + bc * h * w;
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t xo = 0; xo < wo; ++xo, ++oi) {
                const std::size_t base = (2 * y) * w + 2 * xo;
                std::size_t best = base;
                S bv = plane[base];
                const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
                for (std::size_t idx : cand) {
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                }
                o[oi] = bv;
                (*argmax)[oi] = static_cast<std::uint32_t>(bc * h * w + best);
            }
        }
    }
    if (Tape<S>* tp = x.tape()) {
        tp->attach(out);
        const int oid = out.node(), xid = x.node();
        tp->record([oid, xid, argmax](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& gx = t.grad_ref(xid);
            for (std::size_t i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
        });
    }
    return out;
}

// Each pixel replicated into a 2x2 block; gradient sums the four copies.
template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& x) {
    if (x.shape().size() != 4)
        throw ShapeError("upsample_nearest2: input has shape " + shape_str(x.shape()) +
                         ", expected [b c h w]");
    const std::size_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor<S> out({b, c, 2 * h, 2 * w});
    auto xv = x.data();
    auto o = out.data();
    const std::size_t wo = 2 * w;
    for (std::size_t bc = 0; bc < b * c; ++bc) {
        const S* src = xv.data() + bc * h * w;
        S* dst = o.data() + bc * 4 * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            S* r0 = dst + (2 * y) * wo;
            S* r1 = r0 + wo;
            for (std::size_t xo = 0; xo < w; ++xo) {
                const S v = src[y * w + xo];
                r0[2 * xo] = v;
                r0[2 * xo + 1] = v;
                r1[2 * xo] = v;
                r1[2 * xo + 1] = v;
            }
        }
    }
    if (Tape<S>* tp = x.tape()) {
        tp->attach(out);
        const int oid = out.node(), xid = x.node();
        tp->record([oid, xid, b, c, h, w](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& gx = t.grad_ref(xid);
            const std::size_t wo = 2 * w;
            for (std::size_t bc = 0; bc < b * c; ++bc) {
                const S* src = go.data() + bc * 4 * h * w;
                S* dst = gx.data() + bc * h * w;
                for (std::size_t y = 0; y < h; ++y) {
                    const S* r0 = src + (2 * y) * wo;
                    const S* r1 = r0 + wo;
                    for (std::size_t xo = 0; xo < w; ++xo)
                        dst[y * w + xo] += r0[2 * xo] + r0[2 * xo + 1] + r1[2 * xo] + r1[2 * xo + 1];
                }
            }
        });
    }
    return out;
}

// Orthogonal matrix [rows x cols] from QR of a seeded Gaussian draw, with the
// R diagonal kept positive: W^T W = I for cols <= rows, W W^T = I otherwise.
template <typename S>
Tensor<S> orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
    const bool wide = cols > rows;
    const std::size_t dim = wide ? cols : rows;   // length of each basis vector
    const std::size_t count = wide ? rows : cols; // number of vectors

    // Gaussian draw orthonormalized by modified Gram-Schmidt in the target
    // precision, one contiguous vector per row. A vector is re-orthogonalized
    // when projection removes most of its norm (the "twice is enough"
    // criterion), and redrawn when it degenerates entirely.
    std::vector<S> q(count * dim);
    for (auto& v : q) v = static_cast<S>(rng.normal());
    auto sweep = [&q, dim](S* vj, std::size_t j) {
        for (std::size_t jj = 0; jj < j; ++jj) {
            const S* vp = q.data() + jj * dim;
            const S dot = detail::dot_span(vp, vj, dim);
            for (std::size_t i = 0; i < dim; ++i) vj[i] -= dot * vp[i];
        }
    };
    auto norm_of = [dim](const S* v) { return std::sqrt(detail::dot_span(v, v, dim)); };
    for (std::size_t j = 0; j < count; ++j) {
        S* vj = q.data() + j * dim;
        S norm = 0;
        for (;;) {
            const S before = norm_of(vj);
            sweep(vj, j);
            norm = norm_of(vj);
            if (norm > S(0.5) * before) break;
            if (norm >= S(1e-7)) {
                sweep(vj, j);  // lost most of the norm: orthogonalize once more
                norm = norm_of(vj);
                break;
            }
            for (std::size_t i = 0; i < dim; ++i) vj[i] = static_cast<S>(rng.normal());  // redraw
        }
        for (std::size_t i = 0; i < dim; ++i) vj[i] /= norm;
    }

    Tensor<S> out({rows, cols});
    auto o = out.data();
    if (wide) {
        // rows of the result are the orthonormal vectors: W W^T = I
        std::copy(q.begin(), q.end(), o.begin());
    } else {
        // columns are the vectors: W^T W = I
        for (std::size_t j = 0; j < count; ++j)
            for (std::size_t i = 0; i < dim; ++i) o[i * cols + j] = q[j * dim + i];
    }
    return out;
}

}  // namespace frnn
