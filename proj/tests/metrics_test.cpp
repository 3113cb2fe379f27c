#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "frnn/data.hpp"
#include "frnn/metrics.hpp"

using frnn::SequenceBatch;
using frnn::Tensor;

namespace {

// Literal sliding-window SSIM: full 11x11 weighted moments per valid center.
// Independent of the separable-filter implementation it checks.
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b) {
    const std::size_t h = a.shape()[a.shape().size() - 2];
    const std::size_t w = a.shape()[a.shape().size() - 1];
    std::size_t channels = 1;
    for (std::size_t d = 0; d + 2 < a.shape().size(); ++d) channels *= a.shape()[d];

    double win[11][11];
    double norm = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5, dx = j - 5;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
            norm += win[i][j];
        }
    for (auto& row : win)
        for (auto& v : row) v /= norm;

    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* pa = a.data().data() + c * h * w;
        const double* pb = b.data().data() + c * h * w;
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t y = 0; y + 11 <= h; ++y)
            for (std::size_t x = 0; x + 11 <= w; ++x) {
                double ma = 0, mb = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        ma += win[i][j] * pa[(y + i) * w + x + j];
                        mb += win[i][j] * pb[(y + i) * w + x + j];
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double da = pa[(y + i) * w + x + j] - ma;
                        const double db = pb[(y + i) * w + x + j] - mb;
                        va += win[i][j] * da * da;
                        vb += win[i][j] * db * db;
                        cov += win[i][j] * da * db;
                    }
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += acc / static_cast<double>(count);
    }
    return total / static_cast<double>(channels);
}

}  // namespace

TEST_CASE("mse") {
    Tensor<double> a({2}, {0, 1}), b({2}, {1, 0});
    REQUIRE(frnn::mse(a, a) == 0.0);
    REQUIRE(frnn::mse(a, b) == Catch::Approx(1.0).margin(1e-15));

    frnn::Rng rng(1);
    auto x = frnn::random_uniform<double>({3, 4}, 0, 0.9, rng);
    auto y = x.clone();
    for (auto& v : y.data()) v += 0.1;
    REQUIRE(frnn::mse(x, y) == Catch::Approx(0.01).margin(1e-12));

    SECTION("symmetry") { REQUIRE(frnn::mse(x, y) == frnn::mse(y, x)); }
    SECTION("shape mismatch") {
        REQUIRE_THROWS_AS(frnn::mse(x, Tensor<double>::zeros({4, 3})), frnn::ShapeError);
    }
}

TEST_CASE("psnr") {
    frnn::Rng rng(2);
    auto x = frnn::random_uniform<double>({4, 4}, 0, 0.9, rng);
    auto y = x.clone();
    for (auto& v : y.data()) v += 0.1;  // mse = 0.01
    REQUIRE(frnn::psnr(x, y) == Catch::Approx(20.0).margin(1e-9));

    auto zero = Tensor<double>::zeros({2, 2});
    auto one = Tensor<double>::ones({2, 2});
    REQUIRE(frnn::psnr(zero, one) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(std::isinf(frnn::psnr(x, x)));

    SECTION("strictly decreasing in mse") {
        auto worse = x.clone();
        for (auto& v : worse.data()) v += 0.2;
        REQUIRE(frnn::psnr(x, worse) < frnn::psnr(x, y));
    }
}

TEST_CASE("dssim") {
    frnn::Rng rng(3);

    SECTION("identical frames give exactly zero") {
        auto x = frnn::random_uniform<double>({1, 16, 16}, 0, 1, rng);
        REQUIRE(frnn::dssim(x, x) == 0.0);
    }

    SECTION("constant 0 against constant 1") {
        auto zero = Tensor<double>::zeros({16, 16});
        auto one = Tensor<double>::ones({16, 16});
        const double expect_ssim = 1e-4 / (1.0 + 1e-4);
        REQUIRE(frnn::ssim(zero, one) == Catch::Approx(expect_ssim).margin(1e-9));
        REQUIRE(frnn::dssim(zero, one) == Catch::Approx(0.49995).margin(1e-6));
    }

    SECTION("agrees with the brute-force sliding-window oracle") {
        for (int trial = 0; trial < 8; ++trial) {
            auto a = frnn::random_uniform<double>({1, 16, 16}, 0, 1, rng);
            auto b = frnn::random_uniform<double>({1, 16, 16}, 0, 1, rng);
            const double got = frnn::dssim(a, b);
            const double want = (1.0 - ssim_oracle(a, b)) / 2.0;
            REQUIRE(got == Catch::Approx(want).margin(1e-6));
            REQUIRE(got >= 0.0);
            REQUIRE(got <= 1.0);
        }
    }

    SECTION("symmetry") {
        auto a = frnn::random_uniform<double>({16, 16}, 0, 1, rng);
        auto b = frnn::random_uniform<double>({16, 16}, 0, 1, rng);
        REQUIRE(frnn::dssim(a, b) == Catch::Approx(frnn::dssim(b, a)).margin(1e-12));
    }

    SECTION("frames smaller than the window are rejected") {
        auto small = Tensor<double>::zeros({8, 8});
        REQUIRE_THROWS_AS(frnn::dssim(small, small), frnn::ShapeError);
    }
}

TEST_CASE("evaluate") {
    frnn::Rng rng(4);

    SECTION("identical predictions give a zero-error table") {
        auto t = SequenceBatch<double>(frnn::random_uniform<double>({2, 3, 1, 16, 16}, 0, 1, rng));
        auto r = frnn::evaluate(t, t);
        REQUIRE(r.mse.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            REQUIRE(r.mse[i] == 0.0);
            REQUIRE(r.dssim[i] == 0.0);
            REQUIRE(std::isinf(r.psnr[i]));
            REQUIRE(r.psnr_finite[i] == 0);
        }
        REQUIRE(r.mean_mse == 0.0);
    }

    SECTION("p=10 yields arrays of length 10") {
        auto a = SequenceBatch<double>(frnn::random_uniform<double>({1, 10, 1, 16, 16}, 0, 1, rng));
        auto b = SequenceBatch<double>(frnn::random_uniform<double>({1, 10, 1, 16, 16}, 0, 1, rng));
        auto r = frnn::evaluate(a, b);
        REQUIRE(r.mse.size() == 10);
        REQUIRE(r.psnr.size() == 10);
        REQUIRE(r.dssim.size() == 10);
    }

    SECTION("overall mean equals the mean of per-step values") {
        auto a = SequenceBatch<double>(frnn::random_uniform<double>({2, 4, 1, 16, 16}, 0, 1, rng));
        auto b = SequenceBatch<double>(frnn::random_uniform<double>({2, 4, 1, 16, 16}, 0, 1, rng));
        auto r = frnn::evaluate(a, b);
        double m = 0;
        for (double v : r.mse) m += v;
        REQUIRE(r.mean_mse == Catch::Approx(m / 4).margin(1e-15));
    }

    SECTION("last-frame baseline error is non-decreasing under monotone motion") {
        // 3x3 block drifting diagonally one pixel per frame, built by hand
        // block at (1 + t/2, 1 + t) stays in bounds for t < 12
        const std::size_t T = 12, H = 16, W = 16;
        Tensor<float> seq({1, T, 1, H, W});
        auto d = seq.data();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t dy = 0; dy < 3; ++dy)
                for (std::size_t dx = 0; dx < 3; ++dx)
                    d[t * H * W + (1 + t / 2 + dy) * W + (1 + t + dx)] = 1.0f;
        auto batch = SequenceBatch<float>(seq);
        auto inputs = batch.window(0, 2);
        auto targets = batch.window(2, 10);
        auto base = frnn::last_frame_baseline(inputs, 10);
        auto r = frnn::evaluate(base, targets);
        for (std::size_t t = 1; t < 10; ++t) REQUIRE(r.mse[t] >= r.mse[t - 1]);
        REQUIRE(r.mse[9] > r.mse[0]);
    }

    SECTION("report table has one row per step plus the mean row") {
        auto a = SequenceBatch<double>(frnn::random_uniform<double>({1, 3, 1, 16, 16}, 0, 1, rng));
        auto b = SequenceBatch<double>(frnn::random_uniform<double>({1, 3, 1, 16, 16}, 0, 1, rng));
        auto table = frnn::report_table(frnn::evaluate(a, b));
        std::size_t rows = 0;
        for (char c : table) rows += c == '\n' ? 1 : 0;
        REQUIRE(rows == 5);  // header + 3 steps + mean
        REQUIRE(table.rfind("# step mse psnr dssim\n", 0) == 0);
    }
}
