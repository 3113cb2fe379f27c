#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "frnn/cells.hpp"

using frnn::BGruLayer;
using frnn::GruGateSet;
using frnn::Rng;
using frnn::Tape;
using frnn::Tensor;

namespace {

template <typename Fn>
void for_each_weight(BGruLayer<double>& layer, Fn&& fn) {
    for (GruGateSet<double>* set : {&layer.forward_gates, &layer.backward_gates})
        for (frnn::GruGate<double>* gate : {&set->update, &set->reset, &set->candidate}) {
            fn(gate->input.weights);
            fn(gate->state.weights);
            fn(gate->input.bias);
        }
}

BGruLayer<double> random_layer(std::size_t ci, std::size_t co, std::size_t k, bool pooled, Rng& rng) {
    auto layer = frnn::make_bgru_layer<double>(ci, co, k, pooled);
    for_each_weight(layer, [&rng](Tensor<double>& t) {
        t = frnn::random_uniform<double>(t.shape(), -0.5, 0.5, rng);
    });
    return layer;
}

}  // namespace

TEST_CASE("gru_step hand cases") {
    auto gates = frnn::make_gate_set<double>(2, 2, 3);

    SECTION("all-zero weights halve the previous state") {
        auto x = Tensor<double>::zeros({1, 2, 4, 4});
        auto h = Tensor<double>::full({1, 2, 4, 4}, 0.8);
        auto out = frnn::gru_step(x, h, gates);
        for (double v : out.data()) REQUIRE(v == Catch::Approx(0.4).margin(1e-12));
    }

    SECTION("update bias -20 keeps the previous state") {
        std::fill(gates.update.input.bias.data().begin(), gates.update.input.bias.data().end(), -20.0);
        Rng rng(1);
        auto x = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto h = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto out = frnn::gru_step(x, h, gates);
        for (std::size_t i = 0; i < out.size(); ++i)
            REQUIRE(std::fabs(out[i] - h[i]) <= 1e-6);
    }

    SECTION("update bias +20 with zero weights gives the candidate") {
        std::fill(gates.update.input.bias.data().begin(), gates.update.input.bias.data().end(), 20.0);
        Rng rng(2);
        auto x = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto h = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto out = frnn::gru_step(x, h, gates);
        for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(std::fabs(out[i]) <= 1e-6);
    }

    SECTION("output stays a convex combination inside [-1, 1]") {
        Rng rng(3);
        auto gs = frnn::make_gate_set<double>(3, 3, 3);
        for (frnn::GruGate<double>* gate : {&gs.update, &gs.reset, &gs.candidate}) {
            gate->input.weights = frnn::random_uniform<double>(gate->input.weights.shape(), -2, 2, rng);
            gate->state.weights = frnn::random_uniform<double>(gate->state.weights.shape(), -2, 2, rng);
            gate->input.bias = frnn::random_uniform<double>(gate->input.bias.shape(), -2, 2, rng);
        }
        for (int trial = 0; trial < 8; ++trial) {
            auto x = frnn::random_uniform<double>({1, 3, 4, 4}, -3, 3, rng);
            auto h = frnn::random_uniform<double>({1, 3, 4, 4}, -1, 1, rng);
            auto out = frnn::gru_step(x, h, gs);
            for (double v : out.data()) {
                REQUIRE(v <= 1.0);
                REQUIRE(v >= -1.0);
            }
        }
    }
}

TEST_CASE("bgru_forward") {
    SECTION("unpooled zero-weight case") {
        auto layer = frnn::make_bgru_layer<double>(2, 3, 3, false);
        auto x = Tensor<double>::zeros({1, 2, 4, 4});
        auto h = Tensor<double>::full({1, 3, 4, 4}, 0.6);
        auto out = frnn::bgru_forward(layer, x, h);
        for (double v : out.data()) REQUIRE(v == Catch::Approx(0.3).margin(1e-12));
    }

    SECTION("pooled halves spatial extents") {
        Rng rng(4);
        auto layer = random_layer(2, 4, 3, true, rng);
        auto x = frnn::random_uniform<double>({2, 2, 6, 8}, -1, 1, rng);
        auto h = frnn::random_uniform<double>({2, 4, 3, 4}, -1, 1, rng);
        auto out = frnn::bgru_forward(layer, x, h);
        REQUIRE(out.shape() == frnn::Shape{2, 4, 3, 4});
    }

    SECTION("pure function of its arguments") {
        Rng rng(5);
        auto layer = random_layer(2, 2, 3, false, rng);
        auto x = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto h = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto a = frnn::bgru_forward(layer, x, h);
        auto b = frnn::bgru_forward(layer, x, h);
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
}

TEST_CASE("bgru_backward") {
    SECTION("unpooled zero-weight case") {
        auto layer = frnn::make_bgru_layer<double>(2, 3, 3, false);
        auto h_l = Tensor<double>::zeros({1, 3, 4, 4});
        auto h_lm1 = Tensor<double>::full({1, 2, 4, 4}, -0.4);
        auto out = frnn::bgru_backward(layer, h_l, h_lm1);
        for (double v : out.data()) REQUIRE(v == Catch::Approx(-0.2).margin(1e-12));
    }

    SECTION("pooled computes coarse and writes back fine") {
        Rng rng(6);
        auto layer = random_layer(2, 4, 3, true, rng);
        auto h_l = frnn::random_uniform<double>({1, 4, 3, 4}, -1, 1, rng);
        auto h_lm1 = frnn::random_uniform<double>({1, 2, 6, 8}, -1, 1, rng);
        auto out = frnn::bgru_backward(layer, h_l, h_lm1);
        REQUIRE(out.shape() == h_lm1.shape());
        // each 2x2 block holds one replicated coarse value
        auto o = out.data();
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 4; ++x) {
                    const std::size_t base = (c * 6 + 2 * y) * 8 + 2 * x;
                    REQUIRE(o[base] == o[base + 1]);
                    REQUIRE(o[base] == o[base + 8]);
                    REQUIRE(o[base] == o[base + 9]);
                }
    }

    SECTION("update bias -20 preserves the input state") {
        auto layer = frnn::make_bgru_layer<double>(2, 3, 3, false);
        std::fill(layer.backward_gates.update.input.bias.data().begin(),
                  layer.backward_gates.update.input.bias.data().end(), -20.0);
        Rng rng(7);
        auto h_l = frnn::random_uniform<double>({1, 3, 4, 4}, -1, 1, rng);
        auto h_lm1 = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
        auto out = frnn::bgru_backward(layer, h_l, h_lm1);
        for (std::size_t i = 0; i < out.size(); ++i)
            REQUIRE(std::fabs(out[i] - h_lm1[i]) <= 1e-6);
    }
}

TEST_CASE("parameter count formulas") {
    REQUIRE(frnn::param_count_shared(4, 4, 1) == 192);
    REQUIRE(frnn::param_count_shared(2, 4, 1) == 108);
    REQUIRE(frnn::param_count_shared(1, 1, 9) == 108);
    REQUIRE(frnn::param_count_bridged(4, 4, 1) == 288);
    REQUIRE(frnn::param_count_bridged(2, 4, 1) == 156);
    REQUIRE(frnn::param_count_bridged(1, 1, 1) == 18);

    SECTION("ratios") {
        REQUIRE(double(frnn::param_count_bridged(4, 4, 1)) / double(frnn::param_count_shared(4, 4, 1)) ==
                Catch::Approx(1.50).margin(1e-12));
        REQUIRE(double(frnn::param_count_bridged(2, 4, 1)) / double(frnn::param_count_shared(2, 4, 1)) ==
                Catch::Approx(156.0 / 108.0).margin(1e-12));
    }

    SECTION("difference property") {
        Rng rng(8);
        for (int trial = 0; trial < 32; ++trial) {
            const auto a = static_cast<std::uint64_t>(rng.uniform_int(1, 64));
            const auto b = static_cast<std::uint64_t>(rng.uniform_int(1, 64));
            const auto k = static_cast<std::uint64_t>(rng.uniform_int(1, 25));
            REQUIRE(frnn::param_count_bridged(a, b, k) - frnn::param_count_shared(a, b, k) ==
                    6 * k * a * b);
        }
    }

    SECTION("enumerated dense layer matches the formula") {
        auto layer = frnn::make_bgru_layer<double>(3, 5, 1, false);
        REQUIRE(frnn::enumerate_weights(layer) == frnn::param_count_shared(3, 5, 1));
        REQUIRE(frnn::enumerate_biases(layer) == 3 * 5 + 3 * 3);  // 3 per gate set
        auto conv_layer = frnn::make_bgru_layer<double>(2, 4, 3, true);
        REQUIRE(frnn::enumerate_weights(conv_layer) == frnn::param_count_shared(2, 4, 9));
    }
}

TEST_CASE("cell gradients match finite differences") {
    Rng rng(9);
    const double eps = 1e-5;

    auto layer = random_layer(2, 3, 3, false, rng);
    auto pooled = random_layer(2, 3, 3, true, rng);

    auto x = frnn::random_uniform<double>({1, 2, 4, 4}, -1, 1, rng);
    auto h = frnn::random_uniform<double>({1, 3, 4, 4}, -1, 1, rng);

    SECTION("gru_step wrt both states") {
        auto by_x = [&](const Tensor<double>& t) {
            return frnn::sum(frnn::gru_step(t, h, layer.forward_gates));
        };
        REQUIRE(frnn::grad_check(by_x, x, eps) <= 1e-5);
        auto by_h = [&](const Tensor<double>& t) {
            return frnn::sum(frnn::gru_step(x, t, layer.forward_gates));
        };
        REQUIRE(frnn::grad_check(by_h, h, eps) <= 1e-5);
    }

    SECTION("gru_step wrt every gate weight") {
        for (frnn::GruGate<double>* gate :
             {&layer.forward_gates.update, &layer.forward_gates.reset, &layer.forward_gates.candidate}) {
            for (Tensor<double>* w : {&gate->input.weights, &gate->state.weights, &gate->input.bias}) {
                Tensor<double> saved = w->clone();
                auto f = [&](const Tensor<double>& t) {
                    *w = t;
                    return frnn::sum(frnn::gru_step(x, h, layer.forward_gates));
                };
                REQUIRE(frnn::grad_check(f, saved, eps) <= 1e-5);
                *w = saved;
            }
        }
    }

    SECTION("bgru_forward pooled, wrt input state") {
        auto xf = frnn::random_uniform<double>({1, 2, 6, 6}, -1, 1, rng);
        auto hf = frnn::random_uniform<double>({1, 3, 3, 3}, -1, 1, rng);
        auto f = [&](const Tensor<double>& t) {
            return frnn::sum(frnn::bgru_forward(pooled, t, hf));
        };
        REQUIRE(frnn::grad_check(f, xf, eps) <= 1e-5);
    }

    SECTION("bgru_backward pooled, wrt both states") {
        auto hl = frnn::random_uniform<double>({1, 3, 3, 3}, -1, 1, rng);
        auto hlm1 = frnn::random_uniform<double>({1, 2, 6, 6}, -1, 1, rng);
        auto by_hl = [&](const Tensor<double>& t) {
            return frnn::sum(frnn::bgru_backward(pooled, t, hlm1));
        };
        REQUIRE(frnn::grad_check(by_hl, hl, eps) <= 1e-5);
        auto by_hlm1 = [&](const Tensor<double>& t) {
            return frnn::sum(frnn::bgru_backward(pooled, hl, t));
        };
        REQUIRE(frnn::grad_check(by_hlm1, hlm1, eps) <= 1e-5);
    }
}
