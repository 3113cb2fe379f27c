#include <catch2/catch_amalgamated.hpp>

#include "frnn/config.hpp"

using frnn::RunConfig;

TEST_CASE("config defaults") {
    auto cfg = frnn::parse_config_text("");
    REQUIRE(cfg.topology.bgru_layers.size() == 8);
    REQUIRE(cfg.topology.image_height == 64);
    REQUIRE(cfg.train.g == 10);
    REQUIRE(cfg.train.p == 10);
    REQUIRE(cfg.train.learning_rate == 0.0001);
    REQUIRE(cfg.train.batch_size == 12);
    REQUIRE(cfg.data.canvas_height == 32);
    REQUIRE(cfg.data.frames == 20);
    REQUIRE(cfg.data.sprites == 2);
    REQUIRE(cfg.eval_g == 10);
    REQUIRE(cfg.eval_p == 10);
}

TEST_CASE("config parsing") {
    const std::string text = R"(
# comment line
topology.image_channels = 1
topology.image_height = 16
topology.image_width = 16
topology.pre_convs = 4:3
topology.bgru = 6:3:p,8:3
topology.output_activation = sigmoid

train.g = 2
train.p = 3
train.learning_rate = 0.001
train.batch_size = 4
train.steps = 7
train.seed = 42
train.rmsprop_decay = 0.95
train.rmsprop_epsilon = 1e-7

data.canvas_height = 16
data.canvas_width = 16
data.frames = 8
data.sprites = 1
data.sprite_size = 3
data.speed_min = 1
data.speed_max = 1
data.seed = 9

eval.g = 2
eval.p = 3
)";
    auto cfg = frnn::parse_config_text(text);
    REQUIRE(cfg.topology.pre_convs.size() == 1);
    REQUIRE(cfg.topology.pre_convs[0].channels == 4);
    REQUIRE(cfg.topology.bgru_layers.size() == 2);
    REQUIRE(cfg.topology.bgru_layers[0].pooled);
    REQUIRE_FALSE(cfg.topology.bgru_layers[1].pooled);
    REQUIRE(cfg.train.p == 3);
    REQUIRE(cfg.train.rmsprop_decay == 0.95);
    REQUIRE(cfg.data.sprite_size == 3);
    REQUIRE(cfg.data.seed == 9);
    REQUIRE(cfg.eval_p == 3);
}

TEST_CASE("config rejects unknown and malformed input") {
    REQUIRE_THROWS_AS(frnn::parse_config_text("train.gp = 1"), frnn::ConfigError);
    REQUIRE_THROWS_AS(frnn::parse_config_text("nosuch.key = 1"), frnn::ConfigError);
    REQUIRE_THROWS_AS(frnn::parse_config_text("train.g 1"), frnn::ConfigError);
    REQUIRE_THROWS_AS(frnn::parse_config_text("train.g = x"), frnn::ConfigError);
    REQUIRE_THROWS_AS(frnn::parse_config_text("train.learning_rate = fast"), frnn::ConfigError);
    REQUIRE_THROWS_AS(frnn::parse_config_text("topology.bgru = 4:2"), frnn::ShapeError);  // even kernel
    REQUIRE_THROWS_AS(frnn::parse_config_text("data.source = stripes"), frnn::ConfigError);
}

TEST_CASE("topology text round trip") {
    auto t = frnn::default_topology();
    auto back = frnn::topology_from_text(frnn::topology_to_text(t));
    REQUIRE(back.image_channels == t.image_channels);
    REQUIRE(back.image_height == t.image_height);
    REQUIRE(back.image_width == t.image_width);
    REQUIRE(back.pre_convs.size() == t.pre_convs.size());
    REQUIRE(back.bgru_layers.size() == t.bgru_layers.size());
    for (std::size_t i = 0; i < t.bgru_layers.size(); ++i) {
        REQUIRE(back.bgru_layers[i].channels == t.bgru_layers[i].channels);
        REQUIRE(back.bgru_layers[i].kernel == t.bgru_layers[i].kernel);
        REQUIRE(back.bgru_layers[i].pooled == t.bgru_layers[i].pooled);
    }
    REQUIRE(back.output_activation == t.output_activation);
}
