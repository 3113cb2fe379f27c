#pragma once

// The folded recurrent stack: stateless pre-convolutions, n bijective GRU
// layers over shared states, and a stateless inverse transform. Encoding
// applies only the forward gate sets; prediction refreshes the bridge state
// with one forward application of the deepest layer and then sweeps the
// backward gate sets down to the frame. Emitted frames are never read back.

#include <cstdint>
#include <string>
#include <utility>

#include "frnn/cells.hpp"
#include "frnn/sequence.hpp"

namespace frnn {

struct ConvSpec {
    std::size_t channels = 0;
    std::size_t kernel = 0;
    Activation activation = Activation::tanh;
};

struct BGruSpec {
    std::size_t channels = 0;
    std::size_t kernel = 0;
    bool pooled = false;
};

struct TopologySpec {
    std::size_t image_channels = 1;
    std::size_t image_height = 64;
    std::size_t image_width = 64;
    std::vector<ConvSpec> pre_convs;
    std::vector<BGruSpec> bgru_layers;
    Activation output_activation = Activation::sigmoid;

    std::size_t depth() const { return bgru_layers.size(); }

    std::size_t pool_count() const {
        std::size_t p = 0;
        for (const auto& l : bgru_layers) p += l.pooled ? 1 : 0;
        return p;
    }

    // Channels of state l (0 = the pre-convolution output).
    std::size_t state_channels(std::size_t l) const {
        if (l == 0) return pre_convs.empty() ? image_channels : pre_convs.back().channels;
        return bgru_layers[l - 1].channels;
    }

    // Spatial extents of state l under the pool schedule.
    std::pair<std::size_t, std::size_t> state_extent(std::size_t l) const {
        std::size_t h = image_height, w = image_width;
        for (std::size_t i = 0; i < l; ++i)
            if (bgru_layers[i].pooled) {
                h /= 2;
                w /= 2;
            }
        return {h, w};
    }

    void validate() const {
        if (image_channels == 0 || image_height == 0 || image_width == 0)
            throw ShapeError("topology: zero image extent");
        std::size_t h = image_height, w = image_width;
        for (std::size_t i = 0; i < bgru_layers.size(); ++i) {
            const auto& l = bgru_layers[i];
            if (l.channels == 0) throw ShapeError("topology: layer " + std::to_string(i + 1) + " has 0 channels");
            if (l.kernel % 2 == 0)
                throw ShapeError("topology: layer " + std::to_string(i + 1) + " kernel must be odd");
            if (l.pooled) {
                if (h % 2 != 0 || w % 2 != 0)
                    throw ShapeError("topology: pool before layer " + std::to_string(i + 1) +
                                     " needs even extents, have " + std::to_string(h) + "x" +
                                     std::to_string(w));
                h /= 2;
                w /= 2;
            }
        }
        for (const auto& c : pre_convs) {
            if (c.channels == 0) throw ShapeError("topology: pre-conv with 0 channels");
            if (c.kernel % 2 == 0) throw ShapeError("topology: pre-conv kernel must be odd");
        }
    }
};

// The stock 64x64 grayscale configuration: two 5x5 convolutions into eight
// bGRU layers with a 2x2 pool before every odd layer.
inline TopologySpec default_topology() {
    TopologySpec t;
    t.image_channels = 1;
    t.image_height = 64;
    t.image_width = 64;
    t.pre_convs = {{32, 5, Activation::tanh}, {64, 5, Activation::tanh}};
    t.bgru_layers = {{128, 5, true},  {128, 5, false}, {256, 5, true},  {256, 5, false},
                     {512, 3, true},  {512, 3, false}, {256, 3, true},  {256, 3, false}};
    t.output_activation = Activation::sigmoid;
    return t;
}

struct CallCounters {
    std::size_t pre_conv_calls = 0;
    std::size_t post_transform_calls = 0;
    std::size_t encode_calls = 0;
    std::size_t predict_calls = 0;
};

template <typename S>
struct NamedParam {
    std::string name;
    Tensor<S>* tensor;
};

// Shared recurrent states h[0..n] for one batch at one point in time.
template <typename S>
struct StateSet {
    std::vector<Tensor<S>> h;

    std::size_t depth() const { return h.size() - 1; }
};

template <typename S>
struct FoldedStack {
    TopologySpec spec;
    std::vector<ConvKernel<S>> pre_convs;
    std::vector<BGruLayer<S>> layers;
    std::vector<ConvKernel<S>> post_convs;
    mutable CallCounters counters;

    std::size_t depth() const { return layers.size(); }

    // Stable enumeration: pre-convolutions, then per layer the forward and
    // backward gate sets (update, reset, candidate), then the inverse
    // transform. Checkpoints and the optimizer rely on this order.
    std::vector<NamedParam<S>> parameters() {
        std::vector<NamedParam<S>> out;
        auto add_kernel = [&out](const std::string& base, ConvKernel<S>& k) {
            out.push_back({base + ".w", &k.weights});
            if (!k.bias.empty()) out.push_back({base + ".b", &k.bias});
        };
        for (std::size_t i = 0; i < pre_convs.size(); ++i)
            add_kernel("pre" + std::to_string(i), pre_convs[i]);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string base = "bgru" + std::to_string(l);
            auto add_gates = [&](const std::string& dir, GruGateSet<S>& g) {
                const char* names[3] = {"z", "r", "c"};
                GruGate<S>* gates[3] = {&g.update, &g.reset, &g.candidate};
                for (int i = 0; i < 3; ++i) {
                    out.push_back({base + "." + dir + "." + names[i] + ".w", &gates[i]->input.weights});
                    out.push_back({base + "." + dir + "." + names[i] + ".u", &gates[i]->state.weights});
                    out.push_back({base + "." + dir + "." + names[i] + ".b", &gates[i]->input.bias});
                }
            };
            add_gates("f", layers[l].forward_gates);
            add_gates("b", layers[l].backward_gates);
        }
        for (std::size_t i = 0; i < post_convs.size(); ++i)
            add_kernel("post" + std::to_string(i), post_convs[i]);
        return out;
    }

    void watch_parameters(Tape<S>& tape) {
        for (auto& p : parameters()) tape.watch(*p.tensor);
    }

    void detach_parameters() {
        for (auto& p : parameters()) p.tensor->detach();
    }
};

// Zero-weight stack with the wiring dictated by the topology.
template <typename S>
FoldedStack<S> make_stack(const TopologySpec& spec) {
    spec.validate();
    FoldedStack<S> st;
    st.spec = spec;
    std::size_t ch = spec.image_channels;
    for (const auto& c : spec.pre_convs) {
        st.pre_convs.push_back(make_kernel<S>(c.channels, ch, c.kernel, true));
        ch = c.channels;
    }
    for (const auto& l : spec.bgru_layers) {
        st.layers.push_back(make_bgru_layer<S>(ch, l.channels, l.kernel, l.pooled));
        ch = l.channels;
    }
    for (std::size_t j = spec.pre_convs.size(); j-- > 0;) {
        const std::size_t in_ch = spec.pre_convs[j].channels;
        const std::size_t out_ch = j == 0 ? spec.image_channels : spec.pre_convs[j - 1].channels;
        st.post_convs.push_back(make_kernel<S>(out_ch, in_ch, spec.pre_convs[j].kernel, true));
    }
    return st;
}

// All-zero states shaped for a batch.
template <typename S>
StateSet<S> reset_states(const FoldedStack<S>& stack, std::size_t batch) {
    if (batch < 1) throw ShapeError("reset_states: batch must be >= 1");
    StateSet<S> s;
    const std::size_t n = stack.depth();
    s.h.reserve(n + 1);
    for (std::size_t l = 0; l <= n; ++l) {
        auto [h, w] = stack.spec.state_extent(l);
        s.h.push_back(Tensor<S>::zeros({batch, stack.spec.state_channels(l), h, w}));
    }
    return s;
}

namespace detail {

template <typename S>
Tensor<S> apply_pre(const FoldedStack<S>& stack, const Tensor<S>& frame) {
    ++stack.counters.pre_conv_calls;
    Tensor<S> x = frame;
    for (std::size_t i = 0; i < stack.pre_convs.size(); ++i)
        x = activation(conv2d(x, stack.pre_convs[i]), stack.spec.pre_convs[i].activation);
    return x;
}

template <typename S>
Tensor<S> apply_post(const FoldedStack<S>& stack, const Tensor<S>& h0) {
    ++stack.counters.post_transform_calls;
    Tensor<S> x = h0;
    const std::size_t P = stack.post_convs.size();
    if (P == 0) return activation(x, stack.spec.output_activation);
    for (std::size_t j = 0; j < P; ++j) {
        const Activation act = (j + 1 == P) ? stack.spec.output_activation
                                            : stack.spec.pre_convs[P - 2 - j].activation;
        x = activation(conv2d_transpose(x, stack.post_convs[j]), act);
    }
    return x;
}

}  // namespace detail

// One encoder step: h[0] from the frame, then each layer's forward mapping.
// No frame is emitted.
template <typename S>
StateSet<S> encode_frame(const FoldedStack<S>& stack, const Tensor<S>& frame, const StateSet<S>& states) {
    if (frame.shape().size() != 4 || frame.shape()[1] != stack.spec.image_channels ||
        frame.shape()[2] != stack.spec.image_height || frame.shape()[3] != stack.spec.image_width)
        throw ShapeError("encode_frame: frame shape " + shape_str(frame.shape()) + ", expected [b " +
                         std::to_string(stack.spec.image_channels) + " " +
                         std::to_string(stack.spec.image_height) + " " +
                         std::to_string(stack.spec.image_width) + "]");
    if (states.h.size() != stack.depth() + 1)
        throw ShapeError("encode_frame: state set depth " + std::to_string(states.h.size() - 1) +
                         " does not match stack depth " + std::to_string(stack.depth()));
    ++stack.counters.encode_calls;
    StateSet<S> out = states;
    out.h[0] = detail::apply_pre(stack, frame);
    for (std::size_t l = 0; l < stack.depth(); ++l)
        out.h[l + 1] = bgru_forward(stack.layers[l], out.h[l], out.h[l + 1]);
    return out;
}

// One decoder step: refresh the bridge state with the deepest forward
// mapping, sweep the backward mappings down, then emit a frame from h[0].
// The emitted frame is not an input to any state update.
template <typename S>
std::pair<Tensor<S>, StateSet<S>> predict_frame(const FoldedStack<S>& stack, const StateSet<S>& states) {
    if (states.h.size() != stack.depth() + 1)
        throw ShapeError("predict_frame: state set depth " + std::to_string(states.h.size() - 1) +
                         " does not match stack depth " + std::to_string(stack.depth()));
    ++stack.counters.predict_calls;
    StateSet<S> out = states;
    const std::size_t n = stack.depth();
    if (n > 0) {
        out.h[n] = bgru_forward(stack.layers[n - 1], out.h[n - 1], out.h[n]);
        for (std::size_t l = n; l-- > 0;)
            out.h[l] = bgru_backward(stack.layers[l], out.h[l + 1], out.h[l]);
    }
    Tensor<S> frame = detail::apply_post(stack, out.h[0]);
    return {frame, out};
}

// Encode every input frame, then emit p predictions decoder-only.
template <typename S>
SequenceBatch<S> run_sequence(const FoldedStack<S>& stack, const SequenceBatch<S>& inputs, std::size_t p) {
    if (inputs.time() < 1) throw ShapeError("run_sequence: empty input sequence");
    if (p < 1) throw ShapeError("run_sequence: p must be >= 1");
    StateSet<S> states = reset_states(stack, inputs.batch());
    for (std::size_t t = 0; t < inputs.time(); ++t)
        states = encode_frame(stack, inputs.frame(t), states);
    std::vector<Tensor<S>> frames;
    frames.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
        auto [frame, next] = predict_frame(stack, states);
        frames.push_back(std::move(frame));
        states = std::move(next);
    }
    return SequenceBatch<S>(stack_frames(frames));
}

// Stack with the deepest k layers removed; the bridge state becomes h[n-k].
// Weights are shared with the source stack.
template <typename S>
FoldedStack<S> truncate(const FoldedStack<S>& stack, std::size_t k) {
    if (k > stack.depth())
        throw ShapeError("truncate: k = " + std::to_string(k) + " exceeds depth " +
                         std::to_string(stack.depth()));
    FoldedStack<S> out;
    out.spec = stack.spec;
    out.spec.bgru_layers.resize(stack.depth() - k);
    out.pre_convs = stack.pre_convs;
    out.layers.assign(stack.layers.begin(), stack.layers.end() - static_cast<std::ptrdiff_t>(k));
    out.post_convs = stack.post_convs;
    return out;
}

template <typename S>
bool stacks_equal(const FoldedStack<S>& a, const FoldedStack<S>& b) {
    if (a.depth() != b.depth() || a.pre_convs.size() != b.pre_convs.size() ||
        a.post_convs.size() != b.post_convs.size())
        return false;
    auto& am = const_cast<FoldedStack<S>&>(a);
    auto& bm = const_cast<FoldedStack<S>&>(b);
    auto pa = am.parameters();
    auto pb = bm.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].name != pb[i].name) return false;
        if (pa[i].tensor->shape() != pb[i].tensor->shape()) return false;
        auto da = pa[i].tensor->data();
        auto db = pb[i].tensor->data();
        for (std::size_t j = 0; j < da.size(); ++j)
            if (da[j] != db[j]) return false;
    }
    return true;
}

// Cost accounting for the folded design against a hypothetical
// bridge-connected autoencoder with identical state sizes. Weight counts and
// parameter-weighted MAC counts cover the recurrent stack (the stateless
// pre/post transforms are common to both designs). One gate evaluation is one
// GRU cell application.
struct LayerCost {
    std::size_t layer = 0;  // 1-based
    std::uint64_t shared_weights = 0;
    std::uint64_t bridged_weights = 0;
    double ratio = 0;
    std::uint64_t positions = 0;  // spatial positions of the layer state
};

struct CostReport {
    std::vector<LayerCost> layers;
    std::uint64_t folded_weights = 0;
    std::uint64_t bridged_weights = 0;
    std::uint64_t folded_gate_evals = 0;
    std::uint64_t bridged_gate_evals = 0;
    std::uint64_t folded_peak_states = 0;
    std::uint64_t bridged_peak_states = 0;
    std::uint64_t folded_macs = 0;
    std::uint64_t bridged_macs = 0;

    double weight_ratio() const {
        return folded_weights ? double(bridged_weights) / double(folded_weights) : 0.0;
    }
    double state_ratio() const {
        return folded_peak_states ? double(bridged_peak_states) / double(folded_peak_states) : 0.0;
    }
};

inline CostReport cost_report(const TopologySpec& spec, std::uint64_t g, std::uint64_t p) {
    if (g < 1 || p < 1) throw ShapeError("cost_report: g and p must be >= 1");
    spec.validate();
    CostReport r;
    const std::uint64_t n = spec.depth();
    std::uint64_t bridge_fwd_macs = 0;
    std::uint64_t fwd_macs = 0, bwd_macs = 0, bridged_step_macs = 0;
    for (std::size_t l = 1; l <= n; ++l) {
        const std::uint64_t d_in = spec.state_channels(l - 1);
        const std::uint64_t d_out = spec.state_channels(l);
        const std::uint64_t ka = spec.bgru_layers[l - 1].kernel * spec.bgru_layers[l - 1].kernel;
        auto [h, w] = spec.state_extent(l);
        LayerCost lc;
        lc.layer = l;
        lc.shared_weights = param_count_shared(d_in, d_out, ka);
        lc.bridged_weights = param_count_bridged(d_in, d_out, ka);
        lc.ratio = double(lc.bridged_weights) / double(lc.shared_weights);
        lc.positions = std::uint64_t(h) * std::uint64_t(w);
        r.layers.push_back(lc);
        r.folded_weights += lc.shared_weights;
        r.bridged_weights += lc.bridged_weights;
        const std::uint64_t fwd_w = 3 * ka * (d_in * d_out + d_out * d_out);
        const std::uint64_t bwd_w = 3 * ka * (d_in * d_out + d_in * d_in);
        fwd_macs += fwd_w * lc.positions;
        bwd_macs += bwd_w * lc.positions;
        bridged_step_macs += lc.bridged_weights * lc.positions;
        if (l == n) bridge_fwd_macs = fwd_w * lc.positions;
    }
    r.folded_gate_evals = g * n + p * (n + 1);
    r.bridged_gate_evals = (g + p) * 2 * n;
    r.folded_peak_states = n + 1;
    r.bridged_peak_states = 2 * (n + 1);
    r.folded_macs = g * fwd_macs + p * (bwd_macs + bridge_fwd_macs);
    r.bridged_macs = (g + p) * bridged_step_macs;
    return r;
}

}  // namespace frnn
