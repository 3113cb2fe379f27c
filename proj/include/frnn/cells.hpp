#pragma once

// Convolutional GRU gate arithmetic and the bijective GRU layer: a forward
// mapping that updates the layer state from its input state, and a backward
// mapping that updates the input state from the layer state. Also the weight
// count formulas for one such forward/backward pair versus the bridge-connected
// alternative.

#include <cstdint>

#include "frnn/nn_ops.hpp"

namespace frnn {

// One gate: a kernel over the incoming state and a kernel over the recurrent
// state. The gate bias lives on the input kernel; the state kernel has none,
// so each gate set carries exactly three biases.
template <typename S>
struct GruGate {
    ConvKernel<S> input;
    ConvKernel<S> state;
};

template <typename S>
struct GruGateSet {
    GruGate<S> update;     // z
    GruGate<S> reset;      // r
    GruGate<S> candidate;  // h~
};

template <typename S>
GruGateSet<S> make_gate_set(std::size_t source_ch, std::size_t target_ch, std::size_t k) {
    GruGateSet<S> g;
    for (GruGate<S>* gate : {&g.update, &g.reset, &g.candidate}) {
        gate->input = make_kernel<S>(target_ch, source_ch, k, true);
        gate->state = make_kernel<S>(target_ch, target_ch, k, false);
    }
    return g;
}

// z = sigmoid(Wz*x + Uz*h + bz); r = sigmoid(Wr*x + Ur*h + br);
// h~ = tanh(W*x + U*(r.h) + b); returns (1-z).h + z.h~
template <typename S>
Tensor<S> gru_step(const Tensor<S>& x, const Tensor<S>& h_prev, const GruGateSet<S>& gates) {
    auto z = sigmoid(add(conv2d(x, gates.update.input), conv2d(h_prev, gates.update.state)));
    auto r = sigmoid(add(conv2d(x, gates.reset.input), conv2d(h_prev, gates.reset.state)));
    auto cand = tanh(add(conv2d(x, gates.candidate.input), conv2d(mul(r, h_prev), gates.candidate.state)));
    auto keep = mul(sub(Tensor<S>::ones(z.shape()), z), h_prev);
    return add(keep, mul(z, cand));
}

// Paired forward/backward gate sets over one state boundary. `pooled` marks a
// 2x2 pool on the encoder path into this layer (and the matching
// nearest-neighbour upsample on the decoder path out of it).
template <typename S>
struct BGruLayer {
    GruGateSet<S> forward_gates;   // input state -> layer state
    GruGateSet<S> backward_gates;  // layer state -> input state
    bool pooled = false;
    std::size_t channels_in = 0;
    std::size_t channels_out = 0;
    std::size_t kernel = 0;
};

template <typename S>
BGruLayer<S> make_bgru_layer(std::size_t channels_in, std::size_t channels_out, std::size_t kernel,
                             bool pooled) {
    BGruLayer<S> l;
    l.forward_gates = make_gate_set<S>(channels_in, channels_out, kernel);
    l.backward_gates = make_gate_set<S>(channels_out, channels_in, kernel);
    l.pooled = pooled;
    l.channels_in = channels_in;
    l.channels_out = channels_out;
    l.kernel = kernel;
    return l;
}

// h^l_t from (h^{l-1}_t, h^l_{t-1}).
template <typename S>
Tensor<S> bgru_forward(const BGruLayer<S>& layer, const Tensor<S>& h_lm1_t, const Tensor<S>& h_l_prev) {
    if (layer.pooled) return gru_step(maxpool2(h_lm1_t), h_l_prev, layer.forward_gates);
    return gru_step(h_lm1_t, h_l_prev, layer.forward_gates);
}

// h^{l-1}_t from (h^l_t, h^{l-1}_{t-1}). For pooled layers the gate arithmetic
// runs at the coarse resolution, with the pooled previous state as recurrent
// input, and the result is written back at the fine resolution.
template <typename S>
Tensor<S> bgru_backward(const BGruLayer<S>& layer, const Tensor<S>& h_l_t, const Tensor<S>& h_lm1_prev) {
    if (layer.pooled)
        return upsample_nearest2(gru_step(h_l_t, maxpool2(h_lm1_prev), layer.backward_gates));
    return gru_step(h_l_t, h_lm1_prev, layer.backward_gates);
}

// Weight count (biases excluded) of one forward+backward pair with shared
// states: 3k^2(d_in^2 + d_out^2 + 2 d_in d_out).
inline std::uint64_t param_count_shared(std::uint64_t d_in, std::uint64_t d_out, std::uint64_t kernel_area) {
    return 3 * kernel_area * (d_in * d_in + d_out * d_out + 2 * d_in * d_out);
}

// The bridge-connected equivalent: 3k^2(d_in^2 + d_out^2 + 4 d_in d_out).
inline std::uint64_t param_count_bridged(std::uint64_t d_in, std::uint64_t d_out, std::uint64_t kernel_area) {
    return 3 * kernel_area * (d_in * d_in + d_out * d_out + 4 * d_in * d_out);
}

// Number of weight elements actually stored in a layer (biases excluded).
template <typename S>
std::uint64_t enumerate_weights(const BGruLayer<S>& layer) {
    std::uint64_t n = 0;
    for (const GruGateSet<S>* set : {&layer.forward_gates, &layer.backward_gates})
        for (const GruGate<S>* gate : {&set->update, &set->reset, &set->candidate})
            n += gate->input.weights.size() + gate->state.weights.size();
    return n;
}

template <typename S>
std::uint64_t enumerate_biases(const BGruLayer<S>& layer) {
    std::uint64_t n = 0;
    for (const GruGateSet<S>* set : {&layer.forward_gates, &layer.backward_gates})
        for (const GruGate<S>* gate : {&set->update, &set->reset, &set->candidate})
            n += gate->input.bias.size();
    return n;
}

}  // namespace frnn
