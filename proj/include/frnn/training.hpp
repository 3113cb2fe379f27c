#pragma once

// L1 objective, RMSProp, orthogonal model initialization, the g/p training
// schedule, and binary checkpoints.
//
// Batch sampling is a pure function of (seed, absolute step), so a (seed,
// step counter) pair in a checkpoint replays the exact remaining stream:
// resuming from step k is bit-identical to having never stopped.

#include <fstream>
#include <limits>

#include "frnn/folded.hpp"
#include "frnn/io.hpp"
#include "frnn/topology_text.hpp"

namespace frnn {

struct TrainConfig {
    std::size_t g = 10;
    std::size_t p = 10;
    double learning_rate = 0.0001;
    std::size_t batch_size = 12;
    std::size_t steps = 1;
    std::uint64_t seed = 0;
    double rmsprop_decay = 0.9;
    double rmsprop_epsilon = 1e-8;

    void validate() const {
        if (g < 1 || p < 1) throw ConfigError("train: g and p must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (steps < 1) throw ConfigError("train: steps must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
    }
};

// Mean absolute difference over all elements.
template <typename S>
Tensor<S> l1_loss(const SequenceBatch<S>& pred, const SequenceBatch<S>& target) {
    detail::check_same_shape(pred.values(), target.values(), "l1_loss");
    const S inv = S(1) / static_cast<S>(pred.values().size());
    return scale(sum(abs(sub(pred.values(), target.values()))), inv);
}

template <typename S>
struct RmsPropState {
    std::vector<Tensor<S>> acc;  // aligned with FoldedStack::parameters()
};

template <typename S>
RmsPropState<S> init_rmsprop(FoldedStack<S>& stack) {
    RmsPropState<S> st;
    for (auto& p : stack.parameters()) st.acc.push_back(Tensor<S>::zeros(p.tensor->shape()));
    return st;
}

// acc <- rho acc + (1-rho) g^2;  param <- param - lr g / (sqrt(acc) + eps)
template <typename S>
void rmsprop_step(std::vector<NamedParam<S>>& params, const std::vector<Tensor<S>>& grads,
                  RmsPropState<S>& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.acc.size())
        throw ShapeError("rmsprop_step: parameter/gradient/accumulator count mismatch");
    const S rho = static_cast<S>(cfg.rmsprop_decay);
    const S lr = static_cast<S>(cfg.learning_rate);
    const S eps = static_cast<S>(cfg.rmsprop_epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        detail::check_same_shape(*params[i].tensor, grads[i], "rmsprop_step");
        auto w = params[i].tensor->data();
        auto g = grads[i].data();
        auto a = state.acc[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            a[j] = rho * a[j] + (S(1) - rho) * g[j] * g[j];
            w[j] -= lr * g[j] / (std::sqrt(a[j]) + eps);
        }
    }
}

// Every kernel drawn orthogonally on its [out, in*k*k] flattening; biases zero.
template <typename S>
FoldedStack<S> init_model(const TopologySpec& spec, std::uint64_t seed) {
    FoldedStack<S> stack = make_stack<S>(spec);
    Rng rng(seed);
    for (auto& p : stack.parameters()) {
        Tensor<S>& t = *p.tensor;
        if (t.shape().size() == 4) {
            const auto& s = t.shape();
            Tensor<S> w = orthogonal_init<S>(s[0], s[1] * s[2] * s[3], rng);
            std::copy(w.data().begin(), w.data().end(), t.data().begin());
        }
        // biases stay zero
    }
    return stack;
}

namespace detail {

// Gathers a [batch, len, c, h, w] block from per-item (sequence, offset) picks.
template <typename S>
SequenceBatch<S> gather_window(const SequenceBatch<S>& dataset,
                               const std::vector<std::pair<std::size_t, std::size_t>>& picks,
                               std::size_t t0, std::size_t len) {
    const std::size_t chw = dataset.channels() * dataset.height() * dataset.width();
    Tensor<S> out({picks.size(), len, dataset.channels(), dataset.height(), dataset.width()});
    auto src = dataset.values().data();
    auto dst = out.data();
    for (std::size_t bi = 0; bi < picks.size(); ++bi) {
        const auto [seq, off] = picks[bi];
        const std::size_t base = (seq * dataset.time() + off + t0) * chw;
        std::copy(src.begin() + base, src.begin() + base + len * chw, dst.begin() + bi * len * chw);
    }
    return SequenceBatch<S>(std::move(out));
}

}  // namespace detail

// One optimizer step: sample a batch of random sub-sequences, encode g frames,
// predict p, L1 against the p target frames, backpropagate through the whole
// unroll, apply RMSProp. Returns the loss.
template <typename S>
S train_step(FoldedStack<S>& stack, RmsPropState<S>& opt, const SequenceBatch<S>& dataset,
             const TrainConfig& cfg, std::uint64_t absolute_step) {
    Rng rng = Rng(cfg.seed).fork(absolute_step);
    const std::size_t span = cfg.g + cfg.p;
    std::vector<std::pair<std::size_t, std::size_t>> picks(cfg.batch_size);
    for (auto& pk : picks) {
        pk.first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(dataset.batch()) - 1));
        pk.second = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(dataset.time() - span)));
    }
    SequenceBatch<S> inputs = detail::gather_window(dataset, picks, 0, cfg.g);
    SequenceBatch<S> targets = detail::gather_window(dataset, picks, cfg.g, cfg.p);

    Tape<S> tape;
    stack.watch_parameters(tape);
    SequenceBatch<S> pred = run_sequence(stack, inputs, cfg.p);
    Tensor<S> loss = l1_loss(pred, targets);
    tape.backward(loss);

    auto params = stack.parameters();
    std::vector<Tensor<S>> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(tape.grad(*p.tensor));
    stack.detach_parameters();
    rmsprop_step(params, grads, opt, cfg);
    return loss.item();
}

// Runs cfg.steps optimizer steps; appends one loss per step.
template <typename S>
std::vector<S> train(FoldedStack<S>& stack, RmsPropState<S>& opt, const SequenceBatch<S>& dataset,
                     const TrainConfig& cfg, std::uint64_t start_step = 0) {
    cfg.validate();
    if (dataset.time() < cfg.g + cfg.p)
        throw ShapeError("train: sequences of length " + std::to_string(dataset.time()) +
                         " are shorter than g+p = " + std::to_string(cfg.g + cfg.p));
    std::vector<S> losses;
    losses.reserve(cfg.steps);
    for (std::size_t i = 0; i < cfg.steps; ++i)
        losses.push_back(train_step(stack, opt, dataset, cfg, start_step + i));
    return losses;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "FRNN", version 1, topology text, named f32 tensor
// records, optimizer records, then a seed/step footer. Little-endian.

namespace detail {

inline void write_tensor_record(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    io::write_string(os, name);
    io::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) io::write_u32(os, static_cast<std::uint32_t>(e));
    io::write_f32_array(os, t.data().data(), t.size());
}

inline void read_tensor_record(std::istream& is, const std::string& expected_name, Tensor<float>& t) {
    const std::string name = io::read_string(is, "tensor name");
    if (name != expected_name)
        throw FileError("checkpoint: expected tensor '" + expected_name + "', found '" + name + "'");
    const std::uint32_t ndim = io::read_u32(is, "tensor rank");
    Shape shape(ndim);
    for (auto& e : shape) e = io::read_u32(is, "tensor extent");
    if (shape != t.shape())
        throw FileError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                        ", expected " + shape_str(t.shape()));
    io::read_f32_array(is, t.data().data(), t.size(), name.c_str());
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'F', 'R', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, FoldedStack<float>& stack,
                            const RmsPropState<float>& opt, std::uint64_t seed, std::uint64_t step) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FileError("cannot open '" + path + "' for writing");
    io::write_magic(os, kCheckpointMagic);
    io::write_u32(os, kCheckpointVersion);
    io::write_string(os, topology_to_text(stack.spec));
    auto params = stack.parameters();
    if (opt.acc.size() != params.size())
        throw ShapeError("save_checkpoint: optimizer state does not match parameters");
    io::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (auto& p : params) detail::write_tensor_record(os, p.name, *p.tensor);
    io::write_u32(os, static_cast<std::uint32_t>(opt.acc.size()));
    for (std::size_t i = 0; i < opt.acc.size(); ++i)
        detail::write_tensor_record(os, "rms." + params[i].name, opt.acc[i]);
    io::write_u64(os, seed);
    io::write_u64(os, step);
    if (!os) throw FileError("write failed for '" + path + "'");
}

struct Checkpoint {
    FoldedStack<float> stack;
    RmsPropState<float> opt;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("cannot open '" + path + "' for reading");
    io::expect_magic(is, kCheckpointMagic, "checkpoint");
    const std::uint32_t version = io::read_u32(is, "checkpoint version");
    if (version != kCheckpointVersion)
        throw FileError("checkpoint version " + std::to_string(version) + " is not supported");
    Checkpoint ck;
    ck.stack = make_stack<float>(topology_from_text(io::read_string(is, "topology")));
    auto params = ck.stack.parameters();
    const std::uint32_t n_tensors = io::read_u32(is, "tensor count");
    if (n_tensors != params.size())
        throw FileError("checkpoint holds " + std::to_string(n_tensors) + " tensors, topology needs " +
                        std::to_string(params.size()));
    for (auto& p : params) detail::read_tensor_record(is, p.name, *p.tensor);
    const std::uint32_t n_opt = io::read_u32(is, "optimizer record count");
    if (n_opt != params.size())
        throw FileError("checkpoint holds " + std::to_string(n_opt) + " optimizer records, expected " +
                        std::to_string(params.size()));
    ck.opt.acc.reserve(params.size());
    for (auto& p : params) {
        Tensor<float> acc(p.tensor->shape());
        detail::read_tensor_record(is, "rms." + p.name, acc);
        ck.opt.acc.push_back(std::move(acc));
    }
    ck.seed = io::read_u64(is, "seed");
    ck.step = io::read_u64(is, "step counter");
    return ck;
}

}  // namespace frnn
