#pragma once

// Dense row-major tensors with a reverse-mode differentiation tape.
//
// Tensors are value types over a shared contiguous buffer. Operations are
// free functions; when an input is tracked on a tape, the operation records
// a backward rule and the result is tracked on the same tape. Replaying the
// tape visits operations in exact reverse order of recording. A tape and its
// tensors belong to one logical thread during graph construction and
// backward; frozen tensors may be shared across threads for reading.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace frnn {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ' ';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

template <typename S>
class Tape;

template <typename S>
class Tensor {
public:
    using value_type = S;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_ = std::make_shared<std::vector<S>>(shape_numel(shape_), S(0));
    }

    Tensor(Shape shape, std::vector<S> values) : shape_(std::move(shape)) {
        validate_shape();
        if (shape_numel(shape_) != values.size()) {
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape_));
        }
        data_ = std::make_shared<std::vector<S>>(std::move(values));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    bool empty() const { return !data_; }

    std::span<S> data() { return {data_->data(), data_->size()}; }
    std::span<const S> data() const { return {data_->data(), data_->size()}; }
    const std::shared_ptr<std::vector<S>>& buffer() const { return data_; }

    S operator[](std::size_t i) const { return (*data_)[i]; }

    // Value of a single-element tensor.
    S item() const {
        if (size() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape_));
        return (*data_)[0];
    }

    // Deep copy; the result is untracked.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        if (data_) t.data_ = std::make_shared<std::vector<S>>(*data_);
        return t;
    }

    bool requires_grad() const { return tape_ != nullptr; }
    Tape<S>* tape() const { return tape_; }
    int node() const { return node_; }
    void detach() {
        tape_ = nullptr;
        node_ = -1;
    }

private:
    friend class Tape<S>;

    void validate_shape() const {
        if (shape_.empty()) throw ShapeError("tensor: empty shape");
        for (std::size_t e : shape_)
            if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::shared_ptr<std::vector<S>> data_;
    Tape<S>* tape_ = nullptr;
    int node_ = -1;
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
    for (S v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// Ordered record of primitive operations with their backward rules.
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a leaf so gradients accumulate into it.
    void watch(Tensor<S>& t) {
        if (t.tape_ == this) return;
        if (t.tape_ != nullptr) throw std::logic_error("watch: tensor tracked on another tape");
        t.tape_ = this;
        t.node_ = new_slot(t.size());
    }

    // Assigns a node to an op result. Used by operation implementations.
    void attach(Tensor<S>& t) {
        t.tape_ = this;
        t.node_ = new_slot(t.size());
    }

    void record(std::function<void(Tape&)> backward_rule) { ops_.push_back(std::move(backward_rule)); }

    std::size_t op_count() const { return ops_.size(); }

    // Accumulates d(root)/d(leaf) for every tracked tensor. Gradients from
    // earlier backward calls are discarded, so repeated calls agree bit for bit.
    void backward(const Tensor<S>& root) {
        if (root.tape() != this || root.node() < 0)
            throw std::logic_error("backward: root not produced on this tape");
        if (root.size() != 1)
            throw ShapeError("backward: root has shape " + shape_str(root.shape()) + ", expected [1]");
        for (auto& g : grads_) g.clear();
        grad_ref(root.node()).assign(1, S(1));
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
    }

    // Gradient of a tracked tensor, same shape as the tensor.
    Tensor<S> grad(const Tensor<S>& t) const {
        if (t.tape() != this || t.node() < 0)
            throw std::logic_error("grad: tensor not tracked on this tape");
        const auto& g = grads_[static_cast<std::size_t>(t.node())];
        if (g.empty()) return Tensor<S>::zeros(t.shape());
        return Tensor<S>(t.shape(), g);
    }

    bool grad_present(int node) const {
        return node >= 0 && !grads_[static_cast<std::size_t>(node)].empty();
    }

    std::vector<S>& grad_ref(int node) {
        auto& g = grads_[static_cast<std::size_t>(node)];
        if (g.empty()) g.assign(numels_[static_cast<std::size_t>(node)], S(0));
        return g;
    }

private:
    int new_slot(std::size_t numel) {
        grads_.emplace_back();
        numels_.push_back(numel);
        return static_cast<int>(grads_.size()) - 1;
    }

    std::vector<std::function<void(Tape&)>> ops_;
    std::vector<std::vector<S>> grads_;
    std::vector<std::size_t> numels_;
};

namespace detail {

template <typename S>
Tape<S>* common_tape(std::initializer_list<const Tensor<S>*> ts) {
    Tape<S>* tape = nullptr;
    for (const Tensor<S>* t : ts) {
        if (!t->requires_grad()) continue;
        if (tape && tape != t->tape()) throw std::logic_error("operands tracked on different tapes");
        tape = t->tape();
    }
    return tape;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

enum class EwOp { add, sub, mul };

template <typename S>
Tensor<S> ew_binary(const Tensor<S>& a, const Tensor<S>& b, EwOp op) {
    detail::check_same_shape(a, b, "ew_binary");
    Tensor<S> out(a.shape());
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    switch (op) {
        case EwOp::add:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
            break;
        case EwOp::sub:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
            break;
        case EwOp::mul:
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
            break;
    }
    if (Tape<S>* tp = detail::common_tape<S>({&a, &b})) {
        tp->attach(out);
        const int oid = out.node(), aid = a.node(), bid = b.node();
        auto abuf = a.buffer();
        auto bbuf = b.buffer();
        const std::size_t n = out.size();
        tp->record([op, oid, aid, bid, abuf, bbuf, n](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const S* go = t.grad_ref(oid).data();
            if (aid >= 0) {
                S* ga = t.grad_ref(aid).data();
                const S* bv = bbuf->data();
                if (op == EwOp::mul)
                    for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
                else
                    for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (bid >= 0) {
                S* gb = t.grad_ref(bid).data();
                const S* av = abuf->data();
                if (op == EwOp::mul)
                    for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
                else if (op == EwOp::sub)
                    for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i];
                else
                    for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return ew_binary(a, b, EwOp::add);
}
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return ew_binary(a, b, EwOp::sub);
}
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return ew_binary(a, b, EwOp::mul);
}

enum class Activation { sigmoid, tanh };

inline const char* activation_name(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "tanh";
}

template <typename S>
Tensor<S> activation(const Tensor<S>& a, Activation kind) {
    Tensor<S> out(a.shape());
    auto o = out.data();
    auto av = a.data();
    if (kind == Activation::sigmoid) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = S(1) / (S(1) + std::exp(-av[i]));
    } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(av[i]);
    }
    if (Tape<S>* tp = a.tape()) {
        tp->attach(out);
        const int oid = out.node(), aid = a.node();
        auto obuf = out.buffer();  // backward rules use the activation output
        tp->record([kind, oid, aid, obuf](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& ga = t.grad_ref(aid);
            if (kind == Activation::sigmoid) {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    const S y = (*obuf)[i];
                    ga[i] += go[i] * y * (S(1) - y);
                }
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    const S y = (*obuf)[i];
                    ga[i] += go[i] * (S(1) - y * y);
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    return activation(a, Activation::sigmoid);
}
template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
    return activation(a, Activation::tanh);
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    S acc = 0;
    for (S v : a.data()) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    if (Tape<S>* tp = a.tape()) {
        tp->attach(out);
        const int oid = out.node(), aid = a.node();
        tp->record([oid, aid](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const S g = t.grad_ref(oid)[0];
            auto& ga = t.grad_ref(aid);
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    auto o = out.data();
    auto av = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * c;
    if (Tape<S>* tp = a.tape()) {
        tp->attach(out);
        const int oid = out.node(), aid = a.node();
        tp->record([c, oid, aid](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& ga = t.grad_ref(aid);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
        });
    }
    return out;
}

// |x| with subgradient sign(x), 0 at x == 0.
template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    auto o = out.data();
    auto av = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::fabs(av[i]);
    if (Tape<S>* tp = a.tape()) {
        tp->attach(out);
        const int oid = out.node(), aid = a.node();
        auto abuf = a.buffer();
        tp->record([oid, aid, abuf](Tape<S>& t) {
            if (!t.grad_present(oid)) return;
            const auto& go = t.grad_ref(oid);
            auto& ga = t.grad_ref(aid);
            for (std::size_t i = 0; i < go.size(); ++i) {
                const S x = (*abuf)[i];
                ga[i] += go[i] * (x > S(0) ? S(1) : x < S(0) ? S(-1) : S(0));
            }
        });
    }
    return out;
}

// Seeded generator; identical seed gives an identical stream within one
// implementation. Derived generators (fork) are pure functions of the seed
// and the stream index, which keeps batch sampling replayable from a
// (seed, step) pair alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

    // Inclusive range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    Rng fork(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 over the combined value
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

template <typename S>
Tensor<S> random_uniform(Shape shape, S lo, S hi, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data()) v = lo + (hi - lo) * static_cast<S>(rng.uniform());
    return t;
}

template <typename S>
Tensor<S> random_normal(Shape shape, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<S>(rng.normal());
    return t;
}

// Max over entries of |analytic - central difference| / max(1, |central difference|)
// for a scalar-valued function f of one tensor. f is invoked with tracked and
// untracked arguments; it must build its result from tensor operations.
template <typename S, typename F>
S grad_check(F&& f, const Tensor<S>& x, S eps) {
    Tape<S> tape;
    Tensor<S> xt = x.clone();
    tape.watch(xt);
    Tensor<S> y = f(xt);
    if (y.size() != 1)
        throw ShapeError("grad_check: f returned shape " + shape_str(y.shape()) + ", expected [1]");
    tape.backward(y);
    Tensor<S> analytic = tape.grad(xt);

    Tensor<S> xp = x.clone();
    S max_err = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const S x0 = x[i];
        xp.data()[i] = x0 + eps;
        const S fp = f(xp).item();
        xp.data()[i] = x0 - eps;
        const S fm = f(xp).item();
        xp.data()[i] = x0;
        const S fd = (fp - fm) / (2 * eps);
        const S err = std::fabs(analytic[i] - fd) / std::max(S(1), std::fabs(fd));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace frnn
