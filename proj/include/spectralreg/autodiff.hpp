#pragma once

// Tensor-level automatic differentiation.
//
// Every operation records a node holding its value and inputs. Reverse-mode
// adjoints (grad) and forward-mode tangents (jvp) are themselves expressed with
// recorded operations, so any quantity produced by grad/jvp can be
// differentiated again. That is what lets a loss built from VJPs, JVPs and
// HVPs be differentiated with respect to network parameters.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spectralreg/errors.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::ad {

class Node;

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    const Node* id() const noexcept { return node_.get(); }
    const std::shared_ptr<const Node>& node() const noexcept { return node_; }
    explicit operator bool() const noexcept { return static_cast<bool>(node_); }

private:
    std::shared_ptr<const Node> node_;
};

class Node {
public:
    Node(Tensor value, std::vector<Var> inputs) : value_(std::move(value)), inputs_(std::move(inputs)) {}
    virtual ~Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    const Tensor& value() const noexcept { return value_; }
    const std::vector<Var>& inputs() const noexcept { return inputs_; }
    bool is_leaf() const noexcept { return inputs_.empty(); }

    /// Writes the adjoint of each input whose `needed` flag is set.
    virtual void backward(const Var& self, const Var& grad, std::span<Var> input_grads,
                          const std::vector<bool>& needed) const = 0;

    /// Output tangent from input tangents; an empty Var stands for a zero tangent.
    virtual Var tangent(const Var& self, std::span<const Var> input_tangents) const = 0;

private:
    Tensor value_;
    std::vector<Var> inputs_;
};

inline const Tensor& Var::value() const {
    if (!node_) throw ContractError("use of an empty ad::Var");
    return node_->value();
}

// ---------------------------------------------------------------------------
// Public operation surface (definitions below the node classes).

Var constant(Tensor value);
Var detach(const Var& v);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var affine(const Var& a, double slope, double offset);
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
Var broadcast_rows(const Var& row, std::size_t rows);
Var sum_rows(const Var& a);
Var row_sum(const Var& a);
Var broadcast_cols(const Var& col, std::size_t cols);
Var sum_all(const Var& a);
Var broadcast_scalar(const Var& s, const Shape& shape);
Var reshape(const Var& a, const Shape& shape);
Var softplus(const Var& a, double beta);
Var sigmoid(const Var& a, double beta);
Var exp(const Var& a);
Var log(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var reciprocal(const Var& a, bool safe_at_zero = false);
Var row_norm(const Var& a);
Var logsumexp_rows(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

inline Var add_bias(const Var& a, const Var& bias) { return add(a, broadcast_rows(bias, a.rows())); }
inline Var row_dot(const Var& a, const Var& b) { return row_sum(mul(a, b)); }
inline Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

std::vector<Var> grad(const Var& output, const Var& seed, std::span<const Var> wrt);
Var grad(const Var& output, const Var& seed, const Var& wrt);
Var jvp(const Var& output, const Var& input, const Var& tangent);

// ---------------------------------------------------------------------------

namespace detail {

inline void require_same(const Var& a, const Var& b, const char* op) { a.value().require_same(b.value(), op); }

inline Var accumulate(const Var& acc, const Var& g) { return acc ? add(acc, g) : g; }

template <class NodeT, class... Args>
Var make(Args&&... args) {
    return Var(std::make_shared<const NodeT>(std::forward<Args>(args)...));
}

class Leaf final : public Node {
public:
    explicit Leaf(Tensor v) : Node(std::move(v), {}) {}
    void backward(const Var&, const Var&, std::span<Var>, const std::vector<bool>&) const override {}
    Var tangent(const Var&, std::span<const Var>) const override { return {}; }
};

class Add final : public Node {
public:
    Add(const Var& a, const Var& b) : Node(a.value() + b.value(), {a, b}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>& need) const override {
        if (need[0]) out[0] = g;
        if (need[1]) out[1] = g;
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        if (t[0] && t[1]) return add(t[0], t[1]);
        return t[0] ? t[0] : t[1];
    }
};

class Sub final : public Node {
public:
    Sub(const Var& a, const Var& b) : Node(a.value() - b.value(), {a, b}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>& need) const override {
        if (need[0]) out[0] = g;
        if (need[1]) out[1] = neg(g);
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        if (t[0] && t[1]) return sub(t[0], t[1]);
        return t[0] ? t[0] : neg(t[1]);
    }
};

class Affine final : public Node {
public:
    Affine(const Var& a, double slope, double offset)
        : Node(tensor_ops::map(a.value(), [=](double v) { return slope * v + offset; }), {a}), slope_(slope) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = scale(g, slope_);
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return scale(t[0], slope_); }

private:
    double slope_;
};

class Mul final : public Node {
public:
    Mul(const Var& a, const Var& b) : Node(tensor_ops::hadamard(a.value(), b.value()), {a, b}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>& need) const override {
        if (need[0]) out[0] = mul(g, inputs()[1]);
        if (need[1]) out[1] = mul(g, inputs()[0]);
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        Var r;
        if (t[0]) r = mul(t[0], inputs()[1]);
        if (t[1]) r = accumulate(r, mul(inputs()[0], t[1]));
        return r;
    }
};

class MatMul final : public Node {
public:
    MatMul(const Var& a, const Var& b, bool ta, bool tb)
        : Node(tensor_ops::matmul(a.value(), b.value(), ta, tb), {a, b}), ta_(ta), tb_(tb) {}

    // C = A'B' with A' = op(A), B' = op(B); dA' = G B'^T, dB' = A'^T G.
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>& need) const override {
        const Var& a = inputs()[0];
        const Var& b = inputs()[1];
        if (need[0]) {
            if (!ta_) out[0] = tb_ ? matmul(g, b, false, false) : matmul(g, b, false, true);
            else out[0] = tb_ ? matmul(b, g, true, true) : matmul(b, g, false, true);
        }
        if (need[1]) {
            if (!tb_) out[1] = ta_ ? matmul(a, g, false, false) : matmul(a, g, true, false);
            else out[1] = ta_ ? matmul(g, a, true, true) : matmul(g, a, true, false);
        }
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        Var r;
        if (t[0]) r = matmul(t[0], inputs()[1], ta_, tb_);
        if (t[1]) r = accumulate(r, matmul(inputs()[0], t[1], ta_, tb_));
        return r;
    }

private:
    bool ta_;
    bool tb_;
};

class BroadcastRows final : public Node {
public:
    BroadcastRows(const Var& row, std::size_t rows) : Node(compute(row.value(), rows), {row}), rows_(rows) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = sum_rows(g);
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return broadcast_rows(t[0], rows_); }

private:
    static Tensor compute(const Tensor& row, std::size_t rows) {
        if (row.rows() != 1) throw DimensionError("broadcast_rows expects a [1 x n] tensor, got " + shape_str(row.shape()));
        Tensor out = Tensor::zeros(rows, row.cols());
        for (std::size_t r = 0; r < rows; ++r) std::copy(row.row(0).begin(), row.row(0).end(), out.row(r).begin());
        return out;
    }
    std::size_t rows_;
};

class SumRows final : public Node {
public:
    explicit SumRows(const Var& a) : Node(compute(a.value()), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = broadcast_rows(g, inputs()[0].rows());
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return sum_rows(t[0]); }

private:
    static Tensor compute(const Tensor& a) {
        Tensor out = Tensor::zeros(1, a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
        return out;
    }
};

class RowSum final : public Node {
public:
    explicit RowSum(const Var& a) : Node(compute(a.value()), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = broadcast_cols(g, inputs()[0].cols());
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return row_sum(t[0]); }

private:
    static Tensor compute(const Tensor& a) {
        Tensor out = Tensor::zeros(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double s = 0.0;
            for (double v : a.row(r)) s += v;
            out(r, 0) = s;
        }
        return out;
    }
};

class BroadcastCols final : public Node {
public:
    BroadcastCols(const Var& col, std::size_t cols) : Node(compute(col.value(), cols), {col}), cols_(cols) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = row_sum(g);
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return broadcast_cols(t[0], cols_); }

private:
    static Tensor compute(const Tensor& col, std::size_t cols) {
        if (col.cols() != 1) throw DimensionError("broadcast_cols expects a [m x 1] tensor, got " + shape_str(col.shape()));
        Tensor out = Tensor::zeros(col.rows(), cols);
        for (std::size_t r = 0; r < col.rows(); ++r)
            for (double& v : out.row(r)) v = col(r, 0);
        return out;
    }
    std::size_t cols_;
};

class SumAll final : public Node {
public:
    explicit SumAll(const Var& a) : Node(Tensor::scalar(a.value().sum()), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = broadcast_scalar(g, inputs()[0].shape());
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return sum_all(t[0]); }
};

class BroadcastScalar final : public Node {
public:
    BroadcastScalar(const Var& s, Shape shape) : Node(Tensor(shape, s.value()[0]), {s}) {
        if (s.value().size() != 1) throw DimensionError("broadcast_scalar expects a single-element tensor");
    }
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = sum_all(g);
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        return broadcast_scalar(t[0], value().shape());
    }
};

class Reshape final : public Node {
public:
    Reshape(const Var& a, const Shape& shape) : Node(a.value().reshaped(shape), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = reshape(g, inputs()[0].shape());
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return reshape(t[0], value().shape()); }
};

inline double softplus_value(double z, double beta) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(beta * z))) / beta;
}

inline double sigmoid_value(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

class Softplus final : public Node {
public:
    Softplus(const Var& a, double beta)
        : Node(tensor_ops::map(a.value(), [=](double z) { return softplus_value(z, beta); }), {a}), beta_(beta) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(g, sigmoid(inputs()[0], beta_));
    }
    Var tangent(const Var&, std::span<const Var> t) const override {
        return mul(t[0], sigmoid(inputs()[0], beta_));
    }

private:
    double beta_;
};

// s = sigmoid(beta * a); ds/da = beta * s * (1 - s).
class Sigmoid final : public Node {
public:
    Sigmoid(const Var& a, double beta)
        : Node(tensor_ops::map(a.value(), [=](double z) { return sigmoid_value(beta * z); }), {a}), beta_(beta) {}
    void backward(const Var& self, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(g, derivative(self));
    }
    Var tangent(const Var& self, std::span<const Var> t) const override { return mul(t[0], derivative(self)); }

private:
    Var derivative(const Var& self) const { return scale(mul(self, affine(self, -1.0, 1.0)), beta_); }
    double beta_;
};

class Exp final : public Node {
public:
    explicit Exp(const Var& a) : Node(tensor_ops::map(a.value(), [](double z) { return std::exp(z); }), {a}) {}
    void backward(const Var& self, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(g, self);
    }
    Var tangent(const Var& self, std::span<const Var> t) const override { return mul(t[0], self); }
};

class Log final : public Node {
public:
    explicit Log(const Var& a) : Node(tensor_ops::map(a.value(), [](double z) { return std::log(z); }), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(g, reciprocal(inputs()[0]));
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return mul(t[0], reciprocal(inputs()[0])); }
};

class Sin final : public Node {
public:
    explicit Sin(const Var& a) : Node(tensor_ops::map(a.value(), [](double z) { return std::sin(z); }), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(g, cos(inputs()[0]));
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return mul(t[0], cos(inputs()[0])); }
};

class Cos final : public Node {
public:
    explicit Cos(const Var& a) : Node(tensor_ops::map(a.value(), [](double z) { return std::cos(z); }), {a}) {}
    void backward(const Var&, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = neg(mul(g, sin(inputs()[0])));
    }
    Var tangent(const Var&, std::span<const Var> t) const override { return neg(mul(t[0], sin(inputs()[0]))); }
};

// y = 1/a, dy/da = -y^2. In safe mode y = 0 where a == 0, which also zeroes the derivative.
class Reciprocal final : public Node {
public:
    Reciprocal(const Var& a, bool safe)
        : Node(tensor_ops::map(a.value(), [=](double z) { return (safe && z == 0.0) ? 0.0 : 1.0 / z; }), {a}) {}
    void backward(const Var& self, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = neg(mul(g, mul(self, self)));
    }
    Var tangent(const Var& self, std::span<const Var> t) const override { return neg(mul(t[0], mul(self, self))); }
};

// y = ||a_r||_2 per row. The gradient at a zero row is taken as zero.
class RowNorm final : public Node {
public:
    explicit RowNorm(const Var& a) : Node(compute(a.value()), {a}) {}
    void backward(const Var& self, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        const Var& a = inputs()[0];
        out[0] = mul(broadcast_cols(mul(g, reciprocal(self, true)), a.cols()), a);
    }
    Var tangent(const Var& self, std::span<const Var> t) const override {
        return mul(row_sum(mul(inputs()[0], t[0])), reciprocal(self, true));
    }

private:
    static Tensor compute(const Tensor& a) {
        const auto n = tensor_ops::row_norms(a);
        return Tensor({a.rows(), 1}, n);
    }
};

class LogSumExpRows final : public Node {
public:
    explicit LogSumExpRows(const Var& a) : Node(compute(a.value()), {a}) {}
    void backward(const Var& self, const Var& g, std::span<Var> out, const std::vector<bool>&) const override {
        out[0] = mul(broadcast_cols(g, inputs()[0].cols()), softmax(self));
    }
    Var tangent(const Var& self, std::span<const Var> t) const override {
        return row_sum(mul(softmax(self), t[0]));
    }

private:
    Var softmax(const Var& self) const {
        const Var& a = inputs()[0];
        return exp(sub(a, broadcast_cols(self, a.cols())));
    }
    static Tensor compute(const Tensor& a) {
        Tensor out = Tensor::zeros(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const auto row = a.row(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double s = 0.0;
            for (double v : row) s += std::exp(v - mx);
            out(r, 0) = mx + std::log(s);
        }
        return out;
    }
};

/// Nodes reachable from `root`, inputs before consumers.
inline std::vector<std::shared_ptr<const Node>> topological_order(const Var& root) {
    std::vector<std::shared_ptr<const Node>> order;
    std::unordered_set<const Node*> visited;
    struct Frame {
        std::shared_ptr<const Node> node;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node(), 0});
    visited.insert(root.id());
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& inputs = top.node->inputs();
        if (top.next_input < inputs.size()) {
            const Var& in = inputs[top.next_input++];
            if (visited.insert(in.id()).second) stack.push_back({in.node(), 0});
        } else {
            order.push_back(top.node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Var constant(Tensor value) { return detail::make<detail::Leaf>(std::move(value)); }
inline Var detach(const Var& v) { return constant(v.value()); }

inline Var add(const Var& a, const Var& b) {
    detail::require_same(a, b, "add");
    return detail::make<detail::Add>(a, b);
}
inline Var sub(const Var& a, const Var& b) {
    detail::require_same(a, b, "sub");
    return detail::make<detail::Sub>(a, b);
}
inline Var neg(const Var& a) { return affine(a, -1.0, 0.0); }
inline Var mul(const Var& a, const Var& b) {
    detail::require_same(a, b, "mul");
    return detail::make<detail::Mul>(a, b);
}
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
inline Var affine(const Var& a, double slope, double offset) { return detail::make<detail::Affine>(a, slope, offset); }
inline Var matmul(const Var& a, const Var& b, bool ta, bool tb) { return detail::make<detail::MatMul>(a, b, ta, tb); }
inline Var broadcast_rows(const Var& row, std::size_t rows) { return detail::make<detail::BroadcastRows>(row, rows); }
inline Var sum_rows(const Var& a) { return detail::make<detail::SumRows>(a); }
inline Var row_sum(const Var& a) { return detail::make<detail::RowSum>(a); }
inline Var broadcast_cols(const Var& col, std::size_t cols) { return detail::make<detail::BroadcastCols>(col, cols); }
inline Var sum_all(const Var& a) { return detail::make<detail::SumAll>(a); }
inline Var broadcast_scalar(const Var& s, const Shape& shape) { return detail::make<detail::BroadcastScalar>(s, shape); }
inline Var reshape(const Var& a, const Shape& shape) { return detail::make<detail::Reshape>(a, shape); }
inline Var softplus(const Var& a, double beta) { return detail::make<detail::Softplus>(a, beta); }
inline Var sigmoid(const Var& a, double beta) { return detail::make<detail::Sigmoid>(a, beta); }
inline Var exp(const Var& a) { return detail::make<detail::Exp>(a); }
inline Var log(const Var& a) { return detail::make<detail::Log>(a); }
inline Var sin(const Var& a) { return detail::make<detail::Sin>(a); }
inline Var cos(const Var& a) { return detail::make<detail::Cos>(a); }
inline Var reciprocal(const Var& a, bool safe_at_zero) { return detail::make<detail::Reciprocal>(a, safe_at_zero); }
inline Var row_norm(const Var& a) { return detail::make<detail::RowNorm>(a); }
inline Var logsumexp_rows(const Var& a) { return detail::make<detail::LogSumExpRows>(a); }

/// Reverse-mode adjoints of `output` seeded with `seed`, for each node in `wrt`.
/// The returned Vars are recorded, so they can be differentiated again.
inline std::vector<Var> grad(const Var& output, const Var& seed, std::span<const Var> wrt) {
    output.value().require_same(seed.value(), "grad seed");
    const auto order = detail::topological_order(output);

    std::unordered_set<const Node*> targets;
    for (const Var& w : wrt) targets.insert(w.id());
    std::unordered_set<const Node*> depends;
    for (const auto& node : order) {
        if (targets.count(node.get())) {
            depends.insert(node.get());
            continue;
        }
        for (const Var& in : node->inputs()) {
            if (depends.count(in.id())) {
                depends.insert(node.get());
                break;
            }
        }
    }

    std::unordered_map<const Node*, Var> adjoint;
    if (depends.count(output.id())) adjoint[output.id()] = seed;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& node = *it;
        if (node->is_leaf()) continue;
        auto found = adjoint.find(node.get());
        if (found == adjoint.end()) continue;
        const auto& inputs = node->inputs();
        std::vector<bool> needed(inputs.size());
        bool any = false;
        for (std::size_t i = 0; i < inputs.size(); ++i) any |= (needed[i] = depends.count(inputs[i].id()) > 0);
        if (!any) continue;
        std::vector<Var> input_grads(inputs.size());
        node->backward(Var(node), found->second, input_grads, needed);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!needed[i] || !input_grads[i]) continue;
            Var& slot = adjoint[inputs[i].id()];
            slot = detail::accumulate(slot, input_grads[i]);
        }
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto found = adjoint.find(w.id());
        result.push_back(found != adjoint.end() ? found->second : constant(Tensor(w.shape())));
    }
    return result;
}

inline Var grad(const Var& output, const Var& seed, const Var& wrt) {
    const Var targets[] = {wrt};
    return grad(output, seed, targets).front();
}

/// Forward-mode directional derivative of `output` along `tangent` at `input`.
inline Var jvp(const Var& output, const Var& input, const Var& tangent) {
    input.value().require_same(tangent.value(), "jvp tangent");
    const auto order = detail::topological_order(output);
    std::unordered_map<const Node*, Var> tangents;
    tangents[input.id()] = tangent;
    std::vector<Var> in_tangents;
    for (const auto& node : order) {
        if (node->is_leaf()) continue;
        const auto& inputs = node->inputs();
        in_tangents.assign(inputs.size(), Var{});
        bool any = false;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto found = tangents.find(inputs[i].id());
            if (found != tangents.end()) {
                in_tangents[i] = found->second;
                any = true;
            }
        }
        if (!any) continue;
        Var t = node->tangent(Var(node), in_tangents);
        if (t) tangents[node.get()] = std::move(t);
    }
    auto found = tangents.find(output.id());
    return found != tangents.end() ? found->second : constant(Tensor(output.shape()));
}

}  // namespace spectralreg::ad
