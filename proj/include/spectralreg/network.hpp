#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spectralreg/autodiff.hpp"
#include "spectralreg/errors.hpp"
#include "spectralreg/random.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg {

/// Anything mapping a recorded batch [b x d_in] to a recorded batch [b x d_out],
/// row by row. Networks are the main instance; tests also use closed-form maps.
template <class M>
concept Model = requires(const M& m, const ad::Var& x) {
    { m(x) } -> std::convertible_to<ad::Var>;
};

struct Layer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [1 x out]
};

class BoundNetwork;

/// Fully connected network with Softplus between layers and a linear last layer.
/// Immutable after construction.
class Network {
public:
    static constexpr double kDefaultBeta = 8.0;

    Network(std::vector<Layer> layers, double beta = kDefaultBeta) : layers_(std::move(layers)), beta_(beta) {
        if (layers_.empty()) throw ContractError("network needs at least one layer");
        if (!(beta_ > 0.0)) throw ContractError("softplus beta must be positive");
        dims_.push_back(layers_.front().weight.cols());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            if (layer.weight.cols() != dims_.back()) {
                throw DimensionError("layer " + std::to_string(l) + " weight " + shape_str(layer.weight.shape()) +
                                     " does not accept width " + std::to_string(dims_.back()));
            }
            if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.rows()) {
                throw DimensionError("layer " + std::to_string(l) + " bias " + shape_str(layer.bias.shape()) +
                                     " does not match weight " + shape_str(layer.weight.shape()));
            }
            dims_.push_back(layer.weight.rows());
        }
        for (const Tensor& p : parameters()) const_params_.push_back(ad::constant(p));
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization of weights and biases.
    static Network random(const std::vector<std::size_t>& dims, std::uint64_t seed, double beta = kDefaultBeta) {
        if (dims.size() < 2) throw ContractError("layer_dims needs an input and an output width");
        Rng rng = make_stream(seed, 0x1417);
        std::vector<Layer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            std::uniform_real_distribution<double> dist(-bound, bound);
            Layer layer{Tensor::zeros(dims[l + 1], dims[l]), Tensor::zeros(1, dims[l + 1])};
            for (double& v : layer.weight.values()) v = dist(rng);
            for (double& v : layer.bias.values()) v = dist(rng);
            layers.push_back(std::move(layer));
        }
        return Network(std::move(layers), beta);
    }

    static Network linear(Tensor weight) {
        const std::size_t out = weight.rows();
        return Network({Layer{std::move(weight), Tensor::zeros(1, out)}});
    }

    static Network identity(std::size_t d) { return linear(Tensor::eye(d)); }

    const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
    std::size_t input_dim() const noexcept { return dims_.front(); }
    std::size_t output_dim() const noexcept { return dims_.back(); }
    double beta() const noexcept { return beta_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }

    /// Flat list: layer0.weight, layer0.bias, layer1.weight, ...
    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const Layer& l : layers_) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
        return out;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            out.push_back("layer" + std::to_string(l) + ".weight");
            out.push_back("layer" + std::to_string(l) + ".bias");
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    Network with_parameters(const std::vector<Tensor>& params) const {
        if (params.size() != 2 * layers_.size()) throw DimensionError("parameter count does not match network");
        std::vector<Layer> layers;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            params[2 * l].require_same(layers_[l].weight, "with_parameters");
            params[2 * l + 1].require_same(layers_[l].bias, "with_parameters");
            layers.push_back(Layer{params[2 * l], params[2 * l + 1]});
        }
        return Network(std::move(layers), beta_);
    }

    void check_input(const Tensor& x) const {
        if (x.rank() != 2 || x.cols() != input_dim()) {
            throw DimensionError("network expects inputs [b x " + std::to_string(input_dim()) + "], got " +
                                 shape_str(x.shape()));
        }
    }

    /// Recorded evaluation with the given parameter Vars (same order as parameters()).
    ad::Var apply(const ad::Var& x, std::span<const ad::Var> params) const {
        check_input(x.value());
        ad::Var h = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            h = ad::add_bias(ad::matmul(h, params[2 * l], false, true), params[2 * l + 1]);
            if (l + 1 < layers_.size()) h = ad::softplus(h, beta_);
        }
        return h;
    }

    /// Recorded evaluation with parameters as constants.
    ad::Var operator()(const ad::Var& x) const { return apply(x, constant_params()); }

    /// Plain evaluation without recording.
    Tensor forward(const Tensor& x) const {
        check_input(x);
        Tensor h = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Tensor z = tensor_ops::matmul(h, layers_[l].weight, false, true);
            for (std::size_t r = 0; r < z.rows(); ++r)
                for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += layers_[l].bias(0, c);
            if (l + 1 < layers_.size()) {
                for (double& v : z.values()) v = ad::detail::softplus_value(v, beta_);
            }
            h = std::move(z);
        }
        return h;
    }

    BoundNetwork bind() const;

private:
    const std::vector<ad::Var>& constant_params() const noexcept { return const_params_; }

    std::vector<Layer> layers_;
    std::vector<std::size_t> dims_;
    double beta_;
    std::vector<ad::Var> const_params_;
};

/// A network whose parameters are leaves of the current recording, so losses
/// built from it can be differentiated with respect to them.
class BoundNetwork {
public:
    explicit BoundNetwork(const Network& net) : net_(&net) {
        for (const Tensor& p : net.parameters()) params_.push_back(ad::constant(p));
    }

    ad::Var operator()(const ad::Var& x) const { return net_->apply(x, params_); }
    std::span<const ad::Var> parameters() const noexcept { return params_; }
    const Network& network() const noexcept { return *net_; }

private:
    const Network* net_;
    std::vector<ad::Var> params_;
};

inline BoundNetwork Network::bind() const { return BoundNetwork(*this); }

/// Input-gradient field of a scalar model: x -> grad_x m(x). Its Jacobian is the
/// Hessian of m, hence symmetric.
template <Model M>
class GradientField {
public:
    explicit GradientField(M potential) : potential_(std::move(potential)) {}

    ad::Var operator()(const ad::Var& x) const {
        ad::Var y = potential_(x);
        return ad::grad(y, ad::constant(Tensor::ones(y.rows(), y.cols())), x);
    }

private:
    M potential_;
};

// ---------------------------------------------------------------------------
// Recorded linearizations.

/// Records y = f(x) once; VJPs and JVPs are then replayed against that record.
class JacobianTape {
public:
    template <Model M>
    JacobianTape(const M& model, const Tensor& x) : input_(ad::constant(x)), output_(model(input_)) {
        if (output_.rows() != x.rows()) throw DimensionError("model changed the batch size");
    }

    std::size_t batch() const { return input_.rows(); }
    std::size_t input_dim() const { return input_.cols(); }
    std::size_t output_dim() const { return output_.cols(); }
    const ad::Var& input() const noexcept { return input_; }
    const ad::Var& output() const noexcept { return output_; }

    /// u^T J per row.
    ad::Var vjp(const ad::Var& u) const {
        if (u.value().shape() != output_.shape()) {
            throw DimensionError("vjp seed " + shape_str(u.shape()) + " vs output " + shape_str(output_.shape()));
        }
        return ad::grad(output_, u, input_);
    }

    /// J v per row.
    ad::Var jvp(const ad::Var& v) const {
        if (v.value().shape() != input_.shape()) {
            throw DimensionError("jvp tangent " + shape_str(v.shape()) + " vs input " + shape_str(input_.shape()));
        }
        return ad::jvp(output_, input_, v);
    }

private:
    ad::Var input_;
    ad::Var output_;
};

/// Records the input gradient of a scalar model once; HVPs are forward-mode
/// derivatives of that recorded gradient (forward-over-reverse).
class HessianTape {
public:
    template <Model M>
    HessianTape(const M& model, const Tensor& x) : input_(ad::constant(x)) {
        const ad::Var y = model(input_);
        if (y.cols() != 1) {
            throw ContractError("Hessian requires a scalar-output model, got " + std::to_string(y.cols()) + " outputs");
        }
        value_ = y;
        gradient_ = ad::grad(y, ad::constant(Tensor::ones(y.rows(), 1)), input_);
    }

    std::size_t batch() const { return input_.rows(); }
    std::size_t dim() const { return input_.cols(); }
    const ad::Var& input() const noexcept { return input_; }
    const ad::Var& value() const noexcept { return value_; }
    const ad::Var& gradient() const noexcept { return gradient_; }

    ad::Var hvp(const ad::Var& v) const {
        if (v.value().shape() != input_.shape()) {
            throw DimensionError("hvp vector " + shape_str(v.shape()) + " vs input " + shape_str(input_.shape()));
        }
        return ad::jvp(gradient_, input_, v);
    }

private:
    ad::Var input_;
    ad::Var value_;
    ad::Var gradient_;
};

// ---------------------------------------------------------------------------
// Tensor-level entry points.

inline Tensor forward(const Network& net, const Tensor& x) { return net.forward(x); }

template <Model M>
Tensor vjp(const M& model, const Tensor& x, const Tensor& u) {
    return JacobianTape(model, x).vjp(ad::constant(u)).value();
}

template <Model M>
Tensor jvp(const M& model, const Tensor& x, const Tensor& v) {
    return JacobianTape(model, x).jvp(ad::constant(v)).value();
}

template <Model M>
Tensor hvp(const M& model, const Tensor& x, const Tensor& v) {
    return HessianTape(model, x).hvp(ad::constant(v)).value();
}

/// Forward-mode carrier: f(x) together with J v.
struct DualValue {
    Tensor primal;
    Tensor tangent;
};

template <Model M>
DualValue linearize(const M& model, const Tensor& x, const Tensor& v) {
    JacobianTape tape(model, x);
    return DualValue{tape.output().value(), tape.jvp(ad::constant(v)).value()};
}

struct ParameterGradients {
    double loss = 0.0;
    std::vector<Tensor> gradients;  // same order and shapes as Network::parameters()
};

/// Gradient of a recorded scalar loss with respect to every network parameter.
/// `build` receives a BoundNetwork and returns a [1 x 1] Var. Quantities the
/// builder wraps with ad::constant/ad::detach contribute no gradient.
template <class Builder>
ParameterGradients param_grad(const Network& net, Builder&& build) {
    const BoundNetwork bound = net.bind();
    const ad::Var loss = build(bound);
    if (loss.value().size() != 1) throw DimensionError("loss must be a scalar, got " + shape_str(loss.shape()));
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw NumericError("non-finite loss", value);
    auto grads = ad::grad(loss, ad::constant(Tensor(loss.shape(), 1.0)), bound.parameters());
    ParameterGradients out;
    out.loss = value;
    for (const ad::Var& g : grads) out.gradients.push_back(g.value());
    return out;
}

}  // namespace spectralreg
