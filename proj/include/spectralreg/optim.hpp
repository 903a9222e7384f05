#pragma once

#include <cmath>
#include <vector>

#include "spectralreg/errors.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg {

/// Adam with bias correction; state is one (m, v) pair per parameter tensor.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    }

    double learning_rate() const noexcept { return lr_; }
    void set_learning_rate(double lr) {
        if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
        lr_ = lr;
    }
    std::size_t steps() const noexcept { return t_; }

    /// Returns params - lr * m_hat / (sqrt(v_hat) + eps).
    std::vector<Tensor> step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
        if (params.size() != grads.size()) throw DimensionError("parameter and gradient counts differ");
        if (m_.empty()) {
            for (const Tensor& p : params) {
                m_.emplace_back(p.shape());
                v_.emplace_back(p.shape());
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::vector<Tensor> out;
        out.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i].require_same(grads[i], "adam");
            Tensor next = params[i];
            for (std::size_t k = 0; k < next.size(); ++k) {
                const double g = grads[i][k];
                m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
                v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
                next[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
            }
            out.push_back(std::move(next));
        }
        return out;
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace spectralreg
