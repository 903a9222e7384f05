#pragma once

// Differentiable penalties on Jacobians and Hessians: the spectral penalty
// ||v_m^T (A - A0)||_2 with v_m from an eigensolver, and Hutchinson baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spectralreg/autodiff.hpp"
#include "spectralreg/eigensolvers.hpp"
#include "spectralreg/errors.hpp"
#include "spectralreg/linops.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/random.hpp"

namespace spectralreg::reg {

enum class TargetKind { ZeroJacobian, ZeroHessian, Symmetry, Diagonality, CustomTarget };
enum class Solver { Lanczos, Power, GradientAscent, HutchinsonGaussian, HutchinsonRademacher };
enum class Probe { Gaussian, Rademacher };

inline constexpr std::string_view to_string(TargetKind k) {
    switch (k) {
        case TargetKind::ZeroJacobian: return "zero-jacobian";
        case TargetKind::ZeroHessian: return "zero-hessian";
        case TargetKind::Symmetry: return "symmetry";
        case TargetKind::Diagonality: return "diagonality";
        case TargetKind::CustomTarget: return "custom-target";
    }
    return "?";
}

inline constexpr std::string_view to_string(Solver s) {
    switch (s) {
        case Solver::Lanczos: return "lanczos";
        case Solver::Power: return "power";
        case Solver::GradientAscent: return "gradient-ascent";
        case Solver::HutchinsonGaussian: return "hutchinson-gaussian";
        case Solver::HutchinsonRademacher: return "hutchinson-rademacher";
    }
    return "?";
}

inline TargetKind parse_target_kind(std::string_view s) {
    for (auto k : {TargetKind::ZeroJacobian, TargetKind::ZeroHessian, TargetKind::Symmetry, TargetKind::Diagonality,
                   TargetKind::CustomTarget})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown regularizer kind '" + std::string(s) +
                      "' (expected zero-jacobian, zero-hessian, symmetry, diagonality, custom-target)");
}

inline Solver parse_solver(std::string_view s) {
    for (auto v : {Solver::Lanczos, Solver::Power, Solver::GradientAscent, Solver::HutchinsonGaussian,
                   Solver::HutchinsonRademacher})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown solver '" + std::string(s) +
                      "' (expected lanczos, power, gradient-ascent, hutchinson-gaussian, hutchinson-rademacher)");
}

inline bool is_eigensolver(Solver s) {
    return s == Solver::Lanczos || s == Solver::Power || s == Solver::GradientAscent;
}

/// Target for CustomTarget: builds A0 at the given inputs; must conform to J_f(x).
using TargetFactory = std::function<linops::RectangularOperatorPair(const Tensor& x)>;

struct RegularizerSpec {
    TargetKind kind = TargetKind::ZeroJacobian;
    Solver solver = Solver::Lanczos;
    std::size_t iterations = 2;  // eigensolver steps, clamped to the operator side
    std::size_t probes = 1;      // Hutchinson samples per batch row
    double ascent_step = 10.0;   // alpha for the gradient-ascent baseline
    bool squared = false;        // penalize sigma^2 instead of sigma
    TargetFactory target;        // CustomTarget only
};

inline bool needs_scalar_output(TargetKind k) { return k == TargetKind::ZeroHessian || k == TargetKind::Diagonality; }

/// A (the regularized matrix) and A0 (its target; empty for zero targets).
struct OperatorPlan {
    linops::RectangularOperatorPair a;
    std::optional<linops::RectangularOperatorPair> target;
};

template <Model M>
OperatorPlan plan_operators(const M& model, const Tensor& x, const RegularizerSpec& spec) {
    switch (spec.kind) {
        case TargetKind::ZeroJacobian: return {linops::jacobian_operator(model, x), std::nullopt};
        case TargetKind::ZeroHessian: return {linops::hessian_operator(model, x), std::nullopt};
        case TargetKind::Symmetry: {
            auto j = linops::jacobian_operator(model, x);
            if (!j.square()) {
                throw ContractError("symmetry regularization needs a square Jacobian, got " +
                                    std::to_string(j.out_dim) + " x " + std::to_string(j.in_dim));
            }
            return {j, linops::transpose(j)};
        }
        case TargetKind::Diagonality: {
            auto h = linops::hessian_operator(model, x);
            return {h, linops::row_sum_diagonal(h)};
        }
        case TargetKind::CustomTarget: {
            if (!spec.target) throw ContractError("custom-target regularizer has no target attached");
            auto j = linops::jacobian_operator(model, x);
            auto t = spec.target(x);
            linops::require_conformal(j, t);
            return {j, t};
        }
    }
    throw ContractError("unhandled regularizer kind");
}

/// u -> u^T (A - A0), differentiable.
inline ad::Var left_product(const OperatorPlan& plan, const ad::Var& u) {
    const ad::Var au = plan.a.apply_adjoint(u);
    return plan.target ? ad::sub(au, plan.target->apply_adjoint(u)) : au;
}

inline linops::BatchedLinearOperator defect_gram(const OperatorPlan& plan, TargetKind kind) {
    if (!plan.target) return linops::gram(plan.a);
    if (kind == TargetKind::Symmetry) return linops::symmetry_defect_gram(plan.a);
    return linops::target_difference_gram(plan.a, *plan.target);
}

struct PenaltyResult {
    ad::Var value;              // scalar, mean over batch rows
    double lambda_mean = 0.0;   // mean eigenvalue estimate of (A - A0)(A - A0)^T
    double residual_max = 0.0;  // worst ||M v_m - lambda v_m||
    std::size_t residual_warnings = 0;  // rows with residual > 1e-2 * |lambda|
    std::size_t iterations = 0;
    Tensor v_m;  // eigensolver output, empty for Hutchinson
};

/// Mean over rows of ||u^T (A - A0)||_2 (or its square) for fixed rows u.
inline ad::Var penalty_along(const OperatorPlan& plan, const Tensor& u, bool squared) {
    const ad::Var left = left_product(plan, ad::constant(u));
    return squared ? ad::mean_all(ad::row_sum(ad::mul(left, left))) : ad::mean_all(ad::row_norm(left));
}

/// The spectral penalty with v_m supplied instead of solved for.
template <Model M>
ad::Var spectral_penalty_at(const M& model, const Tensor& x, const RegularizerSpec& spec, const Tensor& v_m) {
    return penalty_along(plan_operators(model, x, spec), v_m, spec.squared);
}

/// Mean over rows of ||v_m^T (A - A0)||_2 (or its square), with v_m detached.
template <Model M>
PenaltyResult spectral_penalty(const M& model, const Tensor& x, const RegularizerSpec& spec, std::uint64_t seed) {
    if (!is_eigensolver(spec.solver)) {
        throw ContractError("spectral_penalty needs an eigensolver, got " + std::string(to_string(spec.solver)));
    }
    const OperatorPlan plan = plan_operators(model, x, spec);
    const std::size_t side = plan.a.out_dim;
    const std::size_t n = std::clamp<std::size_t>(spec.iterations, 1, side);

    eig::ExtremalEigenpair pair;
    switch (spec.solver) {
        case Solver::Lanczos: pair = eig::extremal_eigenpair(defect_gram(plan, spec.kind), n, seed); break;
        case Solver::Power: pair = eig::power_iteration(defect_gram(plan, spec.kind), n, seed); break;
        default: {
            // Maximize ||(A - A0)^T v||: the gradient-ascent pair is the transposed difference.
            const auto diff = plan.target ? linops::difference(plan.a, *plan.target) : plan.a;
            pair = eig::gradient_ascent_spectral(linops::transpose(diff), spec.ascent_step, n, seed);
        }
    }

    PenaltyResult out;
    out.iterations = n;
    out.v_m = pair.v_m;
    out.value = penalty_along(plan, pair.v_m, spec.squared);
    const double value = out.value.value()[0];
    if (!std::isfinite(value)) throw NumericError("spectral penalty is not finite", value);

    for (std::size_t r = 0; r < pair.lambda_max.size(); ++r) {
        const double lam = pair.lambda_max[r];
        out.lambda_mean += lam / static_cast<double>(pair.lambda_max.size());
        out.residual_max = std::max(out.residual_max, pair.residual[r]);
        if (pair.residual[r] > 1e-2 * std::abs(lam)) ++out.residual_warnings;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hutchinson baselines. Samples are evaluated as extra batch rows: x is tiled
// so row s * b + r holds probe s for input row r.

inline Tensor tile_rows(const Tensor& x, std::size_t copies) {
    Tensor out = Tensor::zeros(x.rows() * copies, x.cols());
    for (std::size_t s = 0; s < copies; ++s)
        std::copy(x.values().begin(), x.values().end(), out.values().begin() + s * x.size());
    return out;
}

inline Tensor draw_probes(std::size_t rows, std::size_t cols, Probe dist, std::uint64_t seed) {
    Tensor v = Tensor::zeros(rows, cols);
    Rng rng = make_stream(seed, 0x9b0be);
    if (dist == Probe::Gaussian) {
        fill_gaussian(v.values(), rng);
    } else {
        fill_rademacher(v.values(), rng);
    }
    return v;
}

/// Per-probe values ||v^T (A - A0)||_2^2, shape [samples * b x 1].
template <Model M>
ad::Var hutchinson_terms(const M& model, const Tensor& x, const RegularizerSpec& spec, Probe dist,
                         std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw ContractError("Hutchinson estimate needs at least one sample");
    const Tensor xt = tile_rows(x, samples);
    const OperatorPlan plan = plan_operators(model, xt, spec);
    const ad::Var v = ad::constant(draw_probes(xt.rows(), plan.a.out_dim, dist, seed));
    const ad::Var left = left_product(plan, v);
    return ad::row_sum(ad::mul(left, left));
}

/// Unbiased estimate of ||A - A0||_F^2 averaged over batch rows.
template <Model M>
ad::Var hutchinson_frobenius(const M& model, const Tensor& x, const RegularizerSpec& spec, Probe dist,
                             std::size_t samples, std::uint64_t seed) {
    return ad::mean_all(hutchinson_terms(model, x, spec, dist, samples, seed));
}

/// Jacobian convenience form: estimate of ||J_f||_F^2.
template <Model M>
ad::Var hutchinson_frobenius(const M& model, const Tensor& x, Probe dist, std::size_t samples, std::uint64_t seed) {
    return hutchinson_frobenius(model, x, RegularizerSpec{}, dist, samples, seed);
}

/// Per-probe quadratic forms v^T H v for Rademacher v, shape [samples * b x 1].
template <Model M>
ad::Var hessian_quadratic_forms(const M& model, const Tensor& x, std::size_t samples, std::uint64_t seed) {
    const Tensor xt = tile_rows(x, samples);
    const auto h = linops::hessian_operator(model, xt);
    const ad::Var v = ad::constant(draw_probes(xt.rows(), h.in_dim, Probe::Rademacher, seed));
    return ad::row_dot(v, h.apply(v));
}

/// Empirical variance (unbiased, over samples) of v^T H v with Rademacher v,
/// averaged over batch rows. Its expectation is 2 * sum_{i != j} H_ij^2.
template <Model M>
ad::Var hutchinson_offdiag(const M& model, const Tensor& x, std::size_t samples, std::uint64_t seed) {
    if (samples < 2) throw ContractError("off-diagonal Hutchinson estimate needs at least two samples");
    const std::size_t b = x.rows();
    // Row s of q holds probe s for every input row.
    const ad::Var q = ad::reshape(hessian_quadratic_forms(model, x, samples, seed), {samples, b});
    const ad::Var mean = ad::scale(ad::sum_rows(q), 1.0 / static_cast<double>(samples));
    const ad::Var dev = ad::sub(q, ad::broadcast_rows(mean, samples));
    const ad::Var var = ad::scale(ad::sum_rows(ad::mul(dev, dev)), 1.0 / static_cast<double>(samples - 1));
    return ad::mean_all(var);
}

/// Penalty for any solver: spectral for eigensolvers, Hutchinson otherwise.
/// Diagonality with a Hutchinson solver is the off-diagonal variance estimate.
template <Model M>
PenaltyResult penalty(const M& model, const Tensor& x, const RegularizerSpec& spec, std::uint64_t seed) {
    if (is_eigensolver(spec.solver)) return spectral_penalty(model, x, spec, seed);
    PenaltyResult out;
    out.iterations = spec.probes;
    if (spec.kind == TargetKind::Diagonality) {
        out.value = hutchinson_offdiag(model, x, std::max<std::size_t>(spec.probes, 2), seed);
    } else {
        const Probe dist = spec.solver == Solver::HutchinsonGaussian ? Probe::Gaussian : Probe::Rademacher;
        out.value = hutchinson_frobenius(model, x, spec, dist, spec.probes, seed);
    }
    const double value = out.value.value()[0];
    if (!std::isfinite(value)) throw NumericError("Hutchinson penalty is not finite", value);
    return out;
}

// ---------------------------------------------------------------------------
// Mixing and schedules.

enum class Mixing { Convex, Multiplicative };

/// Convex: (1 - p) task + p penalty. Multiplicative: task + p penalty.
inline ad::Var composite_loss(const ad::Var& task, const ad::Var& penalty, double power,
                              Mixing mode = Mixing::Convex) {
    if (!(power >= 0.0 && power < 1.0)) throw ContractError("regularizer power must lie in [0, 1), got " + std::to_string(power));
    if (power == 0.0) return task;
    if (mode == Mixing::Convex) return ad::add(ad::scale(task, 1.0 - power), ad::scale(penalty, power));
    return ad::add(task, ad::scale(penalty, power));
}

/// Learning-rate stages and the quantities tied to them.
struct Schedule {
    std::vector<std::size_t> decay_epochs;  // strictly increasing
    std::size_t base_iterations = 2;
    double power_start = 0.25;
    double power_step = 0.25;
    double power_max = 0.95;
    double power_scale = 1.0;  // 0.1 for the reduced-power Hutchinson variant

    void validate() const {
        for (std::size_t i = 1; i < decay_epochs.size(); ++i)
            if (decay_epochs[i] <= decay_epochs[i - 1]) throw ConfigError("decay_epochs must be strictly increasing");
        if (base_iterations < 1) throw ConfigError("base_iterations must be at least 1");
        if (!(power_scale > 0.0)) throw ConfigError("power_scale must be positive");
    }

    /// Number of decays that have happened before `epoch` starts.
    std::size_t stage(std::size_t epoch) const {
        return static_cast<std::size_t>(std::count_if(decay_epochs.begin(), decay_epochs.end(),
                                                      [epoch](std::size_t e) { return e <= epoch; }));
    }

    std::size_t iterations(std::size_t stage_index, std::size_t side) const {
        const std::size_t n = base_iterations << std::min<std::size_t>(stage_index, 32);
        return std::min(n, side);
    }

    double power(std::size_t stage_index) const {
        return std::min(power_start + power_step * static_cast<double>(stage_index), power_max) * power_scale;
    }
};

}  // namespace spectralreg::reg
