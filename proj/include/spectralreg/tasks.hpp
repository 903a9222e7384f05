#pragma once

// Training tasks: conservative vector field (symmetry), disentanglement
// (diagonality) and a small adversarial-robustness comparison.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spectralreg/data.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/optim.hpp"
#include "spectralreg/oracle.hpp"
#include "spectralreg/regularizers.hpp"

namespace spectralreg::tasks {

enum class TaskKind { Conservative, Disentangle, Robustness };
/// What the robustness task regularizes: logits Jacobian or per-sample loss Hessian.
enum class RobustTarget { Jacobian, Hessian };

inline constexpr std::string_view to_string(TaskKind t) {
    switch (t) {
        case TaskKind::Conservative: return "conservative";
        case TaskKind::Disentangle: return "disentangle";
        case TaskKind::Robustness: return "robustness";
    }
    return "?";
}

inline constexpr std::string_view kValidTasks = "conservative, disentangle, robustness";

class UnknownTaskError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline TaskKind parse_task(std::string_view s) {
    for (TaskKind t : {TaskKind::Conservative, TaskKind::Disentangle, TaskKind::Robustness})
        if (to_string(t) == s) return t;
    throw UnknownTaskError("unknown task '" + std::string(s) + "' (valid tasks: " + std::string(kValidTasks) + ")");
}

inline constexpr std::string_view to_string(RobustTarget t) { return t == RobustTarget::Jacobian ? "jacobian" : "hessian"; }

inline RobustTarget parse_robust_target(std::string_view s) {
    if (s == "jacobian") return RobustTarget::Jacobian;
    if (s == "hessian") return RobustTarget::Hessian;
    throw ConfigError("unknown robustness target '" + std::string(s) + "' (expected jacobian or hessian)");
}

inline constexpr std::string_view kValidMethods = "normal, hutchinson, hutchinson-0.1, power, lanczos, gradascent";

struct PgdConfig {
    double epsilon = 8.0 / 255.0;
    double step = 2.0 / 255.0;
    std::size_t k = 20;
    bool random_start = true;
    double lower = 0.0;  // valid input range
    double upper = 1.0;
};

struct TrainConfig {
    TaskKind task = TaskKind::Conservative;
    std::string method = "normal";
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double lr_decay = 0.1;
    std::vector<std::size_t> hidden = {256, 256, 256};
    double beta = Network::kDefaultBeta;
    std::size_t train_count = 1024;
    std::size_t test_count = 256;
    std::size_t metric_count = 64;  // held-out points used for asymmetry / off-diagonal metrics
    std::size_t metric_probes = 16;  // probe count when metrics fall back to Monte-Carlo
    std::optional<reg::RegularizerSpec> regularizer;  // empty for normal training
    reg::Schedule schedule;
    reg::Mixing mixing = reg::Mixing::Convex;
    std::uint64_t seed = 0;
    data::SeparableFunctionSpec function;
    data::TwoClassSpec classes;
    RobustTarget robust_target = RobustTarget::Jacobian;
    PgdConfig pgd;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
        if (!(lr_decay > 0.0)) throw ConfigError("train.lr_decay must be positive");
        if (train_count < 1 || test_count < 1) throw ConfigError("train.train_count and train.test_count must be positive");
        if (!(beta > 0.0)) throw ConfigError("train.beta must be positive");
        if (function.n < 1) throw ConfigError("data.n must be at least 1");
        if (classes.dim < 1 || classes.robust > classes.dim) throw ConfigError("data.classes is inconsistent");
        if (pgd.epsilon < 0.0) throw ConfigError("pgd.epsilon must be non-negative");
        if (pgd.k < 1) throw ConfigError("pgd.k must be at least 1");
        if (regularizer && regularizer->solver != reg::Solver::Lanczos && regularizer->solver != reg::Solver::Power &&
            regularizer->solver != reg::Solver::GradientAscent && regularizer->probes < 1)
            throw ConfigError("regularizer.probes must be at least 1");
        schedule.validate();
    }
};

/// Regularizer kind used by a task.
inline reg::TargetKind task_target(TaskKind task, RobustTarget robust) {
    switch (task) {
        case TaskKind::Conservative: return reg::TargetKind::Symmetry;
        case TaskKind::Disentangle: return reg::TargetKind::Diagonality;
        case TaskKind::Robustness:
            return robust == RobustTarget::Jacobian ? reg::TargetKind::ZeroJacobian : reg::TargetKind::ZeroHessian;
    }
    return reg::TargetKind::ZeroJacobian;
}

/// Sets regularizer and power scale from a method name, keeping the other
/// regularizer settings already in the config.
inline void apply_method(TrainConfig& cfg, std::string_view method) {
    reg::RegularizerSpec spec = cfg.regularizer.value_or(reg::RegularizerSpec{});
    spec.kind = task_target(cfg.task, cfg.robust_target);
    spec.iterations = cfg.schedule.base_iterations;
    cfg.schedule.power_scale = 1.0;
    if (method == "normal") {
        cfg.regularizer.reset();
    } else if (method == "hutchinson" || method == "hutchinson-0.1") {
        spec.solver = reg::Solver::HutchinsonGaussian;
        if (method == "hutchinson-0.1") cfg.schedule.power_scale = 0.1;
        cfg.regularizer = spec;
    } else if (method == "power") {
        spec.solver = reg::Solver::Power;
        cfg.regularizer = spec;
    } else if (method == "lanczos") {
        spec.solver = reg::Solver::Lanczos;
        cfg.regularizer = spec;
    } else if (method == "gradascent") {
        spec.solver = reg::Solver::GradientAscent;
        cfg.regularizer = spec;
    } else {
        throw ConfigError("unknown method '" + std::string(method) + "' (valid methods: " + std::string(kValidMethods) + ")");
    }
    cfg.method = std::string(method);
}

/// splitmix64 finalizer over (seed, tag); used for per-step solver seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Losses.

inline Tensor one_hot(const Tensor& labels, std::size_t classes, std::size_t rows) {
    if (labels.cols() != 1 || labels.rows() == 0 || rows % labels.rows() != 0)
        throw DimensionError("labels " + shape_str(labels.shape()) + " do not tile " + std::to_string(rows) + " rows");
    Tensor out = Tensor::zeros(rows, classes);
    for (std::size_t r = 0; r < rows; ++r) {
        const double l = labels(r % labels.rows(), 0);
        const auto c = static_cast<std::size_t>(l);
        if (l < 0.0 || c >= classes || static_cast<double>(c) != l)
            throw ContractError("label " + std::to_string(l) + " outside 0.." + std::to_string(classes - 1));
        out(r, c) = 1.0;
    }
    return out;
}

/// Per-row cross-entropy [b x 1] of logits against integer labels.
inline ad::Var cross_entropy_rows(const ad::Var& logits, const Tensor& labels) {
    const ad::Var y = ad::constant(one_hot(labels, logits.cols(), logits.rows()));
    return ad::sub(ad::logsumexp_rows(logits), ad::row_dot(logits, y));
}

inline ad::Var mse(const ad::Var& pred, const Tensor& target) {
    const ad::Var diff = ad::sub(pred, ad::constant(target));
    return ad::mean_all(ad::mul(diff, diff));
}

/// x -> per-sample cross-entropy of a classifier; scalar output, so its input
/// Hessian is defined. Labels tile when the batch is a multiple of them.
template <Model M>
struct CrossEntropyModel {
    M net;
    Tensor labels;
    ad::Var operator()(const ad::Var& x) const { return cross_entropy_rows(net(x), labels); }
};

// ---------------------------------------------------------------------------
// Evaluation.

inline std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Per-row 0/1 correctness of a classifier.
inline std::vector<bool> correct_rows(const Network& net, const Tensor& x, const Tensor& labels) {
    const Tensor logits = net.forward(x);
    std::vector<bool> ok(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) ok[r] = argmax_row(logits.row(r)) == static_cast<std::size_t>(labels(r, 0));
    return ok;
}

inline double accuracy(const Network& net, const Tensor& x, const Tensor& labels) {
    const auto ok = correct_rows(net, x, labels);
    return static_cast<double>(std::count(ok.begin(), ok.end(), true)) / static_cast<double>(ok.size());
}

/// l_inf PGD on the summed cross-entropy: k signed-gradient steps, each
/// projected onto the epsilon ball around x and the valid input range.
inline Tensor pgd_attack(const Network& net, const Tensor& x, const Tensor& labels, const PgdConfig& cfg,
                         std::uint64_t seed) {
    if (cfg.epsilon < 0.0) throw ContractError("PGD epsilon must be non-negative");
    if (cfg.k < 1) throw ContractError("PGD needs at least one step");
    net.check_input(x);
    if (labels.rows() != x.rows()) throw DimensionError("PGD labels do not match the batch");
    auto project = [&](Tensor& adv) {
        for (std::size_t i = 0; i < adv.size(); ++i)
            adv[i] = std::clamp(std::clamp(adv[i], x[i] - cfg.epsilon, x[i] + cfg.epsilon), cfg.lower, cfg.upper);
    };
    Tensor adv = x;
    if (cfg.random_start && cfg.epsilon > 0.0) {
        Rng rng = make_stream(seed, 0x96d);
        std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
        for (double& v : adv.values()) v += u(rng);
        project(adv);
    }
    for (std::size_t step = 0; step < cfg.k; ++step) {
        const ad::Var input = ad::constant(adv);
        const ad::Var loss = ad::sum_all(cross_entropy_rows(net(input), labels));
        const Tensor g = ad::grad(loss, ad::constant(Tensor::scalar(1.0)), input).value();
        for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += cfg.step * static_cast<double>((g[i] > 0) - (g[i] < 0));
        project(adv);
    }
    return adv;
}

/// A point counts as robust when it is classified correctly both clean and
/// under attack.
inline double robust_accuracy(const Network& net, const Tensor& x, const Tensor& labels, const PgdConfig& cfg,
                              std::uint64_t seed) {
    const auto clean = correct_rows(net, x, labels);
    const auto adv = correct_rows(net, pgd_attack(net, x, labels, cfg, seed), labels);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < clean.size(); ++r) hits += clean[r] && adv[r];
    return static_cast<double>(hits) / static_cast<double>(clean.size());
}

/// Mean over rows of ||J - J^T||_F.
inline double mean_asymmetry(const Network& net, const Tensor& x, bool dense, std::size_t probes, std::uint64_t seed) {
    if (dense) {
        double s = 0.0;
        for (const auto& j : oracle::dense_jacobian(net, x)) s += (j - j.transpose()).norm();
        return s / static_cast<double>(x.rows());
    }
    reg::RegularizerSpec spec;
    spec.kind = reg::TargetKind::Symmetry;
    const Tensor terms = reg::hutchinson_terms(net, x, spec, reg::Probe::Gaussian, probes, seed).value();
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double row = 0.0;
        for (std::size_t k = 0; k < probes; ++k) row += terms(k * x.rows() + r, 0);
        s += std::sqrt(row / static_cast<double>(probes));
    }
    return s / static_cast<double>(x.rows());
}

/// Mean over rows of sum_{i != j} H_ij^2.
inline double mean_offdiag(const Network& net, const Tensor& x, bool dense, std::size_t probes, std::uint64_t seed) {
    if (dense) {
        double s = 0.0;
        for (const auto& h : oracle::dense_hessian(net, x)) s += oracle::off_diagonal_mass(h);
        return s / static_cast<double>(x.rows());
    }
    return 0.5 * reg::hutchinson_offdiag(net, x, std::max<std::size_t>(probes, 2), seed).value()[0];
}

// ---------------------------------------------------------------------------
// Training.

struct MetricsRecord {
    std::size_t epoch = 0;
    std::size_t stage = 0;
    double learning_rate = 0.0;
    double power = 0.0;
    std::size_t iterations = 0;
    double task_loss = 0.0;     // mean training loss over the epoch's steps
    double test_loss = 0.0;     // MSE or cross-entropy on the held-out split
    double penalty = 0.0;       // mean per-step penalty over the epoch
    double penalty_var = 0.0;   // variance of per-step penalties within the epoch
    double asymmetry = 0.0;     // conservative task only
    double offdiag = 0.0;       // disentanglement task only
    double clean_accuracy = 0.0;   // robustness task only
    double robust_accuracy = 0.0;  // robustness task only
    std::size_t residual_warnings = 0;
    bool probe_metrics = false;  // asymmetry / off-diagonal estimated with probes instead of the dense oracle
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<MetricsRecord> history;  // epoch 0 is the initialization
    Network network;                     // last network with a finite loss
    std::vector<double> step_penalties;
    bool aborted = false;
    std::string abort_reason;
};

/// Network widths for a task.
inline std::vector<std::size_t> layer_dims(const TrainConfig& cfg) {
    std::vector<std::size_t> dims;
    const bool classify = cfg.task == TaskKind::Robustness;
    dims.push_back(classify ? cfg.classes.dim : cfg.function.n);
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    switch (cfg.task) {
        case TaskKind::Conservative: dims.push_back(cfg.function.n); break;
        case TaskKind::Disentangle: dims.push_back(1); break;
        case TaskKind::Robustness: dims.push_back(2); break;
    }
    return dims;
}

struct TaskData {
    data::Dataset train;
    data::Dataset test;
};

inline TaskData make_task_data(const TrainConfig& cfg) {
    if (cfg.task == TaskKind::Robustness) {
        return {data::gen_two_class(cfg.classes, cfg.train_count, derive_seed(cfg.seed, 1)),
                data::gen_two_class(cfg.classes, cfg.test_count, derive_seed(cfg.seed, 2))};
    }
    data::SeparableFunctionSpec spec = cfg.function;
    spec.mode = cfg.task == TaskKind::Conservative ? data::TargetMode::GradientField : data::TargetMode::Value;
    return {data::gen_separable(spec, cfg.train_count, derive_seed(cfg.seed, 1)),
            data::gen_separable(spec, cfg.test_count, derive_seed(cfg.seed, 2))};
}

namespace detail {

inline ad::Var task_loss(const TrainConfig& cfg, const ad::Var& pred, const Tensor& target) {
    return cfg.task == TaskKind::Robustness ? ad::mean_all(cross_entropy_rows(pred, target)) : mse(pred, target);
}

template <Model M>
reg::PenaltyResult task_penalty(const TrainConfig& cfg, const M& model, const Tensor& x, const Tensor& y,
                                const reg::RegularizerSpec& spec, std::uint64_t seed) {
    if (cfg.task == TaskKind::Robustness && cfg.robust_target == RobustTarget::Hessian)
        return reg::penalty(CrossEntropyModel<M>{model, y}, x, spec, seed);
    return reg::penalty(model, x, spec, seed);
}

inline void evaluate(const TrainConfig& cfg, const Network& net, const TaskData& d, MetricsRecord& rec) {
    rec.test_loss = task_loss(cfg, net(ad::constant(d.test.inputs)), d.test.targets).value()[0];
    const std::size_t m = std::min(cfg.metric_count, d.test.inputs.rows());
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor xm = data::take_rows(d.test.inputs, idx, 0, m);
    const bool dense = cfg.function.n <= 128;
    rec.probe_metrics = !dense && cfg.task != TaskKind::Robustness;
    const std::uint64_t s = derive_seed(cfg.seed, 0xe0a1 + rec.epoch);
    switch (cfg.task) {
        case TaskKind::Conservative:
            if (m > 0) rec.asymmetry = mean_asymmetry(net, xm, dense, cfg.metric_probes, s);
            break;
        case TaskKind::Disentangle:
            if (m > 0) rec.offdiag = mean_offdiag(net, xm, dense, cfg.metric_probes, s);
            break;
        case TaskKind::Robustness:
            rec.clean_accuracy = accuracy(net, d.test.inputs, d.test.targets);
            rec.robust_accuracy = robust_accuracy(net, d.test.inputs, d.test.targets, cfg.pgd, s);
            break;
    }
}

}  // namespace detail

/// Trains one model. On a non-finite loss the run stops, `aborted` is set and
/// `network` is the last network whose loss was finite.
inline TrainResult train_task(const TrainConfig& cfg) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const TaskData d = make_task_data(cfg);
    TrainResult out{{}, Network::random(layer_dims(cfg), derive_seed(cfg.seed, 0), cfg.beta), {}, false, {}};
    Adam adam(cfg.learning_rate);

    MetricsRecord init;
    init.learning_rate = cfg.learning_rate;
    detail::evaluate(cfg, out.network, d, init);
    init.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    out.history.push_back(init);

    const std::size_t n = d.train.inputs.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !out.aborted; ++epoch) {
        const std::size_t stage = cfg.schedule.stage(epoch);
        MetricsRecord rec;
        rec.epoch = epoch + 1;
        rec.stage = stage;
        rec.learning_rate = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(stage));
        adam.set_learning_rate(rec.learning_rate);
        std::optional<reg::RegularizerSpec> spec = cfg.regularizer;
        if (spec) {
            rec.power = cfg.schedule.power(stage);
            const std::size_t side = cfg.task == TaskKind::Robustness
                                         ? (cfg.robust_target == RobustTarget::Jacobian ? 2 : cfg.classes.dim)
                                         : cfg.function.n;
            if (reg::is_eigensolver(spec->solver)) spec->iterations = cfg.schedule.iterations(stage, side);
            rec.iterations = reg::is_eigensolver(spec->solver) ? spec->iterations : spec->probes;
        }

        Rng shuffle = make_stream(cfg.seed, 0x5ff1e + epoch);
        std::shuffle(order.begin(), order.end(), shuffle);
        std::vector<double> losses, penalties;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++step) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const Tensor xb = data::take_rows(d.train.inputs, order, begin, end);
            const Tensor yb = data::take_rows(d.train.targets, order, begin, end);
            double task_value = 0.0, pen_value = 0.0;
            ParameterGradients g;
            try {
                g = param_grad(out.network, [&](const BoundNetwork& f) {
                    const ad::Var task = detail::task_loss(cfg, f(ad::constant(xb)), yb);
                    task_value = task.value()[0];
                    if (!spec || rec.power == 0.0) return task;
                    const auto pen = detail::task_penalty(cfg, f, xb, yb, *spec, derive_seed(cfg.seed, 0x10000 + step));
                    pen_value = pen.value.value()[0];
                    rec.residual_warnings += pen.residual_warnings;
                    return reg::composite_loss(task, pen.value, rec.power, cfg.mixing);
                });
            } catch (const NumericError& e) {
                out.aborted = true;
                out.abort_reason = "epoch " + std::to_string(epoch + 1) + ": " + e.what();
                break;
            }
            bool finite = std::isfinite(task_value) && std::isfinite(pen_value);
            for (const Tensor& t : g.gradients)
                for (double v : t.values()) finite = finite && std::isfinite(v);
            if (!finite) {
                out.aborted = true;
                out.abort_reason = "epoch " + std::to_string(epoch + 1) + ": non-finite gradient";
                break;
            }
            losses.push_back(task_value);
            penalties.push_back(pen_value);
            out.network = out.network.with_parameters(adam.step(out.network.parameters(), g.gradients));
        }
        if (out.aborted) break;

        const double k = static_cast<double>(losses.size());
        rec.task_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / k;
        rec.penalty = std::accumulate(penalties.begin(), penalties.end(), 0.0) / k;
        for (double p : penalties) rec.penalty_var += (p - rec.penalty) * (p - rec.penalty);
        rec.penalty_var = penalties.size() > 1 ? rec.penalty_var / (k - 1.0) : 0.0;
        out.step_penalties.insert(out.step_penalties.end(), penalties.begin(), penalties.end());
        detail::evaluate(cfg, out.network, d, rec);
        if (!std::isfinite(rec.test_loss)) {
            out.aborted = true;
            out.abort_reason = "epoch " + std::to_string(epoch + 1) + ": non-finite test loss";
            break;
        }
        rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        out.history.push_back(rec);
    }
    return out;
}

/// Mean over epochs of the within-epoch variance of per-step penalties.
inline double mean_penalty_variance(const TrainResult& r) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& rec : r.history) {
        if (rec.epoch == 0) continue;
        s += rec.penalty_var;
        ++k;
    }
    return k ? s / static_cast<double>(k) : 0.0;
}

// ---------------------------------------------------------------------------
// Robustness comparison.

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double s = 0.0;
        for (double x : v) s += (x - m.mean) * (x - m.mean);
        m.std = std::sqrt(s / static_cast<double>(v.size() - 1));
    }
    return m;
}

struct SuiteRow {
    std::string method;
    std::vector<double> clean, robust, penalty_var;
    bool aborted = false;
    MeanStd clean_stats() const { return mean_std(clean); }
    MeanStd robust_stats() const { return mean_std(robust); }
    MeanStd penalty_var_stats() const { return mean_std(penalty_var); }
};

/// Trains one model per (method, seed) from the same base config.
inline std::vector<SuiteRow> robustness_suite(const TrainConfig& base, const std::vector<std::string>& methods,
                                              const std::vector<std::uint64_t>& seeds) {
    if (base.task != TaskKind::Robustness) throw ConfigError("robustness_suite needs the robustness task");
    std::vector<SuiteRow> rows;
    for (const std::string& m : methods) {
        SuiteRow row;
        row.method = m;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            apply_method(cfg, m);
            const TrainResult r = train_task(cfg);
            row.aborted = row.aborted || r.aborted;
            row.clean.push_back(r.history.back().clean_accuracy);
            row.robust.push_back(r.history.back().robust_accuracy);
            row.penalty_var.push_back(mean_penalty_variance(r));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace spectralreg::tasks
