#pragma once

// Experiment plumbing: versioned JSON configs, per-seed run directories,
// eigensolver convergence benchmarks and the multi-run report.
//
// Run directory layout:
//   <output_dir>/config.json             resolved config
//   <output_dir>/seed-<s>/metrics.csv    one row per epoch (epoch 0 = initialization)
//   <output_dir>/seed-<s>/summary.json   final metrics, no timings
//   <output_dir>/seed-<s>/model.ckpt     last good network

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "spectralreg/checkpoint.hpp"
#include "spectralreg/eigensolvers.hpp"
#include "spectralreg/io.hpp"
#include "spectralreg/oracle.hpp"
#include "spectralreg/tasks.hpp"

namespace spectralreg::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
    tasks::TrainConfig train;  // task, method, regularizer, schedule, data
    std::string output_dir = "runs/default";
    std::vector<std::uint64_t> seeds = {0};
};

// ---------------------------------------------------------------------------
// Strict JSON reading: every field is optional unless noted, unknown keys are
// rejected, and every error names the offending field.

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void get(const char* key, T& out) {
        seen_.push_back(key);
        if (!j_.contains(key)) return;
        out = convert<T>(j_.at(key), field(key));
    }

    Reader child(const char* key) {
        seen_.push_back(key);
        static const json empty = json::object();
        return Reader(j_.contains(key) ? j_.at(key) : empty, field(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError("unknown field '" + field(k.c_str()) + "'");
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    template <class T>
    static T convert(const json& v, const std::string& name) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(name + ": expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw ConfigError(name + ": expected a non-negative integer");
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) throw ConfigError(name + ": expected an integer");
            return v.get<int>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(name + ": expected a number");
            return v.get<double>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(name + ": expected a string");
            return v.get<std::string>();
        } else {
            if (!v.is_array()) throw ConfigError(name + ": expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], name + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

inline json to_json(const ExperimentConfig& c) {
    const tasks::TrainConfig& t = c.train;
    const reg::RegularizerSpec spec = t.regularizer.value_or(reg::RegularizerSpec{});
    return json{
        {"schema_version", kSchemaVersion},
        {"task", std::string(tasks::to_string(t.task))},
        {"method", t.method},
        {"output_dir", c.output_dir},
        {"seeds", c.seeds},
        {"regularizer", {{"probes", spec.probes}, {"ascent_step", spec.ascent_step}, {"squared", spec.squared}}},
        {"schedule",
         {{"decay_epochs", t.schedule.decay_epochs},
          {"base_iterations", t.schedule.base_iterations},
          {"power_start", t.schedule.power_start},
          {"power_step", t.schedule.power_step},
          {"power_max", t.schedule.power_max},
          {"mixing", t.mixing == reg::Mixing::Convex ? "convex" : "multiplicative"}}},
        {"train",
         {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"lr_decay", t.lr_decay},
          {"hidden", t.hidden},
          {"beta", t.beta},
          {"train_count", t.train_count},
          {"test_count", t.test_count},
          {"metric_count", t.metric_count},
          {"metric_probes", t.metric_probes}}},
        {"data",
         {{"function", std::string(data::to_string(t.function.g))},
          {"n", t.function.n},
          {"classes",
           {{"dim", t.classes.dim},
            {"robust", t.classes.robust},
            {"robust_shift", t.classes.robust_shift},
            {"robust_noise", t.classes.robust_noise},
            {"weak_shift", t.classes.weak_shift},
            {"weak_noise", t.classes.weak_noise}}}}},
        {"robustness",
         {{"target", std::string(tasks::to_string(t.robust_target))},
          {"pgd",
           {{"epsilon", t.pgd.epsilon},
            {"step", t.pgd.step},
            {"k", t.pgd.k},
            {"random_start", t.pgd.random_start},
            {"lower", t.pgd.lower},
            {"upper", t.pgd.upper}}}}},
    };
}

/// Method and task decide the regularizer kind and solver; the "regularizer"
/// block only carries solver settings.
inline ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    tasks::TrainConfig& t = c.train;
    Reader r(j, "");
    if (!r.has("schema_version")) throw ConfigError("missing field 'schema_version'");
    int version = 0;
    r.get("schema_version", version);
    if (version != kSchemaVersion)
        throw ConfigError("schema_version: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kSchemaVersion) + ")");
    if (!r.has("task")) throw ConfigError("missing field 'task'");
    std::string task, method = "normal";
    r.get("task", task);
    t.task = tasks::parse_task(task);
    r.get("method", method);
    r.get("output_dir", c.output_dir);
    r.get("seeds", c.seeds);
    if (c.seeds.empty()) throw ConfigError("seeds: need at least one seed");

    reg::RegularizerSpec spec;
    {
        Reader g = r.child("regularizer");
        g.get("probes", spec.probes);
        g.get("ascent_step", spec.ascent_step);
        g.get("squared", spec.squared);
        g.finish();
        if (spec.probes < 1) throw ConfigError("regularizer.probes: must be at least 1");
        if (!(spec.ascent_step > 0.0)) throw ConfigError("regularizer.ascent_step: must be positive");
    }
    {
        Reader s = r.child("schedule");
        s.get("decay_epochs", t.schedule.decay_epochs);
        s.get("base_iterations", t.schedule.base_iterations);
        s.get("power_start", t.schedule.power_start);
        s.get("power_step", t.schedule.power_step);
        s.get("power_max", t.schedule.power_max);
        std::string mixing = "convex";
        s.get("mixing", mixing);
        if (mixing == "convex") t.mixing = reg::Mixing::Convex;
        else if (mixing == "multiplicative") t.mixing = reg::Mixing::Multiplicative;
        else throw ConfigError("schedule.mixing: expected convex or multiplicative, got '" + mixing + "'");
        s.finish();
        if (!(t.schedule.power_max < 1.0 && t.schedule.power_start >= 0.0 && t.schedule.power_step >= 0.0))
            throw ConfigError("schedule: powers must satisfy 0 <= power_start and power_max < 1");
    }
    {
        Reader tr = r.child("train");
        tr.get("epochs", t.epochs);
        tr.get("batch_size", t.batch_size);
        tr.get("learning_rate", t.learning_rate);
        tr.get("lr_decay", t.lr_decay);
        tr.get("hidden", t.hidden);
        tr.get("beta", t.beta);
        tr.get("train_count", t.train_count);
        tr.get("test_count", t.test_count);
        tr.get("metric_count", t.metric_count);
        tr.get("metric_probes", t.metric_probes);
        tr.finish();
    }
    {
        Reader d = r.child("data");
        std::string fn = "sin";
        d.get("function", fn);
        t.function.g = data::parse_elementwise(fn);
        d.get("n", t.function.n);
        Reader k = d.child("classes");
        k.get("dim", t.classes.dim);
        k.get("robust", t.classes.robust);
        k.get("robust_shift", t.classes.robust_shift);
        k.get("robust_noise", t.classes.robust_noise);
        k.get("weak_shift", t.classes.weak_shift);
        k.get("weak_noise", t.classes.weak_noise);
        k.finish();
        d.finish();
    }
    {
        Reader rb = r.child("robustness");
        std::string target = "jacobian";
        rb.get("target", target);
        t.robust_target = tasks::parse_robust_target(target);
        Reader p = rb.child("pgd");
        p.get("epsilon", t.pgd.epsilon);
        p.get("step", t.pgd.step);
        p.get("k", t.pgd.k);
        p.get("random_start", t.pgd.random_start);
        p.get("lower", t.pgd.lower);
        p.get("upper", t.pgd.upper);
        p.finish();
        rb.finish();
    }
    r.finish();

    t.regularizer = spec;
    tasks::apply_method(t, method);
    t.validate();
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

inline ExperimentConfig load_config(const fs::path& path) {
    try {
        return parse_config(io::read_file(path));
    } catch (const tasks::UnknownTaskError& e) {
        throw tasks::UnknownTaskError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Desk-scale defaults per task; configs/ holds the same values as files.
inline ExperimentConfig default_config(tasks::TaskKind task) {
    ExperimentConfig c;
    tasks::TrainConfig& t = c.train;
    t.task = task;
    c.seeds = {0, 1, 2};
    c.output_dir = "runs/" + std::string(tasks::to_string(task));
    t.epochs = 40;
    t.batch_size = 128;
    t.hidden = {128, 128};
    t.train_count = 8192;
    t.test_count = 512;
    t.schedule.decay_epochs = {20, 28, 36};
    reg::RegularizerSpec spec;
    spec.squared = true;
    if (task == tasks::TaskKind::Disentangle) {
        // The Hessian penalty needs a long, strongly weighted run to pull the
        // off-diagonal mass down; at the conservative-task schedule it barely moves.
        t.function.g = data::Elementwise::Square;
        t.epochs = 150;
        t.schedule.decay_epochs = {75, 105, 135};
        t.schedule.power_start = 0.9;
        t.schedule.power_step = 0.05;
    }
    if (task == tasks::TaskKind::Robustness) {
        // Robustness ramp: the 25% -> 95% schedule scaled by 1/10. At full
        // scale the penalty dwarfs a cross-entropy below 0.7 and the
        // classifier collapses to a constant.
        t.hidden = {64, 64};
        t.train_count = 4096;
        t.test_count = 1024;
        t.epochs = 100;
        t.schedule.decay_epochs = {50, 70, 90};
        t.schedule.power_start = 0.025;
        t.schedule.power_step = 0.025;
        t.schedule.power_max = 0.095;
        spec.squared = false;
    }
    t.regularizer = spec;
    tasks::apply_method(t, "lanczos");
    return c;
}

// ---------------------------------------------------------------------------
// Run artifacts.

inline constexpr const char* kMetricsHeader =
    "epoch,stage,learning_rate,power,iterations,task_loss,test_loss,penalty,penalty_var,asymmetry,offdiag,"
    "clean_accuracy,robust_accuracy,residual_warnings,probe_metrics,seconds";

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string metrics_csv(const std::vector<tasks::MetricsRecord>& history) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& m : history) {
        out += std::to_string(m.epoch) + "," + std::to_string(m.stage) + "," + fmt(m.learning_rate) + "," +
               fmt(m.power) + "," + std::to_string(m.iterations) + "," + fmt(m.task_loss) + "," + fmt(m.test_loss) +
               "," + fmt(m.penalty) + "," + fmt(m.penalty_var) + "," + fmt(m.asymmetry) + "," + fmt(m.offdiag) + "," +
               fmt(m.clean_accuracy) + "," + fmt(m.robust_accuracy) + "," + std::to_string(m.residual_warnings) + "," +
               (m.probe_metrics ? "1" : "0") + "," + fmt(m.seconds) + "\n";
    }
    return out;
}

/// Final metrics of one run. Contains no timings so reruns compare equal.
inline json summary_json(const tasks::TrainConfig& cfg, const tasks::TrainResult& r) {
    const tasks::MetricsRecord& last = r.history.back();
    std::size_t warnings = 0;
    for (const auto& m : r.history) warnings += m.residual_warnings;
    return json{
        {"schema_version", kSchemaVersion},
        {"task", std::string(tasks::to_string(cfg.task))},
        {"method", cfg.method},
        {"seed", cfg.seed},
        {"epochs_completed", last.epoch},
        {"aborted", r.aborted},
        {"abort_reason", r.abort_reason},
        {"probe_metrics", last.probe_metrics},
        {"residual_warnings", warnings},
        {"final",
         {{"task_loss", last.task_loss},
          {"test_loss", last.test_loss},
          {"penalty", last.penalty},
          {"asymmetry", last.asymmetry},
          {"offdiag", last.offdiag},
          {"clean_accuracy", last.clean_accuracy},
          {"robust_accuracy", last.robust_accuracy},
          {"penalty_step_variance", tasks::mean_penalty_variance(r)}}},
    };
}

inline fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed-" + std::to_string(seed)); }

struct RunOutcome {
    std::uint64_t seed = 0;
    bool aborted = false;
    std::string message;
    json summary;
    double seconds = 0.0;  // wall clock of the training run
};

/// Worker count: SPECTRALREG_THREADS if set, otherwise the hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPECTRALREG_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("SPECTRALREG_THREADS must be a positive integer");
        n = static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

inline RunOutcome run_seed(const ExperimentConfig& c, std::uint64_t seed) {
    tasks::TrainConfig cfg = c.train;
    cfg.seed = seed;
    const tasks::TrainResult r = tasks::train_task(cfg);
    const fs::path dir = seed_dir(c.output_dir, seed);
    io::atomic_write(dir / "metrics.csv", metrics_csv(r.history));
    io::atomic_write(dir / "model.ckpt", encode_checkpoint(r.network));
    const json summary = summary_json(cfg, r);
    io::atomic_write(dir / "summary.json", dump(summary));
    return {seed, r.aborted, r.abort_reason, summary, r.history.back().seconds};
}

/// Runs every seed; seeds run in parallel workers with independent outputs.
inline std::vector<RunOutcome> run(const ExperimentConfig& c) {
    io::atomic_write(fs::path(c.output_dir) / "config.json", dump(to_json(c)));
    std::vector<RunOutcome> out(c.seeds.size());
    std::vector<std::string> errors(c.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < c.seeds.size();) {
            try {
                out[i] = run_seed(c, c.seeds[i]);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n = worker_count(c.seeds.size());
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw ConfigError(e);
    return out;
}

// ---------------------------------------------------------------------------
// Eigensolver convergence benchmark.

struct BenchSpec {
    std::vector<double> gap_ratios = {0.5, 0.9, 0.99};
    std::vector<std::size_t> dims = {32, 64};
    std::vector<std::size_t> budgets = {16};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    double ascent_factor = 9.0;  // gradient-ascent step alpha = ascent_factor * sigma_max
    bool identity = false;       // benchmark the identity operator instead
};

inline json to_json(const BenchSpec& b) {
    return json{{"schema_version", kSchemaVersion}, {"gap_ratios", b.gap_ratios}, {"dims", b.dims},
                {"budgets", b.budgets}, {"seeds", b.seeds}, {"ascent_factor", b.ascent_factor},
                {"identity", b.identity}};
}

inline BenchSpec bench_from_json(const json& j) {
    BenchSpec b;
    Reader r(j, "");
    int version = kSchemaVersion;
    r.get("schema_version", version);
    if (version != kSchemaVersion) throw ConfigError("schema_version: unsupported version " + std::to_string(version));
    r.get("gap_ratios", b.gap_ratios);
    r.get("dims", b.dims);
    r.get("budgets", b.budgets);
    r.get("seeds", b.seeds);
    r.get("ascent_factor", b.ascent_factor);
    r.get("identity", b.identity);
    r.finish();
    for (double g : b.gap_ratios)
        if (!(g > 0.0 && g < 1.0)) throw ConfigError("gap_ratios: each ratio must lie in (0, 1)");
    for (std::size_t d : b.dims)
        if (d < 3) throw ConfigError("dims: each dimension must be at least 3");
    for (std::size_t n : b.budgets)
        if (n < 1) throw ConfigError("budgets: each budget must be at least 1");
    if (!(b.ascent_factor > 0.0)) throw ConfigError("ascent_factor: must be positive");
    return b;
}

/// A = Q diag(sqrt(lambda)) with a random orthogonal Q. A A^T has eigenvalues
/// 1 and gap, then a linear ramp from just below gap down to 0.
inline oracle::DenseMatrix gap_operator_root(std::size_t d, double gap, std::uint64_t seed) {
    Rng rng = make_stream(seed, 0xbe9c);
    const oracle::DenseMatrix g = oracle::to_dense(gaussian_tensor(d, d, rng));
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const oracle::DenseMatrix q = qr.householderQ();
    oracle::DenseVector s(static_cast<Eigen::Index>(d));
    s[0] = 1.0;
    for (std::size_t i = 1; i < d; ++i)
        s[static_cast<Eigen::Index>(i)] = std::sqrt(gap * static_cast<double>(d - 1 - i) / static_cast<double>(d - 2));
    return q * s.asDiagonal();
}

struct BenchRow {
    std::string method;
    double gap_ratio;
    std::size_t dim, budget;
    std::uint64_t seed;
    std::size_t iteration;
    double estimate, exact, rel_error;
};

inline constexpr const char* kBenchHeader = "method,gap_ratio,dim,budget,seed,iteration,estimate,exact,rel_error";

namespace detail {

inline linops::RectangularOperatorPair dense_pair(const oracle::DenseMatrix& a) {
    auto apply = [](const oracle::DenseMatrix& m) {
        return [m](const ad::Var& v) {
            return ad::matmul(v, ad::constant(oracle::to_tensor(m)), false, true);
        };
    };
    return linops::RectangularOperatorPair{static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(a.rows()), 1,
                                           apply(a), apply(a.transpose())};
}

inline double rayleigh(const oracle::DenseMatrix& m, const Tensor& v) {
    const oracle::DenseVector x = Eigen::Map<const oracle::DenseVector>(v.values().data(), v.cols());
    return x.dot(m * x) / x.squaredNorm();
}

}  // namespace detail

/// Per-iteration |estimate - lambda*| / lambda* for Lanczos (largest Ritz
/// value), power iteration and gradient ascent (Rayleigh quotients of their
/// iterates), all from the same seed and hence the same start vector.
inline std::vector<BenchRow> bench_eig(const BenchSpec& spec) {
    std::vector<BenchRow> rows;
    const std::vector<double> gaps = spec.identity ? std::vector<double>{1.0} : spec.gap_ratios;
    for (double gap : gaps)
        for (std::size_t d : spec.dims)
            for (std::size_t budget : spec.budgets)
                for (std::uint64_t seed : spec.seeds) {
                    const oracle::DenseMatrix a =
                        spec.identity ? oracle::DenseMatrix::Identity(d, d) : gap_operator_root(d, gap, seed);
                    const oracle::DenseMatrix m = a * a.transpose();
                    const double exact = oracle::dense_symm_eig(m).eigenvalues[0];
                    const auto op = oracle::dense_batched_operator({m});
                    const std::size_t n = std::min(budget, d);
                    auto push = [&](const char* method, std::size_t it, double est) {
                        rows.push_back({method, gap, d, budget, seed, it, est, exact, std::abs(est - exact) / exact});
                    };

                    eig::LanczosDecomposition dec;
                    eig::extremal_eigenpair(op, n, seed, &dec);
                    const auto ritz = eig::ritz_history(dec);
                    for (std::size_t k = 0; k < ritz.size(); ++k) push("lanczos", k + 1, ritz[k][0]);

                    eig::IterationTrace power;
                    eig::power_iteration(op, budget, seed, &power);
                    for (std::size_t k = 0; k < power.iterates.size(); ++k)
                        push("power", k + 1, detail::rayleigh(m, power.iterates[k]));

                    eig::IterationTrace ascent;
                    const double alpha = spec.ascent_factor * std::sqrt(exact);
                    eig::gradient_ascent_spectral(detail::dense_pair(a.transpose()), alpha, budget, seed, &ascent);
                    for (std::size_t k = 0; k < ascent.iterates.size(); ++k)
                        push("gradascent", k + 1, detail::rayleigh(m, ascent.iterates[k]));
                }
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = std::string(kBenchHeader) + "\n";
    for (const auto& r : rows)
        out += r.method + "," + fmt(r.gap_ratio) + "," + std::to_string(r.dim) + "," + std::to_string(r.budget) + "," +
               std::to_string(r.seed) + "," + std::to_string(r.iteration) + "," + fmt(r.estimate) + "," +
               fmt(r.exact) + "," + fmt(r.rel_error) + "\n";
    return out;
}

/// Final-iteration relative errors of one method for one (gap, dim, budget) cell, in seed order.
inline std::vector<double> final_errors(const std::vector<BenchRow>& rows, const std::string& method, double gap,
                                        std::size_t dim, std::size_t budget) {
    std::map<std::uint64_t, double> last;
    for (const auto& r : rows)
        if (r.method == method && r.gap_ratio == gap && r.dim == dim && r.budget == budget) last[r.seed] = r.rel_error;
    std::vector<double> out;
    for (const auto& [s, e] : last) out.push_back(e);
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ContractError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Report over run directories.

inline const std::vector<std::string>& report_metrics() {
    static const std::vector<std::string> m = {"test_loss", "asymmetry", "offdiag", "clean_accuracy",
                                               "robust_accuracy", "penalty_step_variance"};
    return m;
}

struct ReportRow {
    std::string run;  // directory
    std::string task, method;
    std::size_t seeds_expected = 0, seeds_found = 0;
    bool incomplete = false;
    bool aborted = false;
    std::map<std::string, tasks::MeanStd> cells;
};

inline ReportRow report_row(const fs::path& dir) {
    ReportRow row;
    row.run = dir.string();
    std::vector<std::uint64_t> seeds;
    if (fs::exists(dir / "config.json")) {
        const ExperimentConfig c = load_config(dir / "config.json");
        row.task = std::string(tasks::to_string(c.train.task));
        row.method = c.train.method;
        seeds = c.seeds;
    } else {
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (e.is_directory() && name.rfind("seed-", 0) == 0) seeds.push_back(std::stoull(name.substr(5)));
        }
        std::sort(seeds.begin(), seeds.end());
        row.incomplete = true;
    }
    row.seeds_expected = seeds.size();
    std::map<std::string, std::vector<double>> values;
    for (std::uint64_t s : seeds) {
        const fs::path p = seed_dir(dir, s) / "summary.json";
        if (!fs::exists(p)) {
            row.incomplete = true;
            continue;
        }
        json j;
        try {
            j = json::parse(io::read_file(p));
        } catch (const json::parse_error& e) {
            throw ConfigError(p.string() + ": " + e.what());
        }
        ++row.seeds_found;
        row.task = j.value("task", row.task);
        row.method = j.value("method", row.method);
        row.aborted = row.aborted || j.value("aborted", false);
        for (const auto& m : report_metrics()) values[m].push_back(j.at("final").at(m).get<double>());
    }
    if (row.seeds_found == 0) row.incomplete = true;
    for (const auto& [m, v] : values) row.cells[m] = tasks::mean_std(v);
    return row;
}

inline std::string cell(const tasks::MeanStd& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g(%.2g)", s.mean, s.std);
    return buf;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "run,task,method,seeds,status";
    for (const auto& m : report_metrics()) out += "," + m + "_mean," + m + "_std";
    out += "\n";
    for (const auto& r : rows) {
        out += r.run + "," + r.task + "," + r.method + "," + std::to_string(r.seeds_found) + "/" +
               std::to_string(r.seeds_expected) + "," + (r.incomplete ? "incomplete" : r.aborted ? "aborted" : "ok");
        for (const auto& m : report_metrics()) {
            auto it = r.cells.find(m);
            out += it == r.cells.end() ? ",," : "," + fmt(it->second.mean) + "," + fmt(it->second.std);
        }
        out += "\n";
    }
    return out;
}

inline std::string report_text(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %-12s %-6s %-10s", "method", "task", "seeds", "status");
    out << buf;
    for (const auto& m : report_metrics()) {
        std::snprintf(buf, sizeof buf, " %-22s", m.c_str());
        out << buf;
    }
    out << "\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %-12s %-6s %-10s", r.method.c_str(), r.task.c_str(),
                      (std::to_string(r.seeds_found) + "/" + std::to_string(r.seeds_expected)).c_str(),
                      r.incomplete ? "incomplete" : r.aborted ? "aborted" : "ok");
        out << buf;
        for (const auto& m : report_metrics()) {
            auto it = r.cells.find(m);
            std::snprintf(buf, sizeof buf, " %-22s", it == r.cells.end() ? "-" : cell(it->second).c_str());
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace spectralreg::experiment
