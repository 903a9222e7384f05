// spectralreg: experiment runner, eigensolver benchmark and report front-end.
//
//   spectralreg run --config configs/conservative.json [--method lanczos] [--seed 3] [--out DIR]
//   spectralreg run --task disentangle --method lanczos --out runs/dis
//   spectralreg bench-eig [--config configs/bench_eig.json] --out runs/bench
//   spectralreg --bench-eig --out runs/bench
//   spectralreg report runs/a runs/b [--out report.csv]
//
// Exit status: 0 success, 1 aborted run / incomplete report / runtime failure,
// 2 unknown task name.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spectralreg/experiment.hpp"

namespace fs = std::filesystem;
using namespace spectralreg;

namespace {

int do_run(const std::string& config, const std::string& task, const std::string& method,
           std::optional<std::uint64_t> seed, const std::string& out) {
    experiment::ExperimentConfig c;
    if (!config.empty()) {
        c = experiment::load_config(config);
    } else {
        c = experiment::default_config(tasks::parse_task(task.empty() ? "conservative" : task));
    }
    if (!task.empty()) c.train.task = tasks::parse_task(task);
    tasks::apply_method(c.train, method.empty() ? c.train.method : method);
    if (seed) c.seeds = {*seed};
    if (!out.empty()) c.output_dir = out;
    c.train.validate();

    const auto outcomes = experiment::run(c);
    int status = 0;
    for (const auto& o : outcomes) {
        const fs::path dir = experiment::seed_dir(c.output_dir, o.seed);
        if (o.aborted) {
            std::cerr << "seed " << o.seed << " aborted: " << o.message << " (last good checkpoint in " << dir.string()
                      << ")\n";
            status = 1;
        } else {
            std::cout << "seed " << o.seed << ": " << (dir / "metrics.csv").string() << "\n";
        }
    }
    return status;
}

int do_bench(const std::string& config, const std::string& out) {
    experiment::BenchSpec spec;
    if (!config.empty()) {
        try {
            spec = experiment::bench_from_json(experiment::json::parse(io::read_file(config)));
        } catch (const experiment::json::parse_error& e) {
            throw ConfigError(config + ": " + e.what());
        }
    }
    const auto rows = experiment::bench_eig(spec);
    const fs::path dir = out.empty() ? fs::path("runs/bench_eig") : fs::path(out);
    io::atomic_write(dir / "bench_eig.csv", experiment::bench_csv(rows));
    io::atomic_write(dir / "bench_spec.json", experiment::dump(experiment::to_json(spec)));

    const auto gaps = spec.identity ? std::vector<double>{1.0} : spec.gap_ratios;
    std::printf("%-8s %-5s %-6s %-14s %-14s %-14s\n", "gap", "dim", "budget", "lanczos", "power", "gradascent");
    for (double g : gaps)
        for (std::size_t d : spec.dims)
            for (std::size_t n : spec.budgets) {
                std::printf("%-8g %-5zu %-6zu", g, d, n);
                for (const char* m : {"lanczos", "power", "gradascent"})
                    std::printf(" %-14.3e", experiment::median(experiment::final_errors(rows, m, g, d, n)));
                std::printf("\n");
            }
    std::cout << "median final relative errors; per-iteration rows in " << (dir / "bench_eig.csv").string() << "\n";
    return 0;
}

int do_report(const std::vector<std::string>& dirs, const std::string& out) {
    std::vector<experiment::ReportRow> rows;
    for (const auto& d : dirs) rows.push_back(experiment::report_row(d));
    std::cout << experiment::report_text(rows);
    if (!out.empty()) io::atomic_write(out, experiment::report_csv(rows));
    for (const auto& r : rows)
        if (r.incomplete) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral Jacobian/Hessian regularization experiments"};
    app.require_subcommand(0, 1);

    std::string config, task, method, out;
    std::optional<std::uint64_t> seed;
    bool bench_flag = false;
    app.add_flag("--bench-eig", bench_flag, "Run the eigensolver benchmark");
    app.add_option("--config", config, "Config file (JSON)");
    app.add_option("--out", out, "Output directory");

    auto* run = app.add_subcommand("run", "Train a task for every configured seed");
    run->add_option("--config", config, "Experiment config (JSON)");
    run->add_option("--task", task, "Task: conservative, disentangle, robustness");
    run->add_option("--method", method, "normal|hutchinson|hutchinson-0.1|power|lanczos|gradascent");
    run->add_option("--seed", seed, "Run only this seed");
    run->add_option("--out", out, "Output directory");

    auto* bench = app.add_subcommand("bench-eig", "Eigensolver convergence benchmark");
    bench->add_option("--config", config, "Benchmark spec (JSON)");
    bench->add_option("--out", out, "Output directory");

    std::vector<std::string> dirs;
    auto* report = app.add_subcommand("report", "Aggregate run directories into a mean(std) table");
    report->add_option("dirs", dirs, "Run directories")->required();
    report->add_option("--out", out, "CSV output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return do_run(config, task, method, seed, out);
        if (*bench || bench_flag) return do_bench(config, out);
        if (*report) return do_report(dirs, out);
        std::cout << app.help();
        return 0;
    } catch (const tasks::UnknownTaskError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
