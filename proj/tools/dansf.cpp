// dansf: run, sweep, plot and verify distributed node-specific fusion experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include <fmt/format.h>

#include "dansf/experiment.hpp"
#include "dansf/plot.hpp"
#include "dansf/verify.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitSolver = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    std::string out;
    std::string mode;
    std::optional<std::size_t> runs;
    std::vector<std::string> overrides;
    std::string topology_file;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON experiment config");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--mode", f.mode, "statistics mode")->check(CLI::IsMember({"exact", "sampled"}));
    cmd->add_option("--runs", f.runs, "Monte-Carlo runs");
    cmd->add_option("--set", f.overrides, "config override key=value (repeatable)");
    cmd->add_option("--topology-file", f.topology_file, "edge-list file replacing the generated topology");
}

dansf::ExperimentConfig load_config(const CommonFlags& f) {
    dansf::ExperimentConfig c;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) dansf::fail(dansf::Errc::io_error, "cannot open config '" + f.config_path + "'");
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) dansf::fail(dansf::Errc::invalid_config, "config '" + f.config_path + "' is not JSON");
        c = dansf::config_from_json(j);
    }
    for (const auto& o : f.overrides) dansf::apply_override(c, o);
    if (f.seed) c.master_seed = *f.seed;
    if (!f.out.empty()) c.output_dir = f.out;
    if (!f.mode.empty()) c.mode = f.mode;
    if (f.runs) c.mc_runs = *f.runs;
    if (!f.topology_file.empty()) c.topology_file = f.topology_file;
    for (const auto& w : dansf::validate(c)) std::cerr << "warning: " << w << '\n';
    return c;
}

int exit_code(dansf::Errc code) {
    switch (code) {
        case dansf::Errc::invalid_config:
        case dansf::Errc::parse_error:
        case dansf::Errc::invalid_graph:
        case dansf::Errc::generation_failure: return kExitUsage;
        case dansf::Errc::io_error: return kExitIo;
        default: return kExitSolver;
    }
}

void print_outcome(const dansf::TopologyOutcome& o, double threshold) {
    const auto& m = o.max_mse.median;
    const auto it = o.max_mse.median_iterations_to_threshold();
    fmt::print("{:<16} final median max_k MSE {:.3e}   median iterations to {:g}: {}\n", o.topology, m.back(),
               threshold, it ? fmt::format("{:g}", *it) : "not reached");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed adaptive node-specific signal fusion simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags, sweep_flags;
    auto* run = app.add_subcommand("run", "Monte-Carlo runs on one topology");
    add_common(run, run_flags);
    auto* sweep = app.add_subcommand("sweep", "compare fully connected, Erdos-Renyi and line topologies");
    add_common(sweep, sweep_flags);

    std::vector<std::string> plot_inputs;
    std::string plot_output = "plot.svg";
    std::string plot_title = "Relative MSE";
    auto* plot = app.add_subcommand("plot", "render summary CSVs to SVG");
    plot->add_option("inputs", plot_inputs, "summary CSV files")->required();
    plot->add_option("-o,--output", plot_output, "SVG file");
    plot->add_option("--title", plot_title, "chart title");

    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "run the invariant suites");
    verify->add_option("--seed", verify_seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*run) {
            const auto c = load_config(run_flags);
            print_outcome(dansf::run_experiment(c, run_flags.jobs), c.threshold);
            fmt::print("outputs in {}\n", c.output_dir);
        } else if (*sweep) {
            const auto c = load_config(sweep_flags);
            for (const auto& o : dansf::sweep_topologies(c, sweep_flags.jobs)) print_outcome(o, c.threshold);
            fmt::print("outputs in {}\n", c.output_dir);
        } else if (*plot) {
            std::vector<dansf::PlotSeries> series;
            for (const auto& path : plot_inputs) {
                std::ifstream in(path);
                if (!in) dansf::fail(dansf::Errc::io_error, "cannot open '" + path + "'");
                try {
                    series.push_back(dansf::read_summary_csv(in, std::filesystem::path(path).stem().string()));
                } catch (const dansf::Error& e) {
                    dansf::fail(e.code(), path + ": " + e.message());
                }
            }
            dansf::write_file_atomic(plot_output, dansf::render_svg(series, plot_title));
        } else if (*verify) {
            bool ok = true;
            for (const auto& r : dansf::run_invariant_suites(verify_seed)) {
                fmt::print("{:<4} {:<32} {}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
                ok = ok && r.passed;
            }
            return ok ? 0 : kExitSolver;
        }
    } catch (const dansf::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io-error: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
