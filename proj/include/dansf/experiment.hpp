/**
 * @file experiment.hpp
 * @brief Experiment configuration, Monte-Carlo orchestration and result files.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dansf/core.hpp"
#include "dansf/engine.hpp"
#include "dansf/metrics.hpp"
#include "dansf/network.hpp"
#include "dansf/plot.hpp"
#include "dansf/problems.hpp"
#include "dansf/random.hpp"
#include "dansf/signals.hpp"

namespace dansf {

struct ExperimentConfig {
    int num_nodes = 10;
    Index num_outputs = 3;
    Index channels_per_node = 7;
    std::vector<Index> channels;  // overrides channels_per_node when non-empty
    std::string topology = "fully_connected";
    std::optional<double> edge_probability;
    std::string topology_file;
    std::string problem = "trace_qclp";
    std::string mode = "exact";
    Index num_samples = 10000;
    std::uint64_t max_iterations = 0;  // 0: 30 K
    std::size_t mc_runs = 20;
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    double threshold = 1e-4;
    std::optional<double> early_stop;
    double var_a = 0.2;
    double var_d = 0.5;
    double var_n = 0.1;
    bool debug = false;

    ChannelLayout layout() const {
        return channels.empty() ? ChannelLayout::uniform(num_nodes, channels_per_node) : ChannelLayout(channels);
    }

    std::uint64_t iterations() const {
        return max_iterations ? max_iterations : 30 * static_cast<std::uint64_t>(num_nodes);
    }

    bool operator==(const ExperimentConfig&) const = default;
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j{{"K", c.num_nodes},
                     {"Q", c.num_outputs},
                     {"M_k", c.channels_per_node},
                     {"channels", c.channels},
                     {"topology", c.topology},
                     {"topology_file", c.topology_file},
                     {"problem", c.problem},
                     {"mode", c.mode},
                     {"N", c.num_samples},
                     {"max_iterations", c.max_iterations},
                     {"mc_runs", c.mc_runs},
                     {"master_seed", c.master_seed},
                     {"output_dir", c.output_dir},
                     {"threshold", c.threshold},
                     {"var_a", c.var_a},
                     {"var_d", c.var_d},
                     {"var_n", c.var_n},
                     {"debug", c.debug}};
    j["edge_probability"] = c.edge_probability ? nlohmann::json(*c.edge_probability) : nlohmann::json(nullptr);
    j["early_stop"] = c.early_stop ? nlohmann::json(*c.early_stop) : nlohmann::json(nullptr);
    return j;
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_optional(const nlohmann::json& j, const char* key, std::optional<double>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    out = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "K",         "Q",      "M_k",         "channels", "topology", "topology_file", "problem",
        "mode",      "N",      "max_iterations", "mc_runs", "master_seed", "output_dir", "threshold",
        "var_a",     "var_d",  "var_n",       "debug",    "edge_probability", "early_stop"};
    if (!j.is_object()) fail(Errc::invalid_config, "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            fail(Errc::invalid_config, "unknown config key '" + key + "'");
        }
    }
    ExperimentConfig c;
    try {
        detail::read_field(j, "K", c.num_nodes);
        detail::read_field(j, "Q", c.num_outputs);
        detail::read_field(j, "M_k", c.channels_per_node);
        detail::read_field(j, "channels", c.channels);
        detail::read_field(j, "topology", c.topology);
        detail::read_field(j, "topology_file", c.topology_file);
        detail::read_field(j, "problem", c.problem);
        detail::read_field(j, "mode", c.mode);
        detail::read_field(j, "N", c.num_samples);
        detail::read_field(j, "max_iterations", c.max_iterations);
        detail::read_field(j, "mc_runs", c.mc_runs);
        detail::read_field(j, "master_seed", c.master_seed);
        detail::read_field(j, "output_dir", c.output_dir);
        detail::read_field(j, "threshold", c.threshold);
        detail::read_field(j, "var_a", c.var_a);
        detail::read_field(j, "var_d", c.var_d);
        detail::read_field(j, "var_n", c.var_n);
        detail::read_field(j, "debug", c.debug);
        detail::read_optional(j, "edge_probability", c.edge_probability);
        detail::read_optional(j, "early_stop", c.early_stop);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::invalid_config, std::string("bad config value: ") + e.what());
    }
    return c;
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
inline void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail(Errc::invalid_config, "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    nlohmann::json j = config_to_json(config);
    j[key] = value;
    config = config_from_json(j);
}

/// Throws on invalid settings; returns advisory warnings.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
    if (c.num_nodes < 1) fail(Errc::invalid_config, "K must be positive");
    if (c.num_outputs < 1) fail(Errc::invalid_config, "Q must be positive");
    if (c.mc_runs < 1) fail(Errc::invalid_config, "mc_runs must be positive");
    if (!c.channels.empty() && static_cast<int>(c.channels.size()) != c.num_nodes) {
        fail(Errc::invalid_config, "channels must list one count per node");
    }
    const ChannelLayout layout = c.layout();
    if (c.topology_file.empty()) parse_topology_kind(c.topology);
    parse_problem_kind(c.problem);
    const StatsMode mode = parse_stats_mode(c.mode);
    if (mode == StatsMode::sampled && c.num_samples < 1) fail(Errc::invalid_config, "N must be positive");
    if (c.edge_probability && !(*c.edge_probability > 0.0 && *c.edge_probability <= 1.0)) {
        fail(Errc::invalid_config, "edge_probability must lie in (0, 1]");
    }
    if (!(c.threshold > 0.0)) fail(Errc::invalid_config, "threshold must be positive");
    if (!(c.var_a > 0.0)) fail(Errc::invalid_config, "var_a must be positive");
    if (!(c.var_d > 0.0) || !(c.var_n >= 0.0)) fail(Errc::invalid_config, "signal variances out of range");
    std::vector<std::string> warnings;
    const Index m_tilde_max = layout.max_channels() + static_cast<Index>(c.num_nodes - 1) * c.num_outputs;
    if (mode == StatsMode::sampled && c.num_samples < m_tilde_max) {
        warnings.push_back("N = " + std::to_string(c.num_samples) + " is below the largest local dimension " +
                           std::to_string(m_tilde_max) + "; local covariances may be singular");
    }
    for (Index m : layout.per_node()) {
        if (m < c.num_outputs) {
            warnings.push_back("a node has fewer channels than Q; its compressor cannot have full column rank");
            break;
        }
    }
    return warnings;
}

/// Seed streams of one run; the same run index gives the same streams for every topology.
struct RunSeeds {
    std::uint64_t model, family, graph, init, samples;

    static RunSeeds derive(std::uint64_t master, std::size_t run) {
        const std::uint64_t s = derive_seed(master, static_cast<std::uint64_t>(run));
        return {derive_seed(s, 1), derive_seed(s, 2), derive_seed(s, 3), derive_seed(s, 4), derive_seed(s, 5)};
    }
};

struct RunSetup {
    NetworkGraph graph;
    MixtureModel model;
    CoupledFamily family;
    RunSeeds seeds;
};

inline NetworkGraph load_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open topology file '" + path + "'");
    return read_edge_list(in);
}

inline NetworkGraph make_graph(const ExperimentConfig& c, const std::string& topology, std::uint64_t seed) {
    if (!c.topology_file.empty()) {
        NetworkGraph g = load_topology_file(c.topology_file);
        if (g.num_nodes() != c.num_nodes) fail(Errc::invalid_config, "topology file node count differs from K");
        return g;
    }
    if (c.num_nodes == 1) return NetworkGraph(1, {});
    return generate_topology(parse_topology_kind(topology), c.num_nodes, seed, c.edge_probability);
}

inline RunSetup make_run_setup(const ExperimentConfig& c, const std::string& topology, std::size_t run) {
    const RunSeeds seeds = RunSeeds::derive(c.master_seed, run);
    const ChannelLayout layout = c.layout();
    MixtureModel model = MixtureModel::random(layout.total(), c.num_outputs, c.var_a, c.var_d, c.var_n, seeds.model);
    CoupledFamily family = make_coupled_family(parse_problem_kind(c.problem), c.num_outputs, layout, model,
                                               seeds.family);
    return {make_graph(c, topology, seeds.graph), std::move(model), std::move(family), seeds};
}

struct RunResult {
    std::size_t run = 0;
    IterationRecord initial;
    std::vector<IterationRecord> records;
    std::vector<Mat> filters;  // final X_k
    std::vector<Mat> oracle;

    /// Rows: the initial state, then one row per iteration.
    ConvergenceCurve curve(double NodeRecord::*field) const {
        std::vector<std::vector<double>> values;
        auto row = [&](const IterationRecord& r) {
            std::vector<double> v;
            for (const auto& n : r.nodes) v.push_back(n.*field);
            values.push_back(std::move(v));
        };
        row(initial);
        for (const auto& r : records) row(r);
        return ConvergenceCurve(std::move(values));
    }
};

inline RunResult run_single(const ExperimentConfig& c, const std::string& topology, std::size_t run) {
    RunSetup setup = make_run_setup(c, topology, run);
    const StatsMode mode = parse_stats_mode(c.mode);
    SignalSource source = mode == StatsMode::exact
                              ? SignalSource::exact(setup.family)
                              : SignalSource::sampled(setup.family, setup.model, c.num_samples, setup.seeds.samples);
    EngineOptions options;
    options.max_iterations = c.iterations();
    options.debug = c.debug;
    options.early_stop_threshold = c.early_stop;
    options.init_seed = setup.seeds.init;
    Engine engine(std::move(setup.graph), std::move(setup.family), std::move(source), options);
    RunResult result;
    result.run = run;
    result.initial = engine.initial_record();
    result.records = engine.run();
    for (const auto& node : engine.nodes()) result.filters.push_back(node.filter);
    result.oracle = engine.oracle();
    return result;
}

/// All runs of one topology on `jobs` worker threads; results ordered by run index.
inline std::vector<RunResult> run_monte_carlo(const ExperimentConfig& c, const std::string& topology,
                                              unsigned jobs) {
    const std::size_t runs = c.mc_runs;
    std::vector<RunResult> results(runs);
    std::vector<std::exception_ptr> errors(runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < runs; r = next++) {
            try {
                results[r] = run_single(c, topology, r);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(runs)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t r = 0; r < runs; ++r) {
        if (!errors[r]) continue;
        try {
            std::rethrow_exception(errors[r]);
        } catch (const Error& e) {
            fail(e.code(), "run " + std::to_string(r) + ": " + e.message());
        }
    }
    return results;
}

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(Errc::io_error, "cannot create " + path.parent_path().string() + ": " + ec.message());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::io_error, "cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) fail(Errc::io_error, "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(Errc::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string raw_csv(const std::vector<RunResult>& results) {
    std::ostringstream out;
    write_records_header(out);
    for (const auto& r : results) {
        write_records_csv(out, r.run, std::span(&r.initial, 1));
        write_records_csv(out, r.run, r.records);
    }
    return out.str();
}

inline std::string summary_csv(const McSummary& s) {
    std::ostringstream out;
    write_summary_csv(out, s);
    return out.str();
}

struct TopologyOutcome {
    std::string topology;
    McSummary max_mse;
    McSummary mean_mse;
    std::vector<RunResult> runs;
};

inline TopologyOutcome summarize(const std::string& topology, std::vector<RunResult> runs, double threshold) {
    std::vector<std::vector<double>> max_curves, mean_curves;
    for (const auto& r : runs) {
        const ConvergenceCurve c = r.curve(&NodeRecord::mse);
        max_curves.push_back(c.max_over_nodes());
        mean_curves.push_back(c.mean_over_nodes());
    }
    return {topology, mc_aggregate(max_curves, threshold), mc_aggregate(mean_curves, threshold), std::move(runs)};
}

inline std::string topology_label(const ExperimentConfig& c, const std::string& topology) {
    if (!c.topology_file.empty()) return "custom";
    return to_string(parse_topology_kind(topology));
}

inline nlohmann::json debug_dump(const RunResult& r) {
    nlohmann::json j;
    j["run"] = r.run;
    j["filters"] = nlohmann::json::array();
    j["oracle"] = nlohmann::json::array();
    for (const auto& x : r.filters) j["filters"].push_back(matrix_to_json(x));
    for (const auto& x : r.oracle) j["oracle"].push_back(matrix_to_json(x));
    return j;
}

/// Raw CSV, max/mean MSE summaries and an SVG for one topology.
inline void write_topology_outputs(const ExperimentConfig& c, const TopologyOutcome& o) {
    const std::filesystem::path dir(c.output_dir);
    write_file_atomic(dir / ("raw_" + o.topology + ".csv"), raw_csv(o.runs));
    write_file_atomic(dir / ("summary_" + o.topology + "_max_mse.csv"), summary_csv(o.max_mse));
    write_file_atomic(dir / ("summary_" + o.topology + "_mean_mse.csv"), summary_csv(o.mean_mse));
    const std::vector<PlotSeries> series{series_from_summary("median max_k MSE", o.max_mse),
                                         series_from_summary("median mean_k MSE", o.mean_mse)};
    write_file_atomic(dir / ("convergence_" + o.topology + ".svg"),
                      render_svg(series, "Relative MSE, " + o.topology + " (" + c.mode + ")"));
    if (c.debug) {
        nlohmann::json dump = nlohmann::json::array();
        for (const auto& r : o.runs) dump.push_back(debug_dump(r));
        write_file_atomic(dir / ("filters_" + o.topology + ".json"), dump.dump(1));
    }
}

inline TopologyOutcome run_experiment(const ExperimentConfig& c, unsigned jobs) {
    validate(c);
    const std::string label = topology_label(c, c.topology);
    TopologyOutcome outcome = summarize(label, run_monte_carlo(c, c.topology, jobs), c.threshold);
    write_file_atomic(std::filesystem::path(c.output_dir) / "config.json", config_to_json(c).dump(2) + "\n");
    write_topology_outputs(c, outcome);
    return outcome;
}

inline const std::vector<std::string>& sweep_order() {
    static const std::vector<std::string> order{"fully_connected", "erdos_renyi", "line"};
    return order;
}

inline std::string format_iterations(std::optional<double> v) {
    return v ? format_real(*v) : std::string("not_reached");
}

/**
 * @brief Runs every topology with the same seeds and problem families and
 *        writes per-topology outputs plus a comparison CSV, an overlay SVG and
 *        an iterations-to-threshold table.
 */
inline std::vector<TopologyOutcome> sweep_topologies(const ExperimentConfig& config, unsigned jobs) {
    ExperimentConfig c = config;
    c.topology_file.clear();
    validate(c);
    std::vector<TopologyOutcome> outcomes;
    for (const auto& topo : sweep_order()) {
        outcomes.push_back(summarize(topo, run_monte_carlo(c, topo, jobs), c.threshold));
        write_topology_outputs(c, outcomes.back());
    }
    std::size_t length = 0;
    for (const auto& o : outcomes) length = std::max(length, o.max_mse.median.size());
    std::ostringstream cmp;
    cmp << "iter";
    for (const auto& o : outcomes) cmp << ',' << o.topology;
    cmp << '\n';
    for (std::size_t i = 0; i < length; ++i) {
        cmp << i;
        for (const auto& o : outcomes) {
            const auto& m = o.max_mse.median;
            cmp << ',' << format_real(i < m.size() ? m[i] : m.back());
        }
        cmp << '\n';
    }
    std::ostringstream table;
    table << "topology,run,iterations\n";
    for (const auto& o : outcomes) {
        for (std::size_t r = 0; r < o.max_mse.iterations_to_threshold.size(); ++r) {
            const auto& it = o.max_mse.iterations_to_threshold[r];
            table << o.topology << ',' << r << ',' << (it ? std::to_string(*it) : std::string("not_reached")) << '\n';
        }
        table << o.topology << ",median," << format_iterations(o.max_mse.median_iterations_to_threshold()) << '\n';
    }
    std::vector<PlotSeries> series;
    for (const auto& o : outcomes) series.push_back(series_from_summary(o.topology, o.max_mse));
    const std::filesystem::path dir(c.output_dir);
    write_file_atomic(dir / "config.json", config_to_json(c).dump(2) + "\n");
    write_file_atomic(dir / "sweep_comparison.csv", cmp.str());
    write_file_atomic(dir / "iterations_to_threshold.csv", table.str());
    write_file_atomic(dir / "sweep.svg", render_svg(series, "Median max_k relative MSE by topology"));
    return outcomes;
}

}  // namespace dansf
