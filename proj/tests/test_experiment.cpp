#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dansf/experiment.hpp"
#include "dansf/plot.hpp"
#include "dansf/verify.hpp"

using namespace dansf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dansf_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ExperimentConfig small_config(const std::string& name) {
    ExperimentConfig c;
    c.num_nodes = 4;
    c.channels_per_node = 3;
    c.num_outputs = 2;
    c.max_iterations = 30;
    c.mc_runs = 3;
    c.output_dir = scratch(name).string();
    return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.num_nodes = 6;
    c.channels = {1, 2, 3, 4, 5, 6};
    c.edge_probability = 0.3;
    c.early_stop = 1e-8;
    c.mode = "sampled";
    c.master_seed = 18446744073709551615ULL;
    EXPECT_EQ(config_from_json(nlohmann::json::parse(config_to_json(c).dump())), c);
    EXPECT_EQ(config_from_json(config_to_json(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, Overrides) {
    ExperimentConfig c;
    apply_override(c, "K=5");
    apply_override(c, "topology=line");
    apply_override(c, "threshold=1e-6");
    apply_override(c, "edge_probability=null");
    EXPECT_EQ(c.num_nodes, 5);
    EXPECT_EQ(c.topology, "line");
    EXPECT_EQ(c.threshold, 1e-6);
    EXPECT_THROW(apply_override(c, "bogus=1"), Error);
    EXPECT_THROW(apply_override(c, "K"), Error);
    EXPECT_THROW(apply_override(c, "K=abc"), Error);
}

TEST(Config, Validation) {
    ExperimentConfig c;
    EXPECT_TRUE(validate(c).empty());
    c.mode = "sampled";
    c.num_samples = 20;
    EXPECT_EQ(validate(c).size(), 1u);
    c.topology = "ring";
    EXPECT_THROW(validate(c), Error);
    c = ExperimentConfig{};
    c.channels = {3, 3};
    EXPECT_THROW(validate(c), Error);
    c = ExperimentConfig{};
    c.mc_runs = 0;
    EXPECT_THROW(validate(c), Error);
    EXPECT_EQ(ExperimentConfig{}.iterations(), 300u);
}

TEST(Experiment, SingleNodeConvergesInOneIteration) {
    auto c = small_config("k1");
    c.num_nodes = 1;
    c.max_iterations = 3;
    const auto out = run_experiment(c, 1);
    EXPECT_LE(out.max_mse.median[1], 1e-10);
    EXPECT_EQ(out.max_mse.median_iterations_to_threshold(), 1.0);
}

TEST(Experiment, WritesAllFiles) {
    auto c = small_config("files");
    c.debug = true;
    run_experiment(c, 2);
    const fs::path dir(c.output_dir);
    for (const char* f : {"config.json", "raw_fully_connected.csv", "summary_fully_connected_max_mse.csv",
                          "summary_fully_connected_mean_mse.csv", "convergence_fully_connected.svg",
                          "filters_fully_connected.json"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    const std::string raw = slurp(dir / "raw_fully_connected.csv");
    EXPECT_EQ(raw.substr(0, raw.find('\n')), "run,iter,q,node,cost,feas_residual,mse,scalars_up,scalars_down");
    // header + 3 runs x 31 states x 4 nodes
    EXPECT_EQ(std::count(raw.begin(), raw.end(), '\n'), 1 + 3 * 31 * 4);
    EXPECT_EQ(config_from_json(nlohmann::json::parse(slurp(dir / "config.json"))), c);
    for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(Experiment, DeterministicAcrossJobCounts) {
    auto a = small_config("det_a");
    auto b = small_config("det_b");
    a.topology = b.topology = "erdos_renyi";
    run_experiment(a, 1);
    run_experiment(b, 3);
    EXPECT_EQ(slurp(fs::path(a.output_dir) / "raw_erdos_renyi.csv"),
              slurp(fs::path(b.output_dir) / "raw_erdos_renyi.csv"));
}

TEST(Experiment, TopologyFile) {
    auto c = small_config("topofile");
    const fs::path edges = fs::path(c.output_dir).parent_path() / "dansf_test_edges.txt";
    {
        std::ofstream out(edges);
        out << "4\n1 2\n2 3\n2 4\n";
    }
    c.topology_file = edges.string();
    const auto out = run_experiment(c, 1);
    EXPECT_EQ(out.topology, "custom");
    c.num_nodes = 5;
    EXPECT_THROW(run_experiment(c, 1), Error);
    c.topology_file = "/nonexistent/edges.txt";
    try {
        run_experiment(c, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io_error);
    }
}

TEST(Sweep, TwoNodesCoincide) {
    auto c = small_config("k2");
    c.num_nodes = 2;
    const auto out = sweep_topologies(c, 1);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].max_mse.median, out[1].max_mse.median);
    EXPECT_EQ(out[0].max_mse.median, out[2].max_mse.median);
    const fs::path dir(c.output_dir);
    EXPECT_TRUE(fs::exists(dir / "sweep_comparison.csv"));
    EXPECT_TRUE(fs::exists(dir / "sweep.svg"));
    EXPECT_TRUE(fs::exists(dir / "iterations_to_threshold.csv"));
}

TEST(Sweep, ThresholdAboveInitialMse) {
    auto c = small_config("thr");
    c.threshold = 1e6;
    for (const auto& o : sweep_topologies(c, 1)) {
        for (const auto& it : o.max_mse.iterations_to_threshold) EXPECT_EQ(it, 0u);
    }
    const std::string table = slurp(fs::path(c.output_dir) / "iterations_to_threshold.csv");
    EXPECT_NE(table.find("line,median,0"), std::string::npos);
}

TEST(Plot, EmptyDataDrawsAxesOnly) {
    std::istringstream in("iter,median,q1,q3\n");
    const auto s = read_summary_csv(in, "x");
    const std::string svg = render_svg({s}, "t");
    EXPECT_NE(svg.find("class=\"axes\""), std::string::npos);
    EXPECT_EQ(svg.find("<polyline"), std::string::npos);
}

TEST(Plot, ThreePointPolyline) {
    std::istringstream in("iter,median,q1,q3\n0,1,1,1\n1,0.1,0.1,0.1\n2,0.01,0.01,0.01\n");
    const std::string svg = render_svg({read_summary_csv(in, "x")}, "t");
    const std::regex poly("points=\"([^\"]*)\"");
    std::smatch m;
    ASSERT_TRUE(std::regex_search(svg, m, poly));
    const std::string pts = m[1];
    EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 3);
}

TEST(Plot, DecadeTicks) {
    PlotSeries s{"s", {0, 1, 2}, {1.0, 1e-4, 1e-8}};
    const std::string svg = render_svg({s}, "t");
    for (int d = 0; d >= -8; --d) EXPECT_NE(svg.find(">1e" + std::to_string(d) + "<"), std::string::npos) << d;
}

TEST(Plot, MalformedCsvNamesLine) {
    std::istringstream in("iter,median,q1,q3\n0,1,1,1\n1,abc,1,1\n");
    try {
        read_summary_csv(in, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parse_error);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    std::istringstream bad_header("a,b\n");
    EXPECT_THROW(read_summary_csv(bad_header, "x"), Error);
}

TEST(Verify, SuitesPass) {
    for (const auto& r : run_invariant_suites(3)) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}
