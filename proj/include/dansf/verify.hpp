/**
 * @file verify.hpp
 * @brief Invariant suites behind `dansf verify`.
 */

#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dansf/engine.hpp"
#include "dansf/experiment.hpp"
#include "dansf/metrics.hpp"
#include "dansf/network.hpp"

namespace dansf {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Uniformly labelled random tree: node perm[i] attaches to one of perm[0..i-1].
inline NetworkGraph random_tree(int num_nodes, Rng& rng) {
    std::vector<NodeId> perm(static_cast<std::size_t>(num_nodes));
    std::iota(perm.begin(), perm.end(), 1);
    for (int i = num_nodes - 1; i > 0; --i) std::swap(perm[i], perm[rng.integer(0, i)]);
    std::vector<Edge> edges;
    for (int i = 1; i < num_nodes; ++i) edges.push_back(Edge::between(perm[i], perm[rng.integer(0, i - 1)]));
    return NetworkGraph(num_nodes, edges);
}

inline CheckResult check_tree_pruning(std::uint64_t seed) {
    int bad = 0, trees = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(derive_seed(seed, {10, static_cast<std::uint64_t>(trial)}));
        const int K = static_cast<int>(rng.integer(2, 12));
        const NetworkGraph g = generate_topology(TopologyKind::erdos_renyi, K, rng.integer(0, 1 << 30));
        for (NodeId q = 1; q <= K; ++q, ++trees) {
            const TreeTopology t = prune_to_tree(g, q);
            bool ok = static_cast<int>(t.edges().size()) == K - 1 && NetworkGraph(K, t.edges()).is_connected();
            for (NodeId n : g.neighbors(q)) ok = ok && t.has_edge(q, n) && t.branch_of(n) == n;
            std::size_t covered = 0;
            for (NodeId n : t.root_neighbors()) covered += t.branch_members(n).size();
            ok = ok && covered == static_cast<std::size_t>(K - 1);
            bad += ok ? 0 : 1;
        }
    }
    return {"tree pruning", bad == 0, fmt::format("{} trees, {} bad", trees, bad)};
}

inline CheckResult check_gather_sum(std::uint64_t seed) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(derive_seed(seed, {11, static_cast<std::uint64_t>(trial)}));
        const int K = static_cast<int>(rng.integer(2, 12));
        const NetworkGraph g = random_tree(K, rng);
        const NodeId q = static_cast<NodeId>(rng.integer(1, K));
        const TreeTopology t = prune_to_tree(g, q);
        std::vector<CompressedBlock> blocks;
        for (int k = 0; k < K; ++k) blocks.push_back({rng.gaussian(2, 5), rng.gaussian(2, 2)});
        LinkCostLedger ledger;
        ledger.set_tree(t);
        const auto agg = fuse_forward(t, gather_schedule(t), blocks, ledger);
        for (NodeId n : t.root_neighbors()) {
            Mat y = Mat::Zero(2, 5);
            for (NodeId k : t.branch_members(n)) y += blocks[k - 1].y_hat;
            worst = std::max(worst, (agg.at(n).y_hat - y).cwiseAbs().maxCoeff());
        }
    }
    return {"gather sum", worst <= 1e-12, fmt::format("max abs deviation {:.3g}", worst)};
}

inline ExperimentConfig verify_base_config(std::uint64_t seed) {
    ExperimentConfig c;
    c.master_seed = seed;
    c.mc_runs = 1;
    return c;
}

inline CheckResult check_lift_consistency(std::uint64_t seed) {
    ExperimentConfig c = verify_base_config(seed);
    c.num_nodes = 6;
    c.topology = "erdos_renyi";
    c.max_iterations = 36;
    c.debug = true;
    double worst = 0.0;
    for (std::size_t run = 0; run < 3; ++run) {
        for (const auto& r : run_single(c, c.topology, run).records) worst = std::max(worst, r.debug->max_lift());
    }
    return {"lift-map consistency", worst <= 1e-12, fmt::format("max residual {:.3g}", worst)};
}

inline CheckResult check_monotone_feasible(std::uint64_t seed) {
    ExperimentConfig c = verify_base_config(seed);
    c.max_iterations = 100;
    std::size_t violations = 0;
    double feas = 0.0;
    for (const auto& topo : sweep_order()) {
        const RunResult r = run_single(c, topo, 0);
        std::vector<std::vector<double>> costs;
        for (const auto& rec : r.records) {
            std::vector<double> row;
            for (const auto& n : rec.nodes) {
                row.push_back(n.cost);
                feas = std::max(feas, n.feasibility);
            }
            costs.push_back(std::move(row));
        }
        violations += check_monotone(ConvergenceCurve(costs), 1e-9).size();
    }
    return {"monotone cost and feasibility", violations == 0 && feas <= kFeasibilityTolerance,
            fmt::format("{} monotonicity violations, max feasibility residual {:.3g}", violations, feas)};
}

inline CheckResult check_communication(std::uint64_t seed) {
    ExperimentConfig c = verify_base_config(seed);
    c.topology = "erdos_renyi";
    c.max_iterations = 20;
    const RunResult r = run_single(c, c.topology, 0);
    const std::uint64_t K = static_cast<std::uint64_t>(c.num_nodes), Q = static_cast<std::uint64_t>(c.num_outputs);
    std::size_t bad = 0;
    for (const auto& rec : r.records) {
        const std::uint64_t N = rec.block_samples, L = Q;
        std::uint64_t up = 0, down = 0;
        for (const auto& n : rec.nodes) {
            up += n.scalars_up;
            down += n.scalars_down;
        }
        if (up != (K - 1) * (Q * N + Q * L) || down != (K - 1) * (Q * N + Q * L + Q * Q)) ++bad;
    }
    return {"communication accounting", bad == 0, fmt::format("{} of {} iterations off", bad, r.records.size())};
}

inline CheckResult check_assumption1(std::uint64_t seed) {
    double worst = 0.0;
    for (const auto kind : {ProblemKind::trace_qclp, ProblemKind::mmse, ProblemKind::lcmv}) {
        ExperimentConfig c = verify_base_config(seed);
        c.problem = to_string(kind);
        const RunSetup s = make_run_setup(c, c.topology, 0);
        worst = std::max(worst, verify_assumption1(s.family, 1e-9).max_deviation);
    }
    return {"coupled optimal filters", worst <= 1e-9, fmt::format("max relative deviation {:.3g}", worst)};
}

inline CheckResult check_determinism(std::uint64_t seed) {
    ExperimentConfig c = verify_base_config(seed);
    c.topology = "erdos_renyi";
    c.max_iterations = 20;
    const std::string a = raw_csv({run_single(c, c.topology, 0)});
    const std::string b = raw_csv({run_single(c, c.topology, 0)});
    return {"determinism", a == b, fmt::format("{} bytes compared", a.size())};
}

inline std::vector<CheckResult> run_invariant_suites(std::uint64_t seed) {
    std::vector<CheckResult> out;
    for (auto* check : {check_tree_pruning, check_gather_sum, check_lift_consistency, check_monotone_feasible,
                        check_communication, check_assumption1, check_determinism}) {
        try {
            out.push_back(check(seed));
        } catch (const Error& e) {
            out.push_back({"(suite aborted)", false, e.what()});
        }
    }
    return out;
}

}  // namespace dansf
