/**
 * @file engine.hpp
 * @brief The distributed node-specific fusion iteration.
 *
 * One iteration with updating node q:
 *   1. prune the graph to a tree rooted at q;
 *   2. every node k != q compresses its block, y^_k = X_kk^T y_k (same for B);
 *   3. compressed data is summed and forwarded toward q along the tree, so q
 *      receives one aggregate per root neighbor n, the sum over branch B_nq;
 *   4. q stacks its raw channels over the aggregates, solves its own problem
 *      at that reduced dimension and splits the solution into its new
 *      compressor and one Q x Q factor G_qn per branch;
 *   5. q sends z_q = X~^T y~ and Z_q = X~^T B~ down the tree together with
 *      each branch's G factor; node k solves its own problem for the Q x Q
 *      correction F_kq on (z_q, Z_q) and outputs F_kq^T z_q.
 *
 * Compressors are updated as X_kk <- X_kk G_qn T, where T whitens z_q. All
 * compressors therefore stay blocks of one common filter, X_q^{i+1} T, and the
 * next local problem can represent every node's current filter X_k = X_q F_kq
 * up to a per-branch Q x Q factor. T changes no iterate; it keeps the local
 * covariances well conditioned when some D_k are.
 *
 * Exact-statistics mode feeds the algorithm the Cholesky factor L of the
 * analytic covariance as a "batch" with unit weight: every covariance formed
 * along the way is then the congruence C^T R C of the analytic one.
 */

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dansf/core.hpp"
#include "dansf/metrics.hpp"
#include "dansf/network.hpp"
#include "dansf/problems.hpp"
#include "dansf/random.hpp"
#include "dansf/signals.hpp"

namespace dansf {

enum class StatsMode { exact, sampled };

inline std::string to_string(StatsMode mode) { return mode == StatsMode::exact ? "exact" : "sampled"; }

inline StatsMode parse_stats_mode(const std::string& name) {
    if (name == "exact") return StatsMode::exact;
    if (name == "sampled") return StatsMode::sampled;
    fail(Errc::invalid_config, "unknown statistics mode '" + name + "'");
}

/// Observation for one iteration: second-order statistics are weight * y y^T.
struct SignalBlock {
    Mat y;
    double weight = 1.0;
    Mat b;

    Index num_samples() const { return y.cols(); }
};

inline Mat weighted_gram(const Mat& y, double weight, bool regularize) {
    Mat r = Mat::Zero(y.rows(), y.rows());
    r.selfadjointView<Eigen::Lower>().rankUpdate(y, weight);
    r = r.selfadjointView<Eigen::Lower>();
    if (regularize) r.diagonal().array() += default_ridge(r);
    return r;
}

class SignalSource {
public:
    static SignalSource exact(const CoupledFamily& family) {
        SignalSource s;
        s.mode_ = StatsMode::exact;
        s.factor_ = Mat(spd_factor(family.covariance).matrixL());
        s.b_ = family.b;
        return s;
    }

    /// Fresh N-sample batch from `model` on every call; for mmse the shared
    /// matrix is re-estimated as (1/N) Y D^T from the batch's latent sources.
    static SignalSource sampled(const CoupledFamily& family, const MixtureModel& model, Index num_samples,
                                std::uint64_t seed) {
        if (num_samples < 1) fail(Errc::invalid_config, "batch size must be positive");
        SignalSource s;
        s.mode_ = StatsMode::sampled;
        s.kind_ = family.kind;
        s.model_ = model;
        s.layout_ = family.layout;
        s.num_samples_ = num_samples;
        s.seed_ = seed;
        s.b_ = family.b;
        return s;
    }

    StatsMode mode() const { return mode_; }

    SignalBlock next() {
        if (mode_ == StatsMode::exact) return {factor_, 1.0, b_};
        const auto batch = sample_batch(model_, layout_, num_samples_, derive_seed(seed_, counter_++));
        const double w = 1.0 / static_cast<double>(num_samples_);
        SignalBlock block{batch.data, w, b_};
        if (kind_ == ProblemKind::mmse) block.b = w * batch.data * batch.sources.transpose();
        return block;
    }

private:
    StatsMode mode_ = StatsMode::exact;
    ProblemKind kind_ = ProblemKind::trace_qclp;
    Mat factor_;
    Mat b_;
    MixtureModel model_;
    ChannelLayout layout_;
    Index num_samples_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

struct NodeState {
    NodeId id = 0;
    Mat compressor;                   // X_kk, M_k x Q
    std::optional<Mat> latest_f;      // F_kq of the last iteration
    std::optional<Mat> latest_output; // z_k, Q x N
    Mat filter;                       // X_k, M x Q; observer-side, the iteration never reads it
};

struct CompressedBlock {
    Mat y_hat;  // Q x N
    Mat b_hat;  // Q x L
};

struct LocalData {
    Mat y_tilde;  // M~_q x N
    Mat b_tilde;  // M~_q x L
    double weight = 1.0;
    std::vector<NodeId> neighbor_order;
    Index own_rows = 0;

    Index m_tilde() const { return y_tilde.rows(); }
};

struct LocalSolution {
    Mat x_tilde;  // M~_q x Q
    Index own_rows = 0;
    std::vector<NodeId> neighbor_order;
    double feasibility = 0.0;  // constraint violation on the local instance

    Index num_outputs() const { return x_tilde.cols(); }
    Mat own_block() const { return x_tilde.topRows(own_rows); }

    /// G_qn for root neighbor n.
    Mat g_block(NodeId n) const {
        const auto it = std::find(neighbor_order.begin(), neighbor_order.end(), n);
        if (it == neighbor_order.end()) fail(Errc::out_of_range, "node " + std::to_string(n) + " is not a root neighbor");
        const auto j = static_cast<Index>(it - neighbor_order.begin());
        return x_tilde.middleRows(own_rows + j * num_outputs(), num_outputs());
    }
};

/// What leaves node q: z_q, Z_q for everybody plus one G factor per branch.
struct Dissemination {
    Mat z;    // Q x N
    Mat z_b;  // Q x L
    std::vector<Mat> branch_factor;  // [k-1]: G_qn with k in B_nq; empty for q
};

inline NodeId select_updating_node(std::uint64_t iteration, int num_nodes) {
    return static_cast<NodeId>(iteration % static_cast<std::uint64_t>(num_nodes)) + 1;
}

inline CompressedBlock compress(const Mat& compressor, const Mat& y_k, const Mat& b_k) {
    if (y_k.rows() != compressor.rows() || b_k.rows() != compressor.rows()) {
        fail(Errc::dimension_mismatch, "compressor rows do not match the node's channels");
    }
    return {compressor.transpose() * y_k, compressor.transpose() * b_k};
}

inline std::uint64_t block_scalars(const CompressedBlock& b) {
    return static_cast<std::uint64_t>(b.y_hat.size() + b.b_hat.size());
}

/**
 * @brief Sum-and-forward toward the root along `schedule`.
 *
 * `blocks[k-1]` is node k's compressed data (the root's entry is ignored).
 * Each node forwards its own block plus everything received from its
 * children; the result is keyed by root neighbor.
 */
inline std::map<NodeId, CompressedBlock> fuse_forward(const TreeTopology& tree, const GatherSchedule& schedule,
                                                      std::span<const CompressedBlock> blocks,
                                                      LinkCostLedger& ledger) {
    const int K = tree.num_nodes();
    if (static_cast<int>(blocks.size()) != K) fail(Errc::dimension_mismatch, "one compressed block per node expected");
    if (static_cast<int>(schedule.size()) != K - 1) fail(Errc::invalid_graph, "schedule does not cover the tree");
    std::vector<std::optional<CompressedBlock>> inbox(static_cast<std::size_t>(K));
    std::vector<bool> sent(static_cast<std::size_t>(K), false);
    std::map<NodeId, CompressedBlock> aggregates;
    for (const DirectedEdge& e : schedule) {
        if (e.from == tree.root() || tree.parent(e.from) != e.to) {
            fail(Errc::invalid_graph, "schedule edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                                          " is not a child-to-parent tree edge");
        }
        if (sent[e.from - 1]) fail(Errc::invalid_graph, "node " + std::to_string(e.from) + " sends twice");
        for (NodeId c : tree.children(e.from)) {
            if (!sent[c - 1]) fail(Errc::invalid_graph, "node " + std::to_string(e.from) + " sends before child " + std::to_string(c));
        }
        CompressedBlock out = blocks[e.from - 1];
        if (inbox[e.from - 1]) {
            out.y_hat += inbox[e.from - 1]->y_hat;
            out.b_hat += inbox[e.from - 1]->b_hat;
        }
        ledger.record_transfer(e, block_scalars(out));
        sent[e.from - 1] = true;
        if (e.to == tree.root()) {
            aggregates.emplace(e.from, std::move(out));
        } else if (auto& slot = inbox[e.to - 1]; slot) {
            slot->y_hat += out.y_hat;
            slot->b_hat += out.b_hat;
        } else {
            slot = std::move(out);
        }
    }
    return aggregates;
}

/// [y_q; y^_{n1->q}; ...] and likewise for B, bands in `neighbor_order`.
inline LocalData assemble_local(const Mat& y_q, const Mat& b_q, const std::map<NodeId, CompressedBlock>& aggregates,
                                const std::vector<NodeId>& neighbor_order, double weight) {
    Index rows = y_q.rows();
    Index q_out = 0;
    for (NodeId n : neighbor_order) {
        const auto it = aggregates.find(n);
        if (it == aggregates.end()) fail(Errc::dimension_mismatch, "missing aggregate from neighbor " + std::to_string(n));
        q_out = it->second.y_hat.rows();
        rows += q_out;
    }
    LocalData local;
    local.weight = weight;
    local.neighbor_order = neighbor_order;
    local.own_rows = y_q.rows();
    local.y_tilde.resize(rows, y_q.cols());
    local.b_tilde.resize(rows, b_q.cols());
    local.y_tilde.topRows(y_q.rows()) = y_q;
    local.b_tilde.topRows(b_q.rows()) = b_q;
    Index row = y_q.rows();
    for (NodeId n : neighbor_order) {
        const auto& agg = aggregates.at(n);
        if (agg.y_hat.cols() != y_q.cols() || agg.b_hat.cols() != b_q.cols()) {
            fail(Errc::dimension_mismatch, "aggregate from " + std::to_string(n) + " has the wrong width");
        }
        local.y_tilde.middleRows(row, q_out) = agg.y_hat;
        local.b_tilde.middleRows(row, q_out) = agg.b_hat;
        row += q_out;
    }
    return local;
}

/// [X_qq; I_Q; ...; I_Q]: the current filter of q in local coordinates.
inline Mat build_tie_break_ref(const Mat& compressor, std::size_t num_neighbors) {
    const Index q = compressor.cols();
    Mat ref(compressor.rows() + static_cast<Index>(num_neighbors) * q, q);
    ref.topRows(compressor.rows()) = compressor;
    for (std::size_t j = 0; j < num_neighbors; ++j)
        ref.middleRows(compressor.rows() + static_cast<Index>(j) * q, q).setIdentity();
    return ref;
}

/// Solves node q's own problem on the gathered data. `regularize` adds the
/// sampled-mode ridge to the local covariance.
inline LocalSolution solve_local(const LocalData& local, const Problem& problem, const NodeParams& params,
                                 const Mat& tie_break_ref, bool regularize) {
    ProblemData data{weighted_gram(local.y_tilde, local.weight, regularize), local.b_tilde, params};
    LocalSolution sol;
    sol.x_tilde = problem.solve(data, tie_break_ref);
    if (sol.x_tilde.rows() != local.m_tilde()) fail(Errc::solver_failure, "local solution has the wrong height");
    sol.own_rows = local.own_rows;
    sol.neighbor_order = local.neighbor_order;
    sol.feasibility = problem.constraint_residuals(sol.x_tilde, data).max_violation();
    return sol;
}

/**
 * @brief Computes z_q and Z_q and pushes them, with each branch's G factor,
 *        root-to-leaf over the tree.
 */
inline Dissemination disseminate(const LocalSolution& solution, const LocalData& local, const TreeTopology& tree,
                                 LinkCostLedger& ledger) {
    Dissemination out;
    out.z = solution.x_tilde.transpose() * local.y_tilde;
    out.z_b = solution.x_tilde.transpose() * local.b_tilde;
    out.branch_factor.assign(static_cast<std::size_t>(tree.num_nodes()), Mat());
    const auto q = static_cast<std::uint64_t>(solution.num_outputs());
    const auto per_link = static_cast<std::uint64_t>(out.z.size() + out.z_b.size()) + q * q;
    for (const DirectedEdge& e : scatter_schedule(tree)) {
        ledger.record_transfer(e, per_link);
        out.branch_factor[e.to - 1] = solution.g_block(tree.branch_of(e.to));
    }
    return out;
}

/// F_kq: node k's own problem on the received stream (z_q, Z_q). Ties are
/// broken toward the previous correction, or the identity on first use.
inline Mat solve_node_specific(const Problem& problem, const NodeParams& params, const Mat& z, const Mat& z_b,
                               double weight, const std::optional<Mat>& latest_f, bool regularize) {
    ProblemData data{weighted_gram(z, weight, regularize), z_b, params};
    const Mat ref = latest_f.value_or(Mat::Identity(z.rows(), z.rows()));
    return problem.solve(data, ref);
}

/// T = L^{-T} with L L^T = weight z z^T, so that T^T z has identity covariance.
inline std::optional<Mat> output_whitener(const Mat& z, double weight) {
    const Mat r = weighted_gram(z, weight, false);
    Eigen::LLT<Mat> llt(r);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Mat t = Mat::Identity(r.rows(), r.cols());
    llt.matrixU().solveInPlace(t);  // U = L^T, so t = L^{-T}
    if (!t.allFinite()) return std::nullopt;
    return t;
}

/// The updating node's new filter X_q^{i+1}: its own block from the solution,
/// block k = X_kk^i G_qn for k in B_nq. Uses the pre-update compressors.
inline Mat updated_root_filter(std::span<const NodeState> nodes, const LocalSolution& solution,
                               const TreeTopology& tree, const ChannelLayout& layout) {
    Mat x(layout.total(), solution.num_outputs());
    for (NodeId k = 1; k <= tree.num_nodes(); ++k) {
        auto rows = x.middleRows(layout.offset(k), layout.channels(k));
        if (k == tree.root()) {
            rows = solution.own_block();
        } else {
            rows = nodes[k - 1].compressor * solution.g_block(tree.branch_of(k));
        }
    }
    return x;
}

/**
 * @brief Installs the iteration's results in the node states.
 *
 * `corrections[k-1]` is F_kq (unused for q). Compressors become
 * X_qq^{i+1} T at q and X_kk^i G_qn T elsewhere; the observer-side filters
 * become X_q^{i+1} F_kq (X_q^{i+1} at q).
 */
inline void apply_updates(std::span<NodeState> nodes, NodeId q, const LocalSolution& solution,
                          const Dissemination& dissemination, std::span<const Mat> corrections,
                          const std::optional<Mat>& whitener, const TreeTopology& tree, const ChannelLayout& layout) {
    const Mat root_filter = updated_root_filter(nodes, solution, tree, layout);
    for (NodeState& node : nodes) {
        const NodeId k = node.id;
        Mat next = k == q ? solution.own_block() : Mat(node.compressor * dissemination.branch_factor[k - 1]);
        if (whitener) next = next * *whitener;
        node.compressor = std::move(next);
        if (k == q) {
            node.filter = root_filter;
            node.latest_output = dissemination.z;
        } else {
            const Mat& f = corrections[k - 1];
            node.filter = root_filter * f;
            node.latest_f = f;
            node.latest_output = f.transpose() * dissemination.z;
        }
    }
}

/// z_k^{i+1}: z_q at q, F_kq^T z_q elsewhere.
inline Mat filter_output(NodeId k, NodeId q, const Dissemination& dissemination, const Mat& correction) {
    return k == q ? dissemination.z : Mat(correction.transpose() * dissemination.z);
}

/**
 * @brief The M x M~_q matrix C with y~ = C^T y: identity on q's rows, and in
 *        band j the compressors of the nodes in branch j.
 */
inline Mat lift_map(const TreeTopology& tree, std::span<const NodeState> nodes, const ChannelLayout& layout) {
    const NodeId q = tree.root();
    const Index outputs = nodes[0].compressor.cols();
    const auto& order = tree.root_neighbors();
    Mat c = Mat::Zero(layout.total(), layout.channels(q) + static_cast<Index>(order.size()) * outputs);
    c.block(layout.offset(q), 0, layout.channels(q), layout.channels(q)).setIdentity();
    for (NodeId k = 1; k <= tree.num_nodes(); ++k) {
        if (k == q) continue;
        const auto band = std::find(order.begin(), order.end(), tree.branch_of(k)) - order.begin();
        c.block(layout.offset(k), layout.channels(q) + band * outputs, layout.channels(k), outputs) =
            nodes[k - 1].compressor;
    }
    return c;
}

struct NodeRecord {
    double cost = 0.0;
    double feasibility = 0.0;
    double mse = 0.0;
    std::uint64_t scalars_up = 0;
    std::uint64_t scalars_down = 0;
};

/// Debug-mode identity checks; each entry is a scaled Frobenius residual.
struct DebugResiduals {
    double lift_y = 0.0;       // y~ vs C^T y
    double lift_b = 0.0;       // B~ vs C^T B
    double lift_filter = 0.0;  // blockwise X_q^{i+1} vs C X~
    double output = 0.0;       // z_k vs X_k^T y, worst node
    double compressor = 0.0;   // X_kk vs block k of X_q^{i+1} T, worst node
    double local_feasibility = 0.0;
    double correction_feasibility = 0.0;

    double max_lift() const { return std::max({lift_y, lift_b, lift_filter, output, compressor}); }
};

struct IterationRecord {
    std::uint64_t iteration = 0;  // completed iterations; 0 is the initial state
    NodeId updating_node = 0;     // 0 for the initial state
    std::vector<NodeRecord> nodes;
    std::optional<DebugResiduals> debug;
    std::uint64_t block_samples = 0;  // columns in this iteration's block

    double max_mse() const {
        double m = 0.0;
        for (const auto& n : nodes) m = std::max(m, n.mse);
        return m;
    }
};

struct EngineOptions {
    std::uint64_t max_iterations = 300;
    bool debug = false;
    /// Stop once max_k MSE stays below this for 2K consecutive iterations.
    std::optional<double> early_stop_threshold;
    bool whiten_compressors = true;
    std::uint64_t init_seed = 0;
};

class Engine {
public:
    Engine(NetworkGraph graph, CoupledFamily family, SignalSource source, EngineOptions options)
        : graph_(std::move(graph)),
          family_(std::move(family)),
          source_(std::move(source)),
          options_(options),
          oracle_(family_.solutions()) {
        if (graph_.num_nodes() != family_.num_nodes()) fail(Errc::invalid_config, "graph and family differ in K");
        if (!graph_.is_connected()) fail(Errc::invalid_graph, "graph is disconnected");
        initialize();
        initial_ = evaluate(0, 0, {}, {}, std::nullopt);
    }

    const IterationRecord& initial_record() const { return initial_; }
    std::uint64_t iterations_done() const { return done_; }
    const std::vector<NodeState>& nodes() const { return nodes_; }
    const LinkCostLedger& ledger() const { return ledger_; }
    const std::vector<Mat>& oracle() const { return oracle_; }
    const CoupledFamily& family() const { return family_; }
    const NetworkGraph& graph() const { return graph_; }

    IterationRecord step() {
        const std::uint64_t i = done_;
        const NodeId q = select_updating_node(i, K());
        try {
            return iterate(q);
        } catch (const Error& e) {
            fail(Errc::solver_failure, "iteration " + std::to_string(i) + " (updating node " + std::to_string(q) +
                                           "): " + e.message());
        }
    }

    /// Iterates up to max_iterations (or early stop) and returns the records.
    std::vector<IterationRecord> run() {
        std::vector<IterationRecord> records;
        int below = 0;
        while (done_ < options_.max_iterations) {
            records.push_back(step());
            if (options_.early_stop_threshold) {
                below = records.back().max_mse() < *options_.early_stop_threshold ? below + 1 : 0;
                if (below >= 2 * K()) break;
            }
        }
        return records;
    }

private:
    int K() const { return graph_.num_nodes(); }
    const ChannelLayout& layout() const { return family_.layout; }

    void initialize() {
        const Index outputs = family_.num_outputs;
        for (NodeId k = 1; k <= K(); ++k) {
            Rng rng(derive_seed(options_.init_seed, static_cast<std::uint64_t>(k)));
            NodeState node;
            node.id = k;
            const Index mk = layout().channels(k);
            for (;;) {
                node.compressor = rng.gaussian(mk, outputs);
                Eigen::ColPivHouseholderQR<Mat> qr(node.compressor);
                if (qr.rank() == std::min(mk, outputs)) break;
            }
            node.filter = rng.gaussian(layout().total(), outputs);
            node.filter.middleRows(layout().offset(k), mk) = node.compressor;
            nodes_.push_back(std::move(node));
        }
    }

    IterationRecord iterate(NodeId q) {
        const Problem& problem = family_.problem();
        const bool sampled = source_.mode() == StatsMode::sampled;
        const TreeTopology tree = prune_to_tree(graph_, q);
        const GatherSchedule schedule = gather_schedule(tree);
        const SignalBlock block = source_.next();

        std::vector<CompressedBlock> compressed(static_cast<std::size_t>(K()));
        for (NodeId k = 1; k <= K(); ++k) {
            if (k == q) continue;
            compressed[k - 1] = compress(nodes_[k - 1].compressor, node_rows(block.y, k, layout()),
                                         node_rows(block.b, k, layout()));
        }
        LinkCostLedger up, down;
        up.set_tree(tree);
        down.set_tree(tree);
        const auto aggregates = fuse_forward(tree, schedule, compressed, up);
        const LocalData local = assemble_local(node_rows(block.y, q, layout()), node_rows(block.b, q, layout()),
                                               aggregates, tree.root_neighbors(), block.weight);
        const Mat ref = build_tie_break_ref(nodes_[q - 1].compressor, tree.root_neighbors().size());
        const LocalSolution solution = solve_local(local, problem, family_.params[q - 1], ref, sampled);
        const Dissemination diss = disseminate(solution, local, tree, down);

        std::vector<Mat> corrections(static_cast<std::size_t>(K()));
        double correction_feasibility = 0.0;
        for (NodeId k = 1; k <= K(); ++k) {
            if (k == q) continue;
            corrections[k - 1] = solve_node_specific(problem, family_.params[k - 1], diss.z, diss.z_b, block.weight,
                                                     nodes_[k - 1].latest_f, sampled);
            const ProblemData small{weighted_gram(diss.z, block.weight, sampled), diss.z_b, family_.params[k - 1]};
            correction_feasibility = std::max(
                correction_feasibility, problem.constraint_residuals(corrections[k - 1], small).max_violation());
        }
        const std::optional<Mat> whitener =
            options_.whiten_compressors ? output_whitener(diss.z, block.weight) : std::nullopt;

        std::optional<DebugResiduals> dbg;
        if (options_.debug) {
            DebugResiduals d;
            const Mat c = lift_map(tree, nodes_, layout());
            d.lift_y = scaled_residual(local.y_tilde, c.transpose() * block.y);
            d.lift_b = scaled_residual(local.b_tilde, c.transpose() * block.b);
            d.lift_filter = scaled_residual(updated_root_filter(nodes_, solution, tree, layout()), c * solution.x_tilde);
            d.local_feasibility = solution.feasibility;
            d.correction_feasibility = correction_feasibility;
            dbg = d;
        }

        apply_updates(nodes_, q, solution, diss, corrections, whitener, tree, layout());

        if (dbg) {
            const Mat common = whitener ? Mat(nodes_[q - 1].filter * *whitener) : nodes_[q - 1].filter;
            for (NodeId k = 1; k <= K(); ++k) {
                const Mat zk = filter_output(k, q, diss, corrections[k - 1]);
                dbg->output = std::max(dbg->output, scaled_residual(zk, nodes_[k - 1].filter.transpose() * block.y));
                dbg->compressor = std::max(
                    dbg->compressor,
                    scaled_residual(nodes_[k - 1].compressor, node_rows(common, k, layout())));
            }
        }
        ledger_.set_tree(tree);
        for (const auto* part : {&up, &down})
            for (const auto& [edge, counters] : part->links()) ledger_.record_transfer(edge, counters.scalars_sent);

        ++done_;
        IterationRecord rec = evaluate(done_, q, up, down, dbg);
        rec.block_samples = static_cast<std::uint64_t>(block.num_samples());
        return rec;
    }

    IterationRecord evaluate(std::uint64_t iteration, NodeId q, const LinkCostLedger& up, const LinkCostLedger& down,
                             std::optional<DebugResiduals> dbg) const {
        const Problem& problem = family_.problem();
        IterationRecord rec;
        rec.iteration = iteration;
        rec.updating_node = q;
        rec.debug = dbg;
        for (NodeId k = 1; k <= K(); ++k) {
            const ProblemData data = family_.node_data(k);
            const Mat& x = nodes_[k - 1].filter;
            NodeRecord n;
            n.cost = problem.objective(x, data);
            n.feasibility = problem.constraint_residuals(x, data).max_violation();
            n.mse = relative_mse(x, oracle_[k - 1]);
            n.scalars_up = up.sent_by(k);
            n.scalars_down = down.sent_by(k);
            rec.nodes.push_back(n);
        }
        return rec;
    }

    NetworkGraph graph_;
    CoupledFamily family_;
    SignalSource source_;
    EngineOptions options_;
    std::vector<Mat> oracle_;
    std::vector<NodeState> nodes_;
    LinkCostLedger ledger_;
    IterationRecord initial_;
    std::uint64_t done_ = 0;
};

/// Raw per-iteration CSV, one row per (iteration, node).
inline void write_records_header(std::ostream& out) {
    out << "run,iter,q,node,cost,feas_residual,mse,scalars_up,scalars_down\n";
}

inline void write_records_csv(std::ostream& out, std::size_t run, std::span<const IterationRecord> records) {
    for (const auto& rec : records) {
        for (std::size_t k = 0; k < rec.nodes.size(); ++k) {
            const auto& n = rec.nodes[k];
            out << run << ',' << rec.iteration << ',' << rec.updating_node << ',' << (k + 1) << ','
                << format_real(n.cost) << ',' << format_real(n.feasibility) << ',' << format_real(n.mse) << ','
                << n.scalars_up << ',' << n.scalars_down << '\n';
        }
    }
}

}  // namespace dansf
