/**
 * @file network.hpp
 * @brief Network graphs, per-iteration tree pruning, gather schedules and
 *        per-link communication accounting.
 *
 * Node ids are 1-based. Graphs are undirected; an edge is stored once with
 * its endpoints in ascending order.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dansf/core.hpp"
#include "dansf/random.hpp"

namespace dansf {

struct Edge {
    NodeId a = 0;
    NodeId b = 0;

    static Edge between(NodeId u, NodeId v) { return u < v ? Edge{u, v} : Edge{v, u}; }
    auto operator<=>(const Edge&) const = default;
};

struct DirectedEdge {
    NodeId from = 0;
    NodeId to = 0;

    auto operator<=>(const DirectedEdge&) const = default;
};

class NetworkGraph {
public:
    NetworkGraph() = default;

    NetworkGraph(int num_nodes, const std::vector<Edge>& edges) : num_nodes_(num_nodes), adjacency_(num_nodes) {
        if (num_nodes < 1) fail(Errc::invalid_config, "a network needs at least one node");
        std::set<Edge> unique;
        for (const Edge& e : edges) {
            check_node(e.a);
            check_node(e.b);
            if (e.a == e.b) fail(Errc::invalid_graph, "self-loop on node " + std::to_string(e.a));
            unique.insert(Edge::between(e.a, e.b));
        }
        edges_.assign(unique.begin(), unique.end());
        for (const Edge& e : edges_) {
            adjacency_[e.a - 1].push_back(e.b);
            adjacency_[e.b - 1].push_back(e.a);
        }
        for (auto& list : adjacency_) std::sort(list.begin(), list.end());
    }

    int num_nodes() const { return num_nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Sorted neighbor list.
    const std::vector<NodeId>& neighbors(NodeId k) const {
        check_node(k);
        return adjacency_[k - 1];
    }

    bool has_edge(NodeId u, NodeId v) const {
        return std::binary_search(edges_.begin(), edges_.end(), Edge::between(u, v));
    }

    /// Hop distances from `source`; -1 marks unreachable nodes.
    std::vector<int> distances_from(NodeId source) const {
        check_node(source);
        std::vector<int> dist(num_nodes_, -1);
        std::queue<NodeId> frontier;
        dist[source - 1] = 0;
        frontier.push(source);
        while (!frontier.empty()) {
            const NodeId u = frontier.front();
            frontier.pop();
            for (NodeId v : adjacency_[u - 1]) {
                if (dist[v - 1] < 0) {
                    dist[v - 1] = dist[u - 1] + 1;
                    frontier.push(v);
                }
            }
        }
        return dist;
    }

    bool is_connected() const {
        if (num_nodes_ == 0) return false;
        const auto dist = distances_from(1);
        return std::none_of(dist.begin(), dist.end(), [](int d) { return d < 0; });
    }

    void check_node(NodeId k) const {
        if (k < 1 || k > num_nodes_) {
            fail(Errc::out_of_range, "node " + std::to_string(k) + " outside 1.." + std::to_string(num_nodes_));
        }
    }

    bool operator==(const NetworkGraph& other) const {
        return num_nodes_ == other.num_nodes_ && edges_ == other.edges_;
    }

private:
    int num_nodes_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::vector<NodeId>> adjacency_;
};

enum class TopologyKind { fully_connected, line, erdos_renyi };

inline std::string to_string(TopologyKind kind) {
    switch (kind) {
        case TopologyKind::fully_connected: return "fully_connected";
        case TopologyKind::line: return "line";
        case TopologyKind::erdos_renyi: return "erdos_renyi";
    }
    return "unknown";
}

inline TopologyKind parse_topology_kind(const std::string& name) {
    if (name == "fully_connected" || name == "fc") return TopologyKind::fully_connected;
    if (name == "line") return TopologyKind::line;
    if (name == "erdos_renyi" || name == "er" || name == "rand") return TopologyKind::erdos_renyi;
    fail(Errc::invalid_config, "unknown topology '" + name + "'");
}

/// Default Erdos-Renyi edge probability, 2 ln(K) / K capped at 1.
inline double default_edge_probability(int num_nodes) {
    return std::min(1.0, 2.0 * std::log(static_cast<double>(num_nodes)) / num_nodes);
}

inline constexpr int kErdosRenyiAttempts = 1000;

/**
 * @brief Builds a connected graph of the requested kind.
 *
 * Erdos-Renyi graphs are redrawn from consecutive sub-streams of `seed` until
 * a connected sample appears, up to kErdosRenyiAttempts draws.
 */
inline NetworkGraph generate_topology(TopologyKind kind, int num_nodes, std::uint64_t seed,
                                      std::optional<double> edge_probability = std::nullopt) {
    if (num_nodes < 2) fail(Errc::invalid_config, "topology generation needs K >= 2");
    std::vector<Edge> edges;
    switch (kind) {
        case TopologyKind::fully_connected:
            for (NodeId k = 1; k <= num_nodes; ++k)
                for (NodeId l = k + 1; l <= num_nodes; ++l) edges.push_back({k, l});
            return NetworkGraph(num_nodes, edges);
        case TopologyKind::line:
            for (NodeId k = 1; k < num_nodes; ++k) edges.push_back({k, k + 1});
            return NetworkGraph(num_nodes, edges);
        case TopologyKind::erdos_renyi: {
            const double p = edge_probability.value_or(default_edge_probability(num_nodes));
            if (!(p > 0.0 && p <= 1.0)) fail(Errc::invalid_config, "edge probability must lie in (0, 1]");
            for (int attempt = 0; attempt < kErdosRenyiAttempts; ++attempt) {
                Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
                edges.clear();
                for (NodeId k = 1; k <= num_nodes; ++k)
                    for (NodeId l = k + 1; l <= num_nodes; ++l)
                        if (rng.bernoulli(p)) edges.push_back({k, l});
                NetworkGraph graph(num_nodes, edges);
                if (graph.is_connected()) return graph;
            }
            fail(Errc::generation_failure, "no connected Erdos-Renyi sample after " +
                                               std::to_string(kErdosRenyiAttempts) + " attempts");
        }
    }
    fail(Errc::invalid_config, "unknown topology kind");
}

/**
 * @brief Spanning tree rooted at the updating node.
 *
 * Besides the tree edges this keeps, per node, the tree parent (toward the
 * root), the sorted children and the root neighbor whose branch contains it.
 */
class TreeTopology {
public:
    TreeTopology() = default;

    NodeId root() const { return root_; }
    int num_nodes() const { return static_cast<int>(parent_.size()); }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Tree neighbors of k, sorted.
    std::vector<NodeId> neighbors(NodeId k) const {
        check(k);
        std::vector<NodeId> out = children_[k - 1];
        if (parent_[k - 1] != 0) out.push_back(parent_[k - 1]);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// 0 for the root.
    NodeId parent(NodeId k) const {
        check(k);
        return parent_[k - 1];
    }

    const std::vector<NodeId>& children(NodeId k) const {
        check(k);
        return children_[k - 1];
    }

    /// Root neighbors n_1 < n_2 < ...; this is the band order of the local data.
    const std::vector<NodeId>& root_neighbors() const { return children_[root_ - 1]; }

    /// Root neighbor n with k in B_nq; 0 for the root itself.
    NodeId branch_of(NodeId k) const {
        check(k);
        return branch_[k - 1];
    }

    std::vector<NodeId> branch_members(NodeId n) const {
        std::vector<NodeId> out;
        for (NodeId k = 1; k <= num_nodes(); ++k)
            if (branch_[k - 1] == n && k != root_) out.push_back(k);
        return out;
    }

    bool has_edge(NodeId u, NodeId v) const {
        return std::binary_search(edges_.begin(), edges_.end(), Edge::between(u, v));
    }

    friend TreeTopology prune_to_tree(const NetworkGraph& graph, NodeId root);

private:
    void check(NodeId k) const {
        if (k < 1 || k > num_nodes()) fail(Errc::out_of_range, "node " + std::to_string(k) + " not in tree");
    }

    NodeId root_ = 0;
    std::vector<Edge> edges_;
    std::vector<NodeId> parent_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<NodeId> branch_;
};

/**
 * @brief Breadth-first shortest-path tree rooted at `root`.
 *
 * Each non-root node attaches to its lowest-index neighbor one hop closer to
 * the root. Every graph edge incident to the root survives, since all root
 * neighbors sit at depth one and the root is their only candidate parent.
 */
inline TreeTopology prune_to_tree(const NetworkGraph& graph, NodeId root) {
    graph.check_node(root);
    const int K = graph.num_nodes();
    const auto dist = graph.distances_from(root);
    TreeTopology tree;
    tree.root_ = root;
    tree.parent_.assign(K, 0);
    tree.children_.assign(K, {});
    tree.branch_.assign(K, 0);
    for (NodeId k = 1; k <= K; ++k) {
        if (dist[k - 1] < 0) fail(Errc::invalid_graph, "graph is disconnected (node " + std::to_string(k) + ")");
        if (k == root) continue;
        for (NodeId u : graph.neighbors(k)) {
            if (dist[u - 1] == dist[k - 1] - 1) {
                tree.parent_[k - 1] = u;  // neighbors are sorted, first hit is the lowest index
                break;
            }
        }
        tree.children_[tree.parent_[k - 1] - 1].push_back(k);
        tree.edges_.push_back(Edge::between(k, tree.parent_[k - 1]));
    }
    std::sort(tree.edges_.begin(), tree.edges_.end());
    for (NodeId k = 1; k <= K; ++k) {
        if (k == root) continue;
        NodeId n = k;
        while (tree.parent_[n - 1] != root) n = tree.parent_[n - 1];
        tree.branch_[k - 1] = n;
    }
    return tree;
}

/// Directed (child -> parent) transfers in leaf-to-root order.
using GatherSchedule = std::vector<DirectedEdge>;

/**
 * @brief Post-order walk of the tree, children in ascending id, so that every
 *        node sends only after all of its children have sent.
 */
inline GatherSchedule gather_schedule(const TreeTopology& tree) {
    GatherSchedule schedule;
    schedule.reserve(tree.edges().size());
    // explicit stack: (node, next child position)
    std::vector<std::pair<NodeId, std::size_t>> stack{{tree.root(), 0}};
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& kids = tree.children(node);
        if (next < kids.size()) {
            const NodeId child = kids[next++];
            stack.emplace_back(child, 0);
        } else {
            if (node != tree.root()) schedule.push_back({node, tree.parent(node)});
            stack.pop_back();
        }
    }
    return schedule;
}

/// Root-to-leaf order, the reverse direction of dissemination.
inline std::vector<DirectedEdge> scatter_schedule(const TreeTopology& tree) {
    std::vector<DirectedEdge> out;
    std::vector<NodeId> frontier{tree.root()};
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        for (NodeId c : tree.children(frontier[i])) {
            out.push_back({frontier[i], c});
            frontier.push_back(c);
        }
    }
    return out;
}

struct LinkCounters {
    std::uint64_t scalars_sent = 0;
    std::uint64_t messages_sent = 0;
};

/**
 * @brief Cumulative per-directed-link traffic. Transfers are only accepted on
 *        edges of the tree installed with set_tree().
 */
class LinkCostLedger {
public:
    void set_tree(const TreeTopology& tree) { allowed_ = tree.edges(); }

    void record_transfer(DirectedEdge edge, std::uint64_t scalars) {
        if (!std::binary_search(allowed_.begin(), allowed_.end(), Edge::between(edge.from, edge.to))) {
            fail(Errc::accounting_error, "transfer on unknown edge " + std::to_string(edge.from) + "->" +
                                             std::to_string(edge.to));
        }
        if (scalars == 0) return;
        auto& c = counters_[edge];
        c.scalars_sent += scalars;
        c.messages_sent += 1;
        total_.scalars_sent += scalars;
        total_.messages_sent += 1;
    }

    LinkCounters at(DirectedEdge edge) const {
        const auto it = counters_.find(edge);
        return it == counters_.end() ? LinkCounters{} : it->second;
    }

    /// Scalars sent by node k over all links.
    std::uint64_t sent_by(NodeId k) const {
        std::uint64_t sum = 0;
        for (const auto& [e, c] : counters_)
            if (e.from == k) sum += c.scalars_sent;
        return sum;
    }

    const LinkCounters& total() const { return total_; }
    const std::map<DirectedEdge, LinkCounters>& links() const { return counters_; }

private:
    std::vector<Edge> allowed_;
    std::map<DirectedEdge, LinkCounters> counters_;
    LinkCounters total_;
};

// Edge-list text format: first line K, then one "k l" pair per line.

inline void write_edge_list(std::ostream& out, const NetworkGraph& graph) {
    out << graph.num_nodes() << '\n';
    for (const Edge& e : graph.edges()) out << e.a << ' ' << e.b << '\n';
}

inline NetworkGraph read_edge_list(std::istream& in) {
    std::string line;
    int line_no = 0;
    std::optional<int> count;
    std::vector<Edge> edges;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        if (!count) {
            int k = 0;
            if (!(fields >> k) || k < 1) fail(Errc::parse_error, "line " + std::to_string(line_no) + ": bad node count");
            count = k;
            continue;
        }
        NodeId a = 0, b = 0;
        std::string extra;
        if (!(fields >> a >> b) || (fields >> extra)) {
            fail(Errc::parse_error, "line " + std::to_string(line_no) + ": expected 'k l'");
        }
        edges.push_back({a, b});
    }
    if (!count) fail(Errc::parse_error, "empty edge list");
    return NetworkGraph(*count, edges);
}

}  // namespace dansf
