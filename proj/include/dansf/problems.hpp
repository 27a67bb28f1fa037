/**
 * @file problems.hpp
 * @brief Node-specific spatial filtering problems.
 *
 * Every problem is a function of the filter X only through X^T y and X^T B,
 * so it is fully described by the covariance of the signal it filters and by
 * the matrix B, at whatever dimension those happen to have. The same solver
 * therefore serves the full M-channel problem, the compressed local problem
 * at the updating node and the Q x Q correction problem at the other nodes.
 *
 * The shipped problems and their data:
 *   - trace_qclp: minimize trace(X^T B D_k) s.t. trace(X^T R X) <= 1
 *   - mmse:       minimize E||D_k^T d - X^T y||^2, with B = E[y d^T]
 *   - lcmv:       minimize trace(X^T R X) s.t. X^T B = H_k
 */

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dansf/core.hpp"
#include "dansf/random.hpp"
#include "dansf/signals.hpp"

namespace dansf {

enum class ProblemKind { trace_qclp, mmse, lcmv };

inline std::string to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::trace_qclp: return "trace_qclp";
        case ProblemKind::mmse: return "mmse";
        case ProblemKind::lcmv: return "lcmv";
    }
    return "unknown";
}

inline ProblemKind parse_problem_kind(const std::string& name) {
    if (name == "trace_qclp") return ProblemKind::trace_qclp;
    if (name == "mmse") return ProblemKind::mmse;
    if (name == "lcmv") return ProblemKind::lcmv;
    fail(Errc::invalid_config, "unknown problem kind '" + name + "'");
}

/// Parameters that live at one node and never travel.
struct NodeParams {
    Mat mixing;        // D_k (L x Q): trace_qclp, mmse
    Mat target;        // H_k (Q x L): lcmv
    Mat target_power;  // E[d_k d_k^T] (Q x Q): mmse
};

/// Data of one problem instance at dimension M' (M, M~_q or Q).
struct ProblemData {
    Mat covariance;  // M' x M'
    Mat b;           // M' x L
    NodeParams params;

    Index dim() const { return covariance.rows(); }
};

struct Residuals {
    std::vector<double> inequality;  // feasible when <= 0
    std::vector<double> equality;    // feasible when == 0

    /// Largest constraint violation, 0 for a feasible point.
    double max_violation() const {
        double worst = 0.0;
        for (double v : inequality) worst = std::max(worst, v);
        for (double v : equality) worst = std::max(worst, std::abs(v));
        return worst;
    }
};

inline constexpr double kFeasibilityTolerance = 1e-8;

class Problem {
public:
    virtual ~Problem() = default;

    virtual std::string_view name() const = 0;
    virtual double objective(const Mat& x, const ProblemData& data) const = 0;
    virtual Residuals constraint_residuals(const Mat& x, const ProblemData& data) const = 0;

    /// A solution of the instance. When the solution set is not a singleton and
    /// `tie_break_ref` is given, the solution closest to it in Frobenius norm.
    virtual Mat solve(const ProblemData& data, const std::optional<Mat>& tie_break_ref = std::nullopt) const = 0;

    virtual bool is_solution_unique(const ProblemData&) const { return true; }
};

namespace detail {

inline void check_square_covariance(const ProblemData& d) {
    if (d.covariance.rows() != d.covariance.cols()) fail(Errc::dimension_mismatch, "covariance must be square");
    if (d.b.rows() != d.dim()) fail(Errc::dimension_mismatch, "B rows do not match the covariance");
}

inline Mat node_b(const ProblemData& d) {
    check_square_covariance(d);
    if (d.params.mixing.rows() != d.b.cols()) fail(Errc::dimension_mismatch, "mixing rows must equal B columns");
    return d.b * d.params.mixing;
}

}  // namespace detail

/// X* = -beta R^{-1} B_k with beta = trace(B_k^T R^{-1} B_k)^{-1/2}.
inline Mat trace_qclp_solve(const ProblemData& data) {
    const Mat bk = detail::node_b(data);
    if (bk.norm() == 0.0) fail(Errc::degenerate_problem, "trace-QCLP needs B_k != 0");
    const auto llt = spd_factor(data.covariance);
    const Mat rb = llt.solve(bk);
    const double energy = (bk.transpose() * rb).trace();
    if (!(energy > 0.0)) fail(Errc::singular_covariance, "trace(B^T R^-1 B) is not positive");
    return -rb / std::sqrt(energy);
}

/// X* = R^{-1} E[y d_k^T].
inline Mat mmse_solve(const ProblemData& data) {
    const Mat cross = detail::node_b(data);
    return spd_factor(data.covariance).solve(cross);
}

/// X* = R^{-1} B (B^T R^{-1} B)^{-1} H_k^T.
inline Mat lcmv_solve(const ProblemData& data) {
    detail::check_square_covariance(data);
    const Mat& b = data.b;
    const Mat& h = data.params.target;
    if (h.cols() != b.cols()) fail(Errc::dimension_mismatch, "H_k must have as many columns as B");
    Eigen::ColPivHouseholderQR<Mat> qr(b);
    qr.setThreshold(1e-12);
    if (b.cols() > b.rows() || qr.rank() < b.cols()) {
        fail(Errc::rank_deficient_constraint, "B must have full column rank");
    }
    const auto llt = spd_factor(data.covariance);
    const Mat rb = llt.solve(b);
    const Mat gram = symmetrized(b.transpose() * rb);
    Eigen::LLT<Mat> gram_llt(gram);
    if (gram_llt.info() != Eigen::Success) fail(Errc::rank_deficient_constraint, "B^T R^-1 B is singular");
    return rb * gram_llt.solve(h.transpose());
}

class TraceQclp final : public Problem {
public:
    std::string_view name() const override { return "trace_qclp"; }

    double objective(const Mat& x, const ProblemData& data) const override {
        return (x.transpose() * detail::node_b(data)).trace();
    }

    Residuals constraint_residuals(const Mat& x, const ProblemData& data) const override {
        return {{(x.transpose() * data.covariance * x).trace() - 1.0}, {}};
    }

    Mat solve(const ProblemData& data, const std::optional<Mat>&) const override { return trace_qclp_solve(data); }
};

class Mmse final : public Problem {
public:
    std::string_view name() const override { return "mmse"; }

    double objective(const Mat& x, const ProblemData& data) const override {
        const Mat cross = detail::node_b(data);
        const double power = data.params.target_power.size() ? data.params.target_power.trace() : 0.0;
        return power - 2.0 * (x.transpose() * cross).trace() + (x.transpose() * data.covariance * x).trace();
    }

    Residuals constraint_residuals(const Mat&, const ProblemData&) const override { return {}; }

    Mat solve(const ProblemData& data, const std::optional<Mat>&) const override { return mmse_solve(data); }
};

class Lcmv final : public Problem {
public:
    std::string_view name() const override { return "lcmv"; }

    double objective(const Mat& x, const ProblemData& data) const override {
        return (x.transpose() * data.covariance * x).trace();
    }

    Residuals constraint_residuals(const Mat& x, const ProblemData& data) const override {
        const Mat gap = x.transpose() * data.b - data.params.target;
        return {{}, std::vector<double>(gap.data(), gap.data() + gap.size())};
    }

    Mat solve(const ProblemData& data, const std::optional<Mat>&) const override { return lcmv_solve(data); }
};

inline const Problem& problem_for(ProblemKind kind) {
    static const TraceQclp trace_qclp;
    static const Mmse mmse;
    static const Lcmv lcmv;
    switch (kind) {
        case ProblemKind::trace_qclp: return trace_qclp;
        case ProblemKind::mmse: return mmse;
        case ProblemKind::lcmv: return lcmv;
    }
    fail(Errc::invalid_config, "unknown problem kind");
}

/**
 * @brief K node-specific problems whose optimal filters are related by
 *        invertible Q x Q matrices, X_k* = X_l* D_{k,l}.
 *
 * `mixing[k-1]` is the D_k the family was generated from; `params[k-1]` is
 * what actually defines node k's problem. They agree for generated families.
 */
struct CoupledFamily {
    ProblemKind kind = ProblemKind::trace_qclp;
    ChannelLayout layout;
    Index num_outputs = 0;  // Q
    Mat covariance;         // exact R_yy
    Mat b;                  // shared B (trace_qclp, lcmv) or E[y d^T] (mmse)
    std::vector<Mat> mixing;
    std::vector<NodeParams> params;

    int num_nodes() const { return static_cast<int>(params.size()); }

    ProblemData node_data(NodeId k) const { return {covariance, b, params.at(static_cast<std::size_t>(k - 1))}; }

    const Problem& problem() const { return problem_for(kind); }

    /// Centralized oracle X_k*.
    Mat solution(NodeId k) const { return problem().solve(node_data(k)); }

    std::vector<Mat> solutions() const {
        std::vector<Mat> out;
        for (NodeId k = 1; k <= num_nodes(); ++k) out.push_back(solution(k));
        return out;
    }

    /// D_{k,l} with X_k* = X_l* D_{k,l}.
    Mat coupling(NodeId k, NodeId l) const {
        const Mat& dk = mixing.at(static_cast<std::size_t>(k - 1));
        const Mat& dl = mixing.at(static_cast<std::size_t>(l - 1));
        Mat d = dl.partialPivLu().solve(dk);
        if (kind == ProblemKind::trace_qclp) d *= beta(k) / beta(l);
        return d;
    }

private:
    double beta(NodeId k) const {
        const Mat bk = b * mixing.at(static_cast<std::size_t>(k - 1));
        return 1.0 / std::sqrt((bk.transpose() * spd_factor(covariance).solve(bk)).trace());
    }
};

inline constexpr double kMaxMixingCondition = 1e6;

/**
 * @brief Draws a coupled family on top of `model`.
 *
 * All D_k are i.i.d. standard normal Q x Q (redrawn when their condition
 * number exceeds kMaxMixingCondition). trace_qclp and lcmv draw a shared
 * standard normal B (L = Q); lcmv also draws a shared H and sets
 * H_k = D_k^T H. mmse uses the latent sources as the shared target, so
 * d_k = D_k^T d and E[y d_k^T] = var_d A D_k.
 */
inline CoupledFamily make_coupled_family(ProblemKind kind, Index num_outputs, const ChannelLayout& layout,
                                         const MixtureModel& model, std::uint64_t seed) {
    if (num_outputs < 1) fail(Errc::invalid_config, "Q must be positive");
    if (model.num_channels() != layout.total()) fail(Errc::dimension_mismatch, "model rows do not match layout");
    if (kind == ProblemKind::mmse && model.num_sources() != num_outputs) {
        fail(Errc::dimension_mismatch, "mmse needs as many latent sources as outputs");
    }
    Rng rng(seed);
    CoupledFamily family;
    family.kind = kind;
    family.layout = layout;
    family.num_outputs = num_outputs;
    family.covariance = exact_covariance(model).matrix;
    const Index q = num_outputs;
    Mat h;
    switch (kind) {
        case ProblemKind::trace_qclp: family.b = rng.gaussian(layout.total(), q); break;
        case ProblemKind::mmse: family.b = exact_source_cross_covariance(model); break;
        case ProblemKind::lcmv:
            family.b = rng.gaussian(layout.total(), q);
            h = rng.gaussian(q, q);
            break;
    }
    for (NodeId k = 1; k <= layout.num_nodes(); ++k) {
        Mat d = rng.gaussian(q, q);
        while (condition_number(d) > kMaxMixingCondition) d = rng.gaussian(q, q);
        NodeParams p;
        switch (kind) {
            case ProblemKind::trace_qclp: p.mixing = d; break;
            case ProblemKind::mmse:
                p.mixing = d;
                p.target_power = model.var_d * d.transpose() * d;
                break;
            case ProblemKind::lcmv: p.target = d.transpose() * h; break;
        }
        family.mixing.push_back(std::move(d));
        family.params.push_back(std::move(p));
    }
    return family;
}

struct Assumption1Report {
    double max_deviation = 0.0;
    NodeId worst_k = 0;
    NodeId worst_l = 0;
    bool passed = true;
};

/// max over (k,l) of ||X_k* - X_l* D_{k,l}||_F / ||X_k*||_F.
inline Assumption1Report verify_assumption1(const CoupledFamily& family, double tol) {
    Assumption1Report report;
    const auto solutions = family.solutions();
    for (NodeId k = 1; k <= family.num_nodes(); ++k) {
        const Mat& xk = solutions[k - 1];
        for (NodeId l = 1; l <= family.num_nodes(); ++l) {
            const double dev = (xk - solutions[l - 1] * family.coupling(k, l)).norm() / xk.norm();
            if (dev > report.max_deviation || report.worst_k == 0) {
                report.max_deviation = dev;
                report.worst_k = k;
                report.worst_l = l;
            }
        }
    }
    report.passed = report.max_deviation <= tol;
    return report;
}

// JSON: matrices as row-major nested arrays.

inline nlohmann::json matrix_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) fail(Errc::parse_error, "matrix must be an array of rows");
    if (j.empty()) return Mat();
    const auto cols = static_cast<Index>(j.front().size());
    Mat m(static_cast<Index>(j.size()), cols);
    for (Index i = 0; i < m.rows(); ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) fail(Errc::parse_error, "ragged matrix");
        for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline nlohmann::json family_to_json(const CoupledFamily& f) {
    nlohmann::json j;
    j["kind"] = to_string(f.kind);
    j["num_outputs"] = f.num_outputs;
    j["layout"] = f.layout.per_node();
    j["covariance"] = matrix_to_json(f.covariance);
    j["b"] = matrix_to_json(f.b);
    j["mixing"] = nlohmann::json::array();
    j["params"] = nlohmann::json::array();
    for (std::size_t k = 0; k < f.params.size(); ++k) {
        j["mixing"].push_back(matrix_to_json(f.mixing[k]));
        j["params"].push_back({{"mixing", matrix_to_json(f.params[k].mixing)},
                               {"target", matrix_to_json(f.params[k].target)},
                               {"target_power", matrix_to_json(f.params[k].target_power)}});
    }
    return j;
}

inline CoupledFamily family_from_json(const nlohmann::json& j) {
    try {
        CoupledFamily f;
        f.kind = parse_problem_kind(j.at("kind").get<std::string>());
        f.num_outputs = j.at("num_outputs").get<Index>();
        f.layout = ChannelLayout(j.at("layout").get<std::vector<Index>>());
        f.covariance = matrix_from_json(j.at("covariance"));
        f.b = matrix_from_json(j.at("b"));
        for (const auto& m : j.at("mixing")) f.mixing.push_back(matrix_from_json(m));
        for (const auto& p : j.at("params")) {
            f.params.push_back({matrix_from_json(p.at("mixing")), matrix_from_json(p.at("target")),
                                matrix_from_json(p.at("target_power"))});
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::parse_error, e.what());
    }
}

}  // namespace dansf
