/**
 * @file core.hpp
 * @brief Shared matrix aliases, node ids, the error type and small linear
 *        algebra helpers used across the library.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace dansf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Nodes are numbered 1..K.
using NodeId = int;

enum class Errc {
    invalid_config,
    generation_failure,
    invalid_graph,
    accounting_error,
    out_of_range,
    dimension_mismatch,
    singular_covariance,
    degenerate_problem,
    rank_deficient_constraint,
    undefined_metric,
    solver_failure,
    parse_error,
    io_error,
};

inline std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::invalid_config: return "invalid-config";
        case Errc::generation_failure: return "generation-failure";
        case Errc::invalid_graph: return "invalid-graph";
        case Errc::accounting_error: return "accounting-error";
        case Errc::out_of_range: return "out-of-range";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::singular_covariance: return "singular-covariance";
        case Errc::degenerate_problem: return "degenerate-problem";
        case Errc::rank_deficient_constraint: return "rank-deficient-constraint";
        case Errc::undefined_metric: return "undefined-metric";
        case Errc::solver_failure: return "solver-failure";
        case Errc::parse_error: return "parse-error";
        case Errc::io_error: return "io-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

    Errc code() const noexcept { return code_; }
    /// what() without the error-code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    Errc code_;
    std::string message_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require_shape(const Mat& m, Index rows, Index cols, std::string_view what) {
    if (m.rows() != rows || m.cols() != cols) {
        fail(Errc::dimension_mismatch,
             std::string(what) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                 ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

/// Cholesky factorization of a symmetric positive definite matrix; throws
/// singular-covariance when the factorization breaks down.
inline Eigen::LLT<Mat> spd_factor(const Mat& r) {
    if (r.rows() != r.cols()) fail(Errc::dimension_mismatch, "covariance must be square");
    Eigen::LLT<Mat> llt(r);
    if (llt.info() != Eigen::Success) fail(Errc::singular_covariance, "covariance is not positive definite");
    // LLT on a numerically semidefinite matrix can succeed with a tiny pivot.
    const Vec diag = Mat(llt.matrixL()).diagonal();
    if (diag.minCoeff() <= 1e-14 * diag.maxCoeff()) {
        fail(Errc::singular_covariance, "covariance is numerically singular");
    }
    return llt;
}

/// ||a - b||_F / max(1, ||b||_F): residual scaled to the magnitude of the reference.
inline double scaled_residual(const Mat& a, const Mat& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// 2-norm condition number through the singular values.
inline double condition_number(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    const Vec& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smallest = s(s.size() - 1);
    return smallest == 0.0 ? std::numeric_limits<double>::infinity() : s(0) / smallest;
}

}  // namespace dansf
