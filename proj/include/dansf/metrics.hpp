/**
 * @file metrics.hpp
 * @brief Convergence measurements: relative MSE against the centralized
 *        oracle, cost-monotonicity checks, iterations-to-threshold and
 *        Monte-Carlo aggregation.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dansf/core.hpp"

namespace dansf {

/// ||X - X*||_F^2 / ||X*||_F^2. No alignment of solution sets is attempted.
inline double relative_mse(const Mat& x, const Mat& x_star) {
    if (x.rows() != x_star.rows() || x.cols() != x_star.cols()) {
        fail(Errc::dimension_mismatch, "relative_mse operands differ in shape");
    }
    const double ref = x_star.squaredNorm();
    if (ref == 0.0) fail(Errc::undefined_metric, "relative MSE against a zero oracle");
    return (x - x_star).squaredNorm() / ref;
}

/**
 * @brief values[i][k-1]: a per-iteration, per-node quantity (MSE or cost).
 */
struct ConvergenceCurve {
    std::vector<std::vector<double>> values;
    std::string topology;
    std::string mode;
    std::uint64_t seed = 0;

    ConvergenceCurve() = default;

    explicit ConvergenceCurve(std::vector<std::vector<double>> v, std::string topo = {}, std::string m = {},
                              std::uint64_t s = 0)
        : values(std::move(v)), topology(std::move(topo)), mode(std::move(m)), seed(s) {
        for (const auto& row : values) {
            if (row.size() != values.front().size()) fail(Errc::dimension_mismatch, "curve is not rectangular");
        }
    }

    std::size_t num_iterations() const { return values.size(); }
    int num_nodes() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

    std::vector<double> max_over_nodes() const {
        std::vector<double> out;
        out.reserve(values.size());
        for (const auto& row : values) out.push_back(*std::max_element(row.begin(), row.end()));
        return out;
    }

    std::vector<double> mean_over_nodes() const {
        std::vector<double> out;
        for (const auto& row : values) {
            double s = 0.0;
            for (double v : row) s += v;
            out.push_back(s / static_cast<double>(row.size()));
        }
        return out;
    }
};

struct MonotoneViolation {
    NodeId node = 0;
    std::size_t iteration = 0;  // index i with values[i+1] too far above values[i]
    double before = 0.0;
    double after = 0.0;
};

/// Flags every (k, i) with phi_k^{i+1} > phi_k^i + rel_tol (1 + |phi_k^i|).
inline std::vector<MonotoneViolation> check_monotone(const ConvergenceCurve& curve, double rel_tol) {
    std::vector<MonotoneViolation> out;
    for (std::size_t i = 0; i + 1 < curve.values.size(); ++i) {
        for (int k = 0; k < curve.num_nodes(); ++k) {
            const double now = curve.values[i][k];
            const double next = curve.values[i + 1][k];
            if (next > now + rel_tol * (1.0 + std::abs(now))) out.push_back({k + 1, i, now, next});
        }
    }
    return out;
}

/// First index whose value is <= threshold.
inline std::optional<std::size_t> iterations_to_threshold(const std::vector<double>& series, double threshold) {
    for (std::size_t i = 0; i < series.size(); ++i)
        if (series[i] <= threshold) return i;
    return std::nullopt;
}

/// First index where max_k of the curve is <= threshold.
inline std::optional<std::size_t> iterations_to_threshold(const ConvergenceCurve& curve, double threshold) {
    return iterations_to_threshold(curve.max_over_nodes(), threshold);
}

/// Linear-interpolation quantile of an already sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) fail(Errc::undefined_metric, "quantile of an empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct McSummary {
    std::vector<double> median;
    std::vector<double> q1;
    std::vector<double> q3;
    /// Per run, filled when mc_aggregate is given a threshold.
    std::vector<std::optional<std::size_t>> iterations_to_threshold;

    /// Median over runs of the iterations-to-threshold, not-reached counted as +inf.
    std::optional<double> median_iterations_to_threshold() const {
        std::vector<double> v;
        for (const auto& it : iterations_to_threshold)
            v.push_back(it ? static_cast<double>(*it) : std::numeric_limits<double>::infinity());
        if (v.empty()) return std::nullopt;
        std::sort(v.begin(), v.end());
        const double med = sorted_quantile_inf(v);
        if (std::isinf(med)) return std::nullopt;
        return med;
    }

private:
    static double sorted_quantile_inf(const std::vector<double>& v) {
        const std::size_t n = v.size();
        if (n % 2 == 1) return v[n / 2];
        const double a = v[n / 2 - 1], b = v[n / 2];
        return std::isinf(b) ? b : 0.5 * (a + b);
    }
};

/**
 * @brief Pointwise median and quartiles across runs.
 *
 * Runs that stopped early are padded with their final value up to the
 * longest run.
 */
inline McSummary mc_aggregate(const std::vector<std::vector<double>>& runs,
                              std::optional<double> threshold = std::nullopt) {
    if (runs.empty()) fail(Errc::undefined_metric, "no runs to aggregate");
    std::size_t length = 0;
    for (const auto& r : runs) {
        if (r.empty()) fail(Errc::undefined_metric, "empty run");
        length = std::max(length, r.size());
    }
    McSummary s;
    std::vector<double> column(runs.size());
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t r = 0; r < runs.size(); ++r) column[r] = i < runs[r].size() ? runs[r][i] : runs[r].back();
        std::sort(column.begin(), column.end());
        s.median.push_back(sorted_quantile(column, 0.5));
        s.q1.push_back(sorted_quantile(column, 0.25));
        s.q3.push_back(sorted_quantile(column, 0.75));
    }
    if (threshold) {
        for (const auto& r : runs) s.iterations_to_threshold.push_back(dansf::iterations_to_threshold(r, *threshold));
    }
    return s;
}

inline std::string format_real(double v) { return fmt::format("{:.17g}", v); }

/// Summary CSV: iter,median,q1,q3.
inline void write_summary_csv(std::ostream& out, const McSummary& s) {
    out << "iter,median,q1,q3\n";
    for (std::size_t i = 0; i < s.median.size(); ++i) {
        out << i << ',' << format_real(s.median[i]) << ',' << format_real(s.q1[i]) << ',' << format_real(s.q3[i])
            << '\n';
    }
}

}  // namespace dansf
