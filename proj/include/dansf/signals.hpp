/**
 * @file signals.hpp
 * @brief Network-wide signal model: channel layout, the latent mixture model
 *        y(t) = A d(t) + n(t), sample batches and second-order statistics.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "dansf/core.hpp"
#include "dansf/random.hpp"

namespace dansf {

/// Stacking order of the per-node channels inside y.
class ChannelLayout {
public:
    ChannelLayout() = default;

    explicit ChannelLayout(std::vector<Index> per_node) : channels_(std::move(per_node)) {
        if (channels_.empty()) fail(Errc::invalid_config, "layout needs at least one node");
        offsets_.reserve(channels_.size());
        Index offset = 0;
        for (Index m : channels_) {
            if (m < 1) fail(Errc::invalid_config, "every node needs at least one channel");
            offsets_.push_back(offset);
            offset += m;
        }
        total_ = offset;
    }

    static ChannelLayout uniform(int num_nodes, Index channels_per_node) {
        return ChannelLayout(std::vector<Index>(static_cast<std::size_t>(num_nodes), channels_per_node));
    }

    int num_nodes() const { return static_cast<int>(channels_.size()); }
    Index total() const { return total_; }
    const std::vector<Index>& per_node() const { return channels_; }

    Index channels(NodeId k) const { return channels_[slot(k)]; }
    /// 0-based first row of node k.
    Index offset(NodeId k) const { return offsets_[slot(k)]; }

    Index max_channels() const { return *std::max_element(channels_.begin(), channels_.end()); }

    bool operator==(const ChannelLayout&) const = default;

private:
    std::size_t slot(NodeId k) const {
        if (k < 1 || k > num_nodes()) {
            fail(Errc::out_of_range, "node " + std::to_string(k) + " outside 1.." + std::to_string(num_nodes()));
        }
        return static_cast<std::size_t>(k - 1);
    }

    std::vector<Index> channels_;
    std::vector<Index> offsets_;
    Index total_ = 0;
};

/// Rows of node k (a view into `m`).
template <typename Derived>
auto node_rows(const Eigen::MatrixBase<Derived>& m, NodeId k, const ChannelLayout& layout) {
    if (m.rows() != layout.total()) fail(Errc::dimension_mismatch, "row count does not match the layout");
    return m.middleRows(layout.offset(k), layout.channels(k));
}

/**
 * @brief y(t) = A d(t) + n(t) with i.i.d. zero-mean Gaussian entries of
 *        variance var_d in d and var_n in n.
 */
struct MixtureModel {
    Mat mixing;  // A, M x Q
    double var_d = 0.5;
    double var_n = 0.1;

    Index num_channels() const { return mixing.rows(); }
    Index num_sources() const { return mixing.cols(); }

    void validate() const {
        if (!(var_d > 0.0)) fail(Errc::invalid_config, "source variance must be positive");
        if (!(var_n >= 0.0)) fail(Errc::invalid_config, "noise variance must be non-negative");
    }

    /// Mixing entries drawn i.i.d. with variance var_a.
    static MixtureModel random(Index channels, Index sources, double var_a, double var_d, double var_n,
                               std::uint64_t seed) {
        Rng rng(seed);
        MixtureModel model{rng.gaussian(channels, sources, var_a), var_d, var_n};
        model.validate();
        return model;
    }
};

/// One column per time sample. `sources` holds the latent d(t) the batch was
/// generated from (Q x N) when known, empty otherwise.
struct SignalBatch {
    Mat data;
    Mat sources;
    ChannelLayout layout;

    Index num_samples() const { return data.cols(); }
};

enum class CovarianceKind { exact, sampled };

struct CovarianceEstimate {
    Mat matrix;
    CovarianceKind kind = CovarianceKind::exact;
    Index samples = 0;  // N for sampled estimates
};

inline SignalBatch sample_batch(const MixtureModel& model, const ChannelLayout& layout, Index num_samples,
                                std::uint64_t seed) {
    model.validate();
    if (num_samples < 1) fail(Errc::invalid_config, "a batch needs at least one sample");
    if (model.num_channels() != layout.total()) fail(Errc::dimension_mismatch, "mixing rows do not match layout");
    Rng rng(seed);
    SignalBatch batch;
    batch.layout = layout;
    batch.sources = rng.gaussian(model.num_sources(), num_samples, model.var_d);
    const Mat noise = rng.gaussian(model.num_channels(), num_samples, model.var_n);
    batch.data.noalias() = model.mixing * batch.sources;
    batch.data += noise;
    return batch;
}

/// R = var_d A A^T + var_n I.
inline CovarianceEstimate exact_covariance(const MixtureModel& model) {
    model.validate();
    Mat r = model.var_d * model.mixing * model.mixing.transpose();
    r.diagonal().array() += model.var_n;
    return {symmetrized(r), CovarianceKind::exact, 0};
}

/// E[y d^T] = var_d A.
inline Mat exact_source_cross_covariance(const MixtureModel& model) { return model.var_d * model.mixing; }

/// (1/N) Y Y^T.
inline CovarianceEstimate sample_covariance(const SignalBatch& batch) {
    const Index n = batch.num_samples();
    if (n < 1) fail(Errc::invalid_config, "empty batch");
    Mat r = Mat::Zero(batch.data.rows(), batch.data.rows());
    r.selfadjointView<Eigen::Lower>().rankUpdate(batch.data, 1.0 / static_cast<double>(n));
    r = r.selfadjointView<Eigen::Lower>();
    return {r, CovarianceKind::sampled, n};
}

/// Ridge used in sampled mode: 1e-10 * trace(R) / dim.
inline double default_ridge(const Mat& r) {
    return r.rows() == 0 ? 0.0 : 1e-10 * r.trace() / static_cast<double>(r.rows());
}

// Binary batch format: M and N as little-endian uint64, then M*N column-major
// little-endian IEEE doubles.

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(Errc::parse_error, "truncated batch file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline void write_batch(std::ostream& out, const Mat& data) {
    detail::put_u64(out, static_cast<std::uint64_t>(data.rows()));
    detail::put_u64(out, static_cast<std::uint64_t>(data.cols()));
    for (Index j = 0; j < data.cols(); ++j)
        for (Index i = 0; i < data.rows(); ++i) detail::put_u64(out, std::bit_cast<std::uint64_t>(data(i, j)));
    if (!out) fail(Errc::io_error, "failed to write batch");
}

inline Mat read_batch(std::istream& in) {
    const auto rows = detail::get_u64(in);
    const auto cols = detail::get_u64(in);
    if (rows > (1ULL << 31) || cols > (1ULL << 40)) fail(Errc::parse_error, "implausible batch header");
    Mat data(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index j = 0; j < data.cols(); ++j)
        for (Index i = 0; i < data.rows(); ++i) data(i, j) = std::bit_cast<double>(detail::get_u64(in));
    return data;
}

}  // namespace dansf
