#include <gtest/gtest.h>

#include <sstream>

#include "dansf/signals.hpp"

using namespace dansf;

TEST(Layout, OffsetsAndRows) {
    const ChannelLayout layout({2, 3, 1});
    EXPECT_EQ(layout.total(), 6);
    EXPECT_EQ(layout.offset(1), 0);
    EXPECT_EQ(layout.offset(2), 2);
    EXPECT_EQ(layout.offset(3), 5);
    EXPECT_EQ(layout.max_channels(), 3);
    Mat m(6, 2);
    for (int i = 0; i < 6; ++i) m.row(i).setConstant(i);
    const Mat rows = node_rows(m, 2, layout);
    ASSERT_EQ(rows.rows(), 3);
    EXPECT_EQ(rows(0, 0), 2);
    EXPECT_EQ(rows(2, 1), 4);
    EXPECT_THROW(node_rows(m, 4, layout), Error);
    EXPECT_THROW(node_rows(Mat(5, 2), 1, layout), Error);
    EXPECT_THROW(ChannelLayout({2, 0}), Error);
}

TEST(Model, ExactCovarianceFormula) {
    const auto model = MixtureModel::random(6, 2, 0.2, 0.5, 0.1, 3);
    const Mat expected = 0.5 * model.mixing * model.mixing.transpose() + 0.1 * Mat::Identity(6, 6);
    const auto r = exact_covariance(model);
    EXPECT_LT((r.matrix - expected).norm(), 1e-14);
    EXPECT_EQ(r.kind, CovarianceKind::exact);
    EXPECT_LT((exact_source_cross_covariance(model) - 0.5 * model.mixing).norm(), 1e-15);
}

TEST(Model, InvalidVariances) {
    MixtureModel m{Mat::Ones(2, 1), 0.0, 0.1};
    EXPECT_THROW(m.validate(), Error);
    m.var_d = 1.0;
    m.var_n = -1.0;
    EXPECT_THROW(m.validate(), Error);
}

TEST(Batch, DeterministicForSeed) {
    const auto model = MixtureModel::random(4, 2, 1.0, 0.5, 0.1, 1);
    const auto layout = ChannelLayout::uniform(2, 2);
    const auto a = sample_batch(model, layout, 50, 9);
    const auto b = sample_batch(model, layout, 50, 9);
    const auto c = sample_batch(model, layout, 50, 10);
    EXPECT_EQ(a.data, b.data);
    EXPECT_NE(a.data, c.data);
    EXPECT_EQ(a.sources.rows(), 2);
}

TEST(Batch, SampleCovarianceApproachesExact) {
    const auto model = MixtureModel::random(6, 2, 0.2, 0.5, 0.1, 4);
    const auto layout = ChannelLayout::uniform(3, 2);
    const auto batch = sample_batch(model, layout, 200000, 11);
    const auto est = sample_covariance(batch);
    EXPECT_EQ(est.samples, 200000);
    const Mat exact = exact_covariance(model).matrix;
    // entrywise standard error is about sqrt(2/N) * scale
    EXPECT_LT((est.matrix - exact).norm() / exact.norm(), 0.02);
    // the sample covariance is (1/N) Y Y^T computed directly
    const Mat direct = batch.data * batch.data.transpose() / 200000.0;
    EXPECT_LT((est.matrix - direct).norm(), 1e-12 * direct.norm());
}

TEST(Batch, BinaryRoundTrip) {
    Rng rng(2);
    const Mat data = rng.gaussian(5, 7);
    std::stringstream io;
    write_batch(io, data);
    EXPECT_EQ(io.str().size(), 16u + 8u * 35u);
    // header: little-endian M
    EXPECT_EQ(static_cast<unsigned char>(io.str()[0]), 5);
    EXPECT_EQ(static_cast<unsigned char>(io.str()[8]), 7);
    EXPECT_EQ(read_batch(io), data);
}

TEST(Batch, TruncatedFileRejected) {
    std::stringstream io;
    write_batch(io, Mat::Ones(2, 2));
    std::string bytes = io.str();
    bytes.resize(bytes.size() - 3);
    std::stringstream cut(bytes);
    EXPECT_THROW(read_batch(cut), Error);
}

TEST(Rng, NormalMoments) {
    Rng rng(5);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, DerivedSeedsDiffer) {
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
    EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
    EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
}
