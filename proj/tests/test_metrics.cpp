#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "dansf/metrics.hpp"
#include "dansf/random.hpp"

using namespace dansf;

TEST(RelativeMse, Examples) {
    Mat x(2, 2);
    x << 1, 2, 3, 4;
    EXPECT_EQ(relative_mse(x, x), 0.0);
    EXPECT_EQ(relative_mse(Mat::Zero(2, 2), x), 1.0);
    EXPECT_EQ(relative_mse(2.0 * x, x), 1.0);
    try {
        relative_mse(x, Mat::Zero(2, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::undefined_metric);
    }
    EXPECT_THROW(relative_mse(Mat::Zero(2, 1), x), Error);
}

TEST(RelativeMse, NoAlignment) {
    // a rotated oracle is not recognized as the same solution
    Mat x(2, 2);
    x << 1, 0, 0, 1;
    Mat rot(2, 2);
    rot << 0, -1, 1, 0;
    EXPECT_GT(relative_mse(x * rot, x), 1.0);
}

TEST(Monotone, ConstantAndDecreasing) {
    EXPECT_TRUE(check_monotone(ConvergenceCurve({{1, 2}, {1, 2}, {1, 2}}), 1e-9).empty());
    EXPECT_TRUE(check_monotone(ConvergenceCurve({{3, -1}, {2, -2}, {1, -3}}), 1e-9).empty());
}

TEST(Monotone, InjectedUptick) {
    const double tol = 1e-9;
    ConvergenceCurve c({{5.0, 1.0}, {4.0, 0.5}, {3.0, 0.5 + 10 * tol * 1.5}, {2.0, 0.4}});
    const auto v = check_monotone(c, tol);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].node, 2);
    EXPECT_EQ(v[0].iteration, 1u);
}

TEST(Monotone, RaggedCurveRejected) { EXPECT_THROW(ConvergenceCurve({{1, 2}, {1}}), Error); }

TEST(Threshold, Examples) {
    EXPECT_EQ(iterations_to_threshold(std::vector<double>{1e-5, 1e-6}, 1e-4), 0u);
    std::vector<double> crossing;
    for (int i = 0; i < 30; ++i) crossing.push_back(std::pow(0.5, i));
    // 0.5^17 = 7.6e-6 is the first value at or below 1e-5
    EXPECT_EQ(iterations_to_threshold(crossing, 1e-5), 17u);
    EXPECT_FALSE(iterations_to_threshold(std::vector<double>{1, 1, 1}, 0.5).has_value());
    ConvergenceCurve c({{1.0, 0.1}, {0.01, 0.5}, {0.01, 0.01}});
    EXPECT_EQ(iterations_to_threshold(c, 0.05), 2u);
}

TEST(Aggregate, SingleRunIsItsOwnMedian) {
    const std::vector<double> run{3, 2, 1};
    const auto s = mc_aggregate({run});
    EXPECT_EQ(s.median, run);
    EXPECT_EQ(s.q1, run);
    EXPECT_EQ(s.q3, run);
}

TEST(Aggregate, ThreeConstantRuns) {
    const auto s = mc_aggregate({{1, 1}, {2, 2}, {3, 3}});
    EXPECT_EQ(s.median[0], 2.0);
    EXPECT_EQ(s.q1[0], 1.5);
    EXPECT_EQ(s.q3[0], 2.5);
}

TEST(Aggregate, PadsEarlyStoppedRuns) {
    const auto s = mc_aggregate({{4, 2}, {4, 3, 1}});
    ASSERT_EQ(s.median.size(), 3u);
    EXPECT_EQ(s.median[2], 1.5);
}

TEST(Aggregate, EmptyInputRejected) {
    EXPECT_THROW(mc_aggregate({}), Error);
    EXPECT_THROW(mc_aggregate({{}}), Error);
}

TEST(Aggregate, GeometricRunsMatchDirectSort) {
    Rng rng(4);
    std::vector<std::vector<double>> runs;
    for (int r = 0; r < 100; ++r) {
        const double rate = 0.5 + 0.4 * rng.uniform();
        std::vector<double> run;
        for (int i = 0; i < 40; ++i) run.push_back(std::pow(rate, i));
        runs.push_back(run);
    }
    const auto s = mc_aggregate(runs);
    for (int i = 0; i < 40; ++i) {
        std::vector<double> col;
        for (const auto& r : runs) col.push_back(r[i]);
        std::sort(col.begin(), col.end());
        // 100 values: median halfway between ranks 50 and 51, quartiles at 24.75 and 74.25
        EXPECT_DOUBLE_EQ(s.median[i], 0.5 * (col[49] + col[50]));
        EXPECT_DOUBLE_EQ(s.q1[i], col[24] + 0.75 * (col[25] - col[24]));
        EXPECT_DOUBLE_EQ(s.q3[i], col[74] + 0.25 * (col[75] - col[74]));
        EXPECT_LE(s.q1[i], s.median[i]);
        EXPECT_LE(s.median[i], s.q3[i]);
    }
    auto shuffled = runs;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[3], shuffled[70]);
    const auto t = mc_aggregate(shuffled);
    EXPECT_EQ(t.median, s.median);
    EXPECT_EQ(t.q1, s.q1);
    EXPECT_EQ(t.q3, s.q3);
}

TEST(Aggregate, MedianIterationsCountsMissesAsInfinite) {
    auto s = mc_aggregate({{1, 0.1}, {1, 1}, {1, 1}}, 0.5);
    ASSERT_EQ(s.iterations_to_threshold.size(), 3u);
    EXPECT_FALSE(s.median_iterations_to_threshold().has_value());
    s = mc_aggregate({{1, 0.1}, {0.1, 0.1}, {1, 1}}, 0.5);
    EXPECT_EQ(s.median_iterations_to_threshold(), 1.0);
}

TEST(SummaryCsv, Format) {
    std::ostringstream out;
    write_summary_csv(out, mc_aggregate({{1, 0.5}}));
    EXPECT_EQ(out.str(), "iter,median,q1,q3\n0,1,1,1\n1,0.5,0.5,0.5\n");
}
