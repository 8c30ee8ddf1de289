#include <gtest/gtest.h>

#include "prorobust/evaluator.hpp"
#include "test_util.hpp"

using namespace prorobust;

TEST(Percentile, LinearInterpolation) {
    std::vector<double> v;
    for (int i = 0; i <= 100; ++i) v.push_back(-1.0 + 0.02 * i);
    EXPECT_NEAR(percentile(v, 10), -0.8, 1e-12);
    EXPECT_NEAR(percentile(v, 90), 0.8, 1e-12);
    EXPECT_NEAR(percentile({1, 2, 3, 4}, 50), 2.5, 1e-15);
    EXPECT_EQ(percentile({3, 1, 2}, 0), 1.0);
    EXPECT_EQ(percentile({3, 1, 2}, 100), 3.0);
    EXPECT_THROW(percentile({}, 50), EmptyDatasetError);
    EXPECT_THROW(percentile({1}, 101), InvalidArgument);
}

TEST(Baselines, PercentileBoxAndFullSupport) {
    Mat e(101, 1);
    for (int i = 0; i <= 100; ++i) e(i, 0) = -1.0 + 0.02 * i;
    const auto perc = percentile_policy(e, 10, 90);
    EXPECT_NEAR(perc.box.mu[0], 0.0, 1e-12);
    EXPECT_NEAR(perc.box.sigma[0], 0.8, 1e-12);
    const auto full = full_support_policy(e);
    const auto wide = percentile_policy(e, 0, 100);
    EXPECT_NEAR(full.box.sigma[0], 1.0, 1e-12);
    EXPECT_EQ(wide.box.mu, full.box.mu);
    EXPECT_EQ(wide.box.sigma, full.box.sigma);
    EXPECT_THROW(percentile_policy(e, 90, 10), InvalidArgument);
    EXPECT_THROW(percentile_policy(e, -1, 10), InvalidArgument);
}

TEST(TailStats, KnownOrderStatistics) {
    std::vector<double> m;
    for (int i = 1; i <= 100; ++i) m.push_back(i);
    const auto t = tail_stats(m, 0.05);
    EXPECT_EQ(t.var, 95.0);
    EXPECT_NEAR(t.cvar, 98.0, 1e-12);  // mean of 96..100
    const auto u = tail_stats({-1, -1, -1, -0.5}, 0.25);
    EXPECT_EQ(u.var, -1.0);
    EXPECT_NEAR(u.cvar, -0.5, 1e-15);
    EXPECT_THROW(tail_stats({}, 0.1), EmptyDatasetError);
    EXPECT_THROW(tail_stats({1}, 0.0), InvalidArgument);
}

TEST(TailStats, CvarDominatesVarAndMaximum) {
    Rng rng = make_rng(9, {});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> m(313);
    for (auto& v : m) v = normal(rng);
    for (double g : {0.01, 0.05, 0.25, 0.5}) {
        const auto t = tail_stats(m, g);
        EXPECT_LE(t.var, t.cvar);
        EXPECT_LE(t.cvar, *std::max_element(m.begin(), m.end()) + 1e-12);
    }
}

TEST(Evaluate, ReportIsInternallyConsistent) {
    const GridCase c = testing_util::case5();
    const FlowMaps maps = build_flow_maps(c);
    DatasetConfig dc;
    dc.n = 140;
    dc.n_train = 100;
    const Dataset ds = generate_dataset(c, dc);
    const auto rep = evaluate(c, maps, build_baseline(PolicyKind::percentile, ds), ds.test, 0.05);
    ASSERT_EQ(rep.samples.size(), 40u);
    EXPECT_EQ(rep.n_failed, 0u);
    EXPECT_NEAR(rep.mean_total, rep.mean_first_stage + rep.mean_exceedance, 1e-9);
    std::size_t above = 0;
    for (const auto& s : rep.samples) {
        EXPECT_NEAR(s.total, s.first_stage + s.exceedance, 1e-9);
        EXPECT_EQ(s.exceedance > 0.0, s.margin > 0.0);
        if (s.margin > 0.0) ++above;
    }
    EXPECT_NEAR(rep.prob_exceedance, static_cast<double>(above) / 40.0, 1e-15);
    EXPECT_LE(rep.q1, rep.median);
    EXPECT_LE(rep.median, rep.q3);
    EXPECT_LE(rep.var, rep.cvar);
    EXPECT_EQ(rep.policy, "perc");
}

TEST(Evaluate, FullSupportRarelyExceeds) {
    const GridCase c = testing_util::case5();
    const FlowMaps maps = build_flow_maps(c);
    DatasetConfig dc;
    dc.n = 140;
    dc.n_train = 100;
    const Dataset ds = generate_dataset(c, dc);
    const auto full = evaluate(c, maps, build_baseline(PolicyKind::full_support, ds), ds.test, 0.05);
    const auto perc = evaluate(c, maps, build_baseline(PolicyKind::percentile, ds), ds.test, 0.05);
    EXPECT_LE(full.prob_exceedance, perc.prob_exceedance);
    EXPECT_GE(full.mean_first_stage, perc.mean_first_stage);
}

TEST(Evaluate, WorkersGiveIdenticalReports) {
    const GridCase c = testing_util::case5();
    const FlowMaps maps = build_flow_maps(c);
    DatasetConfig dc;
    dc.n = 60;
    dc.n_train = 40;
    const Dataset ds = generate_dataset(c, dc);
    const auto policy = build_baseline(PolicyKind::percentile, ds);
    const auto a = evaluate(c, maps, policy, ds.test, 0.05, {}, 1);
    const auto b = evaluate(c, maps, policy, ds.test, 0.05, {}, 3);
    EXPECT_EQ(a.mean_total, b.mean_total);
    EXPECT_EQ(a.cvar, b.cvar);
    EXPECT_THROW(evaluate(c, maps, policy, {}, 0.05), EmptyDatasetError);
}
