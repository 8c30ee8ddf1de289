#include <gtest/gtest.h>

#include "prorobust/scenario.hpp"
#include "test_util.hpp"

using namespace prorobust;

TEST(ErrorCovariance, PublishedTwoFarmExample) {
    const Mat cov = error_covariance((Vec(2) << 1.0, 1.5).finished(), 0.15, 0.5);
    EXPECT_NEAR(cov(0, 0), 0.0225, 1e-15);
    EXPECT_NEAR(cov(0, 1), 0.016875, 1e-15);
    EXPECT_NEAR(cov(1, 0), 0.016875, 1e-15);
    EXPECT_NEAR(cov(1, 1), 0.050625, 1e-15);
}

TEST(ErrorCovariance, ZeroForecastAndUncorrelated) {
    EXPECT_EQ(error_covariance(Vec::Zero(2), 0.15, 0.5), Mat::Zero(2, 2));
    const Mat cov = error_covariance(Vec::Ones(2), 0.15, 0.0);
    EXPECT_NEAR(cov(0, 0), 0.0225, 1e-15);
    EXPECT_EQ(cov(0, 1), 0.0);
    EXPECT_NEAR(cov(1, 1), 0.0225, 1e-15);
}

TEST(SampleContexts, DegenerateIntervalGivesNominal) {
    const GridCase c = testing_util::case5();
    Rng rng = make_rng(3, {});
    for (const auto& z : sample_contexts(c, 20, 1.0, 1.0, rng)) {
        EXPECT_EQ(z.d, c.nominal_demand());
        EXPECT_EQ(z.u, c.nominal_wind());
    }
}

TEST(SampleContexts, ProtocolBoxAndEmptyRequest) {
    const GridCase c = testing_util::case5();
    Rng rng = make_rng(3, {});
    const auto zs = sample_contexts(c, 2000, 0.5, 1.1, rng);
    ASSERT_EQ(zs.size(), 2000u);
    const Vec d0 = c.nominal_demand(), u0 = c.nominal_wind();
    for (const auto& z : zs) {
        EXPECT_TRUE(((z.d - 0.5 * d0).array() >= 0.0).all() && ((1.1 * d0 - z.d).array() >= 0.0).all());
        EXPECT_TRUE(((z.u - 0.5 * u0).array() >= 0.0).all() && ((1.1 * u0 - z.u).array() >= 0.0).all());
    }
    EXPECT_TRUE(sample_contexts(c, 0, 0.5, 1.1, rng).empty());
    EXPECT_THROW(sample_contexts(c, 1, 1.2, 1.1, rng), ConfigError);
}

TEST(SampleErrors, TruncationKeepsWindOutputPhysical) {
    const Vec umax = (Vec(2) << 2.0, 3.0).finished();
    Rng rng = make_rng(4, {});
    for (const Vec& u : {Vec((Vec(2) << 0.1, 2.9).finished()), Vec((Vec(2) << 1.0, 1.5).finished())}) {
        const auto batch = sample_errors_conditional(u, 5000, 0.5, 0.5, umax, rng);
        EXPECT_EQ(batch.source, ErrorSource::conditional);
        for (Eigen::Index i = 0; i < batch.size(); ++i) {
            const Vec w = u + batch.xi.row(i).transpose();
            EXPECT_TRUE((w.array() >= -1e-15).all() && ((umax - w).array() >= -1e-15).all());
        }
    }
}

TEST(SampleErrors, AtCapacityErrorsAreNonpositive) {
    const Vec umax = (Vec(2) << 2.0, 3.0).finished();
    Rng rng = make_rng(5, {});
    const auto batch = sample_errors_conditional(umax, 1000, 0.15, 0.5, umax, rng);
    EXPECT_LE(batch.xi.maxCoeff(), 0.0);
}

TEST(SampleErrors, ZeroForecastGivesZeroErrors) {
    Rng rng = make_rng(6, {});
    const auto batch = sample_errors_conditional(Vec::Zero(2), 100, 0.15, 0.5, (Vec(2) << 2.0, 3.0).finished(), rng);
    EXPECT_EQ(batch.xi, Mat::Zero(100, 2));
}

TEST(SampleErrors, RejectsBadCorrelation) {
    Rng rng = make_rng(7, {});
    const Vec u = Vec::Ones(2), umax = Vec::Constant(2, 3.0);
    EXPECT_THROW(sample_errors_conditional(u, 1, 0.15, 1.0, umax, rng), ConfigError);
    EXPECT_THROW(sample_errors_conditional(u, 1, 0.15, -1.0, umax, rng), ConfigError);
    // equicorrelation with three farms is indefinite below -1/2
    EXPECT_THROW(sample_errors_conditional(Vec::Ones(3), 1, 0.15, -0.7, Vec::Constant(3, 3.0), rng), ConfigError);
}

TEST(SampleErrors, MonteCarloMomentsMatchCovariance) {
    const Vec u = (Vec(2) << 1.0, 1.5).finished(), umax = (Vec(2) << 2.0, 3.0).finished();
    Rng rng = make_rng(8, {});
    const std::size_t n = 100000;
    const Mat xi = sample_errors_conditional(u, n, 0.15, 0.5, umax, rng).xi;
    const Mat cov = error_covariance(u, 0.15, 0.5);
    const Mat emp = xi.transpose() * xi / static_cast<double>(n);  // zero mean
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            // standard error of the sample mean of xi_j xi_k under normality
            const double se = std::sqrt((cov(j, j) * cov(k, k) + cov(j, k) * cov(j, k)) / static_cast<double>(n));
            EXPECT_NEAR(emp(j, k), cov(j, k), 3.0 * se) << j << "," << k;
        }
    const double corr = emp(0, 1) / std::sqrt(emp(0, 0) * emp(1, 1));
    EXPECT_NEAR(corr, 0.5, 0.05);
}

TEST(GenerateDataset, ProtocolSplitAndDeterminism) {
    const GridCase c = testing_util::case5();
    const Dataset a = generate_dataset(c, DatasetConfig{});
    EXPECT_EQ(a.train.size(), 1500u);
    EXPECT_EQ(a.test.size(), 500u);
    const Dataset b = generate_dataset(c, DatasetConfig{});
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].zeta.d, b.train[i].zeta.d);
        EXPECT_EQ(a.train[i].xi, b.train[i].xi);
    }
    DatasetConfig other;
    other.seed = 2;
    EXPECT_NE(generate_dataset(c, other).train[0].xi, a.train[0].xi);
}

TEST(GenerateDataset, RejectsEmptyAndOversizedSplits) {
    const GridCase c = testing_util::case5();
    DatasetConfig cfg;
    cfg.n = 0;
    EXPECT_THROW(generate_dataset(c, cfg), ConfigError);
    cfg.n = 10;
    cfg.n_train = 11;
    EXPECT_THROW(generate_dataset(c, cfg), ConfigError);
}

TEST(ErrorBins, SingleBinPoolsEverything) {
    const Dataset ds = generate_dataset(testing_util::case5(), DatasetConfig{});
    const ErrorBins bins = bin_errors(ds, 1);
    EXPECT_EQ(bins.lookup(ds.test[0].zeta.u), ds.train_errors());
}

TEST(ErrorBins, TenBinsCoverTheTrainingRange) {
    const Dataset ds = generate_dataset(testing_util::case5(), DatasetConfig{});
    const ErrorBins bins = bin_errors(ds, 10);
    EXPECT_EQ(bins.size(), 10u);
    EXPECT_TRUE(bins.empty_bins().empty());
    Eigen::Index total = 0;
    for (std::size_t b = 0; b < bins.size(); ++b) total += bins.bin(b).rows();
    EXPECT_EQ(total, 1500);
    for (const auto& s : ds.train) EXPECT_GT(bins.lookup(s.zeta.u).rows(), 0);
}

TEST(ErrorBins, OutOfRangeForecastsClampToEdges) {
    const Dataset ds = generate_dataset(testing_util::case5(), DatasetConfig{});
    const ErrorBins bins = bin_errors(ds, 10);
    EXPECT_EQ(bins.bin_of(Vec::Zero(2)), 0u);
    EXPECT_EQ(bins.bin_of(Vec::Constant(2, 50.0)), 9u);
}

TEST(ErrorBins, EmptyBinsBorrowFromNeighbours) {
    Dataset ds;
    auto add = [&](double u, double xi) {
        ds.train.push_back({{Vec::Zero(1), Vec::Constant(1, u)}, Vec::Constant(1, xi)});
    };
    add(0.0, -1.0);
    add(0.1, -2.0);
    add(1.0, 5.0);
    const ErrorBins bins = bin_errors(ds, 4);
    EXPECT_EQ(bins.empty_bins(), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(bins.bin(1).rows(), 2);  // from bin 0
    EXPECT_EQ(bins.bin(2)(0, 0), 5.0);  // bin 1 is empty as well, so bin 3 lends
    EXPECT_EQ(bins.lookup(Vec::Constant(1, 0.6)).rows(), bins.bin(2).rows());
}

TEST(ErrorBins, FarmKeyAndBadConfig) {
    const Dataset ds = generate_dataset(testing_util::case5(), DatasetConfig{});
    EXPECT_THROW(bin_errors(ds, 0), ConfigError);
    EXPECT_THROW(bin_errors(ds, 10, BinKey::farm, 5), ConfigError);
    EXPECT_NO_THROW(bin_errors(ds, 10, BinKey::farm, 1));
    EXPECT_THROW(bin_errors(Dataset{}, 10), EmptyDatasetError);
}
