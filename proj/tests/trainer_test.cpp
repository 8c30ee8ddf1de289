#include <gtest/gtest.h>

#include "prorobust/trainer.hpp"
#include "test_util.hpp"

using namespace prorobust;

namespace {

struct Fixture {
    GridCase c = testing_util::case5();
    FlowMaps maps = build_flow_maps(c);
    Dataset ds = [this] {
        DatasetConfig dc;
        dc.n = 100;
        dc.n_train = 60;
        return generate_dataset(c, dc);
    }();

    TrainingConfig config(TrainMode mode, SamplingMode sampling, int epochs = 3) const {
        TrainingConfig cfg = TrainingConfig::defaults(mode);
        cfg.sampling = sampling;
        cfg.epochs = epochs;
        cfg.batch = 4;
        cfg.n_cond_samples = 50;
        cfg.n_bins = 4;
        return cfg;
    }

    TrainingResult train(const TrainingConfig& cfg, SolverConfig solver = {}) const {
        return Trainer(c, maps, ds, cfg, solver).run(init_weights(ds));
    }
};

}  // namespace

TEST(Trainer, ZeroRateKeepsTheInitialWeights) {
    const Fixture f;
    auto cfg = f.config(TrainMode::coe, SamplingMode::p_all);
    cfg.rho = 0.0;
    const auto r = f.train(cfg);
    EXPECT_EQ(r.weights.flat(), init_weights(f.ds).flat());
    EXPECT_EQ(r.trace.epochs.size(), 3u);
}

TEST(Trainer, SameSeedSameWeights) {
    const Fixture f;
    for (auto s : {SamplingMode::p_all, SamplingMode::p_cond, SamplingMode::p_bins}) {
        const auto cfg = f.config(TrainMode::coe, s);
        EXPECT_EQ(f.train(cfg).weights.flat(), f.train(cfg).weights.flat()) << to_string(s);
    }
}

TEST(Trainer, WorkerCountDoesNotChangeTheResult) {
    const Fixture f;
    auto cfg = f.config(TrainMode::poe, SamplingMode::p_cond);
    SolverConfig solver;
    solver.cost_base = 1.0;
    const auto one = f.train(cfg, solver);
    cfg.workers = 2;
    const auto two = f.train(cfg, solver);
    EXPECT_EQ(one.weights.flat(), two.weights.flat());
    EXPECT_EQ(one.tau, two.tau);
    EXPECT_EQ(one.lambda, two.lambda);
}

TEST(Trainer, SingleModeLearnsOnlyTheIntercepts) {
    const Fixture f;
    auto cfg = f.config(TrainMode::coe, SamplingMode::single);
    cfg.rho = 1e-5;
    const auto r = f.train(cfg);
    EXPECT_EQ(r.weights.M_mu, Mat::Zero(2, 7));
    EXPECT_EQ(r.weights.M_sigma, Mat::Zero(2, 7));
    EXPECT_NE(r.weights.m_sigma, init_weights(f.ds).m_sigma);
}

TEST(Trainer, MultiplierFollowsTheCvar) {
    const Fixture f;
    auto cfg = f.config(TrainMode::poe, SamplingMode::p_all, 2);
    cfg.kappa = 0.5;
    cfg.lambda_init = 10.0;
    SolverConfig solver;
    solver.cost_base = 1.0;
    const auto r = f.train(cfg, solver);
    const auto& e = r.trace.epochs;
    EXPECT_NEAR(e[0].lambda, 10.0 + 0.5 * e[0].H, 1e-12);
    EXPECT_NEAR(e[1].lambda, e[0].lambda + 0.5 * e[1].H, 1e-12);
    EXPECT_EQ(r.lambda, e[1].lambda);
}

TEST(Trainer, RejectsBadConfigurations) {
    const Fixture f;
    auto cfg = f.config(TrainMode::coe, SamplingMode::p_all);
    cfg.epochs = 0;
    EXPECT_THROW(Trainer(f.c, f.maps, f.ds, cfg), ConfigError);
    cfg = f.config(TrainMode::coe, SamplingMode::p_all);
    cfg.batch = 0;
    EXPECT_THROW(Trainer(f.c, f.maps, f.ds, cfg), ConfigError);
    cfg = f.config(TrainMode::poe, SamplingMode::p_all);
    cfg.gamma = 1.0;
    EXPECT_THROW(Trainer(f.c, f.maps, f.ds, cfg), ConfigError);
    cfg = f.config(TrainMode::coe, SamplingMode::p_all);
    cfg.rho = -1.0;
    EXPECT_THROW(Trainer(f.c, f.maps, f.ds, cfg), ConfigError);
    EXPECT_THROW(parse_sampling_mode("p-all"), ConfigError);
    EXPECT_THROW(parse_train_mode("mse"), ConfigError);
    EXPECT_THROW(Trainer(f.c, f.maps, Dataset{}, f.config(TrainMode::coe, SamplingMode::p_all)), EmptyDatasetError);
}

TEST(Trainer, ErrorSetsFollowTheSamplingMode) {
    const Fixture f;
    const Trainer all(f.c, f.maps, f.ds, f.config(TrainMode::coe, SamplingMode::p_all));
    EXPECT_EQ(all.error_set(0, 1, 1).rows(), 60);
    const Trainer cond(f.c, f.maps, f.ds, f.config(TrainMode::coe, SamplingMode::p_cond));
    EXPECT_EQ(cond.error_set(0, 1, 1).rows(), 50);
    EXPECT_EQ(cond.error_set(0, 1, 1), cond.error_set(0, 1, 1));
    EXPECT_NE(cond.error_set(0, 1, 1), cond.error_set(0, 1, 2));
    const Trainer bins(f.c, f.maps, f.ds, f.config(TrainMode::coe, SamplingMode::p_bins));
    EXPECT_EQ(bins.error_set(3, 1, 1), bins.bins().lookup(f.ds.train[3].zeta.u));
}

// The step gradient is the chain rule through prescription, layer and loss;
// compare its directional derivative with central differences of the loss.
TEST(Trainer, StepGradientMatchesFiniteDifferences) {
    const Fixture f;
    for (auto mode : {TrainMode::coe, TrainMode::poe}) {
        const auto cfg = f.config(mode, SamplingMode::p_all);
        SolverConfig solver;
        if (mode == TrainMode::poe) solver.cost_base = 1.0;
        const Trainer t(f.c, f.maps, f.ds, cfg, solver);
        PrescriptionWeights w = init_weights(f.ds);
        w.M_sigma.setConstant(0.002);
        const Mat xi = t.error_set(5, 1, 1);
        const double tau = 0.0, lambda = 100.0;
        const auto base = t.step(w, tau, lambda, 5, xi);
        ASSERT_FALSE(base.flagged || base.failed);

        Rng rng = make_rng(42, {});
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec dir(w.num_params());
        for (auto& v : dir) v = normal(rng);
        dir.normalize();
        const double h = 1e-6;
        auto loss_at = [&](double s) {
            PrescriptionWeights m = w;
            m.set_flat(w.flat() + s * dir);
            return t.step(m, tau, lambda, 5, xi).loss;
        };
        const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
        const double an = base.grad_w.dot(dir);
        EXPECT_NEAR(an, fd, 5e-3 * std::max(1.0, std::abs(fd))) << to_string(mode);
    }
}
