#include <gtest/gtest.h>

#include "prorobust/losses.hpp"

using namespace prorobust;

namespace {

// One generator, one wind farm, no lines: rows are (-A xi - r+, A xi - r-).
DispatchSolution tiny(double a, double r_plus, double r_minus) {
    DispatchSolution s;
    s.layout = VariableLayout(1, 1, 0);
    s.p = Vec::Constant(1, 1.0);
    s.r_plus = Vec::Constant(1, r_plus);
    s.r_minus = Vec::Constant(1, r_minus);
    s.A = Mat::Constant(1, 1, a);
    s.f_ram_plus = s.f_ram_minus = Vec(0);
    s.slack_balance = Vec::Zero(1);
    s.slack_robust = Vec::Zero(2);
    s.t = Mat::Zero(2, 1);
    s.B_G = Mat(0, 1);
    s.B_W = Mat(0, 1);
    s.x = Vec::Zero(s.layout.size());
    s.x[s.layout.p(0)] = 1.0;
    s.x[s.layout.r_plus(0)] = r_plus;
    s.x[s.layout.r_minus(0)] = r_minus;
    s.x[s.layout.A(0, 0)] = a;
    s.cost = Vec::Zero(s.layout.size());
    s.cost[s.layout.p(0)] = 1000.0;
    s.cost[s.layout.r_plus(0)] = 50.0;
    s.cost[s.layout.r_minus(0)] = 50.0;
    return s;
}

Mat column(std::initializer_list<double> v) {
    Mat m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

}  // namespace

TEST(ConstraintMargin, HandExample) {
    const auto s = tiny(1.0, 0.2, 0.1);
    EXPECT_NEAR(constraint_margin(s, Vec::Constant(1, 0.05)), -0.05, 1e-15);   // max(-0.25, -0.05)
    EXPECT_NEAR(constraint_margin(s, Vec::Constant(1, -0.3)), 0.1, 1e-15);     // max(0.1, -0.4)
}

TEST(LossCoe, OneViolatedRow) {
    const auto s = tiny(1.0, 0.0, 0.5);
    const auto l = loss_coe(s, column({-0.01}), Vec::Constant(2, 20000.0));
    EXPECT_NEAR(l.first_stage, 1025.0, 1e-12);
    EXPECT_NEAR(l.exceedance, 200.0, 1e-9);
    EXPECT_NEAR(l.value, 1225.0, 1e-9);
}

TEST(LossCoe, GradientMatchesFiniteDifferences) {
    const Mat xi = column({-0.3, -0.1, 0.05, 0.2, 0.35});
    const Vec cv = Vec::Constant(2, 20000.0);
    const double a = 0.8, rp = 0.15, rm = 0.1;
    const auto s = tiny(a, rp, rm);
    const auto l = loss_coe(s, xi, cv);
    const double h = 1e-7;
    auto at = [&](double da, double dp, double dm) { return loss_coe(tiny(a + da, rp + dp, rm + dm), xi, cv).value; };
    EXPECT_NEAR(l.grad_x[s.layout.A(0, 0)], (at(h, 0, 0) - at(-h, 0, 0)) / (2 * h), 1e-4);
    EXPECT_NEAR(l.grad_x[s.layout.r_plus(0)], (at(0, h, 0) - at(0, -h, 0)) / (2 * h), 1e-4);
    EXPECT_NEAR(l.grad_x[s.layout.r_minus(0)], (at(0, 0, h) - at(0, 0, -h)) / (2 * h), 1e-4);
    EXPECT_EQ(l.grad_x[s.layout.p(0)], 1000.0);
}

TEST(LossCoe, RejectsBadInput) {
    const auto s = tiny(1.0, 0.1, 0.1);
    EXPECT_THROW(loss_coe(s, Mat(0, 1), Vec::Constant(2, 1.0)), InvalidArgument);
    EXPECT_THROW(loss_coe(s, Mat::Zero(1, 2), Vec::Constant(2, 1.0)), DimensionError);
    EXPECT_THROW(loss_coe(s, Mat::Zero(1, 1), Vec::Constant(3, 1.0)), DimensionError);
}

TEST(LossPoe, TailBelowTheThreshold) {
    // margins (-1, -1, -1, -0.5)
    const auto s = tiny(1.0, 1.0, 1.0);
    const Mat xi = column({0.0, 0.0, 0.0, 0.5});
    const auto l = loss_poe(s, xi, -0.5, 100.0, 0.25);
    EXPECT_NEAR(l.H, -0.5, 1e-15);
    EXPECT_NEAR(l.dH_dtau, 1.0, 1e-15);
    EXPECT_EQ(l.exceed_fraction, 0.0);
    EXPECT_NEAR(l.value, l.first_stage + 100.0 * -0.5, 1e-12);
}

TEST(LossPoe, ZeroMultiplierLeavesTheCost) {
    const auto s = tiny(1.0, 0.1, 0.1);
    const auto l = loss_poe(s, column({0.5, -0.5}), 0.0, 0.0, 0.1);
    EXPECT_EQ(l.value, l.first_stage);
    EXPECT_EQ(l.grad_x, s.cost);
    EXPECT_EQ(l.grad_tau, 0.0);
    EXPECT_EQ(l.exceed_fraction, 1.0);
}

TEST(LossPoe, DerivativesMatchFiniteDifferences) {
    const Mat xi = column({-0.4, -0.2, 0.0, 0.1, 0.25, 0.5});
    const double a = 0.9, rp = 0.2, rm = 0.15, lam = 7.0, gamma = 0.3;
    const auto s = tiny(a, rp, rm);
    const double h = 1e-7;
    for (double tau : {-0.5, -0.17, 0.05}) {
        const auto l = loss_poe(s, xi, tau, lam, gamma);
        const double fd_tau = (loss_poe(s, xi, tau + h, lam, gamma).H - loss_poe(s, xi, tau - h, lam, gamma).H) / (2 * h);
        EXPECT_NEAR(l.dH_dtau, fd_tau, 1e-6);
        EXPECT_NEAR(l.grad_tau, lam * fd_tau, 1e-5);
        auto at = [&](double da, double dp, double dm) {
            return loss_poe(tiny(a + da, rp + dp, rm + dm), xi, tau, lam, gamma).value;
        };
        EXPECT_NEAR(l.grad_x[s.layout.A(0, 0)], (at(h, 0, 0) - at(-h, 0, 0)) / (2 * h), 1e-4);
        EXPECT_NEAR(l.grad_x[s.layout.r_plus(0)], (at(0, h, 0) - at(0, -h, 0)) / (2 * h), 1e-4);
        EXPECT_NEAR(l.grad_x[s.layout.r_minus(0)], (at(0, 0, h) - at(0, 0, -h)) / (2 * h), 1e-4);
    }
    EXPECT_THROW(loss_poe(s, xi, 0.0, 1.0, 1.0), InvalidArgument);
}
