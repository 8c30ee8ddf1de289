#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "prorobust/errors.hpp"
#include "prorobust/prescriptor.hpp"
#include "prorobust/robust_opf.hpp"
#include "prorobust/scenario.hpp"

namespace prorobust {

enum class PolicyKind { full_support, percentile, fixed_box, prescriptive };

struct PolicySpec {
    PolicyKind kind = PolicyKind::fixed_box;
    double p_lo = 0.0, p_hi = 100.0;  // percentile
    UncertaintyBox box;               // full_support, percentile, fixed_box
    PrescriptionWeights weights;      // prescriptive
    std::string label;

    UncertaintyBox box_for(const ContextSample& zeta) const {
        if (kind == PolicyKind::prescriptive) return prescribe(weights, zeta).box;
        return box;
    }
};

// Percentile with linear interpolation between order statistics
// (position (N-1) p / 100 on the sorted sample).
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw EmptyDatasetError("percentile of an empty sample");
    if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in [0, 100]");
    std::sort(v.begin(), v.end());
    const double pos = (static_cast<double>(v.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline UncertaintyBox interval_box(const Vec& lo, const Vec& hi) {
    return {(hi + lo) / 2.0, ((hi - lo) / 2.0).cwiseMax(0.0)};
}

inline PolicySpec full_support_policy(const Mat& errors) {
    if (errors.rows() == 0) throw EmptyDatasetError("no training errors");
    PolicySpec p;
    p.kind = PolicyKind::full_support;
    p.label = "full";
    p.box = interval_box(errors.colwise().minCoeff().transpose(), errors.colwise().maxCoeff().transpose());
    return p;
}

inline PolicySpec percentile_policy(const Mat& errors, double p_lo, double p_hi) {
    if (errors.rows() == 0) throw EmptyDatasetError("no training errors");
    if (!(p_lo >= 0.0 && p_hi <= 100.0 && p_lo < p_hi)) throw InvalidArgument("percentile bounds need 0 <= lo < hi <= 100");
    Vec lo(errors.cols()), hi(errors.cols());
    for (Eigen::Index j = 0; j < errors.cols(); ++j) {
        std::vector<double> col(errors.col(j).data(), errors.col(j).data() + errors.rows());
        lo[j] = percentile(col, p_lo);
        hi[j] = percentile(col, p_hi);
    }
    PolicySpec p;
    p.kind = PolicyKind::percentile;
    p.p_lo = p_lo;
    p.p_hi = p_hi;
    p.box = interval_box(lo, hi);
    return p;
}

inline PolicySpec fixed_box_policy(UncertaintyBox box) {
    PolicySpec p;
    p.kind = PolicyKind::fixed_box;
    p.label = "box";
    p.box = std::move(box);
    return p;
}

inline PolicySpec prescriptive_policy(PrescriptionWeights w, std::string label = "prescriptive") {
    PolicySpec p;
    p.kind = PolicyKind::prescriptive;
    p.label = std::move(label);
    p.weights = std::move(w);
    return p;
}

inline PolicySpec build_baseline(PolicyKind kind, const Dataset& ds, double p_lo = 10.0, double p_hi = 90.0) {
    const Mat errors = ds.train_errors();
    switch (kind) {
        case PolicyKind::full_support: return full_support_policy(errors);
        case PolicyKind::percentile: {
            auto p = percentile_policy(errors, p_lo, p_hi);
            p.label = "perc";
            return p;
        }
        default: throw InvalidArgument("build_baseline: only full_support and percentile are baselines");
    }
}

// Empirical VaR and CVaR of a loss sample at level gamma: tau* is the
// ceil((1 - gamma) N)-th smallest value, CVaR = tau* + sum[m - tau*]^+ / (gamma N),
// the exact minimum of tau + E[m - tau]^+ / gamma over tau.
struct TailStats {
    double var = 0.0;
    double cvar = 0.0;
};

inline TailStats tail_stats(const std::vector<double>& m, double gamma) {
    if (m.empty()) throw EmptyDatasetError("tail statistics of an empty sample");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
    std::vector<double> s = m;
    std::sort(s.begin(), s.end());
    const double N = static_cast<double>(s.size());
    const auto j = static_cast<std::size_t>(std::clamp(std::ceil((1.0 - gamma) * N - 1e-9), 1.0, N));
    TailStats t;
    t.var = s[j - 1];
    double excess = 0.0;
    for (double v : s) excess += std::max(0.0, v - t.var);
    t.cvar = t.var + excess / (gamma * N);
    return t;
}

inline double empirical_cvar(const std::vector<double>& m, double gamma) { return tail_stats(m, gamma).cvar; }

struct SampleRecord {
    std::size_t index = 0;
    bool failed = false;
    std::string error;
    Vec mu, sigma;
    double first_stage = 0.0;
    double exceedance = 0.0;
    double total = 0.0;
    double margin = 0.0;
    std::string status;
};

struct EvalReport {
    std::string policy;
    double gamma = 0.0;
    std::size_t n = 0;
    std::size_t n_failed = 0;
    double mean_first_stage = 0.0;
    double mean_exceedance = 0.0;
    double mean_total = 0.0;
    double prob_exceedance = 0.0;
    double var = 0.0;
    double cvar = 0.0;
    double q1 = 0.0, median = 0.0, q3 = 0.0;  // of total cost
    Vec mean_sigma, mean_mu;
    std::vector<SampleRecord> samples;
};

inline EvalReport evaluate(const GridCase& c, const FlowMaps& maps, const PolicySpec& policy,
                           const std::vector<Sample>& test, double gamma, const SolverConfig& solver = {},
                           int workers = 1) {
    if (test.empty()) throw EmptyDatasetError("evaluate: empty test split");
    const Vec c_viol = solver.violation_vector(static_cast<Eigen::Index>(c.num_robust_rows()));

    EvalReport rep;
    rep.policy = policy.label;
    rep.gamma = gamma;
    rep.n = test.size();
    rep.samples.resize(test.size());

    auto work = [&](std::size_t i) {
        SampleRecord& r = rep.samples[i];
        r.index = i;
        const auto box = policy.box_for(test[i].zeta);
        r.mu = box.mu;
        r.sigma = box.sigma;
        try {
            const auto sol = solve_robust_opf(c, maps, test[i].zeta, box, solver);
            r.first_stage = sol.cost.dot(sol.x);
            r.exceedance = exceedance_cost(sol, test[i].xi, c_viol);
            r.total = r.first_stage + r.exceedance;
            r.margin = constraint_margin(sol, test[i].xi);
            r.status = to_string(sol.status);
        } catch (const SolverFailure& e) {
            r.failed = true;
            r.error = e.what();
            r.status = "failed";
        }
    };
    const auto W = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), test.size());
    if (W <= 1) {
        for (std::size_t i = 0; i < test.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < W; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < test.size(); i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<double> totals, margins;
    const Eigen::Index D = test.front().xi.size();
    rep.mean_sigma = Vec::Zero(D);
    rep.mean_mu = Vec::Zero(D);
    for (const auto& r : rep.samples) {  // ordered aggregation
        if (r.failed) {
            ++rep.n_failed;
            continue;
        }
        rep.mean_first_stage += r.first_stage;
        rep.mean_exceedance += r.exceedance;
        if (r.margin > 0.0) rep.prob_exceedance += 1.0;
        rep.mean_sigma += r.sigma;
        rep.mean_mu += r.mu;
        totals.push_back(r.total);
        margins.push_back(r.margin);
    }
    const std::size_t ok = totals.size();
    if (ok == 0) throw SolverFailure("evaluate: every test sample failed");
    const double inv = 1.0 / static_cast<double>(ok);
    rep.mean_first_stage *= inv;
    rep.mean_exceedance *= inv;
    rep.mean_total = rep.mean_first_stage + rep.mean_exceedance;
    rep.prob_exceedance *= inv;
    rep.mean_sigma *= inv;
    rep.mean_mu *= inv;
    const TailStats ts = tail_stats(margins, gamma);
    rep.var = ts.var;
    rep.cvar = ts.cvar;
    rep.q1 = percentile(totals, 25.0);
    rep.median = percentile(totals, 50.0);
    rep.q3 = percentile(totals, 75.0);
    return rep;
}

}  // namespace prorobust
