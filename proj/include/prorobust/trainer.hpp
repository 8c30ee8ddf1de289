#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "prorobust/diff_layer.hpp"
#include "prorobust/errors.hpp"
#include "prorobust/losses.hpp"
#include "prorobust/prescriptor.hpp"
#include "prorobust/robust_opf.hpp"
#include "prorobust/scenario.hpp"

namespace prorobust {

enum class TrainMode { coe, poe };
enum class SamplingMode { p_all, p_cond, p_bins, single };

inline const char* to_string(TrainMode m) { return m == TrainMode::coe ? "coe" : "poe"; }

inline const char* to_string(SamplingMode m) {
    switch (m) {
        case SamplingMode::p_all: return "p_all";
        case SamplingMode::p_cond: return "p_cond";
        case SamplingMode::p_bins: return "p_bins";
        case SamplingMode::single: return "single";
    }
    return "unknown";
}

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "coe") return TrainMode::coe;
    if (s == "poe") return TrainMode::poe;
    throw ConfigError("unknown training mode '" + s + "'");
}

inline SamplingMode parse_sampling_mode(const std::string& s) {
    if (s == "p_all") return SamplingMode::p_all;
    if (s == "p_cond") return SamplingMode::p_cond;
    if (s == "p_bins") return SamplingMode::p_bins;
    if (s == "single") return SamplingMode::single;
    throw ConfigError("unknown sampling mode '" + s + "'");
}

struct TrainingConfig {
    TrainMode mode = TrainMode::coe;
    SamplingMode sampling = SamplingMode::p_all;
    int epochs = 100;
    int batch = 20;
    double rho = 1e-6;
    double rho_tau = -1.0;  // negative: same as rho
    double gamma = 0.01;
    double kappa = 0.1;
    double lambda_init = 100.0;
    double tau_init = 0.0;
    std::size_t n_cond_samples = 200;
    std::size_t n_bins = 10;
    BinKey bin_key = BinKey::total_forecast;
    Eigen::Index bin_farm = 0;
    std::uint64_t seed = 1;
    double max_flagged_fraction = 0.2;
    int workers = 1;

    static TrainingConfig defaults(TrainMode m) {
        TrainingConfig c;
        c.mode = m;
        c.rho = m == TrainMode::coe ? 1e-6 : 1e-5;
        return c;
    }

    double tau_rate() const { return rho_tau < 0.0 ? rho : rho_tau; }

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be at least 1");
        if (batch < 1) throw ConfigError("batch size must be at least 1");
        if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("learning rate must be nonnegative");
        if (mode == TrainMode::poe) {
            if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
            if (!(kappa >= 0.0)) throw ConfigError("kappa must be nonnegative");
        }
        if (sampling == SamplingMode::p_cond && n_cond_samples == 0) throw ConfigError("n_cond_samples must be positive");
        if (sampling == SamplingMode::p_bins && n_bins == 0) throw ConfigError("n_bins must be positive");
        if (!(max_flagged_fraction >= 0.0 && max_flagged_fraction <= 1.0))
            throw ConfigError("max_flagged_fraction must lie in [0, 1]");
        if (workers < 1) throw ConfigError("workers must be at least 1");
    }
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double first_stage = 0.0;
    double exceedance = 0.0;  // coe: mean penalty over the step batches
    double H = 0.0;           // poe
    double lambda = 0.0;      // poe, after the epoch update
    double tau = 0.0;         // poe, after the epoch update
    double exceed_fraction = 0.0;
    double grad_norm = 0.0;
    int flagged = 0;
    int failed = 0;
};

struct TrainingTrace {
    std::vector<EpochRecord> epochs;
};

struct TrainingResult {
    PrescriptionWeights weights;
    double tau = 0.0;
    double lambda = 0.0;
    TrainingTrace trace;
};

// Loss and weight gradient of one inner step for fixed (w, tau, lambda).
struct StepResult {
    bool failed = false;
    bool flagged = false;
    double loss = 0.0, first_stage = 0.0, exceedance = 0.0, H = 0.0, exceed_fraction = 0.0;
    Vec grad_w;
    double grad_tau = 0.0;
};

class Trainer {
public:
    Trainer(const GridCase& c, const FlowMaps& maps, const Dataset& ds, TrainingConfig cfg, SolverConfig solver = {},
            DiffConfig diff = {})
        : case_(c), maps_(maps), ds_(ds), cfg_(std::move(cfg)), solver_(std::move(solver)), diff_(diff) {
        cfg_.validate();
        if (ds_.train.empty()) throw EmptyDatasetError("training split is empty");
        pooled_ = ds_.train_errors();
        if (cfg_.sampling == SamplingMode::p_bins) bins_ = bin_errors(ds_, cfg_.n_bins, cfg_.bin_key, cfg_.bin_farm);
        c_viol_ = solver_.violation_vector(static_cast<Eigen::Index>(c.num_robust_rows()));
    }

    const TrainingConfig& config() const { return cfg_; }
    const ErrorBins& bins() const { return bins_; }

    // Error set X^z for training sample `index`.
    Mat error_set(std::size_t index, int epoch, int step) const {
        const auto& u = ds_.train.at(index).zeta.u;
        switch (cfg_.sampling) {
            case SamplingMode::p_all:
            case SamplingMode::single: return pooled_;
            case SamplingMode::p_bins: return bins_.lookup(u);
            case SamplingMode::p_cond: {
                Rng rng = make_rng(cfg_.seed, {streams::cond_sampling, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(step)});
                return sample_errors_conditional(u, cfg_.n_cond_samples, ds_.config.rel_std, ds_.config.phi,
                                                 ds_.wind_capacity, rng)
                    .xi;
            }
        }
        return pooled_;
    }

    std::size_t sample_index(int epoch, int step) const {
        Rng rng = make_rng(cfg_.seed, {streams::train, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step)});
        std::uniform_int_distribution<std::size_t> pick(0, ds_.train.size() - 1);
        return pick(rng);
    }

    StepResult step(const PrescriptionWeights& w, double tau, double lambda, std::size_t index, const Mat& xi) const {
        StepResult r;
        r.grad_w = Vec::Zero(w.num_params());
        const ContextSample& zeta = ds_.train.at(index).zeta;
        const Vec context = zeta.stacked();
        const Prescription pr = prescribe(w, context);
        AssembledQp prob;
        DispatchSolution sol;
        try {
            prob = assemble_robust_opf(case_, maps_, zeta, pr.box, solver_);
            sol = solve_assembled(prob, maps_, solver_);
        } catch (const SolverFailure&) {
            r.failed = true;
            return r;
        }

        Vec grad_x;
        if (cfg_.mode == TrainMode::coe) {
            const CoeLoss l = loss_coe(sol, xi, c_viol_);
            r.loss = l.value;
            r.first_stage = l.first_stage;
            r.exceedance = l.exceedance;
            grad_x = l.grad_x;
        } else {
            const PoeLoss l = loss_poe(sol, xi, tau, lambda, cfg_.gamma);
            r.loss = l.value;
            r.first_stage = l.first_stage;
            r.H = l.H;
            r.exceed_fraction = l.exceed_fraction;
            r.grad_tau = l.grad_tau;
            grad_x = l.grad_x;
        }

        // sigma columns of clamped farms meet a zero Jacobian in the chain rule
        std::vector<bool> needed(2 * pr.clamped.size(), true);
        for (std::size_t j = 0; j < pr.clamped.size(); ++j) needed[pr.clamped.size() + j] = !pr.clamped[j];
        const SolutionSensitivity sens = differentiate_solution(sol, prob, diff_, needed);
        if (sens.flagged) {
            r.flagged = true;
            r.grad_tau = 0.0;
            return r;
        }
        const Vec g_theta = sens.stacked().transpose() * grad_x;
        r.grad_w = prescribe_jacobian(w, context, pr.clamped).transpose() * g_theta;
        if (cfg_.sampling == SamplingMode::single) {
            r.grad_w.head(w.offset_m_mu()).setZero();
            r.grad_w.segment(w.offset_M_sigma(), w.offset_m_sigma() - w.offset_M_sigma()).setZero();
        }
        return r;
    }

    // on_epoch sees each record together with the weights after that epoch.
    TrainingResult run(const PrescriptionWeights& init,
                       const std::function<void(const EpochRecord&, const TrainingResult&)>& on_epoch = {}) const {
        TrainingResult res;
        res.weights = init;
        res.tau = cfg_.tau_init;
        res.lambda = cfg_.lambda_init;
        if (cfg_.sampling == SamplingMode::single) {
            res.weights.M_mu.setZero();
            res.weights.M_sigma.setZero();
        }

        const auto B = static_cast<std::size_t>(cfg_.batch);
        std::vector<StepResult> steps(B);
        for (int v = 1; v <= cfg_.epochs; ++v) {
            const PrescriptionWeights w = res.weights;
            const double tau = res.tau, lambda = res.lambda;
            auto work = [&](std::size_t z) {
                const int zi = static_cast<int>(z) + 1;
                const std::size_t idx = sample_index(v, zi);
                steps[z] = step(w, tau, lambda, idx, error_set(idx, v, zi));
            };
            run_parallel(B, work);

            EpochRecord rec;
            rec.epoch = v;
            Vec g = Vec::Zero(w.num_params());
            double g_tau = 0.0;
            int used = 0;
            for (const auto& s : steps) {  // ordered reduction
                if (s.failed) {
                    ++rec.failed;
                    continue;
                }
                if (s.flagged) ++rec.flagged;
                ++used;
                g += s.grad_w;
                g_tau += s.grad_tau;
                rec.loss += s.loss;
                rec.first_stage += s.first_stage;
                rec.exceedance += s.exceedance;
                rec.H += s.H;
                rec.exceed_fraction += s.exceed_fraction;
            }
            if (static_cast<double>(rec.failed + rec.flagged) > cfg_.max_flagged_fraction * static_cast<double>(B))
                throw SolverFailure("epoch " + std::to_string(v) + ": " + std::to_string(rec.failed) + " failed and " +
                                    std::to_string(rec.flagged) + " flagged of " + std::to_string(B) + " steps");
            g /= static_cast<double>(B);
            g_tau /= static_cast<double>(B);
            if (used > 0) {
                const double inv = 1.0 / used;
                rec.loss *= inv;
                rec.first_stage *= inv;
                rec.exceedance *= inv;
                rec.H *= inv;
                rec.exceed_fraction *= inv;
            }
            rec.grad_norm = cfg_.mode == TrainMode::poe ? std::sqrt(g.squaredNorm() + g_tau * g_tau) : g.norm();

            Vec flat = w.flat() - cfg_.rho * g;
            res.weights.set_flat(flat);
            if (cfg_.mode == TrainMode::poe) {
                res.tau = tau - cfg_.tau_rate() * g_tau;
                res.lambda = lambda + cfg_.kappa * rec.H;
            }
            rec.tau = res.tau;
            rec.lambda = res.lambda;
            if (!res.weights.finite() || !std::isfinite(rec.loss))
                throw SolverFailure("training diverged at epoch " + std::to_string(v));
            res.trace.epochs.push_back(rec);
            if (on_epoch) on_epoch(rec, res);
        }
        return res;
    }

private:
    void run_parallel(std::size_t n, const std::function<void(std::size_t)>& fn) const {
        const auto W = std::min<std::size_t>(static_cast<std::size_t>(cfg_.workers), n);
        if (W <= 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(W);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < W; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    const GridCase& case_;
    const FlowMaps& maps_;
    const Dataset& ds_;
    TrainingConfig cfg_;
    SolverConfig solver_;
    DiffConfig diff_;
    Mat pooled_;
    ErrorBins bins_;
    Vec c_viol_;
};

inline TrainingResult train(const GridCase& c, const FlowMaps& maps, const Dataset& ds, const TrainingConfig& cfg,
                            const SolverConfig& solver = {}, const PrescriptionWeights* init = nullptr) {
    Trainer t(c, maps, ds, cfg, solver);
    return t.run(init ? *init : init_weights(ds));
}

}  // namespace prorobust
