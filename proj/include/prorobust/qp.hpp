#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "prorobust/errors.hpp"

namespace prorobust {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// Convex QP in the form
//   minimize  1/2 x'Qx + q'x   subject to  Ex = e,  Gx <= h.
struct QpProblem {
    SpMat Q;
    Eigen::VectorXd q;
    SpMat E;
    Eigen::VectorXd e;
    SpMat G;
    Eigen::VectorXd h;

    Eigen::Index num_vars() const { return q.size(); }
    double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(Q * x) + q.dot(x); }
};

struct QpSettings {
    double tolerance = 1e-11;
    // A run that stalls after reaching this level is reported as
    // solved_inaccurate instead of failing.
    double acceptable_tolerance = 1e-7;
    int max_iterations = 100;
    // Dual-block regularization of the quasi-definite factorization.
    double kkt_regularization = 1e-10;
    int refinement_steps = 8;
    // Equality-QP re-solve on the identified active set.
    bool polish = true;
    int polish_rounds = 25;
    // A polished point whose KKT residuals, relative to the data norms,
    // are below this counts as solved even if the interior run stalled.
    double polish_tolerance = 1e-8;
    // Stop once this many iterations pass without a new best residual.
    int stall_iterations = 15;
};

enum class QpStatus { solved, solved_inaccurate, max_iterations, numerical_error };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::solved: return "solved";
        case QpStatus::solved_inaccurate: return "solved_inaccurate";
        case QpStatus::max_iterations: return "max_iterations";
        case QpStatus::numerical_error: return "numerical_error";
    }
    return "unknown";
}

struct QpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd nu;      // equality multipliers
    Eigen::VectorXd lambda;  // inequality multipliers, >= 0
    Eigen::VectorXd slack;   // h - Gx, >= 0
    QpStatus status = QpStatus::numerical_error;
    int iterations = 0;
    bool polished = false;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double complementarity = 0.0;

    bool ok() const { return status == QpStatus::solved || status == QpStatus::solved_inaccurate; }
};

// Solves the saddle-point system
//   [ H   C' ] [a]   [r1]
//   [ C   0  ] [b] = [r2]
// for positive definite H through an LDL' factorization of the
// quasi-definite matrix with -delta*I in the lower block, followed by
// iterative refinement against the unregularized system. Rank-deficient C
// is tolerated: the refinement converges on the consistent part and
// `residual()` reports what is left.
class KktSolver {
public:
    KktSolver() = default;

    bool factor(const SpMat& H, const SpMat& C, double delta) {
        n_ = H.rows();
        m_ = C.rows();
        Triplets t;
        t.reserve(static_cast<std::size_t>(H.nonZeros() + 2 * C.nonZeros() + m_));
        for (int k = 0; k < H.outerSize(); ++k)
            for (SpMat::InnerIterator it(H, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
        for (int k = 0; k < C.outerSize(); ++k)
            for (SpMat::InnerIterator it(C, k); it; ++it) {
                t.emplace_back(n_ + it.row(), it.col(), it.value());
                t.emplace_back(it.col(), n_ + it.row(), it.value());
            }
        exact_.resize(n_ + m_, n_ + m_);
        exact_.setFromTriplets(t.begin(), t.end());
        for (Eigen::Index i = 0; i < m_; ++i) t.emplace_back(n_ + i, n_ + i, -delta);
        SpMat reg(n_ + m_, n_ + m_);
        reg.setFromTriplets(t.begin(), t.end());
        ldlt_.compute(reg);
        return ldlt_.info() == Eigen::Success;
    }

    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs, int refinement_steps) {
        Eigen::MatrixXd sol = ldlt_.solve(rhs);
        for (int it = 0; it < refinement_steps; ++it) {
            Eigen::MatrixXd r = rhs - exact_ * sol;
            if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
            sol += ldlt_.solve(r);
        }
        last_residual_ = (rhs - exact_ * sol).lpNorm<Eigen::Infinity>();
        return sol;
    }

    double residual() const { return last_residual_; }
    const SpMat& matrix() const { return exact_; }

private:
    Eigen::Index n_ = 0, m_ = 0;
    SpMat exact_;
    Eigen::SimplicialLDLT<SpMat> ldlt_;
    double last_residual_ = 0.0;
};

namespace detail {

inline double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    return alpha;
}

inline SpMat stack_rows(const SpMat& top, const SpMat& bottom) {
    SpMat out(top.rows() + bottom.rows(), top.cols());
    Triplets t;
    for (int k = 0; k < top.outerSize(); ++k)
        for (SpMat::InnerIterator it(top, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < bottom.outerSize(); ++k)
        for (SpMat::InnerIterator it(bottom, k); it; ++it) t.emplace_back(top.rows() + it.row(), it.col(), it.value());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

inline SpMat select_rows(const SpMat& M, const std::vector<Eigen::Index>& rows) {
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(M.rows()), -1);
    for (std::size_t r = 0; r < rows.size(); ++r) pos[static_cast<std::size_t>(rows[r])] = static_cast<Eigen::Index>(r);
    Triplets t;
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it)
            if (pos[static_cast<std::size_t>(it.row())] >= 0) t.emplace_back(pos[static_cast<std::size_t>(it.row())], it.col(), it.value());
    SpMat out(static_cast<Eigen::Index>(rows.size()), M.cols());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

inline void fill_residuals(const QpProblem& p, QpResult& r) {
    r.objective = p.objective(r.x);
    Eigen::VectorXd rd = p.Q * r.x + p.q + p.E.transpose() * r.nu + p.G.transpose() * r.lambda;
    r.dual_residual = rd.size() ? rd.lpNorm<Eigen::Infinity>() : 0.0;
    double pr = 0.0;
    if (p.E.rows()) pr = (p.E * r.x - p.e).lpNorm<Eigen::Infinity>();
    if (p.G.rows()) pr = std::max(pr, (p.G * r.x - p.h).cwiseMax(0.0).maxCoeff());
    r.primal_residual = pr;
    r.complementarity = p.G.rows() ? (r.slack.cwiseProduct(r.lambda)).cwiseAbs().maxCoeff() : 0.0;
}

// Re-solves the equality-constrained QP on a working set seeded from the
// interior-point iterate, adding violated rows until the point is feasible.
// Variables held only by the regularization are resolved exactly here,
// which the interior iterate cannot do at cost scales of 1e4. The point
// is accepted when it is feasible and no worse than the interior one.
// Redundant working sets make the equality multipliers non-unique; the
// least-squares ones are used when nonnegative, otherwise the interior
// multipliers projected onto the stationarity conditions.
inline bool polish(const QpProblem& p, const QpSettings& s, double obj_scale, QpResult& r) {
    const Eigen::Index m = p.G.rows(), me = p.E.rows(), n = p.num_vars();
    std::vector<char> working(static_cast<std::size_t>(m), 0);
    for (Eigen::Index i = 0; i < m; ++i)
        if (r.lambda[i] / obj_scale > r.slack[i]) working[static_cast<std::size_t>(i)] = 1;

    const double scale = 1.0 + (m ? p.h.lpNorm<Eigen::Infinity>() : 0.0) + (me ? p.e.lpNorm<Eigen::Infinity>() : 0.0);
    for (int round = 0; round < s.polish_rounds; ++round) {
        std::vector<Eigen::Index> active;
        for (Eigen::Index i = 0; i < m; ++i)
            if (working[static_cast<std::size_t>(i)]) active.push_back(i);
        const auto ma = static_cast<Eigen::Index>(active.size());

        KktSolver kkt;
        if (!kkt.factor(p.Q, stack_rows(p.E, select_rows(p.G, active)), s.kkt_regularization)) return false;
        Eigen::VectorXd rhs(n + me + ma);
        rhs.head(n) = -p.q;
        rhs.segment(n, me) = p.e;
        for (Eigen::Index a = 0; a < ma; ++a) rhs[n + me + a] = p.h[active[static_cast<std::size_t>(a)]];
        const Eigen::VectorXd sol = kkt.solve(rhs, s.refinement_steps + 4);
        if (!sol.allFinite()) return false;

        const Eigen::VectorXd x = sol.head(n);
        const Eigen::VectorXd viol = p.G * x - p.h;
        bool added = false;
        for (Eigen::Index i = 0; i < m; ++i)
            if (!working[static_cast<std::size_t>(i)] && viol[i] > 1e-10 * scale) {
                working[static_cast<std::size_t>(i)] = 1;
                added = true;
            }
        if (added) continue;
        if (me && (p.E * x - p.e).lpNorm<Eigen::Infinity>() > 1e-10 * scale) return false;
        if (m && viol.maxCoeff() > 1e-9 * scale) return false;
        const double f = p.objective(x);
        if (f > r.objective + 1e-9 * (1.0 + std::abs(r.objective))) return false;

        Eigen::VectorXd duals = sol.tail(me + ma);
        if (ma && duals.tail(ma).minCoeff() < -1e-9 * obj_scale) {
            // Smallest change to the interior multipliers that restores
            // stationarity at the polished point.
            Eigen::VectorXd prior(me + ma);
            prior.head(me) = r.nu;
            for (Eigen::Index a = 0; a < ma; ++a) prior[me + a] = r.lambda[active[static_cast<std::size_t>(a)]];
            const SpMat Ct = stack_rows(p.E, select_rows(p.G, active)).transpose();
            const Eigen::VectorXd rd = p.Q * x + p.q + Ct * prior;
            SpMat I(me + ma, me + ma);
            I.setIdentity();
            KktSolver corr;
            if (!corr.factor(I, Ct, s.kkt_regularization)) return false;
            Eigen::VectorXd crhs = Eigen::VectorXd::Zero(me + ma + n);
            crhs.tail(n) = -rd;
            duals = prior + corr.solve(crhs, s.refinement_steps + 4).col(0).head(me + ma);
        }
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
        for (Eigen::Index a = 0; a < ma; ++a) lambda[active[static_cast<std::size_t>(a)]] = std::max(0.0, duals[me + a]);
        r.x = x;
        r.slack = (-viol).cwiseMax(0.0);
        r.lambda = lambda;
        r.nu = duals.head(me);
        fill_residuals(p, r);
        return true;
    }
    return false;
}

}  // namespace detail

// Divisor that brings the linear costs to order one: the geometric mean of
// the smallest and largest nonzero |q_i|. Dividing by the largest alone
// pushes ordinary prices toward the tolerance when a few penalty prices
// dominate, and the active set then blurs.
inline double objective_scale(const Eigen::VectorXd& q) {
    double lo = 0.0, hi = 0.0;
    for (double v : q) {
        const double a = std::abs(v);
        if (a == 0.0) continue;
        lo = lo == 0.0 ? a : std::min(lo, a);
        hi = std::max(hi, a);
    }
    return std::max(1.0, std::sqrt(lo * hi));
}

// Primal-dual interior point (Mehrotra predictor-corrector) on the slack
// form Gx + s = h, s >= 0. The objective is divided by objective_scale(q)
// internally; returned multipliers are in original units.
inline QpResult solve_qp(const QpProblem& p, const QpSettings& settings = {}) {
    const Eigen::Index n = p.num_vars(), me = p.E.rows(), m = p.G.rows();
    if (p.Q.rows() != n || p.Q.cols() != n || p.E.cols() != n || p.G.cols() != n || p.e.size() != me || p.h.size() != m)
        throw DimensionError("solve_qp: inconsistent problem dimensions");

    const double obj_scale = objective_scale(p.q);
    const SpMat Q = p.Q / obj_scale;
    const Eigen::VectorXd q = p.q / obj_scale;
    const SpMat Gt = p.G.transpose();
    const SpMat Et = p.E.transpose();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n), nu = Eigen::VectorXd::Zero(me);
    Eigen::VectorXd s = (p.h - p.G * x).cwiseMax(1.0), lam = Eigen::VectorXd::Ones(m);

    const double tol = settings.tolerance;
    const double q_norm = q.size() ? q.lpNorm<Eigen::Infinity>() : 0.0;
    const double h_norm = m ? p.h.lpNorm<Eigen::Infinity>() : 0.0;
    const double e_norm = me ? p.e.lpNorm<Eigen::Infinity>() : 0.0;

    QpResult res;
    res.status = QpStatus::max_iterations;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd bx, bs, bl, bnu;
    KktSolver kkt;
    int iter = 0, last_progress = 0;
    for (; iter < settings.max_iterations; ++iter) {
        Eigen::VectorXd rd = Q * x + q + Et * nu + Gt * lam;
        Eigen::VectorXd re = p.E * x - p.e;
        Eigen::VectorXd ri = p.G * x + s - p.h;
        const double mu = m ? s.dot(lam) / static_cast<double>(m) : 0.0;

        const bool dual_ok = rd.lpNorm<Eigen::Infinity>() <= tol * (1.0 + q_norm);
        const bool eq_ok = me == 0 || re.lpNorm<Eigen::Infinity>() <= tol * (1.0 + e_norm);
        const bool in_ok = m == 0 || ri.lpNorm<Eigen::Infinity>() <= tol * (1.0 + h_norm);
        if (dual_ok && eq_ok && in_ok && mu <= tol) {
            res.status = QpStatus::solved;
            break;
        }
        const double worst = std::max({rd.lpNorm<Eigen::Infinity>() / (1.0 + q_norm),
                                       me ? re.lpNorm<Eigen::Infinity>() / (1.0 + e_norm) : 0.0,
                                       m ? ri.lpNorm<Eigen::Infinity>() / (1.0 + h_norm) : 0.0, mu});
        if (std::isfinite(best) && iter - last_progress >= settings.stall_iterations) break;
        if (worst <= settings.acceptable_tolerance && worst < best) {
            last_progress = iter;
            best = worst;
            bx = x;
            bs = s;
            bl = lam;
            bnu = nu;
        }

        Eigen::VectorXd w = lam.cwiseQuotient(s);
        SpMat H = Q + Gt * w.asDiagonal() * p.G;
        if (!kkt.factor(H, p.E, settings.kkt_regularization)) {
            res.status = QpStatus::numerical_error;
            break;
        }

        auto newton = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& ds, Eigen::VectorXd& dl) {
            Eigen::VectorXd rhs(n + me);
            rhs.head(n) = -rd - Gt * (rc.cwiseQuotient(s) + w.cwiseProduct(ri));
            rhs.tail(me) = -re;
            Eigen::VectorXd sol = kkt.solve(rhs, settings.refinement_steps);
            dx = sol.head(n);
            ds = -ri - p.G * dx;
            dl = (rc - lam.cwiseProduct(ds)).cwiseQuotient(s);
            return sol.tail(me).eval();
        };

        Eigen::VectorXd dx, ds, dl;
        Eigen::VectorXd rc = -s.cwiseProduct(lam);
        newton(rc, dx, ds, dl);
        const double a_aff = std::min(detail::max_step(s, ds), detail::max_step(lam, dl));
        const double mu_aff = m ? (s + a_aff * ds).dot(lam + a_aff * dl) / static_cast<double>(m) : 0.0;
        const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

        rc = -s.cwiseProduct(lam) - ds.cwiseProduct(dl) + Eigen::VectorXd::Constant(m, sigma * mu);
        Eigen::VectorXd dnu = newton(rc, dx, ds, dl);
        if (!dx.allFinite() || !dl.allFinite()) {
            res.status = QpStatus::numerical_error;
            break;
        }
        const double alpha = std::min(1.0, 0.99 * std::min(detail::max_step(s, ds), detail::max_step(lam, dl)));
        x += alpha * dx;
        s += alpha * ds;
        lam += alpha * dl;
        nu += alpha * dnu;
    }

    res.iterations = iter;
    if (res.status != QpStatus::solved && std::isfinite(best)) {
        res.status = QpStatus::solved_inaccurate;
        x = bx;
        s = bs;
        lam = bl;
        nu = bnu;
    }
    res.x = x;
    res.nu = nu * obj_scale;
    res.lambda = lam * obj_scale;
    res.slack = s;
    detail::fill_residuals(p, res);
    if (res.ok() && settings.polish) res.polished = detail::polish(p, settings, obj_scale, res);
    if (res.polished && res.status == QpStatus::solved_inaccurate) {
        const double pt = settings.polish_tolerance;
        const double q_abs = p.q.size() ? p.q.lpNorm<Eigen::Infinity>() : 0.0;
        if (res.dual_residual <= pt * (1.0 + q_abs) && res.primal_residual <= pt * (1.0 + h_norm + e_norm) &&
            res.complementarity <= pt * (1.0 + q_abs) * (1.0 + h_norm))
            res.status = QpStatus::solved;
    }
    return res;
}

}  // namespace prorobust
