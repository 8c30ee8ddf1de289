#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/Sparse>

#include <limits>
#include <vector>

#include "prorobust/qp.hpp"
#include "prorobust/robust_opf.hpp"

namespace prorobust {

struct DiffConfig {
    // Row i is active if its slack is below `active_slack` or its
    // multiplier, divided by objective_scale(q), exceeds
    // `active_multiplier`. Rows meeting either test count as active.
    double active_slack = 1e-7;
    double active_multiplier = 1e-7;
    // Samples whose differentiated KKT system leaves a residual above
    // this are flagged. Stationarity and constraint rows are measured
    // separately, each relative to its own right-hand side.
    double consistency_tolerance = 1e-6;
    // Samples are also flagged when the KKT matrix, after dropping exactly
    // dependent active rows, has a condition number above this. Near a kink
    // the derivative is exact but holds only within about 1/condition of the
    // point, which is useless for a gradient step. Zero disables the check.
    double max_condition = 1e6;
    // Rank cut for the dependent-row test, relative to the largest pivot.
    double rank_tolerance = 1e-10;
    int refinement_steps = 20;
    double kkt_regularization = 1e-10;
};

struct SolutionSensitivity {
    Eigen::MatrixXd d_x_d_mu;     // n x D, unscaled decision vector
    Eigen::MatrixXd d_x_d_sigma;  // n x D
    std::vector<Eigen::Index> active_set;
    double residual = 0.0;   // infinity norm left in the differentiated KKT system
    double condition = 0.0;  // of the KKT matrix on independent active rows
    bool flagged = false;    // inconsistent or ill-conditioned: least-squares values

    // Column p of the stacked (mu, sigma) Jacobian.
    Eigen::MatrixXd stacked() const {
        Eigen::MatrixXd J(d_x_d_mu.rows(), d_x_d_mu.cols() + d_x_d_sigma.cols());
        J << d_x_d_mu, d_x_d_sigma;
        return J;
    }
};

namespace detail {

// Condition number of [Q C_r'; C_r 0], where C_r keeps a maximal set of
// linearly independent rows of C. Dense; the systems here are small.
inline double reduced_kkt_condition(const SpMat& Q, const SpMat& C, double rank_tolerance) {
    const Eigen::MatrixXd Cd(C);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Cd.transpose());
    qr.setThreshold(rank_tolerance);
    const Eigen::Index n = Q.rows(), r = qr.rank();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + r, n + r);
    K.topLeftCorner(n, n) = Eigen::MatrixXd(Q);
    for (Eigen::Index k = 0; k < r; ++k) {
        const Eigen::Index row = qr.colsPermutation().indices()[k];
        K.block(n + k, 0, 1, n) = Cd.row(row);
        K.block(0, n + k, n, 1) = Cd.row(row).transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
    const double lo = ev.minCoeff();
    return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline std::vector<Eigen::Index> active_rows(const AssembledQp& prob, const DispatchSolution& sol,
                                             const DiffConfig& cfg = {}) {
    const auto& qp = prob.qp;
    const double obj_scale = objective_scale(qp.q);
    const Eigen::VectorXd slack = qp.h - qp.G * sol.internal_x;
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < qp.G.rows(); ++i)
        if (slack[i] < cfg.active_slack || sol.duals_ineq[i] / obj_scale > cfg.active_multiplier) active.push_back(i);
    return active;
}

// Implicit differentiation of the KKT system of the assembled QP at `sol`:
//   Q dx + E' dnu + G_A' dlam_A = -dG_p' lam
//   E dx = 0
//   G_A dx = dh_A - dG_A x
// for every parameter p, with inactive rows held inactive. Columns with
// `needed[p]` false are left at zero and do not count toward the flag; an
// empty mask means every column is needed.
inline SolutionSensitivity differentiate_solution(const DispatchSolution& sol, const AssembledQp& prob,
                                                  const DiffConfig& cfg = {}, const std::vector<bool>& needed = {}) {
    const auto& qp = prob.qp;
    const Eigen::Index n = qp.num_vars(), me = qp.E.rows();
    const auto P = static_cast<Eigen::Index>(prob.dG.size());
    const Eigen::Index D = P / 2;
    if (sol.internal_x.size() != n || sol.duals_ineq.size() != qp.G.rows())
        throw DimensionError("differentiate_solution: solution does not match the assembled problem");
    if (!needed.empty() && static_cast<Eigen::Index>(needed.size()) != P)
        throw DimensionError("differentiate_solution: parameter mask has wrong length");

    SolutionSensitivity out;
    out.active_set = active_rows(prob, sol, cfg);
    const auto ma = static_cast<Eigen::Index>(out.active_set.size());

    Eigen::VectorXd lam = Eigen::VectorXd::Zero(qp.G.rows());
    for (auto i : out.active_set) lam[i] = sol.duals_ineq[i];
    const Eigen::VectorXd& x = sol.internal_x;

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + me + ma, P);
    bool any = false;
    for (Eigen::Index p = 0; p < P; ++p) {
        if (!needed.empty() && !needed[static_cast<std::size_t>(p)]) continue;
        const auto& dG = prob.dG[static_cast<std::size_t>(p)];
        const auto& dh = prob.dh[static_cast<std::size_t>(p)];
        rhs.col(p).head(n) = -(dG.transpose() * lam);
        const Eigen::VectorXd row_shift = dh - dG * x;
        for (Eigen::Index a = 0; a < ma; ++a) rhs(n + me + a, p) = row_shift[out.active_set[static_cast<std::size_t>(a)]];
        any = any || rhs.col(p).cwiseAbs().maxCoeff() > 0.0;
    }

    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, P);
    if (any) {
        KktSolver kkt;
        const SpMat C = detail::stack_rows(qp.E, detail::select_rows(qp.G, out.active_set));
        if (!kkt.factor(qp.Q, C, cfg.kkt_regularization))
            throw SolverFailure("differentiate_solution: KKT factorization failed");
        const Eigen::MatrixXd z = kkt.solve(rhs, cfg.refinement_steps);
        out.residual = kkt.residual();
        const Eigen::MatrixXd r = rhs - kkt.matrix() * z;
        const Eigen::Index nc = me + ma;
        const auto off = [&](const Eigen::MatrixXd& res, const Eigen::MatrixXd& b) {
            return res.size() && res.lpNorm<Eigen::Infinity>() > cfg.consistency_tolerance * (1.0 + b.lpNorm<Eigen::Infinity>());
        };
        out.flagged = !z.allFinite() || off(r.topRows(n), rhs.topRows(n)) || off(r.bottomRows(nc), rhs.bottomRows(nc));
        if (cfg.max_condition > 0.0) {
            out.condition = detail::reduced_kkt_condition(qp.Q, C, cfg.rank_tolerance);
            out.flagged = out.flagged || out.condition > cfg.max_condition;
        }
        if (z.allFinite()) dx = z.topRows(n);
    }

    dx = prob.unscale.asDiagonal() * dx;
    out.d_x_d_mu = dx.leftCols(D);
    out.d_x_d_sigma = dx.rightCols(D);
    return out;
}

// Sensitivity of the optimal QP objective from the multipliers alone:
// d f*/d theta_p = lam' (dG_p x - dh_p).
inline Eigen::VectorXd dual_objective_sensitivity(const DispatchSolution& sol, const AssembledQp& prob) {
    const auto P = static_cast<Eigen::Index>(prob.dG.size());
    Eigen::VectorXd g(P);
    for (Eigen::Index p = 0; p < P; ++p) {
        const auto& dG = prob.dG[static_cast<std::size_t>(p)];
        const auto& dh = prob.dh[static_cast<std::size_t>(p)];
        g[p] = sol.duals_ineq.dot(dG * sol.internal_x - dh);
    }
    return g;
}

// The same quantity through the layer: (Qx + q)' dx/dtheta in solver coordinates.
inline Eigen::VectorXd layer_objective_sensitivity(const DispatchSolution& sol, const AssembledQp& prob,
                                                   const SolutionSensitivity& sens) {
    const Eigen::VectorXd grad_internal = prob.qp.Q * sol.internal_x + prob.qp.q;
    // dx_internal = dx / unscale
    const Eigen::VectorXd grad = grad_internal.cwiseQuotient(prob.unscale);
    return sens.stacked().transpose() * grad;
}

}  // namespace prorobust
