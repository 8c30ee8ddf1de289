#pragma once

#include <Eigen/Dense>

#include <algorithm>

#include "prorobust/errors.hpp"
#include "prorobust/robust_opf.hpp"

namespace prorobust {

struct CoeLoss {
    double value = 0.0;
    double first_stage = 0.0;  // c'x
    double exceedance = 0.0;   // mean penalty over the batch
    Vec grad_x;                // w.r.t. the unscaled decision vector
};

// L = c'x + 1/N sum_i sum_k c_k [a_k' xi_i + b_k]^+ with the physical b.
inline CoeLoss loss_coe(const DispatchSolution& sol, const Mat& xi, const Vec& c_viol) {
    const auto N = xi.rows(), K = sol.layout.K;
    if (N == 0) throw InvalidArgument("loss_coe: empty error batch");
    if (xi.cols() != sol.layout.D) throw DimensionError("loss_coe: error batch has wrong dimension");
    if (c_viol.size() != K) throw DimensionError("loss_coe: c_viol has wrong dimension");
    const CompactRows rows = sol.rows();

    CoeLoss out;
    out.first_stage = sol.cost.dot(sol.x);
    out.grad_x = sol.cost;
    const double inv_n = 1.0 / static_cast<double>(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vec xi_i = xi.row(i).transpose();
        const Vec m = rows.a * xi_i + rows.b;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (m[k] <= 0.0) continue;
            out.exceedance += inv_n * c_viol[k] * m[k];
            sol.add_row_gradient(k, xi_i, inv_n * c_viol[k], out.grad_x);
        }
    }
    out.value = out.first_stage + out.exceedance;
    return out;
}

struct PoeLoss {
    double value = 0.0;
    double first_stage = 0.0;
    double H = 0.0;              // empirical CVaR surrogate
    double dH_dtau = 0.0;
    double exceed_fraction = 0.0;  // share of samples with margin > 0
    Vec grad_x;                  // dL/dx
    double grad_tau = 0.0;       // dL/dtau = lambda dH/dtau
};

// H = 1/N sum_i ( [max_k(a_k' xi_i + b_k) - tau]^+ / gamma + tau ),
// L = c'x + lambda H.
inline PoeLoss loss_poe(const DispatchSolution& sol, const Mat& xi, double tau, double lambda, double gamma) {
    const auto N = xi.rows();
    if (N == 0) throw InvalidArgument("loss_poe: empty error batch");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("loss_poe: gamma must lie in (0, 1)");
    if (xi.cols() != sol.layout.D) throw DimensionError("loss_poe: error batch has wrong dimension");
    const CompactRows rows = sol.rows();

    PoeLoss out;
    out.first_stage = sol.cost.dot(sol.x);
    Vec grad_h = Vec::Zero(sol.x.size());
    const double inv_n = 1.0 / static_cast<double>(N);
    double above = 0.0, tail = 0.0, exceed = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vec xi_i = xi.row(i).transpose();
        Eigen::Index k = 0;
        const double m = (rows.a * xi_i + rows.b).maxCoeff(&k);
        if (m > 0.0) exceed += 1.0;
        if (m - tau <= 0.0) continue;
        above += 1.0;
        tail += m - tau;
        sol.add_row_gradient(k, xi_i, inv_n / gamma, grad_h);
    }
    out.H = tau + inv_n * tail / gamma;
    out.dH_dtau = 1.0 - inv_n * above / gamma;
    out.exceed_fraction = inv_n * exceed;
    out.value = out.first_stage + lambda * out.H;
    out.grad_x = sol.cost + lambda * grad_h;
    out.grad_tau = lambda * out.dH_dtau;
    return out;
}

}  // namespace prorobust
