#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "prorobust/errors.hpp"
#include "prorobust/grid.hpp"
#include "prorobust/scenario.hpp"
#include "prorobust/types.hpp"

namespace prorobust {

// theta = (M_mu zeta + m_mu, max(0, M_sigma zeta + m_sigma)).
struct PrescriptionWeights {
    Mat M_mu;     // D x Z
    Vec m_mu;     // D
    Mat M_sigma;  // D x Z
    Vec m_sigma;  // D

    PrescriptionWeights() = default;
    PrescriptionWeights(Eigen::Index D, Eigen::Index Z)
        : M_mu(Mat::Zero(D, Z)), m_mu(Vec::Zero(D)), M_sigma(Mat::Zero(D, Z)), m_sigma(Vec::Zero(D)) {}

    Eigen::Index dim_theta() const { return m_mu.size(); }
    Eigen::Index dim_context() const { return M_mu.cols(); }
    Eigen::Index num_params() const { return 2 * dim_theta() * (dim_context() + 1); }

    // Parameter offsets in the flat vector (M_mu row-major, m_mu, M_sigma, m_sigma).
    Eigen::Index offset_m_mu() const { return dim_theta() * dim_context(); }
    Eigen::Index offset_M_sigma() const { return offset_m_mu() + dim_theta(); }
    Eigen::Index offset_m_sigma() const { return offset_M_sigma() + dim_theta() * dim_context(); }

    Vec flat() const {
        const auto D = dim_theta(), Z = dim_context();
        Vec w(num_params());
        for (Eigen::Index j = 0; j < D; ++j) w.segment(j * Z, Z) = M_mu.row(j).transpose();
        w.segment(offset_m_mu(), D) = m_mu;
        for (Eigen::Index j = 0; j < D; ++j) w.segment(offset_M_sigma() + j * Z, Z) = M_sigma.row(j).transpose();
        w.segment(offset_m_sigma(), D) = m_sigma;
        return w;
    }

    void set_flat(const Vec& w) {
        if (w.size() != num_params()) throw DimensionError("weight vector has wrong length");
        const auto D = dim_theta(), Z = dim_context();
        for (Eigen::Index j = 0; j < D; ++j) M_mu.row(j) = w.segment(j * Z, Z).transpose();
        m_mu = w.segment(offset_m_mu(), D);
        for (Eigen::Index j = 0; j < D; ++j) M_sigma.row(j) = w.segment(offset_M_sigma() + j * Z, Z).transpose();
        m_sigma = w.segment(offset_m_sigma(), D);
    }

    bool finite() const { return M_mu.allFinite() && m_mu.allFinite() && M_sigma.allFinite() && m_sigma.allFinite(); }
};

struct Prescription {
    UncertaintyBox box;
    std::vector<bool> clamped;  // sigma_j was cut at zero
};

inline Prescription prescribe(const PrescriptionWeights& w, const Vec& context) {
    if (context.size() != w.dim_context() || w.M_sigma.cols() != w.dim_context() || w.m_sigma.size() != w.dim_theta() ||
        w.M_mu.rows() != w.dim_theta() || w.M_sigma.rows() != w.dim_theta())
        throw DimensionError("prescribe: weights and context do not match");
    Prescription p;
    p.box.mu = w.M_mu * context + w.m_mu;
    const Vec raw = w.M_sigma * context + w.m_sigma;
    p.box.sigma = raw.cwiseMax(0.0);
    p.clamped.resize(static_cast<std::size_t>(raw.size()));
    for (Eigen::Index j = 0; j < raw.size(); ++j) p.clamped[static_cast<std::size_t>(j)] = raw[j] < 0.0;
    return p;
}

inline Prescription prescribe(const PrescriptionWeights& w, const ContextSample& zeta) {
    return prescribe(w, zeta.stacked());
}

// d theta / d w, (2D) x num_params, with rows ordered (mu, sigma).
inline Mat prescribe_jacobian(const PrescriptionWeights& w, const Vec& context, const std::vector<bool>& clamped) {
    const auto D = w.dim_theta(), Z = w.dim_context();
    if (context.size() != Z) throw DimensionError("prescribe_jacobian: context has wrong dimension");
    if (static_cast<Eigen::Index>(clamped.size()) != D) throw DimensionError("prescribe_jacobian: mask has wrong length");
    Mat J = Mat::Zero(2 * D, w.num_params());
    for (Eigen::Index j = 0; j < D; ++j) {
        J.row(j).segment(j * Z, Z) = context.transpose();
        J(j, w.offset_m_mu() + j) = 1.0;
        if (clamped[static_cast<std::size_t>(j)]) continue;
        J.row(D + j).segment(w.offset_M_sigma() + j * Z, Z) = context.transpose();
        J(D + j, w.offset_m_sigma() + j) = 1.0;
    }
    return J;
}

// Population standard deviation of each column.
inline Vec column_std(const Mat& x) {
    if (x.rows() == 0) throw EmptyDatasetError("no samples");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().transpose();
}

// Zero map except m_sigma = 2 std of the training errors.
inline PrescriptionWeights init_weights(const Dataset& ds) {
    if (ds.train.empty()) throw EmptyDatasetError("init_weights: empty training split");
    const Eigen::Index D = ds.train.front().xi.size();
    const Eigen::Index Z = ds.train.front().zeta.stacked().size();
    PrescriptionWeights w(D, Z);
    w.m_sigma = 2.0 * column_std(ds.train_errors());
    return w;
}

}  // namespace prorobust
