#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prorobust/grid.hpp"
#include "prorobust/qp.hpp"
#include "prorobust/types.hpp"

namespace prorobust {

struct SolverConfig {
    double regularization = 1e-4;  // weight of ||x||^2 in the objective
    // $ per p.u. for one $/MW of energy or reserve price. Negative means
    // the case's base_mva.
    double cost_base = -1.0;
    double recourse_scale = 10.0;  // A is carried internally as scale * A
    // Exceedance price per p.u. of unmet margin, applied to every robust row
    // unless `violation_costs` (length K) is given.
    double violation_cost = 20000.0;
    Eigen::VectorXd violation_costs;
    double balance_slack_factor = 1.5;  // x max energy cost, per p.u. curtailed
    double robust_slack_factor = 1.5;   // x violation cost, per p.u. of slack
    QpSettings qp;

    Eigen::VectorXd violation_vector(Eigen::Index K) const {
        if (violation_costs.size() == 0) return Eigen::VectorXd::Constant(K, violation_cost);
        if (violation_costs.size() != K) throw DimensionError("violation_costs must have one entry per robust row");
        return violation_costs;
    }
};

// Index map of the stacked decision vector
//   x = (p, r+, r-, vec(A), f_ram+, f_ram-, s_balance, s_robust, vec(t))
// with A (G x D) and t (K x D) stored row-major.
struct VariableLayout {
    Eigen::Index G = 0, D = 0, L = 0, K = 0;

    VariableLayout() = default;
    VariableLayout(Eigen::Index g, Eigen::Index d, Eigen::Index l) : G(g), D(d), L(l), K(2 * g + 2 * l) {}

    Eigen::Index p(Eigen::Index g) const { return g; }
    Eigen::Index r_plus(Eigen::Index g) const { return G + g; }
    Eigen::Index r_minus(Eigen::Index g) const { return 2 * G + g; }
    Eigen::Index A(Eigen::Index g, Eigen::Index j) const { return 3 * G + g * D + j; }
    Eigen::Index f_plus(Eigen::Index l) const { return 3 * G + G * D + l; }
    Eigen::Index f_minus(Eigen::Index l) const { return 3 * G + G * D + L + l; }
    Eigen::Index s_balance(Eigen::Index j) const { return 3 * G + G * D + 2 * L + j; }
    Eigen::Index s_robust(Eigen::Index k) const { return 3 * G + G * D + 2 * L + D + k; }
    Eigen::Index t(Eigen::Index k, Eigen::Index j) const { return 3 * G + G * D + 2 * L + D + K + k * D + j; }
    Eigen::Index size() const { return 3 * G + G * D + 2 * L + D + K + K * D; }

    // Index of the margin variable that forms b_k = -(that variable).
    Eigen::Index margin_var(Eigen::Index k) const {
        if (k < G) return r_plus(k);
        if (k < 2 * G) return r_minus(k - G);
        if (k < 2 * G + L) return f_plus(k - 2 * G);
        return f_minus(k - 2 * G - L);
    }
};

// Inequality row blocks of the assembled QP, in order.
struct ConstraintLayout {
    Eigen::Index gen_up = 0, gen_down = 0, line_up = 0, line_down = 0, robust = 0, abs_pos = 0, abs_neg = 0, bounds = 0,
                 total = 0;

    explicit ConstraintLayout(const VariableLayout& v = {}) {
        const auto G = v.G, L = v.L, K = v.K, D = v.D;
        gen_up = 0;
        gen_down = G;
        line_up = 2 * G;
        line_down = 2 * G + L;
        robust = 2 * G + 2 * L;
        abs_pos = robust + K;
        abs_neg = abs_pos + K * D;
        bounds = abs_neg + K * D;
        total = bounds + 2 * G + 2 * G * D + 2 * L + 2 * D + K;
    }
};

// The stacked rows of the max-of-affine form: a is K x D, b has K entries.
// `b` holds the physical margins -(r+, r-, f_ram+, f_ram-); `b_slacked`
// additionally subtracts the robust slack.
struct CompactRows {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd b_slacked;
};

struct DispatchSolution {
    VariableLayout layout;
    Eigen::VectorXd x;  // unscaled decision vector, see VariableLayout

    Eigen::VectorXd p, r_plus, r_minus;
    Eigen::MatrixXd A;
    Eigen::VectorXd f_ram_plus, f_ram_minus;
    Eigen::VectorXd slack_balance, slack_robust;
    Eigen::MatrixXd t;

    double objective_first_stage = 0.0;  // linear cost incl. slack penalties, $
    double objective_total = 0.0;        // plus the regularization term

    Eigen::VectorXd duals_eq;    // balance, then recourse column sums
    Eigen::VectorXd duals_ineq;  // ordered as ConstraintLayout
    Eigen::VectorXd internal_x;  // solver coordinates (A scaled)
    Eigen::VectorXd cost;        // linear cost vector over x
    QpStatus status = QpStatus::numerical_error;
    int iterations = 0;

    Eigen::MatrixXd B_G, B_W;  // flow maps needed to evaluate the rows

    CompactRows rows() const {
        const auto G = layout.G, L = layout.L, K = layout.K;
        CompactRows c;
        c.a.resize(K, layout.D);
        c.b.resize(K);
        Eigen::MatrixXd line = B_W - B_G * A;
        c.a.topRows(G) = -A;
        c.a.middleRows(G, G) = A;
        c.a.middleRows(2 * G, L) = line;
        c.a.bottomRows(L) = -line;
        c.b << -r_plus, -r_minus, -f_ram_plus, -f_ram_minus;
        c.b_slacked = c.b - slack_robust;
        return c;
    }

    // Accumulates weight * d(a_k' xi + b_k)/dx into grad (unscaled x).
    void add_row_gradient(Eigen::Index k, const Eigen::VectorXd& xi, double weight, Eigen::VectorXd& grad) const {
        const auto G = layout.G, L = layout.L, D = layout.D;
        grad[layout.margin_var(k)] -= weight;
        if (k < 2 * G) {
            const double sgn = k < G ? -1.0 : 1.0;
            const auto g = k < G ? k : k - G;
            for (Eigen::Index j = 0; j < D; ++j) grad[layout.A(g, j)] += weight * sgn * xi[j];
        } else {
            const double sgn = k < 2 * G + L ? 1.0 : -1.0;
            const auto l = k < 2 * G + L ? k - 2 * G : k - 2 * G - L;
            for (Eigen::Index g = 0; g < G; ++g)
                for (Eigen::Index j = 0; j < D; ++j) grad[layout.A(g, j)] -= weight * sgn * B_G(l, g) * xi[j];
        }
    }
};

// The box-robust OPF as a parametric QP. G and h are affine in
// theta = (mu, sigma):  G(theta) = G0 + sum_p theta_p dG[p],
// h(theta) = h0 + sum_p theta_p dh[p]; parameters 0..D-1 are mu,
// D..2D-1 are sigma. `qp` is assembled at the given theta.
struct AssembledQp {
    QpProblem qp;
    std::vector<SpMat> dG;
    std::vector<Eigen::VectorXd> dh;
    VariableLayout layout;
    ConstraintLayout rows;
    Eigen::VectorXd unscale;  // x = unscale .* internal_x
    UncertaintyBox box;
};

namespace detail {

// Coefficients of a_kj(x) = a0 + sum coef * internal_x over the A block.
struct AffineRow {
    double a0 = 0.0;
    std::vector<std::pair<Eigen::Index, double>> coef;
};

inline AffineRow robust_row_entry(const VariableLayout& v, const FlowMaps& maps, double scale, Eigen::Index k,
                                  Eigen::Index j) {
    AffineRow r;
    const auto G = v.G, L = v.L;
    if (k < G) {
        r.coef.emplace_back(v.A(k, j), -1.0 / scale);
    } else if (k < 2 * G) {
        r.coef.emplace_back(v.A(k - G, j), 1.0 / scale);
    } else {
        const double sgn = k < 2 * G + L ? 1.0 : -1.0;
        const auto l = k < 2 * G + L ? k - 2 * G : k - 2 * G - L;
        r.a0 = sgn * maps.B_W(l, j);
        for (Eigen::Index g = 0; g < G; ++g)
            if (maps.B_G(l, g) != 0.0) r.coef.emplace_back(v.A(g, j), -sgn * maps.B_G(l, g) / scale);
    }
    return r;
}

}  // namespace detail

inline AssembledQp assemble_robust_opf(const GridCase& c, const FlowMaps& maps, const ContextSample& zeta,
                                       const UncertaintyBox& box, const SolverConfig& cfg) {
    const auto G = static_cast<Eigen::Index>(c.num_generators()), D = static_cast<Eigen::Index>(c.num_wind()),
               L = static_cast<Eigen::Index>(c.num_lines()), V = static_cast<Eigen::Index>(c.num_buses());
    if (zeta.d.size() != V || zeta.u.size() != D) throw DimensionError("context sample does not match case dimensions");
    if (maps.B_G.rows() != L || maps.B_G.cols() != G || maps.B_W.cols() != D || maps.B_B.cols() != V)
        throw DimensionError("flow maps do not match case dimensions");
    box.check(D);
    if (!(cfg.recourse_scale > 0.0)) throw ConfigError("recourse_scale must be positive");
    if (!(cfg.regularization > 0.0)) throw ConfigError("regularization must be positive");

    AssembledQp out;
    VariableLayout v(G, D, L);
    ConstraintLayout cl(v);
    out.layout = v;
    out.rows = cl;
    out.box = box;
    const auto K = v.K, n = v.size();
    const double s = cfg.recourse_scale;

    out.unscale = Eigen::VectorXd::Ones(n);
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index j = 0; j < D; ++j) out.unscale[v.A(g, j)] = 1.0 / s;

    // Objective.
    auto& qp = out.qp;
    qp.q = Eigen::VectorXd::Zero(n);
    const double base = cfg.cost_base < 0.0 ? c.base_mva : cfg.cost_base;
    double max_energy = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
        const auto& gen = c.generators[static_cast<std::size_t>(g)];
        qp.q[v.p(g)] = base * gen.cost_energy;
        qp.q[v.r_plus(g)] = base * gen.cost_reserve;
        qp.q[v.r_minus(g)] = base * gen.cost_reserve;
        max_energy = std::max(max_energy, gen.cost_energy);
    }
    for (Eigen::Index j = 0; j < D; ++j) qp.q[v.s_balance(j)] = cfg.balance_slack_factor * max_energy * base;
    const Eigen::VectorXd cviol = cfg.violation_vector(K);
    for (Eigen::Index k = 0; k < K; ++k) qp.q[v.s_robust(k)] = cfg.robust_slack_factor * cviol[k];
    qp.Q.resize(n, n);
    qp.Q.setIdentity();
    qp.Q *= 2.0 * cfg.regularization;

    // Equalities: energy balance with curtailment, then recourse column sums.
    Triplets te;
    for (Eigen::Index g = 0; g < G; ++g) te.emplace_back(0, v.p(g), 1.0);
    for (Eigen::Index j = 0; j < D; ++j) te.emplace_back(0, v.s_balance(j), -1.0);
    for (Eigen::Index j = 0; j < D; ++j)
        for (Eigen::Index g = 0; g < G; ++g) te.emplace_back(1 + j, v.A(g, j), 1.0);
    qp.E.resize(1 + D, n);
    qp.E.setFromTriplets(te.begin(), te.end());
    qp.e.resize(1 + D);
    qp.e[0] = zeta.d.sum() - zeta.u.sum();
    qp.e.tail(D).setConstant(s);

    // Inequalities at theta-independent part G0/h0 plus parameter slopes.
    const Eigen::Index m = cl.total;
    Triplets tg;
    Eigen::VectorXd h0 = Eigen::VectorXd::Zero(m);
    std::vector<Triplets> tdg(static_cast<std::size_t>(2 * D));
    out.dh.assign(static_cast<std::size_t>(2 * D), Eigen::VectorXd::Zero(m));

    for (Eigen::Index g = 0; g < G; ++g) {
        const auto& gen = c.generators[static_cast<std::size_t>(g)];
        tg.emplace_back(cl.gen_up + g, v.p(g), 1.0);
        tg.emplace_back(cl.gen_up + g, v.r_plus(g), 1.0);
        h0[cl.gen_up + g] = gen.p_max;
        tg.emplace_back(cl.gen_down + g, v.p(g), -1.0);
        tg.emplace_back(cl.gen_down + g, v.r_minus(g), 1.0);
        h0[cl.gen_down + g] = -gen.p_min;
    }
    const Eigen::VectorXd base_flow = maps.B_W * zeta.u - maps.B_B * zeta.d;
    for (Eigen::Index l = 0; l < L; ++l) {
        const double fmax = c.lines[static_cast<std::size_t>(l)].f_max;
        for (Eigen::Index g = 0; g < G; ++g) {
            if (maps.B_G(l, g) == 0.0) continue;
            tg.emplace_back(cl.line_up + l, v.p(g), maps.B_G(l, g));
            tg.emplace_back(cl.line_down + l, v.p(g), -maps.B_G(l, g));
        }
        for (Eigen::Index j = 0; j < D; ++j) {
            if (maps.B_W(l, j) == 0.0) continue;
            tg.emplace_back(cl.line_up + l, v.s_balance(j), -maps.B_W(l, j));
            tg.emplace_back(cl.line_down + l, v.s_balance(j), maps.B_W(l, j));
        }
        tg.emplace_back(cl.line_up + l, v.f_plus(l), 1.0);
        tg.emplace_back(cl.line_down + l, v.f_minus(l), 1.0);
        h0[cl.line_up + l] = fmax - base_flow[l];
        h0[cl.line_down + l] = fmax + base_flow[l];
    }

    for (Eigen::Index k = 0; k < K; ++k) {
        // sum_j mu_j a_kj(x) + sum_j sigma_j t_kj + b_k(x) - s_k <= 0, b_k = -margin
        const Eigen::Index row = cl.robust + k;
        tg.emplace_back(row, v.margin_var(k), -1.0);
        tg.emplace_back(row, v.s_robust(k), -1.0);
        for (Eigen::Index j = 0; j < D; ++j) {
            const auto ar = detail::robust_row_entry(v, maps, s, k, j);
            for (const auto& [col, val] : ar.coef) tdg[static_cast<std::size_t>(j)].emplace_back(row, col, val);
            out.dh[static_cast<std::size_t>(j)][row] = -ar.a0;
            tdg[static_cast<std::size_t>(D + j)].emplace_back(row, v.t(k, j), 1.0);

            // t_kj >= a_kj and t_kj >= -a_kj
            const Eigen::Index rp = cl.abs_pos + k * D + j, rn = cl.abs_neg + k * D + j;
            for (const auto& [col, val] : ar.coef) {
                tg.emplace_back(rp, col, val);
                tg.emplace_back(rn, col, -val);
            }
            tg.emplace_back(rp, v.t(k, j), -1.0);
            tg.emplace_back(rn, v.t(k, j), -1.0);
            h0[rp] = -ar.a0;
            h0[rn] = ar.a0;
        }
    }

    Eigen::Index r = cl.bounds;
    auto lower0 = [&](Eigen::Index var) { tg.emplace_back(r++, var, -1.0); };
    for (Eigen::Index g = 0; g < G; ++g) lower0(v.r_plus(g));
    for (Eigen::Index g = 0; g < G; ++g) lower0(v.r_minus(g));
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index j = 0; j < D; ++j) lower0(v.A(g, j));
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index j = 0; j < D; ++j) {
            h0[r] = s;
            tg.emplace_back(r++, v.A(g, j), 1.0);
        }
    for (Eigen::Index l = 0; l < L; ++l) lower0(v.f_plus(l));
    for (Eigen::Index l = 0; l < L; ++l) lower0(v.f_minus(l));
    for (Eigen::Index j = 0; j < D; ++j) lower0(v.s_balance(j));
    for (Eigen::Index j = 0; j < D; ++j) {
        h0[r] = zeta.u[j];
        tg.emplace_back(r++, v.s_balance(j), 1.0);
    }
    for (Eigen::Index k = 0; k < K; ++k) lower0(v.s_robust(k));

    SpMat G0(m, n);
    G0.setFromTriplets(tg.begin(), tg.end());
    out.dG.resize(static_cast<std::size_t>(2 * D));
    qp.G = G0;
    qp.h = h0;
    for (Eigen::Index p = 0; p < 2 * D; ++p) {
        auto& dg = out.dG[static_cast<std::size_t>(p)];
        dg.resize(m, n);
        dg.setFromTriplets(tdg[static_cast<std::size_t>(p)].begin(), tdg[static_cast<std::size_t>(p)].end());
        const double theta = p < D ? box.mu[p] : box.sigma[p - D];
        qp.G += theta * dg;
        qp.h += theta * out.dh[static_cast<std::size_t>(p)];
    }
    qp.G.prune(0.0);
    return out;
}

// Maps a solved QP back to dispatch quantities.
inline DispatchSolution make_solution(const AssembledQp& prob, const QpResult& res, const FlowMaps& maps) {
    const auto& v = prob.layout;
    DispatchSolution sol;
    sol.layout = v;
    sol.internal_x = res.x;
    // Entries at exact zero in exact arithmetic come back as +-1e-17; they
    // would show up as spurious positive margins.
    sol.x = res.x.cwiseProduct(prob.unscale).unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
    sol.cost = prob.qp.q.cwiseProduct(prob.unscale.cwiseInverse());
    sol.p = sol.x.segment(v.p(0), v.G);
    sol.r_plus = sol.x.segment(v.r_plus(0), v.G);
    sol.r_minus = sol.x.segment(v.r_minus(0), v.G);
    sol.A.resize(v.G, v.D);
    for (Eigen::Index g = 0; g < v.G; ++g)
        for (Eigen::Index j = 0; j < v.D; ++j) sol.A(g, j) = sol.x[v.A(g, j)];
    sol.f_ram_plus = sol.x.segment(v.f_plus(0), v.L);
    sol.f_ram_minus = sol.x.segment(v.f_minus(0), v.L);
    sol.slack_balance = sol.x.segment(v.s_balance(0), v.D);
    sol.slack_robust = sol.x.segment(v.s_robust(0), v.K);
    sol.t.resize(v.K, v.D);
    for (Eigen::Index k = 0; k < v.K; ++k)
        for (Eigen::Index j = 0; j < v.D; ++j) sol.t(k, j) = sol.x[v.t(k, j)];
    sol.objective_first_stage = prob.qp.q.dot(res.x);
    sol.objective_total = prob.qp.objective(res.x);
    sol.duals_eq = res.nu;
    sol.duals_ineq = res.lambda;
    sol.status = res.status;
    sol.iterations = res.iterations;
    sol.B_G = maps.B_G;
    sol.B_W = maps.B_W;
    return sol;
}

inline DispatchSolution solve_assembled(const AssembledQp& prob, const FlowMaps& maps, const SolverConfig& cfg) {
    QpResult res = solve_qp(prob.qp, cfg.qp);
    if (!res.ok())
        throw SolverFailure(std::string("robust OPF: QP ") + to_string(res.status) + " after " +
                            std::to_string(res.iterations) + " iterations");
    return make_solution(prob, res, maps);
}

inline DispatchSolution solve_robust_opf(const GridCase& c, const FlowMaps& maps, const ContextSample& zeta,
                                         const UncertaintyBox& box, const SolverConfig& cfg = {}) {
    return solve_assembled(assemble_robust_opf(c, maps, zeta, box, cfg), maps, cfg);
}

// max_k (a_k' xi + b_k) with the physical (unslacked) b. Positive values
// are violation magnitudes.
inline double constraint_margin(const DispatchSolution& sol, const Eigen::VectorXd& xi) {
    if (xi.size() != sol.layout.D) throw DimensionError("constraint_margin: xi has wrong dimension");
    const CompactRows rows = sol.rows();
    return (rows.a * xi + rows.b).maxCoeff();
}

inline double exceedance_cost(const DispatchSolution& sol, const Eigen::VectorXd& xi, const Eigen::VectorXd& c_viol) {
    if (xi.size() != sol.layout.D) throw DimensionError("exceedance_cost: xi has wrong dimension");
    if (c_viol.size() != sol.layout.K) throw DimensionError("exceedance_cost: c_viol has wrong dimension");
    if ((c_viol.array() < 0.0).any()) throw InvalidArgument("exceedance_cost: negative violation cost");
    const CompactRows rows = sol.rows();
    return c_viol.dot((rows.a * xi + rows.b).cwiseMax(0.0));
}

}  // namespace prorobust
