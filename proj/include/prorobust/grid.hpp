#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "prorobust/errors.hpp"

namespace prorobust {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Bus {
    int id = 0;
    double demand = 0.0;  // nominal demand, p.u.
};

// Flow is positive from `from` to `to`.
struct Line {
    int from = 0;
    int to = 0;
    double susceptance = 0.0;  // p.u.
    double f_max = 0.0;        // p.u.
};

struct Generator {
    int bus = 0;
    double p_min = 0.0;
    double p_max = 0.0;
    double cost_energy = 0.0;   // $/MW
    double cost_reserve = 0.0;  // $/MW
};

struct WindFarm {
    int bus = 0;
    double capacity = 0.0;  // u_max, p.u.
    double forecast = 0.0;  // nominal forecast u_0, p.u.
};

struct GridCase {
    std::string name;
    double base_mva = 100.0;
    int slack_bus = 0;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    std::vector<WindFarm> wind_farms;

    std::size_t num_buses() const { return buses.size(); }
    std::size_t num_lines() const { return lines.size(); }
    std::size_t num_generators() const { return generators.size(); }
    std::size_t num_wind() const { return wind_farms.size(); }
    // Row count of the stacked max-of-affine robust constraints.
    std::size_t num_robust_rows() const { return 2 * generators.size() + 2 * lines.size(); }

    std::size_t bus_index(int id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return i;
        throw ValidationError("bus", "unknown bus id " + std::to_string(id));
    }

    Vec nominal_demand() const {
        Vec d(buses.size());
        for (std::size_t i = 0; i < buses.size(); ++i) d[i] = buses[i].demand;
        return d;
    }
    Vec nominal_wind() const {
        Vec u(wind_farms.size());
        for (std::size_t j = 0; j < wind_farms.size(); ++j) u[j] = wind_farms[j].forecast;
        return u;
    }
    Vec wind_capacity() const {
        Vec u(wind_farms.size());
        for (std::size_t j = 0; j < wind_farms.size(); ++j) u[j] = wind_farms[j].capacity;
        return u;
    }
};

// Throws ValidationError naming the first violated invariant.
inline void validate(const GridCase& c) {
    if (c.buses.empty()) throw ValidationError("buses", "case has no buses");
    if (!(c.base_mva > 0.0)) throw ValidationError("base_mva", "must be positive");
    std::unordered_map<int, int> seen;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (seen.count(c.buses[i].id))
            throw ValidationError("buses[" + std::to_string(i) + "].id", "duplicate bus id");
        seen[c.buses[i].id] = 1;
    }
    auto check_bus = [&](int id, const std::string& field) {
        if (!seen.count(id)) throw ValidationError(field, "references missing bus " + std::to_string(id));
    };
    check_bus(c.slack_bus, "slack_bus");
    for (std::size_t l = 0; l < c.lines.size(); ++l) {
        const auto& ln = c.lines[l];
        const std::string f = "lines[" + std::to_string(l) + "]";
        check_bus(ln.from, f + ".from");
        check_bus(ln.to, f + ".to");
        if (ln.from == ln.to) throw ValidationError(f, "line connects a bus to itself");
        if (!(ln.susceptance > 0.0)) throw ValidationError(f + ".susceptance", "must be positive");
        if (!(ln.f_max > 0.0)) throw ValidationError(f + ".f_max", "must be positive");
    }
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        const std::string f = "generators[" + std::to_string(g) + "]";
        check_bus(gen.bus, f + ".bus");
        if (!(gen.p_min <= gen.p_max)) throw ValidationError(f + ".p_min", "p_min exceeds p_max");
        if (gen.cost_energy < 0.0 || gen.cost_reserve < 0.0)
            throw ValidationError(f + ".cost", "costs must be nonnegative");
    }
    for (std::size_t j = 0; j < c.wind_farms.size(); ++j) {
        const auto& w = c.wind_farms[j];
        const std::string f = "wind_farms[" + std::to_string(j) + "]";
        check_bus(w.bus, f + ".bus");
        if (!(w.capacity >= 0.0)) throw ValidationError(f + ".capacity", "must be nonnegative");
        if (w.forecast < 0.0 || w.forecast > w.capacity)
            throw ValidationError(f + ".forecast", "must lie in [0, capacity]");
    }
}

// Linear maps from injections to line flows. All three share the
// bus-level PTDF; resource maps are its columns at the resource buses.
struct FlowMaps {
    Mat ptdf;  // lines x buses, zero column at the slack bus
    Mat B_G;   // lines x generators
    Mat B_W;   // lines x wind farms
    Mat B_B;   // lines x buses (withdrawals, entered with a minus sign)
    std::size_t slack_index = 0;

    // Flows for a net injection vector (positive = injection) over buses.
    Vec flows(const Vec& net_injection) const { return ptdf * net_injection; }
};

inline bool is_connected(const GridCase& c) {
    const std::size_t n = c.num_buses();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& ln : c.lines) {
        const auto i = c.bus_index(ln.from), j = c.bus_index(ln.to);
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        auto v = q.front();
        q.pop();
        for (auto w : adj[v])
            if (!seen[w]) {
                seen[w] = true;
                ++count;
                q.push(w);
            }
    }
    return count == n;
}

// PTDF from the inverse of the susceptance-weighted Laplacian with the slack
// row and column removed. `slack_override` selects a different reference bus.
inline FlowMaps build_flow_maps(const GridCase& c, std::optional<int> slack_override = std::nullopt) {
    const std::size_t V = c.num_buses(), L = c.num_lines();
    if (V == 0) throw SingularNetworkError("network has no buses");
    if (!is_connected(c)) throw SingularNetworkError("network graph is disconnected");

    const std::size_t slack = c.bus_index(slack_override.value_or(c.slack_bus));
    Mat lap = Mat::Zero(V, V);
    for (const auto& ln : c.lines) {
        const auto i = c.bus_index(ln.from), j = c.bus_index(ln.to);
        lap(i, i) += ln.susceptance;
        lap(j, j) += ln.susceptance;
        lap(i, j) -= ln.susceptance;
        lap(j, i) -= ln.susceptance;
    }

    // keep[] maps reduced index -> bus index
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < V; ++i)
        if (i != slack) keep.push_back(i);
    const std::size_t R = keep.size();
    Mat reduced(R, R);
    for (std::size_t a = 0; a < R; ++a)
        for (std::size_t b = 0; b < R; ++b) reduced(a, b) = lap(keep[a], keep[b]);

    Mat angles = Mat::Zero(V, V);  // bus angles per unit injection at each bus
    if (R > 0) {
        Eigen::LLT<Mat> llt(reduced);
        if (llt.info() != Eigen::Success) throw SingularNetworkError("reduced Laplacian is not positive definite");
        Mat inv = llt.solve(Mat::Identity(R, R));
        if (!inv.allFinite()) throw SingularNetworkError("reduced Laplacian is singular");
        for (std::size_t a = 0; a < R; ++a)
            for (std::size_t b = 0; b < R; ++b) angles(keep[a], keep[b]) = inv(a, b);
    }

    FlowMaps maps;
    maps.slack_index = slack;
    maps.ptdf.resize(L, V);
    for (std::size_t l = 0; l < L; ++l) {
        const auto& ln = c.lines[l];
        const auto i = c.bus_index(ln.from), j = c.bus_index(ln.to);
        maps.ptdf.row(l) = ln.susceptance * (angles.row(i) - angles.row(j));
    }
    maps.B_B = maps.ptdf;
    maps.B_G.resize(L, c.num_generators());
    for (std::size_t g = 0; g < c.num_generators(); ++g)
        maps.B_G.col(g) = maps.ptdf.col(c.bus_index(c.generators[g].bus));
    maps.B_W.resize(L, c.num_wind());
    for (std::size_t j = 0; j < c.num_wind(); ++j)
        maps.B_W.col(j) = maps.ptdf.col(c.bus_index(c.wind_farms[j].bus));
    return maps;
}

}  // namespace prorobust
