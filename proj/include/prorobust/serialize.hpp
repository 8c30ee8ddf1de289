#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "prorobust/evaluator.hpp"
#include "prorobust/grid_io.hpp"
#include "prorobust/prescriptor.hpp"
#include "prorobust/robust_opf.hpp"
#include "prorobust/scenario.hpp"
#include "prorobust/trainer.hpp"

namespace prorobust {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

// 64-bit FNV-1a, hex encoded. Used for content hashes in manifests.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(where + ": non-numeric entry");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_to_json(m.row(r).transpose()));
    return rows;
}

inline Mat mat_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array of rows");
    if (j.empty()) return Mat(0, 0);
    const Vec first = vec_from_json(j[0], where);
    Mat m(static_cast<Eigen::Index>(j.size()), first.size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vec row = vec_from_json(j[r], where);
        if (row.size() != m.cols()) throw ParseError(where + ": ragged matrix");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---- solutions ----

inline json solution_to_json(const DispatchSolution& s) {
    return {{"p", vec_to_json(s.p)},
            {"r_plus", vec_to_json(s.r_plus)},
            {"r_minus", vec_to_json(s.r_minus)},
            {"A", mat_to_json(s.A)},
            {"f_ram_plus", vec_to_json(s.f_ram_plus)},
            {"f_ram_minus", vec_to_json(s.f_ram_minus)},
            {"slack_balance", vec_to_json(s.slack_balance)},
            {"slack_robust", vec_to_json(s.slack_robust)},
            {"t", mat_to_json(s.t)},
            {"objective_first_stage", s.objective_first_stage},
            {"objective_total", s.objective_total},
            {"duals_eq", vec_to_json(s.duals_eq)},
            {"duals_ineq", vec_to_json(s.duals_ineq)},
            {"status", to_string(s.status)},
            {"iterations", s.iterations}};
}

// ---- weights ----

inline json weights_to_json(const PrescriptionWeights& w, const std::string& dataset_hash = {}, double tau = 0.0,
                            double lambda = 0.0) {
    return {{"schema_version", kSchemaVersion},
            {"dataset_hash", dataset_hash},
            {"M_mu", mat_to_json(w.M_mu)},
            {"m_mu", vec_to_json(w.m_mu)},
            {"M_sigma", mat_to_json(w.M_sigma)},
            {"m_sigma", vec_to_json(w.m_sigma)},
            {"tau", tau},
            {"lambda", lambda}};
}

inline PrescriptionWeights weights_from_json(const json& j) {
    for (const char* key : {"M_mu", "m_mu", "M_sigma", "m_sigma"})
        if (!j.contains(key)) throw ParseError(std::string("weights: missing '") + key + "'");
    PrescriptionWeights w;
    w.m_mu = vec_from_json(j.at("m_mu"), "weights.m_mu");
    w.m_sigma = vec_from_json(j.at("m_sigma"), "weights.m_sigma");
    w.M_mu = mat_from_json(j.at("M_mu"), "weights.M_mu");
    w.M_sigma = mat_from_json(j.at("M_sigma"), "weights.M_sigma");
    const auto D = w.m_mu.size();
    if (w.m_sigma.size() != D || w.M_mu.rows() != D || w.M_sigma.rows() != D || w.M_mu.cols() != w.M_sigma.cols())
        throw ParseError("weights: inconsistent block dimensions");
    if (!w.finite()) throw ParseError("weights: non-finite entry");
    return w;
}

// ---- training trace ----

inline json epoch_to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"loss", r.loss},
            {"first_stage", r.first_stage},
            {"exceedance", r.exceedance},
            {"H", r.H},
            {"lambda", r.lambda},
            {"tau", r.tau},
            {"exceed_fraction", r.exceed_fraction},
            {"grad_norm", r.grad_norm},
            {"flagged", r.flagged},
            {"failed", r.failed}};
}

// ---- evaluation ----

inline json report_to_json(const EvalReport& r) {
    return {{"schema_version", kSchemaVersion},
            {"policy", r.policy},
            {"gamma", r.gamma},
            {"n", r.n},
            {"n_failed", r.n_failed},
            {"mean_first_stage", r.mean_first_stage},
            {"mean_exceedance", r.mean_exceedance},
            {"mean_total", r.mean_total},
            {"prob_exceedance", r.prob_exceedance},
            {"var", r.var},
            {"cvar", r.cvar},
            {"total_quartiles", {r.q1, r.median, r.q3}},
            {"mean_mu", vec_to_json(r.mean_mu)},
            {"mean_sigma", vec_to_json(r.mean_sigma)}};
}

inline std::string report_samples_csv(const EvalReport& r) {
    std::ostringstream out;
    const Eigen::Index D = r.samples.empty() ? 0 : r.samples.front().mu.size();
    out << "index,status,first_stage,exceedance,total,margin";
    for (Eigen::Index j = 0; j < D; ++j) out << ",mu" << j + 1;
    for (Eigen::Index j = 0; j < D; ++j) out << ",sigma" << j + 1;
    out << "\n";
    for (const auto& s : r.samples) {
        out << s.index << "," << s.status << "," << format_double(s.first_stage) << "," << format_double(s.exceedance)
            << "," << format_double(s.total) << "," << format_double(s.margin);
        for (Eigen::Index j = 0; j < D; ++j) out << "," << format_double(s.mu[j]);
        for (Eigen::Index j = 0; j < D; ++j) out << "," << format_double(s.sigma[j]);
        out << "\n";
    }
    return out.str();
}

// ---- datasets ----
// dataset.csv: split,d1..dV,u1..uD,xi1..xiD; manifest.json carries the
// generation settings and nominal vectors.

inline std::string dataset_csv(const Dataset& ds) {
    std::ostringstream out;
    const auto& first = ds.train.empty() ? ds.test.front() : ds.train.front();
    const Eigen::Index V = first.zeta.d.size(), D = first.zeta.u.size();
    out << "split";
    for (Eigen::Index v = 0; v < V; ++v) out << ",d" << v + 1;
    for (Eigen::Index j = 0; j < D; ++j) out << ",u" << j + 1;
    for (Eigen::Index j = 0; j < D; ++j) out << ",xi" << j + 1;
    out << "\n";
    auto row = [&](const char* split, const Sample& s) {
        out << split;
        for (Eigen::Index v = 0; v < V; ++v) out << "," << format_double(s.zeta.d[v]);
        for (Eigen::Index j = 0; j < D; ++j) out << "," << format_double(s.zeta.u[j]);
        for (Eigen::Index j = 0; j < D; ++j) out << "," << format_double(s.xi[j]);
        out << "\n";
    };
    for (const auto& s : ds.train) row("train", s);
    for (const auto& s : ds.test) row("test", s);
    return out.str();
}

inline json dataset_manifest(const Dataset& ds, const std::string& csv_hash, const std::string& case_hash) {
    const auto& c = ds.config;
    return {{"schema_version", kSchemaVersion},
            {"seed", c.seed},
            {"n", c.n},
            {"n_train", ds.train.size()},
            {"n_test", ds.test.size()},
            {"lo", c.lo},
            {"hi", c.hi},
            {"rel_std", c.rel_std},
            {"phi", c.phi},
            {"nominal_demand", vec_to_json(ds.nominal_demand)},
            {"nominal_wind", vec_to_json(ds.nominal_wind)},
            {"wind_capacity", vec_to_json(ds.wind_capacity)},
            {"dataset_hash", csv_hash},
            {"case_hash", case_hash}};
}

inline Dataset dataset_from_files(const std::filesystem::path& csv_path, const json& manifest) {
    Dataset ds;
    try {
        ds.config.seed = manifest.at("seed").get<std::uint64_t>();
        ds.config.lo = manifest.at("lo").get<double>();
        ds.config.hi = manifest.at("hi").get<double>();
        ds.config.rel_std = manifest.at("rel_std").get<double>();
        ds.config.phi = manifest.at("phi").get<double>();
        ds.config.n = manifest.at("n").get<std::size_t>();
        ds.config.n_train = manifest.at("n_train").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset manifest: ") + e.what());
    }
    ds.nominal_demand = vec_from_json(manifest.at("nominal_demand"), "manifest.nominal_demand");
    ds.nominal_wind = vec_from_json(manifest.at("nominal_wind"), "manifest.nominal_wind");
    ds.wind_capacity = vec_from_json(manifest.at("wind_capacity"), "manifest.wind_capacity");
    const Eigen::Index V = ds.nominal_demand.size(), D = ds.nominal_wind.size();

    const auto table = detail::read_csv(csv_path);
    if (static_cast<Eigen::Index>(table.header.size()) != 1 + V + 2 * D)
        throw ParseError(table.source + ": expected " + std::to_string(1 + V + 2 * D) + " columns");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        Sample s{{Vec(V), Vec(D)}, Vec(D)};
        for (Eigen::Index v = 0; v < V; ++v) s.zeta.d[v] = table.number(r, static_cast<std::size_t>(1 + v));
        for (Eigen::Index j = 0; j < D; ++j) s.zeta.u[j] = table.number(r, static_cast<std::size_t>(1 + V + j));
        for (Eigen::Index j = 0; j < D; ++j) s.xi[j] = table.number(r, static_cast<std::size_t>(1 + V + D + j));
        const auto& split = table.rows[r][0];
        if (split == "train")
            ds.train.push_back(std::move(s));
        else if (split == "test")
            ds.test.push_back(std::move(s));
        else
            throw ParseError(table.source + ": row " + std::to_string(r + 2) + ": unknown split '" + split + "'");
    }
    return ds;
}

}  // namespace prorobust
