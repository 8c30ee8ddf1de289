#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prorobust/grid.hpp"

namespace prorobust {

enum class CaseFormat { json, rts_csv };

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

// Minimal RFC-4180 style splitter: double quotes group, "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::string source;

    std::size_t column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
    bool has(const std::string& name) const {
        return std::find(header.begin(), header.end(), name) != header.end();
    }
    double number(std::size_t row, std::size_t col) const {
        const auto& cell = rows[row].at(col);
        try {
            std::size_t used = 0;
            double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            return v;
        } catch (const std::exception&) {
            throw ParseError(source + ": row " + std::to_string(row + 2) + ": '" + cell + "' is not a number");
        }
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    CsvTable t;
    t.source = path.filename().string();
    std::string line;
    if (!std::getline(in, line)) throw ParseError(t.source + ": empty file");
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() < t.header.size())
            throw ParseError(t.source + ": row " + std::to_string(t.rows.size() + 2) + " has too few fields");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

/* Canonical JSON case:
 *   {
 *     "name": "case5_a", "base_mva": 100, "slack_bus": 4,
 *     "buses":       [{"id": 1, "demand": 0.0}, ...],
 *     "lines":       [{"from": 1, "to": 2, "susceptance": 35.59, "f_max": 3.2}, ...],
 *     "generators":  [{"bus": 1, "p_min": 0, "p_max": 0.4,
 *                      "cost_energy": 14, "cost_reserve": 80}, ...],
 *     "wind_farms":  [{"bus": 3, "capacity": 2.0, "forecast": 1.0}, ...]
 *   }
 * Powers are in p.u. on base_mva, costs in $/MW.
 */
inline GridCase case_from_json(const nlohmann::json& j) {
    using detail::required;
    GridCase c;
    if (!j.is_object()) throw ParseError("case: top level must be an object");
    c.name = j.value("name", std::string{});
    c.base_mva = j.value("base_mva", 100.0);
    c.slack_bus = required<int>(j, "slack_bus", "case");
    for (const char* key : {"buses", "lines", "generators", "wind_farms"})
        if (!j.contains(key) || !j.at(key).is_array()) throw ParseError(std::string("case: '") + key + "' must be an array");

    std::size_t i = 0;
    for (const auto& b : j.at("buses")) {
        const auto w = "buses[" + std::to_string(i++) + "]";
        c.buses.push_back({required<int>(b, "id", w), b.value("demand", 0.0)});
    }
    i = 0;
    for (const auto& l : j.at("lines")) {
        const auto w = "lines[" + std::to_string(i++) + "]";
        c.lines.push_back({required<int>(l, "from", w), required<int>(l, "to", w),
                           required<double>(l, "susceptance", w), required<double>(l, "f_max", w)});
    }
    i = 0;
    for (const auto& g : j.at("generators")) {
        const auto w = "generators[" + std::to_string(i++) + "]";
        c.generators.push_back({required<int>(g, "bus", w), g.value("p_min", 0.0), required<double>(g, "p_max", w),
                                required<double>(g, "cost_energy", w), required<double>(g, "cost_reserve", w)});
    }
    i = 0;
    for (const auto& wf : j.at("wind_farms")) {
        const auto w = "wind_farms[" + std::to_string(i++) + "]";
        c.wind_farms.push_back({required<int>(wf, "bus", w), required<double>(wf, "capacity", w), wf.value("forecast", 0.0)});
    }
    validate(c);
    return c;
}

inline nlohmann::json case_to_json(const GridCase& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["base_mva"] = c.base_mva;
    j["slack_bus"] = c.slack_bus;
    j["buses"] = nlohmann::json::array();
    for (const auto& b : c.buses) j["buses"].push_back({{"id", b.id}, {"demand", b.demand}});
    j["lines"] = nlohmann::json::array();
    for (const auto& l : c.lines)
        j["lines"].push_back({{"from", l.from}, {"to", l.to}, {"susceptance", l.susceptance}, {"f_max", l.f_max}});
    j["generators"] = nlohmann::json::array();
    for (const auto& g : c.generators)
        j["generators"].push_back({{"bus", g.bus}, {"p_min", g.p_min}, {"p_max", g.p_max},
                                   {"cost_energy", g.cost_energy}, {"cost_reserve", g.cost_reserve}});
    j["wind_farms"] = nlohmann::json::array();
    for (const auto& w : c.wind_farms)
        j["wind_farms"].push_back({{"bus", w.bus}, {"capacity", w.capacity}, {"forecast", w.forecast}});
    return j;
}

struct RtsOptions {
    double base_mva = 100.0;
    // The GMLC tables carry no reserve prices; reserves are priced as a
    // multiple of each unit's energy cost.
    double reserve_cost_factor = 1.0;
};

// Reads a directory holding the RTS-GMLC style bus.csv, branch.csv and
// gen.csv. Wind units become uncertain farms; PV, rooftop PV, hydro and
// run-of-river units are folded into fixed negative demand at their bus.
inline GridCase load_rts_csv(const std::filesystem::path& dir, const RtsOptions& opt = {}) {
    using detail::CsvTable;
    const CsvTable bus = detail::read_csv(dir / "bus.csv");
    const CsvTable branch = detail::read_csv(dir / "branch.csv");
    const CsvTable gen = detail::read_csv(dir / "gen.csv");

    GridCase c;
    c.name = dir.filename().string();
    c.base_mva = opt.base_mva;

    const auto b_id = bus.column("Bus ID"), b_load = bus.column("MW Load"), b_type = bus.column("Bus Type");
    bool have_slack = false;
    for (std::size_t r = 0; r < bus.rows.size(); ++r) {
        const int id = static_cast<int>(bus.number(r, b_id));
        c.buses.push_back({id, bus.number(r, b_load) / opt.base_mva});
        if (bus.rows[r][b_type] == "Ref" && !have_slack) {
            c.slack_bus = id;
            have_slack = true;
        }
    }
    if (!have_slack && !c.buses.empty()) c.slack_bus = c.buses.front().id;

    const auto l_from = branch.column("From Bus"), l_to = branch.column("To Bus"), l_x = branch.column("X"),
               l_rate = branch.column("Cont Rating");
    for (std::size_t r = 0; r < branch.rows.size(); ++r) {
        const double x = branch.number(r, l_x);
        if (!(x > 0.0)) throw ValidationError("branch.csv row " + std::to_string(r + 2) + ".X", "reactance must be positive");
        c.lines.push_back({static_cast<int>(branch.number(r, l_from)), static_cast<int>(branch.number(r, l_to)), 1.0 / x,
                           branch.number(r, l_rate) / opt.base_mva});
    }

    const auto g_bus = gen.column("Bus ID"), g_type = gen.column("Unit Type"), g_pmax = gen.column("PMax MW"),
               g_pmin = gen.column("PMin MW"), g_inj = gen.column("MW Inj");
    const bool priced = gen.has("Fuel Price $/MMBTU") && gen.has("HR_avg_0");
    for (std::size_t r = 0; r < gen.rows.size(); ++r) {
        const std::string type = gen.rows[r][g_type];
        const int at = static_cast<int>(gen.number(r, g_bus));
        const double pmax = gen.number(r, g_pmax) / opt.base_mva;
        if (type == "WIND") {
            const double inj = std::clamp(gen.number(r, g_inj) / opt.base_mva, 0.0, pmax);
            c.wind_farms.push_back({at, pmax, inj});
        } else if (type == "PV" || type == "RTPV" || type == "HYDRO" || type == "ROR" || type == "CSP") {
            auto& b = c.buses.at(c.bus_index(at));
            b.demand -= gen.number(r, g_inj) / opt.base_mva;
        } else if (type == "SYNC_COND" || type == "STORAGE") {
            continue;
        } else {
            double cost = 0.0;
            if (priced)
                cost = gen.number(r, gen.column("Fuel Price $/MMBTU")) * gen.number(r, gen.column("HR_avg_0")) / 1000.0;
            c.generators.push_back({at, gen.number(r, g_pmin) / opt.base_mva, pmax, cost, opt.reserve_cost_factor * cost});
        }
    }
    validate(c);
    return c;
}

inline GridCase load_case(const std::filesystem::path& path, CaseFormat format) {
    if (format == CaseFormat::rts_csv) return load_rts_csv(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return case_from_json(j);
}

// Directories are read as RTS CSV tables, files as JSON.
inline GridCase load_case(const std::filesystem::path& path) {
    return load_case(path, std::filesystem::is_directory(path) ? CaseFormat::rts_csv : CaseFormat::json);
}

}  // namespace prorobust
