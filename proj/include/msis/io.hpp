#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msis/analysis.hpp"
#include "msis/common.hpp"
#include "msis/generator.hpp"
#include "msis/meanfield.hpp"
#include "msis/state.hpp"
#include "msis/topology.hpp"

namespace msis::io {

using nlohmann::json;

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::config_not_found, "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(errc::config_invalid, path + ": " + e.what());
    }
    return j;
}

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& context) {
    if (!obj.is_object()) throw Error(errc::config_invalid, context + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error(errc::config_invalid, context + ": unknown key \"" + it.key() + "\"");
}

inline double finite_number(const json& v, const std::string& context) {
    if (!v.is_number()) throw Error(errc::config_invalid, context + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw Error(errc::config_invalid, context + " must be finite");
    return d;
}

// Network schema:
//   { "islands": M, "strains": K, "sizes": [..], "adjacency": [[..]],
//     "gamma": [strain][from][to], "mu": [strain][island] }
// Unknown keys are rejected; adjacency entries may be booleans or 0/1.
inline topology::NetworkSpec parse_network(const json& j) {
    reject_unknown_keys(j, {"islands", "strains", "sizes", "adjacency", "gamma", "mu"}, "network");
    for (const char* key : {"islands", "strains", "sizes", "adjacency", "gamma", "mu"})
        if (!j.contains(key))
            throw Error(errc::config_invalid, std::string("network: missing key \"") + key + "\"");

    if (!j["islands"].is_number_integer() || !j["strains"].is_number_integer())
        throw Error(errc::config_invalid, "islands and strains must be integers");
    const int m = j["islands"].get<int>();
    const int k = j["strains"].get<int>();
    if (m < 1 || k < 1) throw Error(errc::config_invalid, "islands and strains must be >= 1");

    topology::NetworkSpec spec = topology::make_spec(m, k);

    const auto& sizes = j["sizes"];
    if (!sizes.is_array() || sizes.size() != static_cast<std::size_t>(m))
        throw Error(errc::config_invalid, "sizes must be an array of length islands");
    for (int i = 0; i < m; ++i) {
        if (!sizes[i].is_number_integer())
            throw Error(errc::config_invalid, "sizes entries must be integers");
        spec.island_sizes[i] = sizes[i].get<std::int64_t>();
    }

    const auto& adj = j["adjacency"];
    if (!adj.is_array() || adj.size() != static_cast<std::size_t>(m))
        throw Error(errc::config_invalid, "adjacency must be an MxM matrix");
    for (int i = 0; i < m; ++i) {
        if (!adj[i].is_array() || adj[i].size() != static_cast<std::size_t>(m))
            throw Error(errc::config_invalid, "adjacency must be an MxM matrix");
        for (int c = 0; c < m; ++c) {
            const auto& cell = adj[i][c];
            bool on;
            if (cell.is_boolean()) {
                on = cell.get<bool>();
            } else if (cell.is_number_integer() &&
                       (cell.get<std::int64_t>() == 0 || cell.get<std::int64_t>() == 1)) {
                on = cell.get<std::int64_t>() == 1;
            } else {
                throw Error(errc::config_invalid, "adjacency entries must be booleans or 0/1");
            }
            spec.adjacency[static_cast<std::size_t>(i) * m + c] = on ? 1 : 0;
        }
    }

    const auto& gamma = j["gamma"];
    if (!gamma.is_array() || gamma.size() != static_cast<std::size_t>(k))
        throw Error(errc::config_invalid, "gamma must be a [strain][from][to] array");
    for (int v = 0; v < k; ++v) {
        if (!gamma[v].is_array() || gamma[v].size() != static_cast<std::size_t>(m))
            throw Error(errc::config_invalid, "gamma must be a [strain][from][to] array");
        for (int a = 0; a < m; ++a) {
            if (!gamma[v][a].is_array() || gamma[v][a].size() != static_cast<std::size_t>(m))
                throw Error(errc::config_invalid, "gamma must be a [strain][from][to] array");
            for (int b = 0; b < m; ++b)
                spec.gamma(v, a, b) = finite_number(gamma[v][a][b], "gamma entry");
        }
    }

    const auto& mu = j["mu"];
    if (!mu.is_array() || mu.size() != static_cast<std::size_t>(k))
        throw Error(errc::config_invalid, "mu must be a [strain][island] array");
    for (int v = 0; v < k; ++v) {
        if (!mu[v].is_array() || mu[v].size() != static_cast<std::size_t>(m))
            throw Error(errc::config_invalid, "mu must be a [strain][island] array");
        for (int i = 0; i < m; ++i) spec.mu(v, i) = finite_number(mu[v][i], "mu entry");
    }
    return spec;
}

inline topology::NetworkSpec parse_and_validate_network(const json& j) {
    topology::NetworkSpec spec = parse_network(j);
    const auto report = topology::validate_spec(spec);
    if (!report.valid()) throw Error(errc::spec_invalid, report.to_string());
    return spec;
}

// M x K numeric matrix from JSON, e.g. initial counts or fractions.
inline std::vector<std::vector<double>> parse_matrix(const json& j, int rows, int cols,
                                                     const std::string& context) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(rows))
        throw Error(errc::config_invalid, context + " must have one row per island");
    std::vector<std::vector<double>> out(rows);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != static_cast<std::size_t>(cols))
            throw Error(errc::config_invalid, context + " must have one column per strain");
        out[r].resize(cols);
        for (int c = 0; c < cols; ++c) out[r][c] = finite_number(j[r][c], context + " entry");
    }
    return out;
}

inline meanfield::FractionState parse_fractions(const json& j, int m, int k,
                                                const std::string& context) {
    auto mat = parse_matrix(j, m, k, context);
    auto y = meanfield::make_fraction_state(m, k);
    for (int i = 0; i < m; ++i)
        for (int s = 0; s < k; ++s) y.at(i, s) = mat[i][s];
    if (!meanfield::fraction_state_valid(y))
        throw Error(errc::config_invalid, context + " is not a valid fraction state");
    return y;
}

inline ctmc::MacroState parse_counts(const json& j, int m, int k, const std::string& context) {
    auto mat = parse_matrix(j, m, k, context);
    auto y = ctmc::make_macro_state(m, k);
    for (int i = 0; i < m; ++i)
        for (int s = 0; s < k; ++s) {
            if (mat[i][s] < 0 || mat[i][s] != std::floor(mat[i][s]))
                throw Error(errc::config_invalid, context + " entries must be non-negative integers");
            y.at(i, s) = static_cast<std::int64_t>(mat[i][s]);
        }
    return y;
}

inline std::vector<std::int64_t> parse_sizes(const json& j, int m, const std::string& context) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(m))
        throw Error(errc::config_invalid, context + " must be an array of length islands");
    std::vector<std::int64_t> out(m);
    for (int i = 0; i < m; ++i) {
        if (!j[i].is_number_integer() || j[i].get<std::int64_t>() < 1)
            throw Error(errc::config_invalid, context + " entries must be integers >= 1");
        out[i] = j[i].get<std::int64_t>();
    }
    return out;
}

// --- CSV emitters -----------------------------------------------------------

inline void write_count_header(std::ostream& os, int m, int k) {
    for (int i = 0; i < m; ++i)
        for (int s = 0; s < k; ++s) os << ",Y_" << i << '_' << s;
}

// One row per event (plus an init row), counts after the event.
inline void write_trajectory_csv(std::ostream& os, const ctmc::Trajectory& traj) {
    const int m = traj.initial.num_islands;
    const int k = traj.initial.num_strains;
    os << "time,island,strain,event";
    write_count_header(os, m, k);
    os << '\n';
    os << "0,,,init";
    for (auto c : traj.initial.counts) os << ',' << c;
    os << '\n';
    for (std::size_t e = 0; e < traj.size(); ++e) {
        os << fmt17(traj.times[e]) << ',' << traj.islands[e] << ',' << traj.strains[e] << ','
           << ctmc::event_name(traj.kinds[e]);
        for (auto c : traj.state_after(e)) os << ',' << c;
        os << '\n';
    }
}

inline void write_dense_csv(std::ostream& os, const meanfield::OdeOutput& ode) {
    if (ode.states.empty()) return;
    const int m = ode.states.front().num_islands;
    const int k = ode.states.front().num_strains;
    os << 't';
    for (int i = 0; i < m; ++i)
        for (int s = 0; s < k; ++s) os << ",y_" << i << '_' << s;
    os << '\n';
    for (std::size_t r = 0; r < ode.times.size(); ++r) {
        os << fmt17(ode.times[r]);
        for (double v : ode.states[r].y) os << ',' << fmt17(v);
        os << '\n';
    }
}

// Debug export: coordinate list `row col rate`, diagonal included.
inline void write_generator_coordinate_list(std::ostream& os, const ctmc::GeneratorMatrix& g) {
    for (std::uint64_t r = 0; r < g.num_states; ++r) {
        for (const auto& [c, rate] : g.rows[r]) os << r << ' ' << c << ' ' << fmt17(rate) << '\n';
        if (g.diag[r] != 0.0) os << r << ' ' << r << ' ' << fmt17(g.diag[r]) << '\n';
    }
}

// --- report serialization ----------------------------------------------------

inline json to_json(const analysis::VarianceCheck& c) {
    return json{{"island", c.island},     {"strain", c.strain},
                {"variance", c.variance}, {"bound", c.bound},
                {"bound_tight", c.bound_tight}, {"pass", c.pass}};
}

inline json to_json(const analysis::ConvergenceReport& report) {
    json entries = json::array();
    for (const auto& entry : report.entries) {
        json var_checks = json::array();
        for (const auto& [t, checks] : entry.var_checks) {
            json arr = json::array();
            for (const auto& c : checks) arr.push_back(to_json(c));
            var_checks.push_back(json{{"t", t}, {"checks", arr}});
        }
        json y0 = json::array();
        for (int i = 0; i < entry.y0_realized.num_islands; ++i) {
            json row = json::array();
            for (int k = 0; k < entry.y0_realized.num_strains; ++k)
                row.push_back(entry.y0_realized.at(i, k));
            y0.push_back(row);
        }
        entries.push_back(json{{"N", entry.sizes},
                               {"y0_realized", y0},
                               {"errors", entry.errors},
                               {"median", entry.median},
                               {"q10", entry.q10},
                               {"q90", entry.q90},
                               {"var_checks", var_checks}});
    }
    json out{{"entries", entries}};
    if (std::isnan(report.beta))
        out["beta"] = nullptr;
    else
        out["beta"] = report.beta;
    return out;
}

inline void write_convergence_csv(std::ostream& os, const analysis::ConvergenceReport& report) {
    os << "entry,N_mean,median,q10,q90\n";
    for (std::size_t e = 0; e < report.entries.size(); ++e) {
        const auto& entry = report.entries[e];
        double nm = 0.0;
        for (auto n : entry.sizes) nm += static_cast<double>(n);
        nm /= static_cast<double>(entry.sizes.size());
        os << e << ',' << fmt17(nm) << ',' << fmt17(entry.median) << ',' << fmt17(entry.q10)
           << ',' << fmt17(entry.q90) << '\n';
    }
}

inline json to_json(const analysis::MartingaleSweepResult& result) {
    json entries = json::array();
    for (const auto& entry : result.entries) {
        json checks = json::array();
        for (const auto& c : entry.checks) checks.push_back(to_json(c));
        entries.push_back(json{{"N", entry.sizes}, {"checks", checks}});
    }
    return json{{"t", result.t},
                {"entries", entries},
                {"exponents", result.exponents},
                {"bounds_pass", result.bounds_pass}};
}

inline void write_martingale_csv(std::ostream& os, const analysis::MartingaleSweepResult& result) {
    os << "entry,N_mean,island,strain,variance,bound,bound_tight,pass\n";
    for (std::size_t e = 0; e < result.entries.size(); ++e) {
        const auto& entry = result.entries[e];
        double nm = 0.0;
        for (auto n : entry.sizes) nm += static_cast<double>(n);
        nm /= static_cast<double>(entry.sizes.size());
        for (const auto& c : entry.checks)
            os << e << ',' << fmt17(nm) << ',' << c.island << ',' << c.strain << ','
               << fmt17(c.variance) << ',' << fmt17(c.bound) << ',' << fmt17(c.bound_tight) << ','
               << (c.pass ? 1 : 0) << '\n';
    }
}

}  // namespace msis::io
