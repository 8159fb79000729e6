#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "msis/common.hpp"

namespace msis::topology {

// Multipartite network at the island level: M islands, K virus strains,
// all-or-nothing adjacency between islands, no intra-island edges.
//
// gamma(k, from, to) is the rate at which one k-infected node in island
// `from` fires infection attempts toward island `to`. Islands are 0-indexed
// throughout the library; loaders may translate 1-indexed labels.
struct NetworkSpec {
    int num_islands = 0;  // M
    int num_strains = 0;  // K
    std::vector<std::int64_t> island_sizes;  // length M
    std::vector<std::uint8_t> adjacency;     // M*M, symmetric, zero diagonal
    std::vector<double> infection_rates;     // K*M*M, [k][from][to]
    std::vector<double> healing_rates;       // K*M,   [k][island]

    bool adjacent(int i, int j) const { return adjacency[static_cast<std::size_t>(i) * num_islands + j] != 0; }
    double gamma(int k, int from, int to) const {
        return infection_rates[(static_cast<std::size_t>(k) * num_islands + from) * num_islands + to];
    }
    double& gamma(int k, int from, int to) {
        return infection_rates[(static_cast<std::size_t>(k) * num_islands + from) * num_islands + to];
    }
    double mu(int k, int island) const { return healing_rates[static_cast<std::size_t>(k) * num_islands + island]; }
    double& mu(int k, int island) { return healing_rates[static_cast<std::size_t>(k) * num_islands + island]; }
};

inline NetworkSpec make_spec(int islands, int strains) {
    NetworkSpec s;
    s.num_islands = islands;
    s.num_strains = strains;
    s.island_sizes.assign(islands, 1);
    s.adjacency.assign(static_cast<std::size_t>(islands) * islands, 0);
    s.infection_rates.assign(static_cast<std::size_t>(strains) * islands * islands, 0.0);
    s.healing_rates.assign(static_cast<std::size_t>(strains) * islands, 1.0);
    return s;
}

inline void set_edge(NetworkSpec& s, int i, int j, bool on = true) {
    s.adjacency[static_cast<std::size_t>(i) * s.num_islands + j] = on ? 1 : 0;
    s.adjacency[static_cast<std::size_t>(j) * s.num_islands + i] = on ? 1 : 0;
}

enum class ViolationKind {
    asymmetric_adjacency,
    self_loop_island,
    rate_on_non_edge,
    non_positive_size,
    non_positive_healing,
    negative_rate,
    bad_shape,
};

inline const char* violation_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::asymmetric_adjacency: return "AsymmetricAdjacency";
        case ViolationKind::self_loop_island: return "SelfLoopIsland";
        case ViolationKind::rate_on_non_edge: return "RateOnNonEdge";
        case ViolationKind::non_positive_size: return "NonPositiveSize";
        case ViolationKind::non_positive_healing: return "NonPositiveHealing";
        case ViolationKind::negative_rate: return "NegativeRate";
        case ViolationKind::bad_shape: return "BadShape";
    }
    return "Unknown";
}

struct Violation {
    ViolationKind kind;
    std::string where;  // index locations, e.g. "adjacency[0][1]"

    std::string to_string() const { return std::string(violation_name(kind)) + " at " + where; }
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool valid() const { return violations.empty(); }
    std::string to_string() const {
        std::ostringstream os;
        for (const auto& v : violations) os << v.to_string() << '\n';
        return os.str();
    }
};

// Checks every NetworkSpec invariant and reports all violations with index
// locations. The spec itself is never mutated; a valid spec passes unchanged.
inline ValidationReport validate_spec(const NetworkSpec& s) {
    ValidationReport rep;
    auto loc = [](const char* name, int a, int b = -1, int c = -1) {
        std::ostringstream os;
        os << name << '[' << a << ']';
        if (b >= 0) os << '[' << b << ']';
        if (c >= 0) os << '[' << c << ']';
        return os.str();
    };
    const int m = s.num_islands;
    const int k = s.num_strains;
    if (m <= 0 || k <= 0 || s.island_sizes.size() != static_cast<std::size_t>(m) ||
        s.adjacency.size() != static_cast<std::size_t>(m) * m ||
        s.infection_rates.size() != static_cast<std::size_t>(k) * m * m ||
        s.healing_rates.size() != static_cast<std::size_t>(k) * m) {
        rep.violations.push_back({ViolationKind::bad_shape, "spec dimensions"});
        return rep;  // index-based checks below would be meaningless
    }
    for (int i = 0; i < m; ++i) {
        if (s.island_sizes[i] < 1)
            rep.violations.push_back({ViolationKind::non_positive_size, loc("sizes", i)});
        if (s.adjacency[static_cast<std::size_t>(i) * m + i] != 0)
            rep.violations.push_back({ViolationKind::self_loop_island, loc("adjacency", i, i)});
        for (int j = i + 1; j < m; ++j) {
            if (s.adjacency[static_cast<std::size_t>(i) * m + j] != s.adjacency[static_cast<std::size_t>(j) * m + i])
                rep.violations.push_back({ViolationKind::asymmetric_adjacency, loc("adjacency", i, j)});
        }
    }
    for (int v = 0; v < k; ++v) {
        for (int i = 0; i < m; ++i) {
            if (!(s.mu(v, i) > 0.0))
                rep.violations.push_back({ViolationKind::non_positive_healing, loc("mu", v, i)});
            for (int j = 0; j < m; ++j) {
                const double g = s.gamma(v, i, j);
                if (g < 0.0 || !std::isfinite(g))
                    rep.violations.push_back({ViolationKind::negative_rate, loc("gamma", v, i, j)});
                else if (g > 0.0 && !s.adjacent(i, j))
                    rep.violations.push_back({ViolationKind::rate_on_non_edge, loc("gamma", v, i, j)});
            }
        }
    }
    return rep;
}

inline const NetworkSpec& validate_or_throw(const NetworkSpec& s) {
    ValidationReport rep = validate_spec(s);
    if (!rep.valid()) throw Error(errc::spec_invalid, rep.to_string());
    return s;
}

// Superneighborhood of an island: sorted indices of adjacent islands.
// The superdegree d_i is the size of the returned set.
inline std::vector<int> superneighbors(const NetworkSpec& s, int island) {
    if (island < 0 || island >= s.num_islands)
        throw Error(errc::index_out_of_range, "island index " + std::to_string(island));
    std::vector<int> out;
    for (int j = 0; j < s.num_islands; ++j)
        if (s.adjacent(island, j)) out.push_back(j);
    return out;
}

inline int superdegree(const NetworkSpec& s, int island) {
    return static_cast<int>(superneighbors(s, island).size());
}

// Growing sequence of island-size vectors sharing one NetworkSpec shape,
// with declared asymptotic ratios alpha(j,i) = lim N_j / N_i. The library
// convention is source-over-sink: alpha(j,i) multiplies gamma(j,i) in the
// normalized drift.
struct SizeSchedule {
    std::vector<std::vector<std::int64_t>> entries;
    std::vector<double> alpha;  // M*M, alpha[j*M+i] = lim N_j/N_i
    double ratio_tolerance = 1e-9;

    double alpha_of(int j, int i) const {
        return alpha[static_cast<std::size_t>(j) * num_islands() + i];
    }
    int num_islands() const {
        return entries.empty() ? 0 : static_cast<int>(entries.front().size());
    }
};

inline std::vector<double> ratios_of(const std::vector<std::int64_t>& sizes) {
    const int m = static_cast<int>(sizes.size());
    std::vector<double> a(static_cast<std::size_t>(m) * m, 0.0);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
            a[static_cast<std::size_t>(j) * m + i] =
                static_cast<double>(sizes[j]) / static_cast<double>(sizes[i]);
    return a;
}

inline SizeSchedule make_schedule(std::vector<std::vector<std::int64_t>> entries,
                                  double ratio_tolerance = 1e-9) {
    SizeSchedule sch;
    sch.entries = std::move(entries);
    sch.ratio_tolerance = ratio_tolerance;
    if (!sch.entries.empty()) sch.alpha = ratios_of(sch.entries.back());
    return sch;
}

// Shape and ratio validation: every entry has length M with entries >= 1 and
// the last entry's pairwise ratios match the declared alpha within tolerance.
inline void validate_schedule(const SizeSchedule& sch, int num_islands) {
    if (sch.entries.empty())
        throw Error(errc::schedule_ratio_mismatch, "schedule has no entries");
    for (std::size_t e = 0; e < sch.entries.size(); ++e) {
        if (static_cast<int>(sch.entries[e].size()) != num_islands)
            throw Error(errc::schedule_ratio_mismatch,
                        "schedule entry " + std::to_string(e) + " has wrong length");
        for (auto n : sch.entries[e])
            if (n < 1)
                throw Error(errc::schedule_ratio_mismatch,
                            "schedule entry " + std::to_string(e) + " has size < 1");
    }
    if (sch.alpha.size() != static_cast<std::size_t>(num_islands) * num_islands)
        throw Error(errc::schedule_ratio_mismatch, "alpha matrix has wrong shape");
    const auto last = ratios_of(sch.entries.back());
    for (int j = 0; j < num_islands; ++j) {
        for (int i = 0; i < num_islands; ++i) {
            const double declared = sch.alpha[static_cast<std::size_t>(j) * num_islands + i];
            const double actual = last[static_cast<std::size_t>(j) * num_islands + i];
            if (std::abs(declared - actual) > sch.ratio_tolerance * std::max(1.0, std::abs(declared)))
                throw Error(errc::schedule_ratio_mismatch,
                            "alpha[" + std::to_string(j) + "][" + std::to_string(i) + "] = " +
                                std::to_string(declared) + " but last entry ratio is " +
                                std::to_string(actual));
        }
    }
}

}  // namespace msis::topology
