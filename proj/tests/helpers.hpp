#pragma once

// Shared builders and checkers for the test suites.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "msis/ctmc.hpp"
#include "msis/meanfield.hpp"
#include "msis/rng.hpp"
#include "msis/state.hpp"
#include "msis/topology.hpp"

namespace testutil {

using namespace msis;

inline topology::NetworkSpec bipartite_single_virus(double g12, double g21, double mu1,
                                                    double mu2, std::int64_t n1 = 100,
                                                    std::int64_t n2 = 100) {
    auto s = topology::make_spec(2, 1);
    s.island_sizes = {n1, n2};
    topology::set_edge(s, 0, 1);
    s.gamma(0, 0, 1) = g12;
    s.gamma(0, 1, 0) = g21;
    s.mu(0, 0) = mu1;
    s.mu(0, 1) = mu2;
    return s;
}

// the two-strain bipartite competition setup: symmetric rates per strain
inline topology::NetworkSpec bipartite_two_strain(double gx, double gy, double mu,
                                                  std::int64_t n = 100) {
    auto s = topology::make_spec(2, 2);
    s.island_sizes = {n, n};
    topology::set_edge(s, 0, 1);
    s.gamma(0, 0, 1) = gx;
    s.gamma(0, 1, 0) = gx;
    s.gamma(1, 0, 1) = gy;
    s.gamma(1, 1, 0) = gy;
    s.mu(0, 0) = mu;
    s.mu(0, 1) = mu;
    s.mu(1, 0) = mu;
    s.mu(1, 1) = mu;
    return s;
}

inline topology::NetworkSpec random_valid_spec(Rng& rng, int max_islands = 4,
                                               int max_strains = 3,
                                               std::int64_t max_size = 30) {
    const int m = 1 + static_cast<int>(rng.uniform_below(max_islands));
    const int k = 1 + static_cast<int>(rng.uniform_below(max_strains));
    auto s = topology::make_spec(m, k);
    for (int i = 0; i < m; ++i)
        s.island_sizes[i] = 1 + static_cast<std::int64_t>(rng.uniform_below(max_size));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (rng.uniform01() < 0.7) topology::set_edge(s, i, j);
    for (int v = 0; v < k; ++v)
        for (int i = 0; i < m; ++i) {
            s.mu(v, i) = 0.2 + 1.8 * rng.uniform01();
            for (int j = 0; j < m; ++j)
                if (s.adjacent(i, j) && rng.uniform01() < 0.9)
                    s.gamma(v, i, j) = 0.1 + 2.9 * rng.uniform01();
        }
    return s;
}

inline ctmc::MacroState random_macro_state(Rng& rng, const topology::NetworkSpec& s,
                                           std::span<const std::int64_t> sizes) {
    auto y = ctmc::make_macro_state(s.num_islands, s.num_strains);
    for (int i = 0; i < s.num_islands; ++i) {
        std::int64_t budget = sizes[i];
        for (int k = 0; k < s.num_strains; ++k) {
            const auto c = static_cast<std::int64_t>(rng.uniform_below(budget + 1));
            y.at(i, k) = c;
            budget -= c;
        }
    }
    return y;
}

// Every trajectory invariant: strictly increasing times within the horizon,
// unit jumps consistent with the recorded island/strain/kind, and state
// validity after every event.
inline bool trajectory_well_formed(const topology::NetworkSpec& spec,
                                   std::span<const std::int64_t> sizes,
                                   const ctmc::Trajectory& traj) {
    if (!ctmc::macro_state_valid(traj.initial, sizes)) return false;
    ctmc::MacroState cur = traj.initial;
    double last_t = 0.0;
    for (std::size_t e = 0; e < traj.size(); ++e) {
        if (!(traj.times[e] > last_t) || traj.times[e] > traj.horizon) return false;
        last_t = traj.times[e];
        ctmc::MacroState next = cur;
        next.at(traj.islands[e], traj.strains[e]) +=
            (traj.kinds[e] == ctmc::EventKind::infection) ? 1 : -1;
        const auto after = traj.state_after(e);
        for (std::size_t s = 0; s < next.counts.size(); ++s)
            if (next.counts[s] != after[s]) return false;
        if (!ctmc::macro_state_valid(next, sizes)) return false;
        cur = next;
    }
    return true;
}

// empirical distribution of end states, keyed by flattened counts
inline std::map<std::vector<std::int64_t>, double> empirical_distribution(
    const std::vector<ctmc::MacroState>& states) {
    std::map<std::vector<std::int64_t>, double> dist;
    for (const auto& s : states) dist[s.counts] += 1.0;
    for (auto& [k, v] : dist) v /= static_cast<double>(states.size());
    return dist;
}

inline double total_variation(const std::map<std::vector<std::int64_t>, double>& a,
                              const std::map<std::vector<std::int64_t>, double>& b) {
    double l1 = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            l1 += ia->second;
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            l1 += ib->second;
            ++ib;
        } else {
            l1 += std::abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return 0.5 * l1;
}

}  // namespace testutil
