#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "msis/common.hpp"
#include "msis/ctmc.hpp"
#include "msis/state.hpp"
#include "msis/topology.hpp"

namespace msis::ctmc {

inline constexpr std::uint64_t default_state_cap = 200'000;

// Explicit rate matrix over the enumerated product state space
//   prod_i { Y_i in N^K : sum_k Y_ik <= N_i }.
// Rows hold off-diagonal rates sparsely; the diagonal is the negated row sum,
// so rows sum to zero exactly.
struct GeneratorMatrix {
    int num_islands = 0;
    int num_strains = 0;
    std::vector<std::int64_t> sizes;

    // per-island composition tables, lexicographic order (strain 0 major)
    std::vector<std::vector<std::vector<std::int64_t>>> comps;
    std::vector<std::uint64_t> strides;
    std::uint64_t num_states = 0;

    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
    std::vector<double> diag;

    MacroState state_of(std::uint64_t index) const {
        MacroState y = make_macro_state(num_islands, num_strains);
        for (int i = 0; i < num_islands; ++i) {
            const auto ci = static_cast<std::size_t>((index / strides[i]) % comps[i].size());
            for (int k = 0; k < num_strains; ++k) y.at(i, k) = comps[i][ci][k];
        }
        return y;
    }

    std::uint64_t index_of(const MacroState& y) const {
        std::uint64_t idx = 0;
        for (int i = 0; i < num_islands; ++i) {
            std::vector<std::int64_t> c(y.counts.begin() + static_cast<std::ptrdiff_t>(i) * num_strains,
                                        y.counts.begin() + static_cast<std::ptrdiff_t>(i + 1) * num_strains);
            idx += rank_composition(i, c) * strides[i];
        }
        return idx;
    }

    // lexicographic rank of a composition within island i's table
    std::uint64_t rank_composition(int island, const std::vector<std::int64_t>& c) const {
        const auto& counts = comp_counts[island];
        const int k = num_strains;
        std::uint64_t rank = 0;
        std::int64_t budget = sizes[island];
        for (int d = 0; d < k; ++d) {
            const int slots_left = k - d - 1;
            for (std::int64_t v = 0; v < c[d]; ++v)
                rank += counts[slots_left][static_cast<std::size_t>(budget - v)];
            budget -= c[d];
        }
        return rank;
    }

    // comp_counts[i][s][c] = number of compositions of s slots with sum <= c
    std::vector<std::vector<std::vector<std::uint64_t>>> comp_counts;
};

namespace detail {

inline std::vector<std::vector<std::uint64_t>> composition_count_table(int slots, std::int64_t cap) {
    std::vector<std::vector<std::uint64_t>> t(static_cast<std::size_t>(slots) + 1,
                                              std::vector<std::uint64_t>(static_cast<std::size_t>(cap) + 1, 0));
    for (std::int64_t c = 0; c <= cap; ++c) t[0][static_cast<std::size_t>(c)] = 1;
    for (int s = 1; s <= slots; ++s) {
        t[s][0] = 1;
        for (std::int64_t c = 1; c <= cap; ++c)
            t[s][static_cast<std::size_t>(c)] =
                t[s - 1][static_cast<std::size_t>(c)] + t[s][static_cast<std::size_t>(c - 1)];
    }
    return t;
}

inline void enumerate_compositions(int slots, std::int64_t cap,
                                   std::vector<std::int64_t>& cur,
                                   std::vector<std::vector<std::int64_t>>& out) {
    if (static_cast<int>(cur.size()) == slots) {
        out.push_back(cur);
        return;
    }
    for (std::int64_t v = 0; v <= cap; ++v) {
        cur.push_back(v);
        enumerate_compositions(slots, cap - v, cur, out);
        cur.pop_back();
    }
}

}  // namespace detail

inline GeneratorMatrix build_generator(const topology::NetworkSpec& spec,
                                       std::span<const std::int64_t> sizes,
                                       std::uint64_t state_cap = default_state_cap) {
    GeneratorMatrix g;
    g.num_islands = spec.num_islands;
    g.num_strains = spec.num_strains;
    g.sizes.assign(sizes.begin(), sizes.end());

    g.comps.resize(g.num_islands);
    g.comp_counts.resize(g.num_islands);
    std::uint64_t total = 1;
    for (int i = 0; i < g.num_islands; ++i) {
        g.comp_counts[i] = detail::composition_count_table(g.num_strains, sizes[i]);
        const std::uint64_t ni = g.comp_counts[i][g.num_strains][static_cast<std::size_t>(sizes[i])];
        if (ni > state_cap || total > state_cap / ni)
            throw Error(errc::state_space_too_large,
                        "enumerated state count exceeds cap " + std::to_string(state_cap));
        total *= ni;
        std::vector<std::int64_t> cur;
        detail::enumerate_compositions(g.num_strains, sizes[i], cur, g.comps[i]);
    }
    g.num_states = total;
    g.strides.assign(g.num_islands, 1);
    for (int i = g.num_islands - 2; i >= 0; --i)
        g.strides[i] = g.strides[i + 1] * g.comps[i + 1].size();

    g.rows.resize(total);
    g.diag.assign(total, 0.0);
    for (std::uint64_t s = 0; s < total; ++s) {
        MacroState y = g.state_of(s);
        const auto rates = transition_rates(spec, sizes, y);
        double out_sum = 0.0;
        for (const auto& r : rates) {
            MacroState to = y;
            to.at(r.island, r.strain) += (r.kind == EventKind::infection) ? 1 : -1;
            g.rows[s].emplace_back(static_cast<std::uint32_t>(g.index_of(to)), r.rate);
            out_sum += r.rate;
        }
        g.diag[s] = -out_sum;
    }
    return g;
}

// Transient distribution by uniformization: with Lambda >= max |Q_ii| and
// P = I + Q/Lambda,  pi(t) = sum_n Poisson(Lambda t; n) pi0 P^n, truncated
// once the accumulated Poisson mass reaches 1 - tail_eps. Large Lambda*t is
// handled by splitting t, which keeps the term weights representable.
inline std::vector<double> transient_distribution(const GeneratorMatrix& g,
                                                  std::vector<double> dist, double t,
                                                  double tail_eps = 1e-12) {
    if (t < 0.0) throw Error(errc::invalid_state, "negative time");
    const std::size_t n = g.num_states;
    if (dist.size() != n) throw Error(errc::dimension_mismatch, "distribution length mismatch");
    double mass = 0.0;
    for (double p : dist) mass += p;
    if (std::abs(mass - 1.0) > 1e-12)
        throw Error(errc::invalid_state, "initial distribution does not sum to 1");
    if (t == 0.0) return dist;

    double lambda_max = 0.0;
    for (double d : g.diag) lambda_max = std::max(lambda_max, -d);
    if (lambda_max == 0.0) return dist;  // zero generator
    const double lambda = 1.05 * lambda_max;

    int splits = 0;
    double step = t;
    while (lambda * step > 200.0) {  // keep e^{-Lambda t} well inside range
        step *= 0.5;
        ++splits;
    }
    const int pieces = 1 << splits;
    const double piece_eps = tail_eps / pieces;

    std::vector<double> v = std::move(dist);
    std::vector<double> acc(n), qv(n);
    for (int piece = 0; piece < pieces; ++piece) {
        const double lt = lambda * step;
        double w = std::exp(-lt);
        double cum = w;
        for (std::size_t s = 0; s < n; ++s) acc[s] = w * v[s];
        std::uint64_t term = 0;
        while (cum < 1.0 - piece_eps) {
            // v <- v P = v + (v Q)/Lambda
            std::fill(qv.begin(), qv.end(), 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                const double vr = v[r];
                if (vr == 0.0) continue;
                for (const auto& [c, rate] : g.rows[r]) qv[c] += vr * rate;
                qv[r] += vr * g.diag[r];
            }
            for (std::size_t s = 0; s < n; ++s) v[s] += qv[s] / lambda;
            ++term;
            w *= lt / static_cast<double>(term);
            cum += w;
            for (std::size_t s = 0; s < n; ++s) acc[s] += w * v[s];
        }
        v = acc;
        // renormalize the truncation residue before the next piece
        double piece_mass = 0.0;
        for (double p : v) piece_mass += p;
        for (double& p : v) p /= piece_mass;
    }

    double total = 0.0;
    for (double& p : v) {
        if (p < 0.0) {
            if (p < -1e-10)
                throw Error(errc::non_stochastic_result, "negative probability from uniformization");
            p = 0.0;
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-10)
        throw Error(errc::non_stochastic_result, "uniformization mass drifted from 1");
    for (double& p : v) p /= total;
    return v;
}

}  // namespace msis::ctmc
