#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msis/common.hpp"
#include "msis/rng.hpp"
#include "msis/state.hpp"
#include "msis/topology.hpp"

namespace msis::ctmc {

struct RateEntry {
    EventKind kind;
    int island;
    int strain;
    double rate;
};

// Macroscopic jump rates at a state, enumerated in the fixed scan order
// (island-major, strain-minor, healing before infection). Zero-rate events
// are omitted.
//
//   healing(i,k)   = mu_i^k * Y_ik
//   infection(i,k) = (sum_{j~i} gamma_{ji}^k * Y_jk) * (N_i - sum_m Y_im)/N_i
inline std::vector<RateEntry> transition_rates(const topology::NetworkSpec& spec,
                                               std::span<const std::int64_t> sizes,
                                               const MacroState& state) {
    require_valid(state, sizes);
    std::vector<RateEntry> out;
    out.reserve(static_cast<std::size_t>(2) * spec.num_islands * spec.num_strains);
    for (int i = 0; i < spec.num_islands; ++i) {
        const double healthy_frac =
            static_cast<double>(sizes[i] - state.island_total(i)) / static_cast<double>(sizes[i]);
        for (int k = 0; k < spec.num_strains; ++k) {
            const double heal = spec.mu(k, i) * static_cast<double>(state.at(i, k));
            if (heal > 0.0) out.push_back({EventKind::healing, i, k, heal});
            double pressure = 0.0;
            for (int j = 0; j < spec.num_islands; ++j)
                if (spec.adjacent(j, i))
                    pressure += spec.gamma(k, j, i) * static_cast<double>(state.at(j, k));
            const double infect = pressure * healthy_frac;
            if (infect > 0.0) out.push_back({EventKind::infection, i, k, infect});
        }
    }
    return out;
}

inline constexpr std::uint64_t default_event_cap = 100'000'000;

// Exact Gillespie simulation of the macro chain. Deterministic given
// (spec, sizes, initial, horizon, seed, replica_index): one exponential
// waiting time per step at the total rate, then a cumulative-sum scan in the
// rate enumeration order picks the event.
inline Trajectory simulate_macro(const topology::NetworkSpec& spec,
                                 std::span<const std::int64_t> sizes,
                                 const MacroState& initial, double horizon,
                                 std::uint64_t seed, std::uint64_t replica_index,
                                 std::uint64_t event_cap = default_event_cap) {
    require_valid(initial, sizes);
    Trajectory traj;
    traj.initial = initial;
    traj.horizon = horizon;

    Rng rng = Rng::for_replica(seed, replica_index);
    MacroState state = initial;
    double t = 0.0;

    std::vector<RateEntry> rates;
    while (true) {
        rates = transition_rates(spec, sizes, state);
        if (rates.empty()) {
            traj.status = TrajectoryStatus::absorbed;
            return traj;
        }
        double total = 0.0;
        for (const auto& r : rates) total += r.rate;

        t += rng.exponential(total);
        if (t > horizon) {
            traj.status = TrajectoryStatus::reached_horizon;
            return traj;
        }
        if (traj.size() >= event_cap) {
            traj.status = TrajectoryStatus::event_cap;
            return traj;
        }

        // ties on floating-point boundaries resolve to the earlier scan entry
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        const RateEntry* chosen = &rates.back();
        for (const auto& r : rates) {
            acc += r.rate;
            if (target < acc) {
                chosen = &r;
                break;
            }
        }

        state.at(chosen->island, chosen->strain) +=
            (chosen->kind == EventKind::infection) ? 1 : -1;
        require_valid(state, sizes);
        traj.push_event(t, chosen->kind, chosen->island, chosen->strain, state);
    }
}

// Node-level simulator. Every k-infected node at island I carries a healing
// clock of rate mu_I^k and one attempt clock of rate gamma_{IJ}^k per
// neighboring island J; clocks are exponential and re-armed memorylessly.
// An attempt picks a uniformly random node at the target island and infects
// it only if healthy. No-op attempts advance time but emit no event, so the
// returned trajectory holds effective transitions only, in macro form.
inline Trajectory simulate_micro(const topology::NetworkSpec& spec,
                                 std::span<const std::int64_t> sizes,
                                 const MicroState& initial, double horizon,
                                 std::uint64_t seed, std::uint64_t replica_index,
                                 std::uint64_t event_cap = default_event_cap) {
    const int m = spec.num_islands;
    const int kk = spec.num_strains;
    if (static_cast<int>(initial.labels.size()) != m)
        throw Error(errc::invalid_state, "micro state island count mismatch");
    for (int i = 0; i < m; ++i)
        if (initial.labels[i].size() != static_cast<std::size_t>(sizes[i]))
            throw Error(errc::invalid_state, "micro state node count mismatch");

    MacroState state = initial.aggregate(kk);
    require_valid(state, sizes);

    Trajectory traj;
    traj.initial = state;
    traj.horizon = horizon;

    // node bookkeeping: per (island, strain) the list of infected node ids,
    // plus each node's position in its list for O(1) removal
    std::vector<std::vector<std::uint16_t>> label = initial.labels;
    std::vector<std::vector<std::vector<std::uint32_t>>> members(m);
    std::vector<std::vector<std::uint32_t>> position(m);
    for (int i = 0; i < m; ++i) {
        members[i].assign(kk, {});
        position[i].assign(label[i].size(), 0);
        for (std::uint32_t n = 0; n < label[i].size(); ++n) {
            if (label[i][n] != 0) {
                auto& list = members[i][label[i][n] - 1];
                position[i][n] = static_cast<std::uint32_t>(list.size());
                list.push_back(n);
            }
        }
    }

    std::vector<std::vector<int>> nbrs(m);
    for (int i = 0; i < m; ++i) nbrs[i] = topology::superneighbors(spec, i);

    Rng rng = Rng::for_replica(seed, replica_index);
    double t = 0.0;
    std::uint64_t fired = 0;  // all clock rings, effective or not

    // per-event families in scan order: for each island i, strain k:
    // healing(i,k), then attempts (i,k)->J over ascending neighbors J
    struct Family {
        int island, strain, target;  // target < 0 means healing
        double rate;
    };
    std::vector<Family> fams;
    while (true) {
        fams.clear();
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
            for (int k = 0; k < kk; ++k) {
                const auto count = static_cast<double>(members[i][k].size());
                if (count == 0.0) continue;
                const double heal = spec.mu(k, i) * count;
                fams.push_back({i, k, -1, heal});
                total += heal;
                for (int j : nbrs[i]) {
                    const double attempt = spec.gamma(k, i, j) * count;
                    if (attempt > 0.0) {
                        fams.push_back({i, k, j, attempt});
                        total += attempt;
                    }
                }
            }
        }
        if (fams.empty()) {
            traj.status = TrajectoryStatus::absorbed;
            return traj;
        }

        t += rng.exponential(total);
        if (t > horizon) {
            traj.status = TrajectoryStatus::reached_horizon;
            return traj;
        }
        if (++fired > event_cap) {
            traj.status = TrajectoryStatus::event_cap;
            return traj;
        }

        const double target_mass = rng.uniform01() * total;
        double acc = 0.0;
        const Family* chosen = &fams.back();
        for (const auto& f : fams) {
            acc += f.rate;
            if (target_mass < acc) {
                chosen = &f;
                break;
            }
        }

        const int i = chosen->island;
        const int k = chosen->strain;
        if (chosen->target < 0) {
            // healing: the minimum of i.i.d. clocks is uniform over carriers
            auto& list = members[i][k];
            const auto idx = static_cast<std::size_t>(rng.uniform_below(list.size()));
            const std::uint32_t node = list[idx];
            list[idx] = list.back();
            position[i][list[idx]] = static_cast<std::uint32_t>(idx);
            list.pop_back();
            label[i][node] = 0;
            --state.at(i, k);
            traj.push_event(t, EventKind::healing, i, k, state);
        } else {
            const int j = chosen->target;
            const auto victim = static_cast<std::uint32_t>(
                rng.uniform_below(static_cast<std::uint64_t>(sizes[j])));
            if (label[j][victim] == 0) {
                label[j][victim] = static_cast<std::uint16_t>(k + 1);
                auto& list = members[j][k];
                position[j][victim] = static_cast<std::uint32_t>(list.size());
                list.push_back(victim);
                ++state.at(j, k);
                traj.push_event(t, EventKind::infection, j, k, state);
            }
            // already-infected victim: nothing happens
        }
        require_valid(state, sizes);
    }
}

}  // namespace msis::ctmc
