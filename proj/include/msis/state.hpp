#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msis/common.hpp"
#include "msis/topology.hpp"

namespace msis::ctmc {

// Infected counts per island per strain, Y[i][k], flattened island-major.
struct MacroState {
    int num_islands = 0;
    int num_strains = 0;
    std::vector<std::int64_t> counts;  // M*K

    std::int64_t& at(int island, int strain) {
        return counts[static_cast<std::size_t>(island) * num_strains + strain];
    }
    std::int64_t at(int island, int strain) const {
        return counts[static_cast<std::size_t>(island) * num_strains + strain];
    }
    std::int64_t island_total(int island) const {
        std::int64_t s = 0;
        for (int k = 0; k < num_strains; ++k) s += at(island, k);
        return s;
    }
};

inline MacroState make_macro_state(int islands, int strains) {
    return MacroState{islands, strains, std::vector<std::int64_t>(static_cast<std::size_t>(islands) * strains, 0)};
}

// State-space membership: counts >= 0 and per-island totals within N_i.
inline bool macro_state_valid(const MacroState& y, std::span<const std::int64_t> sizes) {
    if (y.counts.size() != static_cast<std::size_t>(y.num_islands) * y.num_strains) return false;
    if (sizes.size() != static_cast<std::size_t>(y.num_islands)) return false;
    for (int i = 0; i < y.num_islands; ++i) {
        std::int64_t total = 0;
        for (int k = 0; k < y.num_strains; ++k) {
            const std::int64_t c = y.at(i, k);
            if (c < 0) return false;
            total += c;
        }
        if (total > sizes[i]) return false;
    }
    return true;
}

inline void require_valid(const MacroState& y, std::span<const std::int64_t> sizes) {
    if (!macro_state_valid(y, sizes))
        throw Error(errc::invalid_state, "macro state violates the per-island count bounds");
}

enum class EventKind : std::uint8_t { infection = 0, healing = 1 };

inline const char* event_name(EventKind k) {
    return k == EventKind::infection ? "infection" : "healing";
}

enum class TrajectoryStatus : std::uint8_t {
    reached_horizon,  // simulated up to T
    absorbed,         // hit the all-zero absorbing state before T
    event_cap,        // stopped early at the event cap; treat as an error
};

// Cadlag jump record of one run: strictly increasing event times, each event
// a unit jump in one (island, strain) entry, with the resulting counts stored
// flat (stride M*K).
struct Trajectory {
    MacroState initial;
    double horizon = 0.0;
    TrajectoryStatus status = TrajectoryStatus::reached_horizon;

    std::vector<double> times;
    std::vector<EventKind> kinds;
    std::vector<std::int32_t> islands;
    std::vector<std::int32_t> strains;
    std::vector<std::int64_t> states_after;  // size() * M*K

    std::size_t size() const { return times.size(); }
    std::span<const std::int64_t> state_after(std::size_t e) const {
        const std::size_t w = initial.counts.size();
        return {states_after.data() + e * w, w};
    }

    void push_event(double t, EventKind kind, int island, int strain,
                    const MacroState& after) {
        times.push_back(t);
        kinds.push_back(kind);
        islands.push_back(island);
        strains.push_back(strain);
        states_after.insert(states_after.end(), after.counts.begin(), after.counts.end());
    }

    // Counts at time t (right-continuous): state after the last event <= t.
    MacroState state_at(double t) const {
        MacroState s = initial;
        // callers that sweep a grid should prefer the two-pointer walk in
        // analysis; this is for point queries
        std::size_t lo = 0, hi = size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (times[mid] <= t) lo = mid + 1; else hi = mid;
        }
        if (lo > 0) {
            auto sp = state_after(lo - 1);
            s.counts.assign(sp.begin(), sp.end());
        }
        return s;
    }
};

// Per-node labels: 0 = healthy, 1..K = infected with that strain.
struct MicroState {
    std::vector<std::vector<std::uint16_t>> labels;  // labels[island][node]

    MacroState aggregate(int num_strains) const {
        MacroState y = make_macro_state(static_cast<int>(labels.size()), num_strains);
        for (int i = 0; i < y.num_islands; ++i)
            for (auto lab : labels[i])
                if (lab != 0) ++y.at(i, lab - 1);
        return y;
    }
};

// Canonical micro layout for a macro state: within each island, nodes are
// labeled strain by strain from index 0. Exchangeability makes the induced
// law depend on counts only.
inline MicroState micro_from_macro(const MacroState& y, std::span<const std::int64_t> sizes) {
    require_valid(y, sizes);
    MicroState m;
    m.labels.resize(y.num_islands);
    for (int i = 0; i < y.num_islands; ++i) {
        m.labels[i].assign(static_cast<std::size_t>(sizes[i]), 0);
        std::size_t pos = 0;
        for (int k = 0; k < y.num_strains; ++k)
            for (std::int64_t c = 0; c < y.at(i, k); ++c)
                m.labels[i][pos++] = static_cast<std::uint16_t>(k + 1);
    }
    return m;
}

}  // namespace msis::ctmc
