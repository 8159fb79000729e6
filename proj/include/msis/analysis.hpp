#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "msis/common.hpp"
#include "msis/ctmc.hpp"
#include "msis/meanfield.hpp"
#include "msis/state.hpp"
#include "msis/topology.hpp"

namespace msis::analysis {

using meanfield::FractionState;

// Uniform grid over [0, T] with approximately the requested stride; the
// stride is snapped to T/n so the endpoint is hit exactly.
inline std::vector<double> make_grid(double horizon, double stride) {
    if (!(horizon >= 0.0) || !(stride > 0.0))
        throw Error(errc::invalid_state, "need T >= 0 and stride > 0");
    const auto n = std::max<std::int64_t>(1, std::llround(horizon / stride));
    std::vector<double> grid(static_cast<std::size_t>(n) + 1);
    for (std::int64_t i = 0; i <= n; ++i)
        grid[static_cast<std::size_t>(i)] = horizon * static_cast<double>(i) / static_cast<double>(n);
    grid.back() = horizon;
    return grid;
}

struct SampledPath {
    std::vector<double> times;
    std::vector<FractionState> states;
};

// Normalized counts of a trajectory on a grid (right-continuous sampling).
namespace detail {
inline void require_monotone_grid(std::span<const double> grid, double horizon) {
    if (!grid.empty() && grid.back() > horizon * (1.0 + 1e-12))
        throw Error(errc::grid_beyond_horizon, "sample grid extends past the trajectory horizon");
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (grid[g] < grid[g - 1])
            throw Error(errc::grid_mismatch, "sample grid must be non-decreasing");
}
}  // namespace detail

inline SampledPath sample_fractions(const ctmc::Trajectory& traj,
                                    std::span<const std::int64_t> sizes,
                                    std::span<const double> grid) {
    detail::require_monotone_grid(grid, traj.horizon);
    const int m = traj.initial.num_islands;
    const int kk = traj.initial.num_strains;

    SampledPath out;
    out.times.assign(grid.begin(), grid.end());
    out.states.reserve(grid.size());

    std::size_t e = 0;
    std::span<const std::int64_t> cur = traj.initial.counts;
    for (double t : grid) {
        while (e < traj.size() && traj.times[e] <= t) {
            cur = traj.state_after(e);
            ++e;
        }
        FractionState f = meanfield::make_fraction_state(m, kk);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < kk; ++k)
                f.at(i, k) = static_cast<double>(cur[static_cast<std::size_t>(i) * kk + k]) /
                             static_cast<double>(sizes[i]);
        out.states.push_back(std::move(f));
    }
    return out;
}

// Compensated residual of a trajectory on a sample grid:
//   Mbar(t) = Ybar(t) - Ybar(0) - int_0^t F(Ybar(s-)) ds
// with F built from the actual finite-N ratios N_j/N_i, so the drift
// integral is the exact compensator (piecewise-constant integrand summed
// interval by interval, no quadrature error).
struct MartingalePath {
    std::vector<double> times;
    std::vector<FractionState> values;
};

inline MartingalePath extract_martingale(const topology::NetworkSpec& spec,
                                         std::span<const std::int64_t> sizes,
                                         const ctmc::Trajectory& traj,
                                         std::span<const double> grid) {
    detail::require_monotone_grid(grid, traj.horizon);
    const int m = traj.initial.num_islands;
    const int kk = traj.initial.num_strains;
    const std::size_t w = traj.initial.counts.size();
    const meanfield::MeanFieldSystem sys = meanfield::make_system(spec, sizes);

    auto fractions_of = [&](std::span<const std::int64_t> counts) {
        FractionState f = meanfield::make_fraction_state(m, kk);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < kk; ++k)
                f.at(i, k) = static_cast<double>(counts[static_cast<std::size_t>(i) * kk + k]) /
                             static_cast<double>(sizes[i]);
        return f;
    };

    MartingalePath out;
    out.times.assign(grid.begin(), grid.end());
    out.values.reserve(grid.size());

    FractionState y0 = fractions_of(traj.initial.counts);
    FractionState cur = y0;
    FractionState field = meanfield::vector_field(sys, cur);
    std::vector<double> drift(w, 0.0);
    double t_last = 0.0;
    std::size_t e = 0;

    for (double t : grid) {
        while (e < traj.size() && traj.times[e] <= t) {
            const double dt = traj.times[e] - t_last;
            for (std::size_t s = 0; s < w; ++s) drift[s] += field.y[s] * dt;
            cur = fractions_of(traj.state_after(e));
            field = meanfield::vector_field(sys, cur);
            t_last = traj.times[e];
            ++e;
        }
        FractionState val = meanfield::make_fraction_state(m, kk);
        const double dt = t - t_last;
        for (std::size_t s = 0; s < w; ++s)
            val.y[s] = cur.y[s] - y0.y[s] - (drift[s] + field.y[s] * dt);
        out.values.push_back(std::move(val));
    }
    return out;
}

// Sup-norm distance between two paths sampled on the same grid.
inline double sup_distance(const SampledPath& a, const SampledPath& b) {
    if (a.times.size() != b.times.size())
        throw Error(errc::grid_mismatch, "grids have different lengths");
    for (std::size_t i = 0; i < a.times.size(); ++i)
        if (a.times[i] != b.times[i])
            throw Error(errc::grid_mismatch, "grids differ at point " + std::to_string(i));
    double d = 0.0;
    for (std::size_t i = 0; i < a.states.size(); ++i) {
        if (a.states[i].y.size() != b.states[i].y.size())
            throw Error(errc::grid_mismatch, "state widths differ");
        for (std::size_t s = 0; s < a.states[i].y.size(); ++s)
            d = std::max(d, std::abs(a.states[i].y[s] - b.states[i].y[s]));
    }
    return d;
}

// Deterministic parallel map over replica indices: results land in a vector
// slot keyed by index, so thread count never changes the output.
template <typename R, typename Fn>
std::vector<R> ensemble_map(std::uint64_t replicas, unsigned threads, Fn&& fn) {
    std::vector<R> results(replicas);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, replicas == 0 ? 1 : static_cast<unsigned>(std::min<std::uint64_t>(replicas, 64)));
    if (threads <= 1) {
        for (std::uint64_t r = 0; r < replicas; ++r) results[r] = fn(r);
        return results;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::uint64_t r = next.fetch_add(1);
                if (r >= replicas) return;
                try {
                    results[r] = fn(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return results;
}

namespace detail {

inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

inline double regression_slope(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

}  // namespace detail

// One (island, strain) variance check against the L2 bound.
struct VarianceCheck {
    int island = 0;
    int strain = 0;
    double variance = 0.0;
    double bound = 0.0;        // adopted bound (see bound_for)
    double bound_tight = 0.0;  // variant with the transmission term quartered
    bool pass = false;
};

// L2 bound on Var(Mbar_ik(t)) assembled from the inter-transmission and
// healing martingales via (a-b)^2 <= 2a^2 + 2b^2:
//   E Mbar_a^2 <= sum_{j~i} gamma_{ji}^k N_j / N_i^2 * t
//   E Mbar_b^2 <= mu_i^k / N_i * t
// The tighter variant divides the transmission term by 4; that factor is
// reported alongside but not relied on.
inline double bound_for(const topology::NetworkSpec& spec, std::span<const std::int64_t> sizes,
                        int island, int strain, double t, bool quarter = false) {
    double transmission = 0.0;
    for (int j = 0; j < spec.num_islands; ++j)
        if (spec.adjacent(j, island))
            transmission += spec.gamma(strain, j, island) * static_cast<double>(sizes[j]);
    const double ni = static_cast<double>(sizes[island]);
    transmission /= ni * ni;
    if (quarter) transmission /= 4.0;
    return 2.0 * (transmission + spec.mu(strain, island) / ni) * t;
}

// Sample variance of Mbar_ik(t) over an ensemble, compared to the bound with
// a 3-sigma estimation allowance on the variance estimate.
inline std::vector<VarianceCheck> martingale_variance_check(
    const topology::NetworkSpec& spec, std::span<const std::int64_t> sizes,
    std::span<const MartingalePath> ensemble, double t) {
    if (ensemble.size() < 100)
        throw Error(errc::ensemble_too_small,
                    "need at least 100 martingale paths, got " + std::to_string(ensemble.size()));
    const int m = spec.num_islands, kk = spec.num_strains;
    const auto n = static_cast<double>(ensemble.size());

    // locate t on the shared grid
    std::size_t ti = 0;
    bool found = false;
    for (std::size_t g = 0; g < ensemble.front().times.size(); ++g) {
        if (std::abs(ensemble.front().times[g] - t) <= 1e-12 * std::max(1.0, std::abs(t))) {
            ti = g;
            found = true;
            break;
        }
    }
    if (!found) throw Error(errc::grid_mismatch, "checkpoint time not on the martingale grid");

    std::vector<VarianceCheck> out;
    const double allowance = 3.0 * std::sqrt(2.0 / (n - 1.0));
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < kk; ++k) {
            double mean = 0.0;
            for (const auto& path : ensemble) mean += path.values[ti].at(i, k);
            mean /= n;
            double var = 0.0;
            for (const auto& path : ensemble) {
                const double d = path.values[ti].at(i, k) - mean;
                var += d * d;
            }
            var /= (n - 1.0);
            VarianceCheck c;
            c.island = i;
            c.strain = k;
            c.variance = var;
            c.bound = bound_for(spec, sizes, i, k, t, false);
            c.bound_tight = bound_for(spec, sizes, i, k, t, true);
            c.pass = var <= c.bound + allowance * var;
            out.push_back(c);
        }
    }
    return out;
}

// Integer counts realizing target fractions at a given size vector: rounds
// y0_ik * N_i to nearest and removes any per-island excess from the largest
// strain so the state stays feasible.
inline ctmc::MacroState realize_counts(const FractionState& y0,
                                       std::span<const std::int64_t> sizes) {
    ctmc::MacroState c = ctmc::make_macro_state(y0.num_islands, y0.num_strains);
    for (int i = 0; i < y0.num_islands; ++i) {
        for (int k = 0; k < y0.num_strains; ++k)
            c.at(i, k) = std::llround(y0.at(i, k) * static_cast<double>(sizes[i]));
        while (c.island_total(i) > sizes[i]) {
            int largest = 0;
            for (int k = 1; k < y0.num_strains; ++k)
                if (c.at(i, k) > c.at(i, largest)) largest = k;
            --c.at(i, largest);
        }
    }
    return c;
}

struct SweepOptions {
    double horizon = 10.0;
    double grid_stride = 0.01;
    double step = 1e-3;  // RK4 step
    std::uint64_t replicas = 20;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::uint64_t event_cap = ctmc::default_event_cap;
    std::vector<double> checkpoints;  // martingale variance checkpoint times
};

struct SweepEntry {
    std::vector<std::int64_t> sizes;
    FractionState y0_realized;
    std::vector<double> errors;  // sup distance per replica
    double median = 0.0;
    double q10 = 0.0;
    double q90 = 0.0;
    std::vector<std::pair<double, std::vector<VarianceCheck>>> var_checks;
};

struct ConvergenceReport {
    std::vector<SweepEntry> entries;
    double beta = std::numeric_limits<double>::quiet_NaN();  // log-log slope of median error vs N
};

// Ensemble sweep over a size schedule: per entry, replicas of the macro
// chain are compared in sup norm against the ODE built from that entry's
// finite-N ratios, started from the realized (rounded) initial fractions.
inline ConvergenceReport convergence_sweep(const topology::NetworkSpec& spec,
                                           const topology::SizeSchedule& schedule,
                                           const FractionState& y0,
                                           const SweepOptions& opt) {
    topology::validate_schedule(schedule, spec.num_islands);
    ConvergenceReport report;
    const auto grid = make_grid(opt.horizon, opt.grid_stride);

    for (std::size_t e = 0; e < schedule.entries.size(); ++e) {
        const auto& sizes = schedule.entries[e];
        SweepEntry entry;
        entry.sizes = sizes;

        const ctmc::MacroState init = realize_counts(y0, sizes);
        entry.y0_realized = meanfield::make_fraction_state(y0.num_islands, y0.num_strains);
        for (int i = 0; i < y0.num_islands; ++i)
            for (int k = 0; k < y0.num_strains; ++k)
                entry.y0_realized.at(i, k) =
                    static_cast<double>(init.at(i, k)) / static_cast<double>(sizes[i]);

        const auto sys = meanfield::make_system(spec, std::span<const std::int64_t>(sizes));
        const auto ode = meanfield::integrate_on_grid(sys, entry.y0_realized, grid, opt.step);
        SampledPath ode_path{ode.times, ode.states};

        struct ReplicaResult {
            double error;
            std::vector<FractionState> checkpoint_values;
        };
        auto results = ensemble_map<ReplicaResult>(
            opt.replicas, opt.threads, [&](std::uint64_t r) {
                const auto traj = ctmc::simulate_macro(
                    spec, std::span<const std::int64_t>(sizes), init, opt.horizon, opt.seed,
                    e * opt.replicas + r, opt.event_cap);
                if (traj.status == ctmc::TrajectoryStatus::event_cap)
                    throw Error(errc::event_cap_exceeded, "replica hit the event cap");
                ReplicaResult rr;
                rr.error = sup_distance(sample_fractions(traj, std::span<const std::int64_t>(sizes), grid),
                                        ode_path);
                if (!opt.checkpoints.empty()) {
                    auto mp = extract_martingale(spec, std::span<const std::int64_t>(sizes), traj,
                                                 opt.checkpoints);
                    rr.checkpoint_values = std::move(mp.values);
                }
                return rr;
            });

        for (const auto& rr : results) entry.errors.push_back(rr.error);
        entry.median = detail::quantile(entry.errors, 0.5);
        entry.q10 = detail::quantile(entry.errors, 0.1);
        entry.q90 = detail::quantile(entry.errors, 0.9);

        for (std::size_t c = 0; c < opt.checkpoints.size(); ++c) {
            std::vector<MartingalePath> paths(results.size());
            for (std::size_t r = 0; r < results.size(); ++r) {
                paths[r].times = {opt.checkpoints[c]};
                paths[r].values = {results[r].checkpoint_values[c]};
            }
            entry.var_checks.emplace_back(
                opt.checkpoints[c],
                martingale_variance_check(spec, std::span<const std::int64_t>(sizes), paths,
                                          opt.checkpoints[c]));
        }
        report.entries.push_back(std::move(entry));
    }

    if (report.entries.size() >= 2) {
        std::vector<double> lx, ly;
        for (const auto& entry : report.entries) {
            double logn = 0.0;
            for (auto n : entry.sizes) logn += std::log(static_cast<double>(n));
            lx.push_back(logn / static_cast<double>(entry.sizes.size()));  // log geometric mean
            ly.push_back(std::log(entry.median));
        }
        report.beta = detail::regression_slope(lx, ly);
    }
    return report;
}

struct MartingaleSweepEntry {
    std::vector<std::int64_t> sizes;
    std::vector<VarianceCheck> checks;
};

struct MartingaleSweepResult {
    double t = 0.0;
    std::vector<MartingaleSweepEntry> entries;
    std::vector<double> exponents;  // per (i,k), log-log slope of Var vs N
    bool bounds_pass = false;
};

// Variance-scaling sweep: per schedule entry, an ensemble of martingale
// values at time t; reports per-coordinate variances against bounds and the
// fitted decay exponent across the schedule.
inline MartingaleSweepResult martingale_sweep(const topology::NetworkSpec& spec,
                                              const topology::SizeSchedule& schedule,
                                              const FractionState& y0, double t,
                                              std::uint64_t replicas, std::uint64_t seed,
                                              unsigned threads = 0,
                                              std::uint64_t event_cap = ctmc::default_event_cap) {
    topology::validate_schedule(schedule, spec.num_islands);
    MartingaleSweepResult result;
    result.t = t;
    result.bounds_pass = true;
    const std::vector<double> grid{t};

    for (std::size_t e = 0; e < schedule.entries.size(); ++e) {
        const auto& sizes = schedule.entries[e];
        const ctmc::MacroState init = realize_counts(y0, sizes);
        auto paths = ensemble_map<MartingalePath>(
            replicas, threads, [&](std::uint64_t r) {
                const auto traj = ctmc::simulate_macro(spec, std::span<const std::int64_t>(sizes),
                                                       init, t, seed, e * replicas + r, event_cap);
                if (traj.status == ctmc::TrajectoryStatus::event_cap)
                    throw Error(errc::event_cap_exceeded, "replica hit the event cap");
                return extract_martingale(spec, std::span<const std::int64_t>(sizes), traj, grid);
            });
        MartingaleSweepEntry entry;
        entry.sizes = sizes;
        entry.checks = martingale_variance_check(spec, std::span<const std::int64_t>(sizes), paths, t);
        for (const auto& c : entry.checks) result.bounds_pass = result.bounds_pass && c.pass;
        result.entries.push_back(std::move(entry));
    }

    if (result.entries.size() >= 2) {
        const std::size_t coords = result.entries.front().checks.size();
        for (std::size_t c = 0; c < coords; ++c) {
            std::vector<double> lx, ly;
            for (const auto& entry : result.entries) {
                double logn = 0.0;
                for (auto n : entry.sizes) logn += std::log(static_cast<double>(n));
                lx.push_back(logn / static_cast<double>(entry.sizes.size()));
                ly.push_back(std::log(entry.checks[c].variance));
            }
            result.exponents.push_back(detail::regression_slope(lx, ly));
        }
    }
    return result;
}

}  // namespace msis::analysis
