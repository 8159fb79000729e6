#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "msis/common.hpp"
#include "msis/topology.hpp"

namespace msis::meanfield {

// Fractions of infected nodes, y[i][k], island-major like MacroState.
struct FractionState {
    int num_islands = 0;
    int num_strains = 0;
    std::vector<double> y;  // M*K

    double& at(int island, int strain) {
        return y[static_cast<std::size_t>(island) * num_strains + strain];
    }
    double at(int island, int strain) const {
        return y[static_cast<std::size_t>(island) * num_strains + strain];
    }
    double island_total(int island) const {
        double s = 0.0;
        for (int k = 0; k < num_strains; ++k) s += at(island, k);
        return s;
    }
};

inline FractionState make_fraction_state(int islands, int strains) {
    return FractionState{islands, strains, std::vector<double>(static_cast<std::size_t>(islands) * strains, 0.0)};
}

inline bool fraction_state_valid(const FractionState& s, double slack = 0.0) {
    for (double v : s.y)
        if (!(v >= -slack) || !std::isfinite(v)) return false;
    for (int i = 0; i < s.num_islands; ++i)
        if (!(s.island_total(i) <= 1.0 + slack)) return false;
    return true;
}

// Limiting dynamics with normalized rates gamma_bar(k,j,i) = alpha(j,i) *
// gamma(k,j,i), alpha(j,i) = lim N_j/N_i. Same [strain][from][to] layout as
// NetworkSpec.
struct MeanFieldSystem {
    int num_islands = 0;
    int num_strains = 0;
    std::vector<std::uint8_t> adjacency;  // M*M
    std::vector<double> gamma_bar;        // K*M*M
    std::vector<double> mu;               // K*M

    bool adjacent(int i, int j) const { return adjacency[static_cast<std::size_t>(i) * num_islands + j] != 0; }
    double gbar(int k, int from, int to) const {
        return gamma_bar[(static_cast<std::size_t>(k) * num_islands + from) * num_islands + to];
    }
    double mu_of(int k, int island) const { return mu[static_cast<std::size_t>(k) * num_islands + island]; }
};

// alpha given explicitly as an M*M matrix, alpha[j*M+i] = lim N_j/N_i.
inline MeanFieldSystem make_system(const topology::NetworkSpec& spec, std::span<const double> alpha) {
    const int m = spec.num_islands;
    MeanFieldSystem sys;
    sys.num_islands = m;
    sys.num_strains = spec.num_strains;
    sys.adjacency = spec.adjacency;
    sys.mu = spec.healing_rates;
    sys.gamma_bar.assign(spec.infection_rates.size(), 0.0);
    for (int k = 0; k < spec.num_strains; ++k)
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i)
                sys.gamma_bar[(static_cast<std::size_t>(k) * m + j) * m + i] =
                    alpha[static_cast<std::size_t>(j) * m + i] * spec.gamma(k, j, i);
    return sys;
}

// Finite-N system: alpha(j,i) taken as the actual ratio N_j/N_i, which makes
// the drift match the macro chain's compensator exactly at that N.
inline MeanFieldSystem make_system(const topology::NetworkSpec& spec,
                                   std::span<const std::int64_t> sizes) {
    std::vector<std::int64_t> v(sizes.begin(), sizes.end());
    return make_system(spec, topology::ratios_of(v));
}

//   F_ik(y) = (sum_{j~i} gamma_bar_{ji}^k y_jk) (1 - sum_m y_im) - mu_i^k y_ik
inline FractionState vector_field(const MeanFieldSystem& sys, const FractionState& y) {
    if (y.num_islands != sys.num_islands || y.num_strains != sys.num_strains ||
        y.y.size() != static_cast<std::size_t>(sys.num_islands) * sys.num_strains)
        throw Error(errc::dimension_mismatch, "state shape does not match system");
    FractionState f = make_fraction_state(sys.num_islands, sys.num_strains);
    for (int i = 0; i < sys.num_islands; ++i) {
        const double healthy = 1.0 - y.island_total(i);
        for (int k = 0; k < sys.num_strains; ++k) {
            double pressure = 0.0;
            for (int j = 0; j < sys.num_islands; ++j)
                if (sys.adjacent(j, i)) pressure += sys.gbar(k, j, i) * y.at(j, k);
            f.at(i, k) = pressure * healthy - sys.mu_of(k, i) * y.at(i, k);
        }
    }
    return f;
}

// Step-size heuristic used by the feasibility-invariance contract:
// h <= 1e-2 * min(1, 1/max_rate) keeps RK4 inside the feasible set.
inline double max_rate(const MeanFieldSystem& sys) {
    double r = 0.0;
    for (double m : sys.mu) r = std::max(r, m);
    for (int k = 0; k < sys.num_strains; ++k)
        for (int i = 0; i < sys.num_islands; ++i) {
            double pressure = 0.0;
            for (int j = 0; j < sys.num_islands; ++j)
                if (sys.adjacent(j, i)) pressure += sys.gbar(k, j, i);
            r = std::max(r, pressure);
        }
    return r;
}

inline double suggested_step(const MeanFieldSystem& sys) {
    return 1e-2 * std::min(1.0, 1.0 / std::max(max_rate(sys), 1e-30));
}

namespace detail {

inline void rk4_step(const MeanFieldSystem& sys, const FractionState& y, double h,
                     FractionState& out) {
    const std::size_t n = y.y.size();
    FractionState k1 = vector_field(sys, y);
    FractionState tmp = y;
    for (std::size_t s = 0; s < n; ++s) tmp.y[s] = y.y[s] + 0.5 * h * k1.y[s];
    FractionState k2 = vector_field(sys, tmp);
    for (std::size_t s = 0; s < n; ++s) tmp.y[s] = y.y[s] + 0.5 * h * k2.y[s];
    FractionState k3 = vector_field(sys, tmp);
    for (std::size_t s = 0; s < n; ++s) tmp.y[s] = y.y[s] + h * k3.y[s];
    FractionState k4 = vector_field(sys, tmp);
    out = y;
    for (std::size_t s = 0; s < n; ++s)
        out.y[s] = y.y[s] + h / 6.0 * (k1.y[s] + 2.0 * k2.y[s] + 2.0 * k3.y[s] + k4.y[s]);
}

inline constexpr double feasibility_tol = 1e-9;

// Round-off sized violations are projected back onto the feasible set and
// counted; anything larger is a genuine step-size failure.
inline void project_or_throw(FractionState& y, std::uint64_t& projections) {
    for (double v : y.y)
        if (!std::isfinite(v)) throw Error(errc::non_finite_state, "integrator produced a non-finite state");
    for (int i = 0; i < y.num_islands; ++i) {
        for (int k = 0; k < y.num_strains; ++k) {
            double& v = y.at(i, k);
            if (v < 0.0) {
                if (v < -feasibility_tol)
                    throw Error(errc::step_too_large,
                                "state left the feasible set; reduce the step size");
                v = 0.0;
                ++projections;
            }
        }
        const double total = y.island_total(i);
        if (total > 1.0) {
            if (total > 1.0 + feasibility_tol)
                throw Error(errc::step_too_large,
                            "island fraction sum exceeded 1; reduce the step size");
            for (int k = 0; k < y.num_strains; ++k) y.at(i, k) /= total;
            ++projections;
        }
    }
}

}  // namespace detail

struct OdeOutput {
    std::vector<double> times;
    std::vector<FractionState> states;
    std::uint64_t projections = 0;  // feasibility projections applied
};

// Classical RK4 with fixed step h; the final partial step is shortened to
// land exactly on T. Output holds every accepted step including t = 0.
inline OdeOutput integrate(const MeanFieldSystem& sys, const FractionState& y0,
                           double horizon, double h, std::uint64_t output_stride = 1) {
    if (!(h > 0.0) || horizon < 0.0) throw Error(errc::invalid_state, "need h > 0 and T >= 0");
    if (!fraction_state_valid(y0)) throw Error(errc::invalid_state, "initial fractions invalid");
    if (output_stride == 0) output_stride = 1;

    OdeOutput out;
    out.times.push_back(0.0);
    out.states.push_back(y0);

    const auto full_steps = static_cast<std::uint64_t>(horizon / h);
    FractionState cur = y0, next = y0;
    std::uint64_t step = 0;
    double t = 0.0;
    while (t < horizon) {
        double t_next = (step + 1 <= full_steps) ? static_cast<double>(step + 1) * h : horizon;
        if (t_next > horizon) t_next = horizon;
        detail::rk4_step(sys, cur, t_next - t, next);
        detail::project_or_throw(next, out.projections);
        cur = next;
        t = t_next;
        ++step;
        if (step % output_stride == 0 || t == horizon) {
            out.times.push_back(t);
            out.states.push_back(cur);
        }
    }
    return out;
}

// Dense output on an explicit, strictly increasing grid (grid[0] == 0).
// Each grid interval is covered by equal sub-steps of length <= h, so grid
// times are hit exactly and two samplers sharing a grid stay comparable.
inline OdeOutput integrate_on_grid(const MeanFieldSystem& sys, const FractionState& y0,
                                   std::span<const double> grid, double h) {
    if (!(h > 0.0)) throw Error(errc::invalid_state, "need h > 0");
    if (grid.empty() || grid.front() != 0.0)
        throw Error(errc::grid_mismatch, "grid must start at 0");
    if (!fraction_state_valid(y0)) throw Error(errc::invalid_state, "initial fractions invalid");

    OdeOutput out;
    out.times.assign(grid.begin(), grid.end());
    out.states.reserve(grid.size());
    out.states.push_back(y0);

    FractionState cur = y0, next = y0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const double span = grid[g] - grid[g - 1];
        if (!(span > 0.0)) throw Error(errc::grid_mismatch, "grid times must strictly increase");
        const auto sub = static_cast<std::uint64_t>(std::ceil(span / h - 1e-12));
        const double hs = span / static_cast<double>(std::max<std::uint64_t>(sub, 1));
        for (std::uint64_t s = 0; s < std::max<std::uint64_t>(sub, 1); ++s) {
            detail::rk4_step(sys, cur, hs, next);
            detail::project_or_throw(next, out.projections);
            cur = next;
        }
        out.states.push_back(cur);
    }
    return out;
}

// Analytic Jacobian of the vector field; entries are affine in each
// coordinate. Row (i,k), column (a,b), both flattened island-major.
inline std::vector<double> jacobian(const MeanFieldSystem& sys, const FractionState& y) {
    const int m = sys.num_islands, kk = sys.num_strains;
    const int n = m * kk;
    std::vector<double> jac(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double healthy = 1.0 - y.island_total(i);
        for (int k = 0; k < kk; ++k) {
            const int row = i * kk + k;
            double pressure = 0.0;
            for (int j = 0; j < m; ++j)
                if (sys.adjacent(j, i)) pressure += sys.gbar(k, j, i) * y.at(j, k);
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < kk; ++b) {
                    const int col = a * kk + b;
                    double v = 0.0;
                    if (b == k && sys.adjacent(a, i)) v += sys.gbar(k, a, i) * healthy;
                    if (a == i) v -= pressure;
                    if (a == i && b == k) v -= sys.mu_of(k, i);
                    jac[static_cast<std::size_t>(row) * n + col] = v;
                }
            }
        }
    }
    return jac;
}

namespace detail {

// Gaussian elimination with partial pivoting; a is n*n row-major, b length n.
// Returns false on a (numerically) singular system.
inline bool solve_dense(std::vector<double> a, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<std::size_t>(r) * n + col]) >
                std::abs(a[static_cast<std::size_t>(piv) * n + col]))
                piv = r;
        if (std::abs(a[static_cast<std::size_t>(piv) * n + col]) < 1e-300) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c)
                std::swap(a[static_cast<std::size_t>(piv) * n + c], a[static_cast<std::size_t>(col) * n + c]);
            std::swap(b[piv], b[col]);
        }
        const double d = a[static_cast<std::size_t>(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[static_cast<std::size_t>(r) * n + col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c)
                a[static_cast<std::size_t>(r) * n + c] -= f * a[static_cast<std::size_t>(col) * n + c];
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[static_cast<std::size_t>(r) * n + c] * b[c];
        b[r] = s / a[static_cast<std::size_t>(r) * n + r];
    }
    return true;
}

inline std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double v = a[static_cast<std::size_t>(i) * n + k];
            if (v == 0.0) continue;
            for (int j = 0; j < n; ++j)
                c[static_cast<std::size_t>(i) * n + j] += v * b[static_cast<std::size_t>(k) * n + j];
        }
    return c;
}

inline double frobenius(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

// exp(A) by scaling-and-squaring with a Taylor core.
inline std::vector<double> expm(std::vector<double> a, int n) {
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) row += std::abs(a[static_cast<std::size_t>(i) * n + j]);
        norm = std::max(norm, row);
    }
    int squarings = 0;
    while (norm > 0.5) {
        norm *= 0.5;
        ++squarings;
    }
    const double scale = std::ldexp(1.0, -squarings);
    for (double& v : a) v *= scale;

    std::vector<double> result(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) result[static_cast<std::size_t>(i) * n + i] = 1.0;
    std::vector<double> term = result;
    for (int k = 1; k <= 24; ++k) {
        term = mat_mul(term, a, n);
        for (double& v : term) v /= static_cast<double>(k);
        for (std::size_t s = 0; s < result.size(); ++s) result[s] += term[s];
        if (frobenius(term) < 1e-18) break;
    }
    for (int s = 0; s < squarings; ++s) result = mat_mul(result, result, n);
    return result;
}

// log of the spectral radius via Gelfand's formula with normalized repeated
// squaring: log rho(E) = lim 2^{-j} log ||E^{2^j}||.
inline double log_spectral_radius(std::vector<double> e, int n) {
    double c = 0.0;  // accumulated log scale, E^{2^j} = exp(c) * current
    for (int j = 0; j < 48; ++j) {
        const double nf = frobenius(e);
        if (nf == 0.0) return -std::numeric_limits<double>::infinity();
        for (double& v : e) v /= nf;
        c = 2.0 * (c + std::log(nf));
        e = mat_mul(e, e, n);
    }
    return (c + std::log(frobenius(e))) / std::ldexp(1.0, 48);
}

}  // namespace detail

enum class Stability { stable, unstable, marginal };

inline const char* stability_name(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::unstable: return "unstable";
        case Stability::marginal: return "marginal";
    }
    return "unknown";
}

struct FixedPointResult {
    FractionState y;
    int iterations = 0;
    double residual = 0.0;           // max |F_ik(y)|
    double spectral_abscissa = 0.0;  // max real part of the Jacobian spectrum
    Stability stability = Stability::marginal;
};

// Damped Newton iteration on F(y) = 0. Iterates must stay near the feasible
// box; the converged root is projected onto it when within round-off and
// rejected otherwise. Local stability comes from the Jacobian at the root:
// spectral abscissa alpha(J) = log rho(exp(J)).
inline FixedPointResult fixed_point(const MeanFieldSystem& sys, const FractionState& guess,
                                    double tol = 1e-12, int max_iterations = 200) {
    if (!(tol > 0.0)) throw Error(errc::invalid_state, "tol must be positive");
    const int n = sys.num_islands * sys.num_strains;
    FractionState y = guess;

    auto residual_of = [&](const FractionState& s) {
        const FractionState f = vector_field(sys, s);
        double r = 0.0;
        for (double v : f.y) r = std::max(r, std::abs(v));
        return r;
    };
    auto in_box = [&](const FractionState& s) {
        for (double v : s.y)
            if (!(v > -0.1) || !(v < 1.1)) return false;
        for (int i = 0; i < s.num_islands; ++i)
            if (!(s.island_total(i) < 1.1)) return false;
        return true;
    };

    if (!in_box(y)) throw Error(errc::left_feasible_set, "initial guess outside the feasible region");

    double res = residual_of(y);
    int it = 0;
    while (res > tol && it < max_iterations) {
        FractionState f = vector_field(sys, y);
        std::vector<double> rhs(f.y.size());
        for (std::size_t s = 0; s < rhs.size(); ++s) rhs[s] = -f.y[s];
        if (!detail::solve_dense(jacobian(sys, y), rhs, n))
            throw Error(errc::no_convergence, "singular Jacobian in Newton iteration");

        double lambda = 1.0;
        bool accepted = false;
        FractionState cand = y;
        for (int half = 0; half < 40; ++half) {
            for (std::size_t s = 0; s < rhs.size(); ++s) cand.y[s] = y.y[s] + lambda * rhs[s];
            if (in_box(cand)) {
                const double cres = residual_of(cand);
                if (cres < res * (1.0 - 0.25 * lambda) || cres <= tol) {
                    y = cand;
                    res = cres;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            if (!in_box(cand))
                throw Error(errc::left_feasible_set, "Newton step left the feasible region");
            throw Error(errc::no_convergence, "line search stalled");
        }
        ++it;
    }
    if (res > tol)
        throw Error(errc::no_convergence,
                    "no fixed point within " + std::to_string(max_iterations) + " iterations");

    // project round-off sized violations; larger means the root is infeasible
    if (!fraction_state_valid(y, detail::feasibility_tol))
        throw Error(errc::left_feasible_set, "converged root lies outside the feasible set");
    std::uint64_t projections = 0;
    detail::project_or_throw(y, projections);

    FixedPointResult out;
    out.y = y;
    out.iterations = it;
    out.residual = res;
    out.spectral_abscissa = detail::log_spectral_radius(detail::expm(jacobian(sys, y), n), n);
    out.stability = std::abs(out.spectral_abscissa) < 1e-6
                        ? Stability::marginal
                        : (out.spectral_abscissa < 0.0 ? Stability::stable : Stability::unstable);
    return out;
}

}  // namespace msis::meanfield
