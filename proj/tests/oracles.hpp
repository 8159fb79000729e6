#pragma once

// Independent test oracles. The dense matrix exponential below checks
// uniformization and deliberately shares no code with it: plain Taylor
// series under scaling-and-squaring on the densified generator.

#include <cmath>
#include <cstdint>
#include <vector>

#include "msis/generator.hpp"

namespace oracles {

inline std::vector<double> dense_q(const msis::ctmc::GeneratorMatrix& g) {
    const auto n = static_cast<std::size_t>(g.num_states);
    std::vector<double> q(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (const auto& [c, rate] : g.rows[r]) q[r * n + c] += rate;
        q[r * n + r] += g.diag[r];
    }
    return q;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t n) {
    std::vector<double> c(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double v = a[i * n + k];
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += v * b[k * n + j];
        }
    return c;
}

inline std::vector<double> expm(std::vector<double> a, std::size_t n) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += std::abs(a[i * n + j]);
        norm = std::max(norm, row);
    }
    int s = 0;
    while (norm > 0.25) {
        norm /= 2.0;
        ++s;
    }
    for (double& v : a) v = std::ldexp(v, -s);
    std::vector<double> e(n * n, 0.0), term(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) e[i * n + i] = term[i * n + i] = 1.0;
    for (int k = 1; k <= 30; ++k) {
        term = matmul(term, a, n);
        for (double& v : term) v /= k;
        double tn = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] += term[i];
            tn += std::abs(term[i]);
        }
        if (tn < 1e-19) break;
    }
    for (int j = 0; j < s; ++j) e = matmul(e, e, n);
    return e;
}

inline std::vector<double> transient_by_expm(const msis::ctmc::GeneratorMatrix& g,
                                             const std::vector<double>& pi0, double t) {
    const auto n = static_cast<std::size_t>(g.num_states);
    auto q = dense_q(g);
    for (double& v : q) v *= t;
    const auto e = expm(q, n);
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        if (pi0[r] == 0.0) continue;
        for (std::size_t c = 0; c < n; ++c) out[c] += pi0[r] * e[r * n + c];
    }
    return out;
}

}  // namespace oracles
