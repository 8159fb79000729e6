#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "msis/generator.hpp"
#include "oracles.hpp"

using namespace msis;
using namespace testutil;
using oracles::transient_by_expm;

TEST_CASE("state counts: 4x4 for single virus N=(3,3), 6x6 for two strains N=(2,2)") {
    auto s1 = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto g1 = ctmc::build_generator(s1, s1.island_sizes);
    CHECK(g1.num_states == 16);

    auto s2 = bipartite_two_strain(2.0, 1.5, 1.0, 2);
    auto g2 = ctmc::build_generator(s2, s2.island_sizes);
    CHECK(g2.num_states == 36);  // C(2+2,2)=6 compositions per island
}

TEST_CASE("state cap produces StateSpaceTooLarge") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 50, 50);
    try {
        ctmc::build_generator(s, s.island_sizes, 1000);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == errc::state_space_too_large);
    }
}

TEST_CASE("generator rows: zero sums, non-negative off-diagonals, unit-jump sparsity") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = random_valid_spec(rng, 3, 2, 4);
        auto g = ctmc::build_generator(s, s.island_sizes);
        for (std::uint64_t r = 0; r < g.num_states; ++r) {
            double sum = g.diag[r];
            const auto from = g.state_of(r);
            for (const auto& [c, rate] : g.rows[r]) {
                CHECK(rate >= 0.0);
                sum += rate;
                const auto to = g.state_of(c);
                std::int64_t l1 = 0;
                int changed = 0;
                for (std::size_t i = 0; i < from.counts.size(); ++i) {
                    l1 += std::abs(from.counts[i] - to.counts[i]);
                    changed += from.counts[i] != to.counts[i];
                }
                CHECK(l1 == 1);
                CHECK(changed == 1);
            }
            CHECK(std::abs(sum) <= 1e-12);
        }
    }
}

TEST_CASE("disease-free state is an absorbing all-zero row") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto g = ctmc::build_generator(s, s.island_sizes);
    auto zero = ctmc::make_macro_state(2, 1);
    const auto idx = g.index_of(zero);
    CHECK(g.rows[idx].empty());
    CHECK(g.diag[idx] == 0.0);
}

TEST_CASE("index_of inverts state_of") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = random_valid_spec(rng, 3, 2, 4);
        auto g = ctmc::build_generator(s, s.island_sizes);
        for (std::uint64_t i = 0; i < g.num_states; ++i)
            CHECK(g.index_of(g.state_of(i)) == i);
    }
}

TEST_CASE("transient distribution at t=0 is the initial distribution") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto g = ctmc::build_generator(s, s.island_sizes);
    std::vector<double> pi0(g.num_states, 0.0);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 1;
    pi0[g.index_of(y)] = 1.0;
    CHECK(ctmc::transient_distribution(g, pi0, 0.0) == pi0);
}

TEST_CASE("point mass on the absorbing state is invariant for all t") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto g = ctmc::build_generator(s, s.island_sizes);
    std::vector<double> pi0(g.num_states, 0.0);
    pi0[g.index_of(ctmc::make_macro_state(2, 1))] = 1.0;
    for (double t : {0.5, 2.0, 10.0}) {
        auto pt = ctmc::transient_distribution(g, pi0, t);
        for (std::size_t i = 0; i < pt.size(); ++i)
            CHECK(pt[i] == doctest::Approx(pi0[i]).epsilon(1e-12));
    }
}

TEST_CASE("uniformization matches the independent matrix exponential to 1e-8") {
    // N=(2,2) single virus, symmetric gamma=2, mu=1, start (1,1), t=1
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 2, 2);
    auto g = ctmc::build_generator(s, s.island_sizes);
    REQUIRE(g.num_states == 9);
    std::vector<double> pi0(g.num_states, 0.0);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 1;
    pi0[g.index_of(y)] = 1.0;

    const auto uni = ctmc::transient_distribution(g, pi0, 1.0, 1e-14);
    const auto exact = transient_by_expm(g, pi0, 1.0);
    for (std::size_t i = 0; i < uni.size(); ++i)
        CHECK(std::abs(uni[i] - exact[i]) <= 1e-8);
}

TEST_CASE("uniformization splits long horizons without losing mass") {
    auto s = bipartite_single_virus(3.0, 3.0, 1.0, 1.0, 4, 4);
    auto g = ctmc::build_generator(s, s.island_sizes);
    std::vector<double> pi0(g.num_states, 0.0);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 2;
    pi0[g.index_of(y)] = 1.0;
    const double t = 50.0;  // Lambda*t well above the split threshold
    const auto uni = ctmc::transient_distribution(g, pi0, t);
    const auto exact = transient_by_expm(g, pi0, t);
    double sum = 0.0;
    for (std::size_t i = 0; i < uni.size(); ++i) {
        CHECK(uni[i] >= 0.0);
        CHECK(std::abs(uni[i] - exact[i]) <= 1e-8);
        sum += uni[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("simulated ensemble converges to the uniformization marginal") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto g = ctmc::build_generator(s, s.island_sizes);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 1;
    std::vector<double> pi0(g.num_states, 0.0);
    pi0[g.index_of(y)] = 1.0;
    const auto exact = ctmc::transient_distribution(g, pi0, 1.0);

    const int n = 20000;  // the 1e5-replica version runs in the acceptance suite
    std::vector<ctmc::MacroState> end;
    end.reserve(n);
    for (int r = 0; r < n; ++r)
        end.push_back(ctmc::simulate_macro(s, s.island_sizes, y, 1.0, 55, r).state_at(1.0));
    auto emp = empirical_distribution(end);

    std::map<std::vector<std::int64_t>, double> exact_map;
    for (std::uint64_t i = 0; i < g.num_states; ++i) exact_map[g.state_of(i).counts] = exact[i];
    CHECK(total_variation(emp, exact_map) <= 0.02);
}

TEST_CASE("bad initial distributions are rejected") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 2, 2);
    auto g = ctmc::build_generator(s, s.island_sizes);
    std::vector<double> pi0(g.num_states, 0.0);
    pi0[0] = 0.5;  // sums to 0.5
    CHECK_THROWS_AS(ctmc::transient_distribution(g, pi0, 1.0), Error);
}
