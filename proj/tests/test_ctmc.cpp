#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "msis/ctmc.hpp"

using namespace msis;
using namespace testutil;

TEST_CASE("transition rates match the hand-evaluated bipartite example") {
    // N=(4,4), gamma_{21}=2, mu_1=1, state Y=(1,2)
    auto s = bipartite_single_virus(0.0, 2.0, 1.0, 1.0, 4, 4);
    s.gamma(0, 0, 1) = 0.0;
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 2;
    auto rates = ctmc::transition_rates(s, s.island_sizes, y);

    double heal0 = -1.0, infect0 = -1.0;
    for (const auto& r : rates) {
        if (r.island == 0 && r.kind == ctmc::EventKind::healing) heal0 = r.rate;
        if (r.island == 0 && r.kind == ctmc::EventKind::infection) infect0 = r.rate;
    }
    CHECK(heal0 == doctest::Approx(1.0));          // mu_1 * Y_1 = 1*1
    CHECK(infect0 == doctest::Approx(3.0));        // (2*2) * (4-1)/4
}

TEST_CASE("all-zero state has no transitions") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 4, 4);
    auto y = ctmc::make_macro_state(2, 1);
    CHECK(ctmc::transition_rates(s, s.island_sizes, y).empty());
}

TEST_CASE("a fully infected island admits no further infection") {
    auto s = bipartite_two_strain(2.0, 1.5, 1.0, 4);
    auto y = ctmc::make_macro_state(2, 2);
    y.at(0, 0) = 3;
    y.at(0, 1) = 1;  // island 0 full
    y.at(1, 0) = 2;
    auto rates = ctmc::transition_rates(s, s.island_sizes, y);
    for (const auto& r : rates)
        if (r.kind == ctmc::EventKind::infection) CHECK(r.island != 0);
}

TEST_CASE("invalid state is rejected") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 4, 4);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 5;  // exceeds N_0 = 4
    CHECK_THROWS_AS(ctmc::transition_rates(s, s.island_sizes, y), Error);
}

TEST_CASE("total macro rate equals the node-level clock sum with thinning") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_valid_spec(rng);
        auto y = random_macro_state(rng, s, s.island_sizes);

        double macro_total = 0.0;
        for (const auto& r : ctmc::transition_rates(s, s.island_sizes, y)) macro_total += r.rate;

        // brute force: every infected node carries a healing clock plus one
        // attempt clock per neighboring island, thinned by the healthy
        // fraction at the target
        double node_total = 0.0;
        for (int i = 0; i < s.num_islands; ++i) {
            for (int k = 0; k < s.num_strains; ++k) {
                const auto carriers = static_cast<double>(y.at(i, k));
                if (carriers == 0.0) continue;
                node_total += carriers * s.mu(k, i);
                for (int j : topology::superneighbors(s, i)) {
                    const double healthy =
                        static_cast<double>(s.island_sizes[j] - y.island_total(j)) /
                        static_cast<double>(s.island_sizes[j]);
                    node_total += carriers * s.gamma(k, i, j) * healthy;
                }
            }
        }
        CHECK(macro_total == doctest::Approx(node_total).epsilon(1e-12));
    }
}

TEST_CASE("empty initial state absorbs immediately") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 4, 4);
    auto y = ctmc::make_macro_state(2, 1);
    auto traj = ctmc::simulate_macro(s, s.island_sizes, y, 5.0, 42, 0);
    CHECK(traj.status == ctmc::TrajectoryStatus::absorbed);
    CHECK(traj.size() == 0);
}

TEST_CASE("first-event split matches the two-competing-exponentials formula") {
    // N=(1,1), Y=(1,0): healing at rate mu vs infection at rate gamma,
    // so P(first event is the infection) = gamma/(gamma+mu) = 2/3
    const double gamma = 2.0, mu = 1.0;
    auto s = bipartite_single_virus(gamma, gamma, mu, mu, 1, 1);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;

    const int n = 100000;
    int infections = 0;
    for (int r = 0; r < n; ++r) {
        auto traj = ctmc::simulate_macro(s, s.island_sizes, y, 1e9, 2024, r);
        REQUIRE(traj.size() > 0);
        if (traj.kinds[0] == ctmc::EventKind::infection) ++infections;
    }
    const double p = gamma / (gamma + mu);
    const double sigma = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(static_cast<double>(infections) / n - p) <= 3.0 * sigma);
}

TEST_CASE("macro simulation is deterministic in (seed, replica) and replicas differ") {
    auto s = bipartite_two_strain(2.0, 1.5, 1.0, 30);
    auto y = ctmc::make_macro_state(2, 2);
    y.at(0, 0) = 5;
    y.at(1, 1) = 5;

    auto a = ctmc::simulate_macro(s, s.island_sizes, y, 4.0, 99, 3);
    auto b = ctmc::simulate_macro(s, s.island_sizes, y, 4.0, 99, 3);
    CHECK(a.times == b.times);
    CHECK(a.kinds == b.kinds);
    CHECK(a.islands == b.islands);
    CHECK(a.strains == b.strains);
    CHECK(a.states_after == b.states_after);

    auto c = ctmc::simulate_macro(s, s.island_sizes, y, 4.0, 99, 4);
    CHECK(a.times != c.times);
}

TEST_CASE("every jump keeps the state valid and times strictly increase") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto s = random_valid_spec(rng);
        auto y = random_macro_state(rng, s, s.island_sizes);
        auto traj = ctmc::simulate_macro(s, s.island_sizes, y, 2.0, 7, trial);
        CHECK(trajectory_well_formed(s, s.island_sizes, traj));
    }
}

TEST_CASE("event cap stops the run with an explicit status and partial record") {
    auto s = bipartite_single_virus(5.0, 5.0, 1.0, 1.0, 50, 50);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 25;
    y.at(1, 0) = 25;
    auto traj = ctmc::simulate_macro(s, s.island_sizes, y, 1e9, 1, 0, 20);
    CHECK(traj.status == ctmc::TrajectoryStatus::event_cap);
    CHECK(traj.size() == 20);
    CHECK(trajectory_well_formed(s, s.island_sizes, traj));
}

TEST_CASE("micro: a lone infected node with no neighbors heals on an Exp(mu) clock") {
    const double mu = 2.0;
    auto s = topology::make_spec(1, 1);
    s.island_sizes = {3};
    s.mu(0, 0) = mu;
    auto y = ctmc::make_macro_state(1, 1);
    y.at(0, 0) = 1;
    auto micro = ctmc::micro_from_macro(y, s.island_sizes);

    const int n = 20000;
    double mean_t = 0.0;
    for (int r = 0; r < n; ++r) {
        auto traj = ctmc::simulate_micro(s, s.island_sizes, micro, 1e9, 31, r);
        REQUIRE(traj.size() == 1);
        CHECK(traj.kinds[0] == ctmc::EventKind::healing);
        CHECK(traj.status == ctmc::TrajectoryStatus::absorbed);
        mean_t += traj.times[0];
    }
    mean_t /= n;
    const double se = (1.0 / mu) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean_t - 1.0 / mu) <= 4.0 * se);
}

TEST_CASE("micro: attempts that strike an infected node leave no event") {
    // both single-node islands infected; attempts always hit a carrier
    auto s = bipartite_single_virus(5.0, 5.0, 1e-12, 1e-12, 1, 1);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 1;
    auto micro = ctmc::micro_from_macro(y, s.island_sizes);
    auto traj = ctmc::simulate_micro(s, s.island_sizes, micro, 1.0, 8, 0);
    CHECK(traj.size() == 0);
    CHECK(traj.status == ctmc::TrajectoryStatus::reached_horizon);
}

TEST_CASE("micro aggregates to valid trajectories on random instances") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        auto s = random_valid_spec(rng, 3, 2, 12);
        auto y = random_macro_state(rng, s, s.island_sizes);
        auto micro = ctmc::micro_from_macro(y, s.island_sizes);
        CHECK(micro.aggregate(s.num_strains).counts == y.counts);
        auto traj = ctmc::simulate_micro(s, s.island_sizes, micro, 1.5, 17, trial);
        CHECK(trajectory_well_formed(s, s.island_sizes, traj));
    }
}

TEST_CASE("micro and macro agree in law at t=1 on the 3+3 instance") {
    auto s = bipartite_single_virus(2.0, 2.0, 1.0, 1.0, 3, 3);
    auto y = ctmc::make_macro_state(2, 1);
    y.at(0, 0) = 1;
    y.at(1, 0) = 1;
    auto micro = ctmc::micro_from_macro(y, s.island_sizes);

    const int n = 20000;
    std::vector<ctmc::MacroState> macro_end, micro_end;
    macro_end.reserve(n);
    micro_end.reserve(n);
    for (int r = 0; r < n; ++r) {
        macro_end.push_back(ctmc::simulate_macro(s, s.island_sizes, y, 1.0, 100, r).state_at(1.0));
        micro_end.push_back(ctmc::simulate_micro(s, s.island_sizes, micro, 1.0, 200, r).state_at(1.0));
    }
    const double tv =
        total_variation(empirical_distribution(macro_end), empirical_distribution(micro_end));
    CHECK(tv <= 0.04);  // the full-size two-sample check runs in the acceptance suite
}
