#include "doctest.h"

#include "oracles.hpp"
#include "recopt/collaboration.hpp"
#include "recopt/rng.hpp"

#include <cmath>
#include <stdexcept>

using namespace recopt;

namespace {

StateDifficultySeq make(const std::vector<int>& s, const std::vector<double>& d)
{
    StateDifficultySeq out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], d[i], 10 + i});
    return out;
}

StateDifficultySeq random_cluster(Rng& rng, std::size_t max_len, double width)
{
    const std::size_t n = 1 + rng.below(max_len);
    const double base = rng.uniform(0.0, 1.0 - width);
    StateDifficultySeq out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({static_cast<int>(rng.below(2)), base + rng.uniform(0.0, width), i});
    return out;
}

std::vector<int> states_of(const StateDifficultySeq& s)
{
    std::vector<int> v;
    for (const auto& e : s) v.push_back(e.state);
    return v;
}

std::vector<double> diffs_of(const StateDifficultySeq& s)
{
    std::vector<double> v;
    for (const auto& e : s) v.push_back(e.difficulty);
    return v;
}

}  // namespace

TEST_CASE("propagation distance")
{
    CHECK(propagation_distance(2, 5) == 1);
    CHECK(propagation_distance(5, 2) == 3);
    CHECK(propagation_distance(4, 3) == 1);
    CHECK_THROWS_AS(propagation_distance(3, 3), std::invalid_argument);
}

TEST_CASE("singleton consensus equals its own state")
{
    auto c = make({1}, {0.4});
    auto g = compute_gamma(c, 0);
    CHECK(g.gamma1 == doctest::Approx(0.2));
    CHECK(g.gamma2 == doctest::Approx(0.2));
    CHECK(g.gamma == 1.0);
    c[0].state = 0;
    CHECK(compute_gamma(c, 0).gamma == 0.0);
    CHECK(optimize_subgoal(c, 0) == 0);
    CHECK_THROWS_AS(compute_gamma(c, 1), std::out_of_range);
}

TEST_CASE("three-member hand evaluation")
{
    const auto c = make({1, 1, 0}, {0.5, 0.5, 0.5});
    const auto g = compute_gamma(c, 2);
    CHECK(g.gamma1 == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(g.gamma2 == doctest::Approx(0.625).epsilon(1e-15));
    CHECK(g.gamma == doctest::Approx(0.6).epsilon(1e-15));
    REQUIRE(g.neighbors.size() == 2);
    CHECK(g.neighbors[0].distance == 2);
    CHECK(g.neighbors[0].weight == 0.5);
    CHECK(g.neighbors[1].distance == 1);
    CHECK(optimize_subgoal(c, 2) == 1);
    CHECK(co_optimize_cluster(c) == std::vector<int>{1, 1, 1});

    const auto res = collaborate_sequence(c, 0.05);
    CHECK(res.final_states == std::vector<int>{1, 1, 1});
    REQUIRE(res.flips.size() == 1);
    CHECK(res.flips[0].position == 12);
    CHECK(res.flips[0].before == 0);
}

TEST_CASE("zero difficulty is lifted")
{
    const auto c = make({1, 0}, {0.0, 0.0});
    const auto g = compute_gamma(c, 1);
    CHECK(g.gamma2 > 0.0);
    CHECK(g.gamma == doctest::Approx(0.5));
}

TEST_CASE("clusters chain greedily on pairwise gaps")
{
    const auto seq = make({0, 0, 0, 0, 0}, {0.50, 0.53, 0.56, 0.57, 0.20});
    const auto cl = form_clusters(seq, 0.05);
    REQUIRE(cl.size() == 3);
    CHECK(cl[0] == std::vector<std::size_t>{0, 1});
    CHECK(cl[1] == std::vector<std::size_t>{2, 3});
    CHECK(cl[2] == std::vector<std::size_t>{4});
    for (const auto& c : form_clusters(seq, 0.0)) CHECK(c.size() == 1);
    CHECK(collaborate_sequence({}, 0.05).final_states.empty());
}

TEST_CASE("growth matches the scripted reference")
{
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const double beta = rng.uniform(0.01, 0.2);
        const auto seq = random_cluster(rng, 12, 0.25);
        const auto res = collaborate_sequence(seq, beta);
        CHECK(res.final_states == oracle::collaborate(states_of(seq), diffs_of(seq), beta));
    }
}

TEST_CASE("collaboration properties")
{
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        auto seq = random_cluster(rng, 8, 0.1);
        const double beta = rng.uniform(0.01, 0.15);

        // clusters are contiguous, cover everything and respect beta pairwise
        const auto clusters = form_clusters(seq, beta);
        std::size_t next = 0;
        for (const auto& c : clusters)
            for (std::size_t a = 0; a < c.size(); ++a) {
                CHECK(c[a] == next++);
                for (std::size_t b = 0; b < a; ++b)
                    CHECK(std::fabs(seq[c[a]].difficulty - seq[c[b]].difficulty) < beta);
            }
        CHECK(next == seq.size());

        // bounds and neighbor monotonicity
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const auto g = compute_gamma(seq, t);
            CHECK(g.gamma >= 0.0);
            CHECK(g.gamma <= 1.0);
            for (std::size_t j = 0; j < seq.size(); ++j) {
                if (j == t || seq[j].state == 1) continue;
                auto up = seq;
                up[j].state = 1;
                const auto h = compute_gamma(up, t);
                CHECK(h.gamma1 >= g.gamma1);
                CHECK(h.gamma2 == g.gamma2);
                if (g.gamma >= 0.5) CHECK(h.gamma >= 0.5);
            }
        }

        // scale invariance of every output state
        const double c = rng.uniform(1e-3, 10.0);
        auto scaled = seq;
        for (auto& e : scaled) e.difficulty *= c;
        CHECK(co_optimize_cluster(scaled) == co_optimize_cluster(seq));

        // unanimity
        const int u = static_cast<int>(rng.below(2));
        for (auto& e : seq) e.state = u;
        CHECK(collaborate_sequence(seq, beta).flips.empty());
    }
}
