#pragma once

#include "recopt/states.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace recopt {

/// Difficulties at or below zero are lifted to this value inside the
/// consensus weights so the denominator stays positive.
inline constexpr double kMinCollaborationDifficulty = 1e-6;

/// Distance between cluster members i and j (0-based or 1-based alike):
/// 1 when j comes after i, |i - j| when j comes before.
/// Throws std::invalid_argument when i == j.
std::size_t propagation_distance(std::size_t i, std::size_t j);

struct NeighborTerm {
    std::size_t index;     // neighbor j within the cluster
    std::size_t distance;  // L_ij
    double weight;         // 1 / L_ij
    double term;           // weight * d_j * S_j
};

/// Consensus ratio of one cluster member.
struct GammaBreakdown {
    double gamma1 = 0.0;  // difficulty-weighted mass of correct answers
    double gamma2 = 0.0;  // same with every state set to 1
    double gamma = 0.0;   // gamma1 / gamma2, in [0, 1]
    std::vector<NeighborTerm> neighbors;
};

/// Evaluates the consensus ratio for `target` against every other member of
/// `cluster`, with cooperation strength 1/2. Throws std::out_of_range for a
/// bad target.
GammaBreakdown compute_gamma(std::span<const StateDifficulty> cluster, std::size_t target);

/// New state of `target`: 1 iff gamma >= 0.5.
int optimize_subgoal(std::span<const StateDifficulty> cluster, std::size_t target);

/// Greedy left-to-right chaining: a cluster grows while the next entry is
/// within `beta` (strictly) of every current member. Returns contiguous
/// index ranges covering the whole sequence.
std::vector<std::vector<std::size_t>> form_clusters(const StateDifficultySeq& seq, double beta);

/// Sequential growth over one cluster: objectives of the first 2, 3, ..., m
/// members; in each round every member of the objective is re-decided from
/// the round's starting states, then the results become the new starting
/// states. Returns the final states.
std::vector<int> co_optimize_cluster(std::span<const StateDifficulty> cluster);

struct CollaborationResult {
    std::vector<int> final_states;
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<Flip> flips;
};

CollaborationResult collaborate_sequence(const StateDifficultySeq& seq, double beta);

}  // namespace recopt
