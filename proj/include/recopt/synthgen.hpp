#pragma once

#include "recopt/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace recopt {

/// Synthetic logs with static per-skill mastery and slip/guess distortion.
struct SynthConfig {
    std::size_t n_students = 200;
    std::size_t n_questions = 50;
    std::size_t n_skills = 10;
    double slip = 0.2;   // P(wrong | mastered)
    double guess = 0.2;  // P(right | not mastered)
    std::size_t seq_len_min = 50;
    std::size_t seq_len_max = 50;
    /// Each skill draws its share of non-mastering students uniformly from
    /// this range; questions inherit their skill's difficulty.
    double skill_difficulty_min = 0.2;
    double skill_difficulty_max = 0.8;
    double multi_skill_fraction = 0.0;  // questions tagged with a second skill
    std::uint64_t seed = 7;

    /// Throws std::invalid_argument unless counts are positive, rates are in
    /// [0, 1], seq_len_min >= 1 and seq_len_min <= seq_len_max. slip + guess
    /// may reach 2 (fully inverted responses).
    void validate() const;
};

struct SynthTruth {
    std::map<std::pair<std::string, std::string>, int> mastery;  // (student, skill)
    /// Per student, per interaction: latent correctness before distortion.
    std::map<std::string, std::vector<int>> latent;
    /// Per student, per interaction: whether slip/guess changed the answer.
    std::map<std::string, std::vector<int>> distorted;

    /// `student_id,skill_id,mastery`
    void write_csv(const std::filesystem::path& path) const;
};

/// Latent correctness of an interaction is 1 iff every tagged skill is
/// mastered. Deterministic per seed; each student uses its own derived stream.
std::pair<Corpus, SynthTruth> generate(const SynthConfig& config);

/// Fraction of interactions whose state equals the latent correctness.
/// `states` maps student id to one state per interaction.
/// Throws std::invalid_argument on a missing student or length mismatch.
double agreement(const std::map<std::string, std::vector<int>>& states, const SynthTruth& truth);

}  // namespace recopt
