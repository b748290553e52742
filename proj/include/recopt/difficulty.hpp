#pragma once

#include "recopt/corpus.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace recopt {

/// Per-question answer statistics and difficulty.
struct QuestionStats {
    std::string question_id;
    long attempts = 0;            // M
    long corrects = 0;            // C
    double correct_rate = 0.5;    // (C + 1) / (M + 2)
    double raw_difficulty = 2.0;  // 1 / correct_rate
    double norm_difficulty = 0.5; // min-max scaled raw difficulty, in [0, 1]
};

/// Difficulty lookup built from a corpus (usually the training students).
/// Questions never seen get the smoothing prior (M = C = 0), normalized with
/// the same range and clamped to [0, 1].
class DifficultyTable {
public:
    DifficultyTable() = default;
    explicit DifficultyTable(std::map<std::string, QuestionStats> stats);

    const std::map<std::string, QuestionStats>& stats() const { return stats_; }
    const QuestionStats& at(const std::string& question_id) const;
    bool contains(const std::string& question_id) const { return stats_.count(question_id) != 0; }

    double normalized(const std::string& question_id) const;
    double raw_min() const { return raw_min_; }
    double raw_max() const { return raw_max_; }

    /// `question_id,M,C,P,D,d`
    void write_csv(const std::filesystem::path& path) const;

private:
    double normalize(double raw) const;

    std::map<std::string, QuestionStats> stats_;
    double raw_min_ = 2.0;
    double raw_max_ = 2.0;
};

/// Counts attempts and correct answers over every interaction of the corpus.
/// Throws std::invalid_argument on an empty corpus.
DifficultyTable compute_stats(const Corpus& corpus);

}  // namespace recopt
