#include "recopt/difficulty.hpp"

#include "recopt/io.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace recopt {

namespace {

double smoothed_rate(long corrects, long attempts)
{
    return (static_cast<double>(corrects) + 1.0) / (static_cast<double>(attempts) + 2.0);
}

}  // namespace

DifficultyTable::DifficultyTable(std::map<std::string, QuestionStats> stats) : stats_(std::move(stats))
{
    if (stats_.empty()) return;
    raw_min_ = raw_max_ = stats_.begin()->second.raw_difficulty;
    for (const auto& [id, s] : stats_) {
        raw_min_ = std::min(raw_min_, s.raw_difficulty);
        raw_max_ = std::max(raw_max_, s.raw_difficulty);
    }
    for (auto& [id, s] : stats_) s.norm_difficulty = normalize(s.raw_difficulty);
}

double DifficultyTable::normalize(double raw) const
{
    if (raw_max_ == raw_min_) return 0.5;
    return std::clamp((raw - raw_min_) / (raw_max_ - raw_min_), 0.0, 1.0);
}

const QuestionStats& DifficultyTable::at(const std::string& question_id) const
{
    auto it = stats_.find(question_id);
    if (it == stats_.end()) throw std::out_of_range("no statistics for question " + question_id);
    return it->second;
}

double DifficultyTable::normalized(const std::string& question_id) const
{
    auto it = stats_.find(question_id);
    if (it != stats_.end()) return it->second.norm_difficulty;
    return normalize(1.0 / smoothed_rate(0, 0));
}

void DifficultyTable::write_csv(const std::filesystem::path& path) const
{
    std::ostringstream os;
    os << "question_id,M,C,P,D,d\n";
    for (const auto& [id, s] : stats_) {
        os << io::csv_field(id) << ',' << s.attempts << ',' << s.corrects << ','
           << io::format_double(s.correct_rate) << ',' << io::format_double(s.raw_difficulty) << ','
           << io::format_double(s.norm_difficulty) << '\n';
    }
    io::write_text(path, os.str());
}

DifficultyTable compute_stats(const Corpus& corpus)
{
    if (corpus.empty()) throw std::invalid_argument("compute_stats: empty corpus");
    std::map<std::string, QuestionStats> stats;
    for (const auto& [student, seq] : corpus.sequences()) {
        for (const auto& it : seq.interactions) {
            auto& s = stats[it.question_id];
            s.question_id = it.question_id;
            ++s.attempts;
            s.corrects += it.response;
        }
    }
    for (auto& [id, s] : stats) {
        s.correct_rate = smoothed_rate(s.corrects, s.attempts);
        s.raw_difficulty = 1.0 / s.correct_rate;
    }
    return DifficultyTable(std::move(stats));
}

}  // namespace recopt
