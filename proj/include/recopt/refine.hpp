#pragma once

#include "recopt/corpus.hpp"
#include "recopt/difficulty.hpp"
#include "recopt/states.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace recopt {

/// Which record passes run, and in what order.
enum class ModuleOrder { None, Coo, Col, CooCol, ColCoo };

ModuleOrder parse_module_order(const std::string& s);
std::string to_string(ModuleOrder order);

struct RefineOptions {
    ModuleOrder order = ModuleOrder::CooCol;
    double alpha = 0.8;
    double beta = 0.05;
    double coo_discount = 1.0;
    /// Only the chronologically first share of each sequence is rewritten;
    /// the rest keeps its raw states and takes no part in the passes.
    double fraction = 1.0;
};

struct FlipRecord {
    std::string module;  // "coo" or "col"
    std::string student_id;
    std::string skill_id;
    Flip flip;
};

struct RefinedStates {
    std::map<std::string, std::vector<int>> raw;
    std::map<std::string, std::vector<int>> states;
    std::vector<FlipRecord> flips;

    std::size_t flip_count(const std::string& module) const;
    std::size_t changed_count() const;  // interactions whose state differs from raw
};

/// Runs the selected passes on every same-skill subsequence of one student.
/// Each skill's subsequence is processed independently; an interaction
/// tagged with several skills takes the majority of their outcomes and keeps
/// its input state on a tie.
std::vector<int> refine_sequence(const StudentSequence& seq, const DifficultyTable& difficulty,
                                 const RefineOptions& options, std::vector<FlipRecord>* flips = nullptr);

RefinedStates refine_corpus(const Corpus& corpus, const DifficultyTable& difficulty,
                            const RefineOptions& options);

/// Same-skill entries of a state vector, ready for the record passes.
StateDifficultySeq state_difficulty_sequence(const StudentSequence& seq, const std::vector<int>& states,
                                             const std::string& skill, const DifficultyTable& difficulty,
                                             std::size_t limit);

/// `student_id,skill_id,position,before,after,trigger_position` for one
/// module; the collaboration ledger carries an extra `module` column.
void write_flip_ledger(const std::vector<FlipRecord>& flips, const std::string& module,
                       const std::filesystem::path& path);

/// Canonical corpus columns with the rewritten state in `response`, plus
/// `raw_response`.
void write_refined_csv(const Corpus& corpus, const RefinedStates& refined, const std::filesystem::path& path);

/// Reads a file written by write_refined_csv back into a corpus of raw
/// responses and the refined states.
std::pair<Corpus, RefinedStates> read_refined_csv(const std::filesystem::path& path);

}  // namespace recopt
