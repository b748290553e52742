#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace recopt {

/// One answer event of a student.
struct Interaction {
    std::string student_id;
    std::string question_id;
    std::vector<std::string> skill_ids;  // sorted, unique, non-empty
    int response = 0;                    // 0 or 1
    std::size_t order_index = 0;         // position within the student's sequence

    bool has_skill(const std::string& skill) const;
    bool operator==(const Interaction&) const = default;
};

struct StudentSequence {
    std::string student_id;
    std::vector<Interaction> interactions;

    bool operator==(const StudentSequence&) const = default;
};

/// An interaction together with its position in the parent sequence.
struct PositionedInteraction {
    std::size_t position;
    const Interaction* interaction;
};

/// Immutable collection of per-student sequences and the question to skill map.
class Corpus {
public:
    Corpus() = default;

    /// Validates invariants (binary responses, non-empty skills, increasing
    /// order indices) and builds the question to skill map.
    explicit Corpus(std::vector<StudentSequence> sequences);

    const std::map<std::string, StudentSequence>& sequences() const { return sequences_; }
    const std::map<std::string, std::set<std::string>>& question_skills() const { return question_skills_; }
    const StudentSequence& sequence(const std::string& student_id) const;

    std::size_t student_count() const { return sequences_.size(); }
    std::size_t question_count() const { return question_skills_.size(); }
    std::size_t skill_count() const;
    std::size_t record_count() const;
    bool empty() const { return sequences_.empty(); }

    std::vector<std::string> skills() const;

    /// Restriction to a subset of students (unknown ids are ignored).
    Corpus subset(const std::vector<std::string>& student_ids) const;

    bool operator==(const Corpus& o) const { return sequences_ == o.sequences_; }

private:
    std::map<std::string, StudentSequence> sequences_;
    std::map<std::string, std::set<std::string>> question_skills_;
};

/// Maps the columns of an input log onto interaction fields.
struct CsvSchema {
    std::string student = "user_id";
    std::string question = "problem_id";
    std::string skill = "skill_id";
    std::string correct = "correct";
    std::string order;             // optional timestamp / order column
    char skill_separator = ';';    // several skills inside one field
    /// Rows sharing (student, order value, question) are one multi-skill
    /// interaction split across rows; merge them. Needs `order`.
    bool merge_repeated_rows = false;

    static CsvSchema canonical();
    static CsvSchema assist09();
};

struct IngestOptions {
    std::size_t min_seq_len = 3;
    /// Extra row predicate (receives header and fields). Rows for which it
    /// returns false are dropped and counted as `filtered`.
    std::function<bool(const std::vector<std::string>&, const std::vector<std::string>&)> row_filter;
};

/// Row accounting of one ingest. input_rows equals the sum of all the other
/// row counters.
struct IngestReport {
    std::size_t input_rows = 0;
    std::size_t kept_rows = 0;
    std::size_t merged_rows = 0;      // folded into another row's interaction
    std::size_t skillless_rows = 0;
    std::size_t bad_response_rows = 0;
    std::size_t filtered_rows = 0;
    std::size_t short_user_rows = 0;  // rows of students dropped by min_seq_len
    std::size_t short_users = 0;
};

Corpus ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                  const IngestOptions& options = {}, IngestReport* report = nullptr);

/// Writes the canonical interchange form
/// `student_id,question_id,skill_ids,response,order_index`.
void write_canonical_csv(const Corpus& corpus, const std::filesystem::path& path);

/// Interactions tagged with `skill`, in sequence order.
std::vector<PositionedInteraction> same_skill_subsequence(const StudentSequence& seq,
                                                          const std::string& skill);

}  // namespace recopt
