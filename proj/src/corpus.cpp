#include "recopt/corpus.hpp"

#include "recopt/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace recopt {

bool Interaction::has_skill(const std::string& skill) const
{
    return std::binary_search(skill_ids.begin(), skill_ids.end(), skill);
}

Corpus::Corpus(std::vector<StudentSequence> sequences)
{
    for (auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.interactions.size(); ++i) {
            auto& it = seq.interactions[i];
            if (it.response != 0 && it.response != 1)
                throw std::invalid_argument("non-binary response for student " + seq.student_id);
            if (it.skill_ids.empty())
                throw std::invalid_argument("interaction without skill for student " + seq.student_id);
            std::sort(it.skill_ids.begin(), it.skill_ids.end());
            it.skill_ids.erase(std::unique(it.skill_ids.begin(), it.skill_ids.end()), it.skill_ids.end());
            if (i > 0 && it.order_index <= seq.interactions[i - 1].order_index)
                throw std::invalid_argument("order_index not increasing for student " + seq.student_id);
            if (it.student_id != seq.student_id)
                throw std::invalid_argument("interaction student id mismatch in " + seq.student_id);
            question_skills_[it.question_id].insert(it.skill_ids.begin(), it.skill_ids.end());
        }
        const std::string id = seq.student_id;
        if (!sequences_.emplace(id, std::move(seq)).second)
            throw std::invalid_argument("duplicate student " + id);
    }
}

const StudentSequence& Corpus::sequence(const std::string& student_id) const
{
    auto it = sequences_.find(student_id);
    if (it == sequences_.end()) throw std::out_of_range("unknown student " + student_id);
    return it->second;
}

std::size_t Corpus::skill_count() const { return skills().size(); }

std::size_t Corpus::record_count() const
{
    std::size_t n = 0;
    for (const auto& [id, seq] : sequences_) n += seq.interactions.size();
    return n;
}

std::vector<std::string> Corpus::skills() const
{
    std::set<std::string> all;
    for (const auto& [q, ks] : question_skills_) all.insert(ks.begin(), ks.end());
    return {all.begin(), all.end()};
}

Corpus Corpus::subset(const std::vector<std::string>& student_ids) const
{
    std::vector<StudentSequence> out;
    for (const auto& id : student_ids) {
        auto it = sequences_.find(id);
        if (it != sequences_.end()) out.push_back(it->second);
    }
    return Corpus(std::move(out));
}

CsvSchema CsvSchema::canonical()
{
    CsvSchema s;
    s.student = "student_id";
    s.question = "question_id";
    s.skill = "skill_ids";
    s.correct = "response";
    s.order = "order_index";
    s.skill_separator = ';';
    return s;
}

CsvSchema CsvSchema::assist09()
{
    CsvSchema s;
    s.order = "order_id";
    s.skill_separator = '_';
    s.merge_repeated_rows = true;
    return s;
}

namespace {

struct PendingRow {
    std::size_t file_pos;
    std::string order_value;
    std::optional<double> order_number;
    Interaction interaction;
};

std::optional<double> parse_number(const std::string& s)
{
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<int> parse_response(const std::string& raw)
{
    const auto s = io::trim(raw);
    if (s == "0" || s == "0.0") return 0;
    if (s == "1" || s == "1.0") return 1;
    return std::nullopt;
}

}  // namespace

Corpus ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                  const IngestOptions& options, IngestReport* report)
{
    const auto table = io::read_csv(path);
    auto require = [&](const std::string& name) {
        const int c = table.column(name);
        if (c < 0) throw std::runtime_error("missing column '" + name + "' in " + path.string());
        return static_cast<std::size_t>(c);
    };
    const auto c_student = require(schema.student);
    const auto c_question = require(schema.question);
    const auto c_skill = require(schema.skill);
    const auto c_correct = require(schema.correct);
    std::optional<std::size_t> c_order;
    if (!schema.order.empty()) c_order = require(schema.order);
    if (schema.merge_repeated_rows && !c_order)
        throw std::invalid_argument("merge_repeated_rows needs an order column");

    IngestReport rep;
    rep.input_rows = table.rows.size();

    std::map<std::string, std::vector<PendingRow>> by_student;
    // (student, order value, question) -> index into by_student[student]
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> merge_index;
    bool all_numeric = true;

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto field = [&](std::size_t c) { return c < row.size() ? io::trim(row[c]) : std::string(); };
        if (options.row_filter && !options.row_filter(table.header, row)) {
            ++rep.filtered_rows;
            continue;
        }
        std::vector<std::string> skills;
        for (auto& s : io::split(field(c_skill), schema.skill_separator)) {
            auto t = io::trim(s);
            if (!t.empty()) skills.push_back(std::move(t));
        }
        if (skills.empty()) {
            ++rep.skillless_rows;
            continue;
        }
        const auto response = parse_response(field(c_correct));
        if (!response) {
            ++rep.bad_response_rows;
            continue;
        }
        PendingRow p;
        p.file_pos = r;
        p.interaction.student_id = field(c_student);
        p.interaction.question_id = field(c_question);
        p.interaction.skill_ids = std::move(skills);
        p.interaction.response = *response;
        if (c_order) {
            p.order_value = field(*c_order);
            p.order_number = parse_number(p.order_value);
            if (!p.order_number) all_numeric = false;
        }
        auto& rows = by_student[p.interaction.student_id];
        if (schema.merge_repeated_rows) {
            auto key = std::make_tuple(p.interaction.student_id, p.order_value, p.interaction.question_id);
            auto found = merge_index.find(key);
            if (found != merge_index.end()) {
                auto& target = rows[found->second].interaction;
                target.skill_ids.insert(target.skill_ids.end(), p.interaction.skill_ids.begin(),
                                        p.interaction.skill_ids.end());
                ++rep.merged_rows;
                continue;
            }
            merge_index.emplace(std::move(key), rows.size());
        }
        rows.push_back(std::move(p));
    }

    std::vector<StudentSequence> sequences;
    for (auto& [student, rows] : by_student) {
        if (c_order) {
            std::stable_sort(rows.begin(), rows.end(), [&](const PendingRow& a, const PendingRow& b) {
                if (all_numeric) return *a.order_number < *b.order_number;
                return a.order_value < b.order_value;
            });
        }
        if (rows.size() < options.min_seq_len) {
            ++rep.short_users;
            rep.short_user_rows += rows.size();
            continue;
        }
        StudentSequence seq;
        seq.student_id = student;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i].interaction.order_index = i;
            seq.interactions.push_back(std::move(rows[i].interaction));
        }
        rep.kept_rows += seq.interactions.size();
        sequences.push_back(std::move(seq));
    }
    if (report) *report = rep;
    return Corpus(std::move(sequences));
}

void write_canonical_csv(const Corpus& corpus, const std::filesystem::path& path)
{
    std::ostringstream os;
    os << "student_id,question_id,skill_ids,response,order_index\n";
    for (const auto& [id, seq] : corpus.sequences()) {
        for (const auto& it : seq.interactions) {
            std::string skills;
            for (std::size_t k = 0; k < it.skill_ids.size(); ++k) {
                if (k) skills += ';';
                skills += it.skill_ids[k];
            }
            os << io::csv_field(it.student_id) << ',' << io::csv_field(it.question_id) << ','
               << io::csv_field(skills) << ',' << it.response << ',' << it.order_index << '\n';
        }
    }
    io::write_text(path, os.str());
}

std::vector<PositionedInteraction> same_skill_subsequence(const StudentSequence& seq,
                                                          const std::string& skill)
{
    std::vector<PositionedInteraction> out;
    for (std::size_t i = 0; i < seq.interactions.size(); ++i)
        if (seq.interactions[i].has_skill(skill)) out.push_back({i, &seq.interactions[i]});
    return out;
}

}  // namespace recopt
