#include "recopt/refine.hpp"

#include "recopt/collaboration.hpp"
#include "recopt/coordination.hpp"
#include "recopt/io.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace recopt {

ModuleOrder parse_module_order(const std::string& s)
{
    if (s == "coo-col") return ModuleOrder::CooCol;
    if (s == "col-coo") return ModuleOrder::ColCoo;
    if (s == "coo") return ModuleOrder::Coo;
    if (s == "col") return ModuleOrder::Col;
    if (s == "none") return ModuleOrder::None;
    throw std::invalid_argument("unknown module order '" + s + "' (coo-col|col-coo|coo|col|none)");
}

std::string to_string(ModuleOrder order)
{
    switch (order) {
    case ModuleOrder::CooCol: return "coo-col";
    case ModuleOrder::ColCoo: return "col-coo";
    case ModuleOrder::Coo: return "coo";
    case ModuleOrder::Col: return "col";
    case ModuleOrder::None: return "none";
    }
    return "none";
}

std::size_t RefinedStates::flip_count(const std::string& module) const
{
    std::size_t n = 0;
    for (const auto& f : flips) n += (f.module == module);
    return n;
}

std::size_t RefinedStates::changed_count() const
{
    std::size_t n = 0;
    for (const auto& [id, s] : states) {
        const auto& r = raw.at(id);
        for (std::size_t i = 0; i < s.size(); ++i) n += (s[i] != r[i]);
    }
    return n;
}

StateDifficultySeq state_difficulty_sequence(const StudentSequence& seq, const std::vector<int>& states,
                                             const std::string& skill, const DifficultyTable& difficulty,
                                             std::size_t limit)
{
    StateDifficultySeq out;
    for (const auto& p : same_skill_subsequence(seq, skill)) {
        if (p.position >= limit) break;
        out.push_back({states[p.position], difficulty.normalized(p.interaction->question_id), p.position});
    }
    return out;
}

namespace {

enum class Pass { Coo, Col };

std::vector<Pass> passes_for(ModuleOrder order)
{
    switch (order) {
    case ModuleOrder::CooCol: return {Pass::Coo, Pass::Col};
    case ModuleOrder::ColCoo: return {Pass::Col, Pass::Coo};
    case ModuleOrder::Coo: return {Pass::Coo};
    case ModuleOrder::Col: return {Pass::Col};
    case ModuleOrder::None: return {};
    }
    return {};
}

std::vector<int> run_pass(Pass pass, const StudentSequence& seq, const std::vector<int>& input,
                          const DifficultyTable& difficulty, const RefineOptions& options, std::size_t limit,
                          std::vector<FlipRecord>* flips)
{
    std::set<std::string> skills;
    for (std::size_t i = 0; i < limit; ++i)
        skills.insert(seq.interactions[i].skill_ids.begin(), seq.interactions[i].skill_ids.end());

    // votes[i] = (#proposals for 1, #proposals total)
    std::vector<std::pair<int, int>> votes(limit, {0, 0});
    struct Pending {
        std::string skill;
        Flip flip;
    };
    std::vector<Pending> pending;
    for (const auto& skill : skills) {
        const auto sub = state_difficulty_sequence(seq, input, skill, difficulty, limit);
        if (sub.empty()) continue;
        std::vector<int> out;
        std::vector<Flip> sub_flips;
        if (pass == Pass::Coo) {
            auto r = coordinate_sequence(sub, options.alpha, options.coo_discount);
            out = std::move(r.final_states);
            sub_flips = std::move(r.flips);
        } else {
            auto r = collaborate_sequence(sub, options.beta);
            out = std::move(r.final_states);
            sub_flips = std::move(r.flips);
        }
        for (std::size_t k = 0; k < sub.size(); ++k) {
            votes[sub[k].position].first += out[k];
            votes[sub[k].position].second += 1;
        }
        for (auto& f : sub_flips) pending.push_back({skill, f});
    }

    std::vector<int> result = input;
    for (std::size_t i = 0; i < limit; ++i) {
        const auto [ones, total] = votes[i];
        if (total == 0) continue;
        if (2 * ones > total) result[i] = 1;
        else if (2 * ones < total) result[i] = 0;
    }
    if (flips) {
        const std::string module = pass == Pass::Coo ? "coo" : "col";
        for (auto& p : pending)
            if (result[p.flip.position] == p.flip.after)
                flips->push_back({module, seq.student_id, p.skill, p.flip});
    }
    return result;
}

}  // namespace

std::vector<int> refine_sequence(const StudentSequence& seq, const DifficultyTable& difficulty,
                                 const RefineOptions& options, std::vector<FlipRecord>* flips)
{
    if (!(options.fraction >= 0.0 && options.fraction <= 1.0))
        throw std::invalid_argument("refine: fraction must be in [0, 1]");
    std::vector<int> states;
    for (const auto& it : seq.interactions) states.push_back(it.response);
    const auto n = seq.interactions.size();
    const auto limit = std::min(n, static_cast<std::size_t>(std::floor(options.fraction * static_cast<double>(n) + 1e-9)));
    for (auto pass : passes_for(options.order))
        states = run_pass(pass, seq, states, difficulty, options, limit, flips);
    return states;
}

RefinedStates refine_corpus(const Corpus& corpus, const DifficultyTable& difficulty, const RefineOptions& options)
{
    RefinedStates r;
    for (const auto& [id, seq] : corpus.sequences()) {
        auto& raw = r.raw[id];
        for (const auto& it : seq.interactions) raw.push_back(it.response);
        r.states[id] = refine_sequence(seq, difficulty, options, &r.flips);
    }
    return r;
}

void write_flip_ledger(const std::vector<FlipRecord>& flips, const std::string& module,
                       const std::filesystem::path& path)
{
    const bool with_module = module != "coo";
    std::ostringstream os;
    os << "student_id,skill_id,position,before,after,trigger_position" << (with_module ? ",module" : "") << '\n';
    for (const auto& f : flips) {
        if (f.module != module) continue;
        os << io::csv_field(f.student_id) << ',' << io::csv_field(f.skill_id) << ',' << f.flip.position << ','
           << f.flip.before << ',' << f.flip.after << ',' << f.flip.trigger_position;
        if (with_module) os << ',' << f.module;
        os << '\n';
    }
    io::write_text(path, os.str());
}

void write_refined_csv(const Corpus& corpus, const RefinedStates& refined, const std::filesystem::path& path)
{
    std::ostringstream os;
    os << "student_id,question_id,skill_ids,response,order_index,raw_response\n";
    for (const auto& [id, seq] : corpus.sequences()) {
        const auto& states = refined.states.at(id);
        for (std::size_t i = 0; i < seq.interactions.size(); ++i) {
            const auto& it = seq.interactions[i];
            std::string skills;
            for (std::size_t k = 0; k < it.skill_ids.size(); ++k) skills += (k ? ";" : "") + it.skill_ids[k];
            os << io::csv_field(id) << ',' << io::csv_field(it.question_id) << ',' << io::csv_field(skills) << ','
               << states[i] << ',' << it.order_index << ',' << it.response << '\n';
        }
    }
    io::write_text(path, os.str());
}

std::pair<Corpus, RefinedStates> read_refined_csv(const std::filesystem::path& path)
{
    auto schema = CsvSchema::canonical();
    schema.correct = "raw_response";
    IngestOptions opts;
    opts.min_seq_len = 0;
    auto corpus = ingest_csv(path, schema, opts);

    const auto table = io::read_csv(path);
    const int c_student = table.column("student_id");
    const int c_order = table.column("order_index");
    const int c_state = table.column("response");
    if (c_student < 0 || c_order < 0 || c_state < 0) throw std::runtime_error("not a refined corpus: " + path.string());
    RefinedStates refined;
    for (const auto& [id, seq] : corpus.sequences()) {
        refined.states[id].assign(seq.interactions.size(), 0);
        auto& raw = refined.raw[id];
        for (const auto& it : seq.interactions) raw.push_back(it.response);
    }
    for (const auto& row : table.rows) {
        const auto id = io::trim(row.at(static_cast<std::size_t>(c_student)));
        const auto pos = std::stoul(io::trim(row.at(static_cast<std::size_t>(c_order))));
        auto& st = refined.states.at(id);
        if (pos >= st.size()) throw std::runtime_error("refined corpus order_index out of range");
        st[pos] = std::stoi(io::trim(row.at(static_cast<std::size_t>(c_state))));
    }
    return {std::move(corpus), std::move(refined)};
}

}  // namespace recopt
