#include "recopt/synthgen.hpp"

#include "recopt/io.hpp"
#include "recopt/rng.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace recopt {

void SynthConfig::validate() const
{
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (n_students == 0 || n_questions == 0 || n_skills == 0)
        throw std::invalid_argument("synth: counts must be positive");
    if (!unit(slip) || !unit(guess)) throw std::invalid_argument("synth: slip and guess must be in [0, 1]");
    if (seq_len_min == 0 || seq_len_min > seq_len_max)
        throw std::invalid_argument("synth: need 1 <= seq_len_min <= seq_len_max");
    if (!unit(skill_difficulty_min) || !unit(skill_difficulty_max) || skill_difficulty_min > skill_difficulty_max)
        throw std::invalid_argument("synth: bad skill difficulty range");
    if (!unit(multi_skill_fraction)) throw std::invalid_argument("synth: bad multi_skill_fraction");
    if (multi_skill_fraction > 0.0 && n_skills < 2)
        throw std::invalid_argument("synth: multi-skill questions need two skills");
}

namespace {

std::string padded(char prefix, std::size_t value, std::size_t count)
{
    std::size_t digits = 1;
    for (std::size_t c = count; c >= 10; c /= 10) ++digits;
    std::string s = std::to_string(value);
    return std::string(1, prefix) + std::string(digits > s.size() ? digits - s.size() : 0, '0') + s;
}

}  // namespace

std::pair<Corpus, SynthTruth> generate(const SynthConfig& config)
{
    config.validate();
    Rng world(Rng::derive(config.seed, 0));

    std::vector<std::string> skill_ids, question_ids;
    std::vector<double> skill_difficulty;
    for (std::size_t k = 0; k < config.n_skills; ++k) {
        skill_ids.push_back(padded('k', k, config.n_skills));
        skill_difficulty.push_back(world.uniform(config.skill_difficulty_min, config.skill_difficulty_max));
    }
    std::vector<std::vector<std::size_t>> question_skills(config.n_questions);
    for (std::size_t q = 0; q < config.n_questions; ++q) {
        question_ids.push_back(padded('q', q, config.n_questions));
        question_skills[q].push_back(q % config.n_skills);
        if (config.multi_skill_fraction > 0.0 && world.bernoulli(config.multi_skill_fraction)) {
            const auto offset = 1 + world.below(config.n_skills - 1);
            question_skills[q].push_back((q + offset) % config.n_skills);
        }
    }

    SynthTruth truth;
    std::vector<StudentSequence> sequences;
    for (std::size_t s = 0; s < config.n_students; ++s) {
        Rng rng(Rng::derive(config.seed, 1000 + s));
        StudentSequence seq;
        seq.student_id = padded('s', s, config.n_students);
        std::vector<int> mastered(config.n_skills);
        for (std::size_t k = 0; k < config.n_skills; ++k) {
            mastered[k] = rng.bernoulli(1.0 - skill_difficulty[k]) ? 1 : 0;
            truth.mastery[{seq.student_id, skill_ids[k]}] = mastered[k];
        }
        const auto len = config.seq_len_min + rng.below(config.seq_len_max - config.seq_len_min + 1);
        auto& latent = truth.latent[seq.student_id];
        auto& distorted = truth.distorted[seq.student_id];
        for (std::size_t t = 0; t < len; ++t) {
            const auto q = rng.below(config.n_questions);
            int knows = 1;
            for (auto k : question_skills[q]) knows &= mastered[k];
            const int observed = knows ? (rng.bernoulli(config.slip) ? 0 : 1) : (rng.bernoulli(config.guess) ? 1 : 0);
            Interaction it;
            it.student_id = seq.student_id;
            it.question_id = question_ids[q];
            for (auto k : question_skills[q]) it.skill_ids.push_back(skill_ids[k]);
            it.response = observed;
            it.order_index = t;
            seq.interactions.push_back(std::move(it));
            latent.push_back(knows);
            distorted.push_back(observed != knows ? 1 : 0);
        }
        sequences.push_back(std::move(seq));
    }
    return {Corpus(std::move(sequences)), std::move(truth)};
}

void SynthTruth::write_csv(const std::filesystem::path& path) const
{
    std::ostringstream os;
    os << "student_id,skill_id,mastery\n";
    for (const auto& [key, m] : mastery) os << io::csv_field(key.first) << ',' << io::csv_field(key.second) << ',' << m << '\n';
    io::write_text(path, os.str());
}

double agreement(const std::map<std::string, std::vector<int>>& states, const SynthTruth& truth)
{
    std::size_t match = 0;
    std::size_t total = 0;
    for (const auto& [student, latent] : truth.latent) {
        auto it = states.find(student);
        if (it == states.end()) throw std::invalid_argument("agreement: missing student " + student);
        if (it->second.size() != latent.size())
            throw std::invalid_argument("agreement: length mismatch for student " + student);
        for (std::size_t i = 0; i < latent.size(); ++i) match += (it->second[i] == latent[i]);
        total += latent.size();
    }
    if (total == 0) throw std::invalid_argument("agreement: no interactions");
    return static_cast<double>(match) / static_cast<double>(total);
}

}  // namespace recopt
