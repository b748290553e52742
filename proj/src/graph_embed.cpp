#include "recopt/graph_embed.hpp"

#include "recopt/io.hpp"
#include "recopt/optim.hpp"
#include "recopt/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace recopt {

namespace {

bool sorted_intersect(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i == *j) return true;
        if (*i < *j) ++i;
        else ++j;
    }
    return false;
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

/// Cross-entropy of a logit against a label and the derivative with respect
/// to the logit (zero when the probability is clamped).
std::pair<double, double> bce(double logit, double label)
{
    const double p = sigmoid(logit);
    const double pc = clamp_prob(p);
    const double loss = -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
    const double dlogit = (p == pc) ? p - label : 0.0;
    return {loss, dlogit};
}

}  // namespace

BipartiteGraph::BipartiteGraph(std::size_t questions, std::size_t skills,
                               const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                               std::vector<double> attributes)
    : skills_of_(questions), questions_of_(skills), attributes_(std::move(attributes))
{
    if (attributes_.size() != questions)
        throw std::invalid_argument("BipartiteGraph: one attribute per question required");
    for (auto [q, s] : edges) {
        if (q >= questions || s >= skills) throw std::out_of_range("BipartiteGraph: edge out of range");
        skills_of_[q].push_back(s);
        questions_of_[s].push_back(q);
    }
    for (auto* lists : {&skills_of_, &questions_of_}) {
        for (auto& v : *lists) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
    }
    question_ids_.resize(questions);
    skill_ids_.resize(skills);
    for (std::size_t i = 0; i < questions; ++i) question_ids_[i] = std::to_string(i);
    for (std::size_t i = 0; i < skills; ++i) skill_ids_[i] = std::to_string(i);
}

BipartiteGraph BipartiteGraph::from_corpus(const Corpus& corpus, const DifficultyTable& difficulty)
{
    const auto skill_list = corpus.skills();
    std::map<std::string, std::size_t> skill_index;
    for (std::size_t i = 0; i < skill_list.size(); ++i) skill_index[skill_list[i]] = i;

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> attributes;
    std::vector<std::string> question_ids;
    std::size_t q = 0;
    for (const auto& [qid, skills] : corpus.question_skills()) {
        for (const auto& s : skills) edges.emplace_back(q, skill_index.at(s));
        attributes.push_back(difficulty.normalized(qid));
        question_ids.push_back(qid);
        ++q;
    }
    BipartiteGraph g(q, skill_list.size(), edges, std::move(attributes));
    g.question_ids_ = std::move(question_ids);
    g.skill_ids_ = skill_list;
    return g;
}

bool BipartiteGraph::edge(std::size_t q, std::size_t s) const
{
    const auto& v = skills_of_.at(q);
    return std::binary_search(v.begin(), v.end(), s);
}

bool BipartiteGraph::question_relation(std::size_t a, std::size_t b) const
{
    return sorted_intersect(skills_of_.at(a), skills_of_.at(b));
}

bool BipartiteGraph::skill_relation(std::size_t a, std::size_t b) const
{
    return sorted_intersect(questions_of_.at(a), questions_of_.at(b));
}

EmbeddingSet EmbeddingSet::random(std::size_t questions, std::size_t skills, std::size_t dim,
                                  std::uint64_t seed, double scale)
{
    Rng rng(seed);
    EmbeddingSet e;
    auto fill = [&](auto& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-scale, scale);
    };
    e.questions.resize(static_cast<Eigen::Index>(questions), static_cast<Eigen::Index>(dim));
    e.skills.resize(static_cast<Eigen::Index>(skills), static_cast<Eigen::Index>(dim));
    e.head_weight.resize(static_cast<Eigen::Index>(dim));
    fill(e.questions);
    fill(e.skills);
    fill(e.head_weight);
    e.head_bias = 0.0;
    return e;
}

std::size_t EmbeddingSet::question_index(const std::string& id) const
{
    auto it = std::find(question_ids.begin(), question_ids.end(), id);
    if (it == question_ids.end()) throw std::out_of_range("unknown question " + id);
    return static_cast<std::size_t>(it - question_ids.begin());
}

double predict_relation(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v)
{
    if (u.size() != v.size()) throw std::invalid_argument("predict_relation: length mismatch");
    return sigmoid(u.dot(v));
}

namespace {

void check_shapes(const BipartiteGraph& graph, const EmbeddingSet& emb)
{
    if (static_cast<std::size_t>(emb.questions.rows()) != graph.question_count() ||
        static_cast<std::size_t>(emb.skills.rows()) != graph.skill_count() ||
        emb.skills.cols() != emb.questions.cols() || emb.head_weight.size() != emb.questions.cols())
        throw std::invalid_argument("embedding shapes do not match the graph");
}

Eigen::MatrixXd relation_matrix(std::size_t rows, std::size_t cols, auto&& rel)
{
    Eigen::MatrixXd r(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rel(i, j) ? 1.0 : 0.0;
    return r;
}

/// Summed cross-entropy of logits against labels; fills the logit residuals.
double bce_block(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& labels, Eigen::MatrixXd* resid)
{
    double loss = 0.0;
    if (resid) resid->resize(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            auto [l, d] = bce(logits(i, j), labels(i, j));
            loss += l;
            if (resid) (*resid)(i, j) = d;
        }
    }
    return loss;
}

struct FullEval {
    JointLoss loss;
    Eigen::MatrixXd r1, r2, r3;
    Eigen::VectorXd attr_resid;  // a - a_hat
};

FullEval evaluate_full(const BipartiteGraph& graph, const EmbeddingSet& emb, double lambda, bool want_resid)
{
    check_shapes(graph, emb);
    const auto M = graph.question_count();
    const auto N = graph.skill_count();
    FullEval f;
    const auto qs = relation_matrix(M, N, [&](auto i, auto j) { return graph.edge(i, j); });
    const auto qq = relation_matrix(M, M, [&](auto i, auto j) { return graph.question_relation(i, j); });
    const auto ss = relation_matrix(N, N, [&](auto i, auto j) { return graph.skill_relation(i, j); });
    f.loss.l1 = bce_block(emb.questions * emb.skills.transpose(), qs, want_resid ? &f.r1 : nullptr);
    f.loss.l2 = bce_block(emb.questions * emb.questions.transpose(), qq, want_resid ? &f.r2 : nullptr);
    f.loss.l3 = bce_block(emb.skills * emb.skills.transpose(), ss, want_resid ? &f.r3 : nullptr);
    const Eigen::Map<const Eigen::VectorXd> attr(graph.attributes().data(),
                                                 static_cast<Eigen::Index>(M));
    const Eigen::VectorXd predicted =
        (emb.questions * emb.head_weight).array() + emb.head_bias;
    f.attr_resid = attr - predicted;
    f.loss.l4 = f.attr_resid.squaredNorm();
    f.loss.total = lambda * (f.loss.l1 + f.loss.l2 + f.loss.l3) + (1.0 - lambda) * f.loss.l4;
    return f;
}

}  // namespace

JointLoss loss_joint(const BipartiteGraph& graph, const EmbeddingSet& emb, double lambda)
{
    auto f = evaluate_full(graph, emb, lambda, false);
    if (!std::isfinite(f.loss.total))
        throw std::runtime_error("joint loss is not finite (divergence)");
    return f.loss;
}

JointGradient grad_joint(const BipartiteGraph& graph, const EmbeddingSet& emb, double lambda)
{
    auto f = evaluate_full(graph, emb, lambda, true);
    JointGradient g;
    const double w_attr = 1.0 - lambda;
    // qq and ss residuals are symmetric, so both orderings of a pair add up to 2 R Q
    g.questions = lambda * (f.r1 * emb.skills + 2.0 * f.r2 * emb.questions) -
                  2.0 * w_attr * f.attr_resid * emb.head_weight.transpose();
    g.skills = lambda * (f.r1.transpose() * emb.questions + 2.0 * f.r3 * emb.skills);
    g.head_weight = -2.0 * w_attr * emb.questions.transpose() * f.attr_resid;
    g.head_bias = -2.0 * w_attr * f.attr_resid.sum();
    return g;
}

std::vector<RelationTerm> all_terms(const BipartiteGraph& graph)
{
    using K = RelationTerm::Kind;
    const auto M = static_cast<std::uint32_t>(graph.question_count());
    const auto N = static_cast<std::uint32_t>(graph.skill_count());
    std::vector<RelationTerm> t;
    for (std::uint32_t i = 0; i < M; ++i)
        for (std::uint32_t j = 0; j < N; ++j) t.push_back({K::QuestionSkill, i, j, graph.edge(i, j) ? 1.0 : 0.0});
    for (std::uint32_t i = 0; i < M; ++i)
        for (std::uint32_t j = 0; j < M; ++j)
            t.push_back({K::QuestionQuestion, i, j, graph.question_relation(i, j) ? 1.0 : 0.0});
    for (std::uint32_t i = 0; i < N; ++i)
        for (std::uint32_t j = 0; j < N; ++j)
            t.push_back({K::SkillSkill, i, j, graph.skill_relation(i, j) ? 1.0 : 0.0});
    for (std::uint32_t i = 0; i < M; ++i) t.push_back({K::Attribute, i, 0, graph.attributes()[i]});
    return t;
}

JointGradient zero_gradient(const EmbeddingSet& emb)
{
    JointGradient g;
    g.questions = Eigen::MatrixXd::Zero(emb.questions.rows(), emb.questions.cols());
    g.skills = Eigen::MatrixXd::Zero(emb.skills.rows(), emb.skills.cols());
    g.head_weight = Eigen::VectorXd::Zero(emb.head_weight.size());
    g.head_bias = 0.0;
    return g;
}

JointLoss accumulate_terms(const std::vector<RelationTerm>& terms, std::size_t begin, std::size_t end,
                           const EmbeddingSet& emb, double lambda, JointGradient* grad)
{
    using K = RelationTerm::Kind;
    JointLoss loss;
    const double w_attr = 1.0 - lambda;
    for (std::size_t k = begin; k < end; ++k) {
        const auto& t = terms[k];
        switch (t.kind) {
        case K::QuestionSkill: {
            const auto q = emb.questions.row(t.a);
            const auto s = emb.skills.row(t.b);
            auto [l, d] = bce(q.dot(s), t.target);
            loss.l1 += l;
            if (grad) {
                grad->questions.row(t.a) += lambda * d * s;
                grad->skills.row(t.b) += lambda * d * q;
            }
            break;
        }
        case K::QuestionQuestion:
        case K::SkillSkill: {
            const bool qq = t.kind == K::QuestionQuestion;
            const auto& m = qq ? emb.questions : emb.skills;
            const Eigen::RowVectorXd u = m.row(t.a);
            const Eigen::RowVectorXd v = m.row(t.b);
            auto [l, d] = bce(u.dot(v), t.target);
            (qq ? loss.l2 : loss.l3) += l;
            if (grad) {
                auto& g = qq ? grad->questions : grad->skills;
                g.row(t.a) += lambda * d * v;
                g.row(t.b) += lambda * d * u;
            }
            break;
        }
        case K::Attribute: {
            const auto q = emb.questions.row(t.a);
            const double resid = t.target - (q.dot(emb.head_weight.transpose()) + emb.head_bias);
            loss.l4 += resid * resid;
            if (grad) {
                grad->questions.row(t.a) -= 2.0 * w_attr * resid * emb.head_weight.transpose();
                grad->head_weight -= 2.0 * w_attr * resid * q.transpose();
                grad->head_bias -= 2.0 * w_attr * resid;
            }
            break;
        }
        }
    }
    loss.total = lambda * (loss.l1 + loss.l2 + loss.l3) + w_attr * loss.l4;
    return loss;
}

namespace {

std::vector<RelationTerm> sampled_terms(const BipartiteGraph& graph, std::size_t negatives, Rng& rng)
{
    using K = RelationTerm::Kind;
    const auto M = graph.question_count();
    const auto N = graph.skill_count();
    std::vector<RelationTerm> t;
    auto u32 = [](std::size_t x) { return static_cast<std::uint32_t>(x); };
    auto negatives_for = [&](K kind, std::size_t rows, std::size_t cols, auto&& rel) {
        for (std::size_t n = 0; n < negatives; ++n) {
            const auto a = rng.below(rows);
            const auto b = rng.below(cols);
            t.push_back({kind, u32(a), u32(b), rel(a, b) ? 1.0 : 0.0});
        }
    };
    for (std::size_t q = 0; q < M; ++q) {
        for (auto s : graph.skills_of(q)) {
            t.push_back({K::QuestionSkill, u32(q), u32(s), 1.0});
            negatives_for(K::QuestionSkill, M, N, [&](auto a, auto b) { return graph.edge(a, b); });
        }
    }
    // question pairs sharing a skill (counted once per ordered pair)
    for (std::size_t a = 0; a < M; ++a) {
        std::vector<std::size_t> related;
        for (auto s : graph.skills_of(a))
            for (auto b : graph.questions_of(s)) related.push_back(b);
        std::sort(related.begin(), related.end());
        related.erase(std::unique(related.begin(), related.end()), related.end());
        for (auto b : related) {
            t.push_back({K::QuestionQuestion, u32(a), u32(b), 1.0});
            negatives_for(K::QuestionQuestion, M, M,
                          [&](auto x, auto y) { return graph.question_relation(x, y); });
        }
    }
    for (std::size_t a = 0; a < N; ++a) {
        std::vector<std::size_t> related;
        for (auto q : graph.questions_of(a))
            for (auto b : graph.skills_of(q)) related.push_back(b);
        std::sort(related.begin(), related.end());
        related.erase(std::unique(related.begin(), related.end()), related.end());
        for (auto b : related) {
            t.push_back({K::SkillSkill, u32(a), u32(b), 1.0});
            negatives_for(K::SkillSkill, N, N, [&](auto x, auto y) { return graph.skill_relation(x, y); });
        }
    }
    for (std::size_t q = 0; q < M; ++q) t.push_back({K::Attribute, u32(q), 0, graph.attributes()[q]});
    return t;
}

struct AdamSet {
    AdamState q, s, w, b;
    explicit AdamSet(const EmbeddingSet& e)
        : q(e.questions.rows(), e.questions.cols()), s(e.skills.rows(), e.skills.cols()),
          w(e.head_weight.size(), 1), b(1, 1)
    {
    }
    void step(const AdamConfig& cfg, EmbeddingSet& e, const JointGradient& g)
    {
        q.step(cfg, e.questions, g.questions);
        s.step(cfg, e.skills, g.skills);
        w.step(cfg, e.head_weight, g.head_weight);
        Eigen::Matrix<double, 1, 1> bias{e.head_bias};
        Eigen::Matrix<double, 1, 1> gb{g.head_bias};
        b.step(cfg, bias, gb);
        e.head_bias = bias(0, 0);
    }
};

void add_loss(JointLoss& acc, const JointLoss& l)
{
    acc.l1 += l.l1;
    acc.l2 += l.l2;
    acc.l3 += l.l3;
    acc.l4 += l.l4;
    acc.total += l.total;
}

}  // namespace

EmbedResult train_embeddings(const BipartiteGraph& graph, const EmbedConfig& config)
{
    if (graph.question_count() == 0 || graph.skill_count() == 0)
        throw std::invalid_argument("train_embeddings: empty graph");
    if (config.batch == 0) throw std::invalid_argument("train_embeddings: batch must be positive");
    EmbedResult result;
    auto& emb = result.embeddings;
    emb = EmbeddingSet::random(graph.question_count(), graph.skill_count(), config.dim,
                               Rng::derive(config.seed, 0), config.init_scale);
    emb.fused_width = config.fused_width;
    emb.question_ids = graph.question_ids();
    emb.skill_ids = graph.skill_ids();

    Rng rng(Rng::derive(config.seed, 1));
    AdamConfig adam;
    adam.lr = config.lr;
    AdamSet state(emb);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        JointLoss epoch_loss;
        if (config.full_batch) {
            epoch_loss = loss_joint(graph, emb, config.lambda);
            state.step(adam, emb, grad_joint(graph, emb, config.lambda));
        } else {
            auto terms = sampled_terms(graph, config.negatives, rng);
            rng.shuffle(terms);
            for (std::size_t start = 0; start < terms.size(); start += config.batch) {
                const auto stop = std::min(terms.size(), start + config.batch);
                auto g = zero_gradient(emb);
                add_loss(epoch_loss, accumulate_terms(terms, start, stop, emb, config.lambda, &g));
                state.step(adam, emb, g);
            }
        }
        if (!std::isfinite(epoch_loss.total) || !emb.questions.allFinite() || !emb.skills.allFinite() ||
            !emb.head_weight.allFinite() || !std::isfinite(emb.head_bias))
            throw std::runtime_error("embedding training diverged at epoch " + std::to_string(epoch));
        result.history.push_back(epoch_loss);
    }
    return result;
}

Eigen::VectorXd fused_question_embedding(const EmbeddingSet& emb, const BipartiteGraph& graph,
                                         std::size_t question)
{
    if (question >= static_cast<std::size_t>(emb.questions.rows()))
        throw std::out_of_range("fused_question_embedding: unknown question index");
    const auto dim = static_cast<Eigen::Index>(emb.dim());
    Eigen::VectorXd skill_mean = Eigen::VectorXd::Zero(dim);
    const auto& skills = graph.skills_of(question);
    for (auto s : skills) skill_mean += emb.skills.row(static_cast<Eigen::Index>(s)).transpose();
    if (!skills.empty()) skill_mean /= static_cast<double>(skills.size());

    Eigen::VectorXd full(2 * dim);
    full << emb.questions.row(static_cast<Eigen::Index>(question)).transpose(), skill_mean;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.fused_width));
    const auto n = std::min<Eigen::Index>(out.size(), full.size());
    out.head(n) = full.head(n);
    return out;
}

Eigen::VectorXd fused_question_embedding(const EmbeddingSet& emb, const BipartiteGraph& graph,
                                         const std::string& question_id)
{
    return fused_question_embedding(emb, graph, emb.question_index(question_id));
}

namespace {

constexpr char kMagic[4] = {'R', 'E', 'M', 'B'};

void put_u32(std::string& out, std::uint32_t v)
{
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void put_f32(std::string& out, double v)
{
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos)
{
    if (pos + 4 > in.size()) throw std::runtime_error("embedding file truncated");
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
    pos += 4;
    return v;
}

double get_f32(const std::string& in, std::size_t& pos)
{
    return static_cast<double>(std::bit_cast<float>(get_u32(in, pos)));
}

}  // namespace

void round_to_float(EmbeddingSet& emb)
{
    auto r = [](double x) { return static_cast<double>(static_cast<float>(x)); };
    emb.questions = emb.questions.unaryExpr(r);
    emb.skills = emb.skills.unaryExpr(r);
    emb.head_weight = emb.head_weight.unaryExpr(r);
    emb.head_bias = r(emb.head_bias);
}

void save_embeddings(const EmbeddingSet& emb, const std::filesystem::path& bin,
                     const std::filesystem::path& sidecar)
{
    std::string out(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(emb.questions.rows()));
    put_u32(out, static_cast<std::uint32_t>(emb.skills.rows()));
    put_u32(out, static_cast<std::uint32_t>(emb.dim()));
    for (Eigen::Index i = 0; i < emb.questions.rows(); ++i)
        for (Eigen::Index j = 0; j < emb.questions.cols(); ++j) put_f32(out, emb.questions(i, j));
    for (Eigen::Index i = 0; i < emb.skills.rows(); ++i)
        for (Eigen::Index j = 0; j < emb.skills.cols(); ++j) put_f32(out, emb.skills(i, j));
    for (Eigen::Index j = 0; j < emb.head_weight.size(); ++j) put_f32(out, emb.head_weight(j));
    put_f32(out, emb.head_bias);
    io::write_text(bin, out);

    nlohmann::json meta;
    meta["question_ids"] = emb.question_ids;
    meta["skill_ids"] = emb.skill_ids;
    meta["dim"] = emb.dim();
    meta["fused_width"] = emb.fused_width;
    io::write_text(sidecar, meta.dump(2) + "\n");
}

EmbeddingSet load_embeddings(const std::filesystem::path& bin, const std::filesystem::path& sidecar)
{
    const auto data = io::read_text(bin);
    if (data.size() < 16 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw std::runtime_error("not an embedding file: " + bin.string());
    std::size_t pos = 4;
    const auto M = get_u32(data, pos);
    const auto N = get_u32(data, pos);
    const auto dv = get_u32(data, pos);
    EmbeddingSet e;
    e.questions.resize(M, dv);
    e.skills.resize(N, dv);
    e.head_weight.resize(dv);
    for (Eigen::Index i = 0; i < e.questions.rows(); ++i)
        for (Eigen::Index j = 0; j < e.questions.cols(); ++j) e.questions(i, j) = get_f32(data, pos);
    for (Eigen::Index i = 0; i < e.skills.rows(); ++i)
        for (Eigen::Index j = 0; j < e.skills.cols(); ++j) e.skills(i, j) = get_f32(data, pos);
    for (Eigen::Index j = 0; j < e.head_weight.size(); ++j) e.head_weight(j) = get_f32(data, pos);
    e.head_bias = get_f32(data, pos);

    const auto meta = nlohmann::json::parse(io::read_text(sidecar));
    e.question_ids = meta.at("question_ids").get<std::vector<std::string>>();
    e.skill_ids = meta.at("skill_ids").get<std::vector<std::string>>();
    e.fused_width = meta.at("fused_width").get<std::size_t>();
    if (e.question_ids.size() != M || e.skill_ids.size() != N)
        throw std::runtime_error("embedding sidecar does not match " + bin.string());
    return e;
}

}  // namespace recopt
