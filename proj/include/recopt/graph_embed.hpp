#pragma once

#include "recopt/corpus.hpp"
#include "recopt/difficulty.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace recopt {

/// Question-skill incidence with the derived question-question and
/// skill-skill relations. Questions and skills are dense 0-based indices.
class BipartiteGraph {
public:
    BipartiteGraph() = default;
    BipartiteGraph(std::size_t questions, std::size_t skills,
                   const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                   std::vector<double> attributes);

    /// Questions and skills of the corpus in sorted id order; attribute of a
    /// question is its normalized difficulty.
    static BipartiteGraph from_corpus(const Corpus& corpus, const DifficultyTable& difficulty);

    std::size_t question_count() const { return skills_of_.size(); }
    std::size_t skill_count() const { return questions_of_.size(); }

    bool edge(std::size_t q, std::size_t s) const;
    /// 1 iff questions a and b share a skill (so every question relates to itself
    /// when it has a skill).
    bool question_relation(std::size_t a, std::size_t b) const;
    /// 1 iff skills a and b share a question.
    bool skill_relation(std::size_t a, std::size_t b) const;

    const std::vector<std::size_t>& skills_of(std::size_t q) const { return skills_of_[q]; }
    const std::vector<std::size_t>& questions_of(std::size_t s) const { return questions_of_[s]; }
    const std::vector<double>& attributes() const { return attributes_; }

    const std::vector<std::string>& question_ids() const { return question_ids_; }
    const std::vector<std::string>& skill_ids() const { return skill_ids_; }

private:
    std::vector<std::vector<std::size_t>> skills_of_;
    std::vector<std::vector<std::size_t>> questions_of_;
    std::vector<double> attributes_;
    std::vector<std::string> question_ids_;
    std::vector<std::string> skill_ids_;
};

/// Learned question and skill vectors plus the linear attribute head.
struct EmbeddingSet {
    Eigen::MatrixXd questions;    // M x dv
    Eigen::MatrixXd skills;       // N x dv
    Eigen::VectorXd head_weight;  // dv
    double head_bias = 0.0;
    std::size_t fused_width = 128;
    std::vector<std::string> question_ids;
    std::vector<std::string> skill_ids;

    std::size_t dim() const { return static_cast<std::size_t>(questions.cols()); }

    /// Uniform init in [-scale, scale].
    static EmbeddingSet random(std::size_t questions, std::size_t skills, std::size_t dim,
                               std::uint64_t seed, double scale = 0.05);

    std::size_t question_index(const std::string& id) const;
};

/// sigmoid(u . v). Throws std::invalid_argument on a length mismatch.
double predict_relation(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-7;

struct JointLoss {
    double l1 = 0.0;  // question-skill cross-entropy
    double l2 = 0.0;  // question-question cross-entropy
    double l3 = 0.0;  // skill-skill cross-entropy
    double l4 = 0.0;  // attribute squared error
    double total = 0.0;
};

struct JointGradient {
    Eigen::MatrixXd questions;
    Eigen::MatrixXd skills;
    Eigen::VectorXd head_weight;
    double head_bias = 0.0;
};

/// Joint objective over every pair: lambda (L1 + L2 + L3) + (1 - lambda) L4.
/// Throws std::runtime_error when the loss is not finite.
JointLoss loss_joint(const BipartiteGraph& graph, const EmbeddingSet& emb, double lambda);

/// Exact gradient of loss_joint (zero through clamped probabilities).
JointGradient grad_joint(const BipartiteGraph& graph, const EmbeddingSet& emb, double lambda);

/// A single summand of the joint objective, used for sampled training.
struct RelationTerm {
    enum class Kind : std::uint8_t { QuestionSkill, QuestionQuestion, SkillSkill, Attribute };
    Kind kind;
    std::uint32_t a;
    std::uint32_t b;  // unused for Attribute
    double target;    // relation label, or the attribute value
};

/// Every summand of loss_joint, in a fixed order.
std::vector<RelationTerm> all_terms(const BipartiteGraph& graph);

/// Loss and gradient of a sum of terms; `grad` must be zero-initialized with
/// the embedding's shapes and is accumulated into.
JointLoss accumulate_terms(const std::vector<RelationTerm>& terms, std::size_t begin, std::size_t end,
                           const EmbeddingSet& emb, double lambda, JointGradient* grad);

JointGradient zero_gradient(const EmbeddingSet& emb);

struct EmbedConfig {
    double lr = 0.001;
    std::size_t batch = 256;
    std::size_t epochs = 50;
    double lambda = 0.5;
    std::uint64_t seed = 7;
    std::size_t dim = 64;
    std::size_t fused_width = 128;
    std::size_t negatives = 5;  // uniform negatives per positive relation, per epoch
    bool full_batch = false;    // exact full objective, one step per epoch
    double init_scale = 0.05;
};

struct EmbedResult {
    EmbeddingSet embeddings;
    std::vector<JointLoss> history;  // per epoch, summed over the epoch's terms
};

/// Adam over shuffled mini-batches. Deterministic for a fixed seed.
/// Throws std::runtime_error on divergence.
EmbedResult train_embeddings(const BipartiteGraph& graph, const EmbedConfig& config);

/// [q_i || mean of i's skill vectors], zero-padded or truncated to fused_width.
/// `skills_of` gives the skill indices of question i.
Eigen::VectorXd fused_question_embedding(const EmbeddingSet& emb, const BipartiteGraph& graph,
                                         std::size_t question);
/// By id; throws std::out_of_range for an unknown question.
Eigen::VectorXd fused_question_embedding(const EmbeddingSet& emb, const BipartiteGraph& graph,
                                         const std::string& question_id);

/// Binary export: "REMB", then little-endian uint32 M, N, dv, then float32
/// rows of Q, rows of S, the head weights and the head bias. The JSON sidecar
/// holds the ids and the fused width.
void save_embeddings(const EmbeddingSet& emb, const std::filesystem::path& bin,
                     const std::filesystem::path& sidecar);
EmbeddingSet load_embeddings(const std::filesystem::path& bin, const std::filesystem::path& sidecar);

/// Rounds every parameter to float precision, so a saved and reloaded set is
/// identical to the in-memory one.
void round_to_float(EmbeddingSet& emb);

}  // namespace recopt
