#pragma once

#include "recopt/corpus.hpp"
#include "recopt/difficulty.hpp"
#include "recopt/graph_embed.hpp"
#include "recopt/predictor.hpp"
#include "recopt/refine.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace recopt {

using MasteryTable = std::map<std::pair<std::string, std::string>, int>;

/// Reads `student_id,skill_id,mastery`.
MasteryTable read_mastery_csv(const std::filesystem::path& path);

/// Everything one end-to-end run needs. Serializes to and from JSON; unknown
/// keys are rejected.
struct PipelineConfig {
    bool coo = true;
    bool col = true;
    bool bte = true;
    bool predictor = true;
    bool coo_first = true;  // coo-col vs col-coo when both are on

    double alpha = 0.8;
    double beta = 0.05;
    double coo_discount = 1.0;
    double fraction = 1.0;

    double fusion_weight = 0.5;  // share of the refined state in the response encoding
    double test_fraction = 0.2;
    bool difficulty_on_full = false;
    std::uint64_t seed = 7;

    EmbedConfig embed;
    PredictorConfig train;

    /// One of raw, Coo, Col, Bte, Bte+Coo, Bte+Col, Coo+Col, full.
    std::string variant_name() const;
    /// Sets coo/col/bte from a variant name; throws std::invalid_argument.
    void apply_variant(const std::string& name);
    ModuleOrder module_order() const;
    void set_module_order(ModuleOrder order);
    RefineOptions refine_options() const;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    /// Overlays keys present in `j` onto this config.
    void merge_json(const nlohmann::json& j);
};

/// The student split, difficulty table, graph and (optionally) trained
/// embeddings shared by every variant run on one corpus and seed.
struct PreparedData {
    Corpus corpus;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    DifficultyTable difficulty;
    BipartiteGraph graph;
    std::optional<EmbedResult> embedding;
};

/// Seeded 80/20 split (by test_fraction) of the sorted student ids.
std::pair<std::vector<std::string>, std::vector<std::string>> split_students(const Corpus& corpus,
                                                                            double test_fraction,
                                                                            std::uint64_t seed);

/// Throws std::runtime_error tagged with the failing stage.
PreparedData prepare(const Corpus& corpus, const PipelineConfig& config, bool train_embeddings_now);

/// Per-question input features: fused embeddings when `bte`, otherwise fixed
/// seeded random vectors of the fused width.
std::map<std::string, Eigen::VectorXd> question_features(const PreparedData& data, const PipelineConfig& config);

/// Inputs for one student: row t is [feature(q_{t+1}) || response encoding of
/// step t], target t is the raw answer at t+1. The response encoding mixes
/// the one-hots of the refined and raw states by fusion_weight.
PredictorSequence build_sequence(const StudentSequence& seq, const std::vector<int>& states,
                                 const std::map<std::string, Eigen::VectorXd>& features, double fusion_weight);

struct VariantOutcome {
    RefinedStates refined;
    std::optional<EvalReport> report;
    std::optional<PredictorModel> model;
    std::optional<TrainHistory> history;
    std::optional<double> agreement_raw;
    std::optional<double> agreement_refined;
};

VariantOutcome run_variant(const PreparedData& data, const PipelineConfig& config,
                           const MasteryTable* mastery = nullptr);

struct PipelineResult {
    PreparedData data;
    VariantOutcome outcome;
    nlohmann::json manifest;
};

/// ingest result -> difficulty -> record passes -> embeddings -> predictor.
/// When `out_dir` is non-empty every artifact is written there together
/// with manifest.json (config, seeds and SHA-256 of each artifact).
PipelineResult run_pipeline(const Corpus& corpus, const PipelineConfig& config,
                            const std::filesystem::path& out_dir, const MasteryTable* mastery = nullptr);

/// Re-evaluates a finished run directory from its saved artifacts.
EvalReport evaluate_run(const std::filesystem::path& run_dir);

struct TableRow {
    std::string label;
    PipelineConfig config;
    VariantOutcome outcome;
};

/// One row per variant name. Throws std::invalid_argument on an empty grid.
std::vector<TableRow> run_ablation(const Corpus& corpus, const PipelineConfig& base,
                                   const std::vector<std::string>& variants, const MasteryTable* mastery = nullptr,
                                   std::size_t jobs = 1);

/// One row per fraction in [0, 1]; throws std::invalid_argument otherwise.
std::vector<TableRow> run_quantification(const Corpus& corpus, const PipelineConfig& base,
                                         const std::vector<double>& fractions,
                                         const MasteryTable* mastery = nullptr, std::size_t jobs = 1);

/// One row per (alpha, beta) grid point.
std::vector<TableRow> run_sensitivity(const Corpus& corpus, const PipelineConfig& base,
                                      const std::vector<double>& alphas, const std::vector<double>& betas,
                                      const MasteryTable* mastery = nullptr, std::size_t jobs = 1);

/// Inclusive grid lo, lo + step, ..., hi (rounded to 1e-9 to avoid drift).
std::vector<double> grid(double lo, double hi, double step);

/// epoch,train_loss,validation_loss
std::string history_csv(const TrainHistory& h);
/// epoch,total,l1,l2,l3,l4
std::string embed_history_csv(const std::vector<JointLoss>& h);

/// label,alpha,beta,fraction,modules,auc,acc,rmse,n,coo_flips,col_flips,changed,agreement_raw,agreement_refined
std::string table_csv(const std::vector<TableRow>& rows);

}  // namespace recopt
