#include "recopt/pipeline.hpp"

#include "recopt/io.hpp"
#include "recopt/rng.hpp"
#include "recopt/synthgen.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace recopt {

namespace fs = std::filesystem;
using nlohmann::json;

MasteryTable read_mastery_csv(const fs::path& path)
{
    const auto t = io::read_csv(path);
    const int s = t.column("student_id"), k = t.column("skill_id"), m = t.column("mastery");
    if (s < 0 || k < 0 || m < 0) throw std::runtime_error("mastery file needs student_id,skill_id,mastery");
    MasteryTable out;
    for (const auto& row : t.rows) {
        const auto v = io::trim(row.at(static_cast<std::size_t>(m)));
        if (v != "0" && v != "1") throw std::runtime_error("non-binary mastery value '" + v + "'");
        out[{io::trim(row.at(static_cast<std::size_t>(s))), io::trim(row.at(static_cast<std::size_t>(k)))}] = v == "1";
    }
    return out;
}

// ---------------------------------------------------------------- config

std::string PipelineConfig::variant_name() const
{
    if (coo && col && bte) return "full";
    std::vector<std::string> parts;
    if (bte) parts.push_back("Bte");
    if (coo) parts.push_back("Coo");
    if (col) parts.push_back("Col");
    if (parts.empty()) return "raw";
    std::string s = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) s += "+" + parts[i];
    return s;
}

void PipelineConfig::apply_variant(const std::string& name)
{
    static const std::map<std::string, std::array<bool, 3>> table = {
        {"raw", {false, false, false}},  {"Coo", {true, false, false}},     {"Col", {false, true, false}},
        {"Bte", {false, false, true}},   {"Bte+Coo", {true, false, true}},  {"Bte+Col", {false, true, true}},
        {"Coo+Col", {true, true, false}}, {"full", {true, true, true}},
    };
    auto it = table.find(name);
    if (it == table.end())
        throw std::invalid_argument("unknown variant '" + name +
                                    "' (raw, Coo, Col, Bte, Bte+Coo, Bte+Col, Coo+Col, full)");
    coo = it->second[0];
    col = it->second[1];
    bte = it->second[2];
}

ModuleOrder PipelineConfig::module_order() const
{
    if (coo && col) return coo_first ? ModuleOrder::CooCol : ModuleOrder::ColCoo;
    if (coo) return ModuleOrder::Coo;
    if (col) return ModuleOrder::Col;
    return ModuleOrder::None;
}

void PipelineConfig::set_module_order(ModuleOrder order)
{
    coo = order == ModuleOrder::Coo || order == ModuleOrder::CooCol || order == ModuleOrder::ColCoo;
    col = order == ModuleOrder::Col || order == ModuleOrder::CooCol || order == ModuleOrder::ColCoo;
    coo_first = order != ModuleOrder::ColCoo;
}

RefineOptions PipelineConfig::refine_options() const
{
    RefineOptions r;
    r.order = module_order();
    r.alpha = alpha;
    r.beta = beta;
    r.coo_discount = coo_discount;
    r.fraction = fraction;
    return r;
}

json PipelineConfig::to_json() const
{
    json j;
    j["modules"] = {{"coo", coo}, {"col", col}, {"bte", bte}, {"predictor", predictor}};
    j["module_order"] = to_string(module_order());
    j["coo_first"] = coo_first;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["coo_discount"] = coo_discount;
    j["fraction"] = fraction;
    j["fusion_weight"] = fusion_weight;
    j["test_fraction"] = test_fraction;
    j["difficulty_on_full"] = difficulty_on_full;
    j["seed"] = seed;
    j["embed"] = {{"lr", embed.lr},          {"batch", embed.batch},         {"epochs", embed.epochs},
                  {"lambda", embed.lambda},  {"dim", embed.dim},             {"fused_width", embed.fused_width},
                  {"negatives", embed.negatives}, {"full_batch", embed.full_batch}, {"init_scale", embed.init_scale}};
    j["train"] = {{"lr", train.lr},           {"batch", train.batch},     {"dropout", train.dropout},
                  {"epochs", train.epochs},   {"hidden", train.hidden},   {"validation_fraction", train.validation_fraction},
                  {"patience", train.patience}};
    return j;
}

void PipelineConfig::merge_json(const json& j)
{
    static const std::set<std::string> known = {
        "modules", "module_order", "coo_first", "alpha", "beta", "coo_discount", "fraction", "fusion_weight",
        "test_fraction", "difficulty_on_full", "seed", "embed", "train", "variant"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("unknown config key '" + it.key() + "'");
    auto get = [&](const json& src, const char* key, auto& target) {
        if (src.contains(key)) target = src.at(key).get<std::decay_t<decltype(target)>>();
    };
    if (j.contains("variant")) apply_variant(j.at("variant").get<std::string>());
    if (j.contains("modules")) {
        const auto& m = j.at("modules");
        get(m, "coo", coo);
        get(m, "col", col);
        get(m, "bte", bte);
        get(m, "predictor", predictor);
    }
    get(j, "coo_first", coo_first);
    if (j.contains("module_order")) {
        const bool keep_bte = bte;
        set_module_order(parse_module_order(j.at("module_order").get<std::string>()));
        bte = keep_bte;
    }
    get(j, "alpha", alpha);
    get(j, "beta", beta);
    get(j, "coo_discount", coo_discount);
    get(j, "fraction", fraction);
    get(j, "fusion_weight", fusion_weight);
    get(j, "test_fraction", test_fraction);
    get(j, "difficulty_on_full", difficulty_on_full);
    get(j, "seed", seed);
    if (j.contains("embed")) {
        const auto& e = j.at("embed");
        get(e, "lr", embed.lr);
        get(e, "batch", embed.batch);
        get(e, "epochs", embed.epochs);
        get(e, "lambda", embed.lambda);
        get(e, "dim", embed.dim);
        get(e, "fused_width", embed.fused_width);
        get(e, "negatives", embed.negatives);
        get(e, "full_batch", embed.full_batch);
        get(e, "init_scale", embed.init_scale);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        get(t, "lr", train.lr);
        get(t, "batch", train.batch);
        get(t, "dropout", train.dropout);
        get(t, "epochs", train.epochs);
        get(t, "hidden", train.hidden);
        get(t, "validation_fraction", train.validation_fraction);
        get(t, "patience", train.patience);
    }
}

PipelineConfig PipelineConfig::from_json(const json& j)
{
    PipelineConfig c;
    c.merge_json(j);
    return c;
}

// ---------------------------------------------------------------- stages

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("[") + name + "] " + e.what());
    }
}

void validate(const PipelineConfig& c)
{
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(c.alpha) || !unit(c.beta)) throw std::invalid_argument("alpha and beta must lie in [0, 1]");
    if (!(c.coo_discount > 0.0 && c.coo_discount <= 1.0)) throw std::invalid_argument("coo_discount must lie in (0, 1]");
    if (!unit(c.fraction)) throw std::invalid_argument("fraction must lie in [0, 1]");
    if (!unit(c.fusion_weight)) throw std::invalid_argument("fusion_weight must lie in [0, 1]");
    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0, 1)");
    if (!unit(c.embed.lambda)) throw std::invalid_argument("lambda must lie in [0, 1]");
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<std::string>> split_students(const Corpus& corpus,
                                                                            double test_fraction,
                                                                            std::uint64_t seed)
{
    std::vector<std::string> ids;
    for (const auto& [id, seq] : corpus.sequences()) ids.push_back(id);
    Rng rng(Rng::derive(seed, 21));
    rng.shuffle(ids);
    auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(ids.size())));
    n_test = std::min(n_test, ids.size() > 1 ? ids.size() - 1 : 0);
    std::vector<std::string> test(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {train, test};
}

PreparedData prepare(const Corpus& corpus, const PipelineConfig& config, bool train_embeddings_now)
{
    stage("config", [&] { validate(config); });
    if (corpus.empty()) throw std::runtime_error("[ingest] empty corpus");
    PreparedData d;
    d.corpus = corpus;
    std::tie(d.train_ids, d.test_ids) = split_students(corpus, config.test_fraction, config.seed);
    d.difficulty = stage("difficulty", [&] {
        return compute_stats(config.difficulty_on_full ? corpus : corpus.subset(d.train_ids));
    });
    d.graph = BipartiteGraph::from_corpus(corpus, d.difficulty);
    if (train_embeddings_now) {
        d.embedding = stage("embed", [&] {
            auto cfg = config.embed;
            cfg.seed = config.seed;
            auto r = train_embeddings(d.graph, cfg);
            round_to_float(r.embeddings);
            return r;
        });
    }
    return d;
}

std::map<std::string, Eigen::VectorXd> question_features(const PreparedData& data, const PipelineConfig& config)
{
    std::map<std::string, Eigen::VectorXd> out;
    const auto& ids = data.graph.question_ids();
    if (config.bte) {
        if (!data.embedding) throw std::logic_error("embeddings requested but not trained");
        for (std::size_t q = 0; q < ids.size(); ++q)
            out[ids[q]] = fused_question_embedding(data.embedding->embeddings, data.graph, q);
        return out;
    }
    Rng rng(Rng::derive(config.seed, 23));
    const auto width = static_cast<Eigen::Index>(config.embed.fused_width);
    for (const auto& id : ids) {
        Eigen::VectorXd v(width);
        for (Eigen::Index k = 0; k < width; ++k) v(k) = rng.uniform(-1.0, 1.0);
        out[id] = std::move(v);
    }
    return out;
}

PredictorSequence build_sequence(const StudentSequence& seq, const std::vector<int>& states,
                                 const std::map<std::string, Eigen::VectorXd>& features, double fusion_weight)
{
    const auto n = seq.interactions.size();
    if (states.size() != n) throw std::invalid_argument("build_sequence: state count mismatch");
    PredictorSequence out;
    if (n < 2) {
        out.inputs.resize(0, 0);
        return out;
    }
    const auto& first = features.at(seq.interactions[1].question_id);
    const auto width = first.size();
    out.inputs.resize(static_cast<Eigen::Index>(n - 1), width + 2);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        const auto& next = seq.interactions[t + 1];
        out.inputs.row(row).head(width) = features.at(next.question_id).transpose();
        const int refined = states[t];
        const int raw = seq.interactions[t].response;
        out.inputs(row, width) = fusion_weight * (refined == 0) + (1.0 - fusion_weight) * (raw == 0);
        out.inputs(row, width + 1) = fusion_weight * (refined == 1) + (1.0 - fusion_weight) * (raw == 1);
        out.targets.push_back(next.response);
    }
    return out;
}

namespace {

std::map<std::string, std::vector<int>> latent_states(const Corpus& corpus, const MasteryTable& mastery)
{
    std::map<std::string, std::vector<int>> out;
    for (const auto& [id, seq] : corpus.sequences()) {
        auto& v = out[id];
        for (const auto& it : seq.interactions) {
            int knows = 1;
            for (const auto& k : it.skill_ids) {
                auto m = mastery.find({id, k});
                if (m == mastery.end()) throw std::runtime_error("no mastery for " + id + "/" + k);
                knows &= m->second;
            }
            v.push_back(knows);
        }
    }
    return out;
}

std::vector<PredictorSequence> sequences_for(const PreparedData& data, const std::vector<std::string>& ids,
                                             const RefinedStates& refined,
                                             const std::map<std::string, Eigen::VectorXd>& features,
                                             double fusion_weight)
{
    std::vector<PredictorSequence> out;
    for (const auto& id : ids) {
        auto s = build_sequence(data.corpus.sequence(id), refined.states.at(id), features, fusion_weight);
        if (!s.targets.empty()) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

VariantOutcome run_variant(const PreparedData& data, const PipelineConfig& config, const MasteryTable* mastery)
{
    stage("config", [&] { validate(config); });
    VariantOutcome out;
    out.refined = stage("optimize", [&] { return refine_corpus(data.corpus, data.difficulty, config.refine_options()); });
    if (mastery) {
        stage("agreement", [&] {
            SynthTruth truth;
            truth.latent = latent_states(data.corpus, *mastery);
            out.agreement_raw = agreement(out.refined.raw, truth);
            out.agreement_refined = agreement(out.refined.states, truth);
        });
    }
    if (!config.predictor) return out;

    stage("train", [&] {
        const auto features = question_features(data, config);
        const auto train = sequences_for(data, data.train_ids, out.refined, features, config.fusion_weight);
        const auto width = static_cast<std::size_t>(features.begin()->second.size()) + 2;
        auto model = PredictorModel::init(width, config.train.hidden, Rng::derive(config.seed, 31));
        auto cfg = config.train;
        cfg.seed = config.seed;
        out.history = train_predictor(model, train, cfg);
        const auto test = sequences_for(data, data.test_ids, out.refined, features, config.fusion_weight);
        auto report = evaluate(model, test);
        report.config = config.to_json();
        out.report = std::move(report);
        out.model = std::move(model);
    });
    return out;
}

// ---------------------------------------------------------------- artifacts

std::string history_csv(const TrainHistory& h)
{
    std::ostringstream os;
    os << "epoch,train_loss,validation_loss\n";
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
        os << e << ',' << io::format_double(h.train_loss[e]) << ',';
        if (e < h.validation_loss.size()) os << io::format_double(h.validation_loss[e]);
        os << '\n';
    }
    return os.str();
}

std::string embed_history_csv(const std::vector<JointLoss>& h)
{
    std::ostringstream os;
    os << "epoch,total,l1,l2,l3,l4\n";
    for (std::size_t e = 0; e < h.size(); ++e)
        os << e << ',' << io::format_double(h[e].total) << ',' << io::format_double(h[e].l1) << ','
           << io::format_double(h[e].l2) << ',' << io::format_double(h[e].l3) << ',' << io::format_double(h[e].l4)
           << '\n';
    return os.str();
}

namespace {

json report_json(const VariantOutcome& o)
{
    json j = o.report ? o.report->to_json() : json::object();
    if (o.agreement_raw) j["agreement_raw"] = *o.agreement_raw;
    if (o.agreement_refined) j["agreement_refined"] = *o.agreement_refined;
    j["coo_flips"] = o.refined.flip_count("coo");
    j["col_flips"] = o.refined.flip_count("col");
    j["changed"] = o.refined.changed_count();
    return j;
}

}  // namespace

PipelineResult run_pipeline(const Corpus& corpus, const PipelineConfig& config, const fs::path& out_dir,
                            const MasteryTable* mastery)
{
    PipelineResult r;
    r.data = prepare(corpus, config, config.bte && config.predictor);
    r.outcome = run_variant(r.data, config, mastery);
    if (out_dir.empty()) return r;

    stage("write", [&] {
        fs::create_directories(out_dir);
        std::vector<std::string> files;
        auto text = [&](const std::string& name, const std::string& body) {
            io::write_text(out_dir / name, body);
            files.push_back(name);
        };
        text("config.json", config.to_json().dump(2) + "\n");
        write_canonical_csv(corpus, out_dir / "corpus.csv");
        files.push_back("corpus.csv");
        r.data.difficulty.write_csv(out_dir / "stats.csv");
        files.push_back("stats.csv");
        text("split.json", json{{"train", r.data.train_ids}, {"test", r.data.test_ids}}.dump(2) + "\n");
        write_refined_csv(corpus, r.outcome.refined, out_dir / "optimized.csv");
        files.push_back("optimized.csv");
        write_flip_ledger(r.outcome.refined.flips, "coo", out_dir / "coo_flips.csv");
        write_flip_ledger(r.outcome.refined.flips, "col", out_dir / "col_flips.csv");
        files.push_back("coo_flips.csv");
        files.push_back("col_flips.csv");
        if (r.data.embedding) {
            save_embeddings(r.data.embedding->embeddings, out_dir / "embeddings.bin", out_dir / "embeddings.json");
            files.push_back("embeddings.bin");
            files.push_back("embeddings.json");
            text("embed_loss.csv", embed_history_csv(r.data.embedding->history));
        }
        if (r.outcome.model) {
            text("model.json", r.outcome.model->to_json().dump() + "\n");
            text("predictor_history.csv", history_csv(*r.outcome.history));
        }
        text("report.json", report_json(r.outcome).dump(2) + "\n");

        json manifest;
        manifest["config"] = config.to_json();
        manifest["seeds"] = {{"seed", config.seed},
                             {"split", Rng::derive(config.seed, 21)},
                             {"features", Rng::derive(config.seed, 23)},
                             {"predictor_init", Rng::derive(config.seed, 31)}};
        json hashes = json::object();
        for (const auto& f : files) hashes[f] = io::sha256_file(out_dir / f);
        manifest["artifacts"] = hashes;
        io::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
        r.manifest = manifest;
    });
    return r;
}

EvalReport evaluate_run(const fs::path& run_dir)
{
    const auto manifest = json::parse(io::read_text(run_dir / "manifest.json"));
    const auto config = PipelineConfig::from_json(manifest.at("config"));
    if (!config.predictor) throw std::runtime_error("[evaluate] run has no predictor");
    auto [corpus, refined] = stage("evaluate", [&] { return read_refined_csv(run_dir / "optimized.csv"); });
    const auto split = json::parse(io::read_text(run_dir / "split.json"));

    PreparedData data;
    data.corpus = corpus;
    data.test_ids = split.at("test").get<std::vector<std::string>>();
    data.graph = BipartiteGraph::from_corpus(corpus, data.difficulty);
    if (config.bte) {
        EmbedResult e;
        e.embeddings = load_embeddings(run_dir / "embeddings.bin", run_dir / "embeddings.json");
        data.embedding = std::move(e);
    }
    const auto model = PredictorModel::from_json(json::parse(io::read_text(run_dir / "model.json")));
    const auto features = question_features(data, config);
    const auto test = sequences_for(data, data.test_ids, refined, features, config.fusion_weight);
    auto report = evaluate(model, test);
    report.config = config.to_json();
    return report;
}

// ---------------------------------------------------------------- experiment tables

namespace {

std::vector<TableRow> run_rows(const Corpus& corpus, const PipelineConfig& base, std::vector<TableRow> rows,
                               const MasteryTable* mastery, std::size_t jobs)
{
    bool need_bte = false;
    for (const auto& r : rows) need_bte |= (r.config.bte && r.config.predictor);
    const auto data = prepare(corpus, base, need_bte);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                rows[i].outcome = run_variant(data, rows[i].config, mastery);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, rows.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

}  // namespace

std::vector<TableRow> run_ablation(const Corpus& corpus, const PipelineConfig& base,
                                   const std::vector<std::string>& variants, const MasteryTable* mastery,
                                   std::size_t jobs)
{
    if (variants.empty()) throw std::invalid_argument("ablation grid is empty");
    std::vector<TableRow> rows;
    for (const auto& v : variants) {
        TableRow r;
        r.label = v;
        r.config = base;
        r.config.apply_variant(v);
        rows.push_back(std::move(r));
    }
    return run_rows(corpus, base, std::move(rows), mastery, jobs);
}

std::vector<TableRow> run_quantification(const Corpus& corpus, const PipelineConfig& base,
                                         const std::vector<double>& fractions, const MasteryTable* mastery,
                                         std::size_t jobs)
{
    if (fractions.empty()) throw std::invalid_argument("quantification needs at least one fraction");
    std::vector<TableRow> rows;
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("fraction " + io::format_double(f) + " outside [0, 1]");
        TableRow r;
        r.label = "fraction=" + io::format_double(f);
        r.config = base;
        r.config.fraction = f;
        rows.push_back(std::move(r));
    }
    return run_rows(corpus, base, std::move(rows), mastery, jobs);
}

std::vector<TableRow> run_sensitivity(const Corpus& corpus, const PipelineConfig& base,
                                      const std::vector<double>& alphas, const std::vector<double>& betas,
                                      const MasteryTable* mastery, std::size_t jobs)
{
    if (alphas.empty() || betas.empty()) throw std::invalid_argument("sensitivity grid is empty");
    std::vector<TableRow> rows;
    for (double a : alphas) {
        for (double b : betas) {
            TableRow r;
            r.label = "alpha=" + io::format_double(a) + ";beta=" + io::format_double(b);
            r.config = base;
            r.config.alpha = a;
            r.config.beta = b;
            rows.push_back(std::move(r));
        }
    }
    return run_rows(corpus, base, std::move(rows), mastery, jobs);
}

std::vector<double> grid(double lo, double hi, double step)
{
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("bad grid");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
    return out;
}

std::string table_csv(const std::vector<TableRow>& rows)
{
    std::ostringstream os;
    os << "label,alpha,beta,fraction,modules,auc,acc,rmse,n,coo_flips,col_flips,changed,agreement_raw,agreement_refined\n";
    auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    for (const auto& r : rows) {
        const auto& o = r.outcome;
        os << io::csv_field(r.label) << ',' << io::format_double(r.config.alpha) << ','
           << io::format_double(r.config.beta) << ',' << io::format_double(r.config.fraction) << ','
           << r.config.variant_name() << ',';
        if (o.report) {
            os << opt(o.report->auc) << ',' << io::format_double(o.report->acc) << ','
               << io::format_double(o.report->rmse) << ',' << o.report->n_predictions;
        } else {
            os << ",,,";
        }
        os << ',' << o.refined.flip_count("coo") << ',' << o.refined.flip_count("col") << ','
           << o.refined.changed_count() << ',' << opt(o.agreement_raw) << ',' << opt(o.agreement_refined) << '\n';
    }
    return os.str();
}

}  // namespace recopt
