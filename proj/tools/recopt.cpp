#include "recopt/io.hpp"
#include "recopt/pipeline.hpp"
#include "recopt/synthgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace recopt;

namespace {

// Raised with a "[stage] message" text; main prints it and exits nonzero.
struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& what) : std::runtime_error("[" + stage + "] " + what) {}
};

template <class F>
auto at_stage(const std::string& stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        if (!msg.empty() && msg.front() == '[') throw;  // already tagged by the library
        throw StageError(stage, msg);
    }
}

struct Globals {
    std::uint64_t seed = 7;
    std::string out = "recopt_out";
    std::string config;
};

struct InputOpts {
    std::string path;
    std::string schema = "canonical";
    std::string student, question, skill, correct, order;
    std::string separator;
    std::size_t min_seq_len = 3;
};

// Config flags that overlay --config; only flags the user actually passed
// are applied.
struct ConfigFlags {
    double alpha = 0.8, beta = 0.05, coo_discount = 1.0, fusion_weight = 0.5, lambda = 0.5;
    double fraction = 1.0, test_fraction = 0.2;
    std::string module_order = "coo-col", variant;
    std::size_t epochs = 20, embed_epochs = 50, hidden = 64, dim = 64;
    bool difficulty_on_full = false, no_bte = false, no_predictor = false;
    std::vector<CLI::Option*> opts;
};

void add_input(CLI::App* app, InputOpts& in, bool required = true)
{
    auto* o = app->add_option("--input,-i", in.path, "interaction log (CSV)");
    if (required) o->required();
    app->add_option("--schema", in.schema, "column layout: canonical, assist09 or custom")
        ->check(CLI::IsMember({"canonical", "assist09", "custom"}))
        ->capture_default_str();
    app->add_option("--student-col", in.student, "student column");
    app->add_option("--question-col", in.question, "question column");
    app->add_option("--skill-col", in.skill, "skill column");
    app->add_option("--correct-col", in.correct, "response column");
    app->add_option("--order-col", in.order, "ordering column");
    app->add_option("--skill-sep", in.separator, "separator of several skills in one field");
    app->add_option("--min-seq-len", in.min_seq_len, "drop students with fewer interactions")->capture_default_str();
}

void add_config(CLI::App* app, ConfigFlags& c)
{
    auto add = [&](CLI::Option* o) { c.opts.push_back(o->capture_default_str()); };
    add(app->add_option("--alpha", c.alpha, "coordination gap threshold"));
    add(app->add_option("--beta", c.beta, "collaboration cluster width"));
    add(app->add_option("--coo-discount", c.coo_discount, "coordination cost discount"));
    add(app->add_option("--module-order", c.module_order, "coo-col, col-coo, coo, col or none")
            ->check(CLI::IsMember({"coo-col", "col-coo", "coo", "col", "none"})));
    add(app->add_option("--variant", c.variant, "raw, Coo, Col, Bte, Bte+Coo, Bte+Col, Coo+Col or full"));
    add(app->add_option("--fraction", c.fraction, "leading share of each sequence to refine"));
    add(app->add_option("--test-fraction", c.test_fraction, "held-out share of students"));
    add(app->add_option("--epochs", c.epochs, "predictor epochs"));
    add(app->add_option("--embed-epochs", c.embed_epochs, "embedding epochs"));
    add(app->add_option("--hidden", c.hidden, "predictor hidden units"));
    add(app->add_option("--dim", c.dim, "embedding width"));
    add(app->add_option("--lambda", c.lambda, "weight of the relation terms against the attribute fit"));
    add(app->add_option("--fusion-weight", c.fusion_weight, "share of the refined state in the response input"));
    c.opts.push_back(app->add_flag("--difficulty-on-full", c.difficulty_on_full,
                                   "estimate difficulty on every student, not only training ones"));
    c.opts.push_back(app->add_flag("--no-bte", c.no_bte, "skip embedding training"));
    c.opts.push_back(app->add_flag("--no-predictor", c.no_predictor, "skip predictor training"));
}

bool given(const ConfigFlags& c, const std::string& name)
{
    for (auto* o : c.opts)
        if (o->check_lname(name.substr(2)) && o->count() > 0) return true;
    return false;
}

PipelineConfig build_config(const Globals& g, const ConfigFlags& c, const CLI::App& root)
{
    return at_stage("config", [&] {
        PipelineConfig cfg;
        if (!g.config.empty()) cfg = PipelineConfig::from_json(json::parse(io::read_text(g.config)));
        if (root.get_option("--seed")->count() > 0 || g.config.empty()) cfg.seed = g.seed;

        json overlay = json::object();
        if (given(c, "--variant")) overlay["variant"] = c.variant;
        if (given(c, "--module-order")) overlay["module_order"] = c.module_order;
        if (given(c, "--alpha")) overlay["alpha"] = c.alpha;
        if (given(c, "--beta")) overlay["beta"] = c.beta;
        if (given(c, "--coo-discount")) overlay["coo_discount"] = c.coo_discount;
        if (given(c, "--fraction")) overlay["fraction"] = c.fraction;
        if (given(c, "--test-fraction")) overlay["test_fraction"] = c.test_fraction;
        if (given(c, "--fusion-weight")) overlay["fusion_weight"] = c.fusion_weight;
        if (given(c, "--difficulty-on-full")) overlay["difficulty_on_full"] = true;
        if (given(c, "--epochs")) overlay["train"]["epochs"] = c.epochs;
        if (given(c, "--hidden")) overlay["train"]["hidden"] = c.hidden;
        if (given(c, "--embed-epochs")) overlay["embed"]["epochs"] = c.embed_epochs;
        if (given(c, "--dim")) overlay["embed"]["dim"] = c.dim;
        if (given(c, "--lambda")) overlay["embed"]["lambda"] = c.lambda;
        if (given(c, "--no-bte")) overlay["modules"]["bte"] = false;
        if (given(c, "--no-predictor")) overlay["modules"]["predictor"] = false;
        cfg.merge_json(overlay);
        // round trip through JSON to reuse its range checks
        return PipelineConfig::from_json(cfg.to_json());
    });
}

Corpus load_corpus(const InputOpts& in, IngestReport* report = nullptr)
{
    return at_stage("ingest", [&] {
        CsvSchema s = in.schema == "assist09" ? CsvSchema::assist09()
                      : in.schema == "canonical" ? CsvSchema::canonical()
                                                 : CsvSchema{};
        if (!in.student.empty()) s.student = in.student;
        if (!in.question.empty()) s.question = in.question;
        if (!in.skill.empty()) s.skill = in.skill;
        if (!in.correct.empty()) s.correct = in.correct;
        if (!in.order.empty()) s.order = in.order;
        if (!in.separator.empty()) {
            if (in.separator.size() != 1) throw std::invalid_argument("--skill-sep must be one character");
            s.skill_separator = in.separator[0];
        }
        IngestOptions opts;
        opts.min_seq_len = in.min_seq_len;
        return ingest_csv(in.path, s, opts, report);
    });
}

std::optional<MasteryTable> load_truth(const std::string& path)
{
    if (path.empty()) return std::nullopt;
    return at_stage("truth", [&] { return read_mastery_csv(path); });
}

fs::path out_dir(const Globals& g)
{
    fs::create_directories(g.out);
    return g.out;
}

void emit(const fs::path& dir, const std::string& name, const std::string& body)
{
    io::write_text(dir / name, body);
    std::cout << (dir / name).string() << '\n';
}

std::vector<double> parse_grid(const std::string& text, const std::string& flag)
{
    // lo:hi:step or a comma list
    const auto parts = io::split(text, ':');
    try {
        if (parts.size() == 3) return grid(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]));
        std::vector<double> v;
        for (const auto& p : io::split(text, ',')) v.push_back(std::stod(io::trim(p)));
        return v;
    } catch (const std::invalid_argument& e) {
        throw StageError("config", flag + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Record optimization for knowledge tracing"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "master seed")->capture_default_str();
    app.add_option("--out,-o", g.out, "output directory")->capture_default_str();
    app.add_option("--config", g.config, "pipeline configuration (JSON)");

    InputOpts in;
    ConfigFlags cf;
    std::string truth_path, run_dir, variants = "raw,Coo,Col,Coo+Col", fractions = "0,0.3,0.5,0.7,1",
                                      alphas = "0.5:1.0:0.05", betas = "0.01:0.11:0.01";
    std::size_t jobs = 1;
    SynthConfig sc;

    auto* ingest = app.add_subcommand("ingest", "normalize a raw log into the canonical CSV");
    add_input(ingest, in);

    auto* stats = app.add_subcommand("stats", "per-question difficulty table");
    add_input(stats, in);

    auto* optimize = app.add_subcommand("optimize", "rewrite answer states and write flip ledgers");
    add_input(optimize, in);
    add_config(optimize, cf);

    auto* embed = app.add_subcommand("embed", "train question and skill embeddings");
    add_input(embed, in);
    add_config(embed, cf);

    auto* train = app.add_subcommand("train", "full pipeline into a run directory");
    add_input(train, in);
    add_config(train, cf);
    train->add_option("--truth", truth_path, "mastery CSV for agreement scores");

    auto* evaluate = app.add_subcommand("evaluate", "re-evaluate a finished run directory");
    evaluate->add_option("--run", run_dir, "run directory")->required();

    auto* ablate = app.add_subcommand("ablate", "one row per module combination");
    auto* quantify = app.add_subcommand("quantify", "one row per refined prefix share");
    auto* sweep = app.add_subcommand("sweep", "alpha by beta grid");
    for (auto* sub : {ablate, quantify, sweep}) {
        add_input(sub, in);
        add_config(sub, cf);
        sub->add_option("--truth", truth_path, "mastery CSV for agreement scores");
        sub->add_option("--jobs,-j", jobs, "parallel workers")->capture_default_str();
    }
    ablate->add_option("--variants", variants, "comma separated variant names")->capture_default_str();
    quantify->add_option("--fractions", fractions, "comma list or lo:hi:step")->capture_default_str();
    sweep->add_option("--alpha-grid", alphas, "comma list or lo:hi:step")->capture_default_str();
    sweep->add_option("--beta-grid", betas, "comma list or lo:hi:step")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "synthetic log with known mastery");
    synth->add_option("--students", sc.n_students)->capture_default_str();
    synth->add_option("--questions", sc.n_questions)->capture_default_str();
    synth->add_option("--skills", sc.n_skills)->capture_default_str();
    synth->add_option("--slip", sc.slip)->capture_default_str();
    synth->add_option("--guess", sc.guess)->capture_default_str();
    synth->add_option("--len-min", sc.seq_len_min)->capture_default_str();
    synth->add_option("--len-max", sc.seq_len_max)->capture_default_str();
    synth->add_option("--multi-skill", sc.multi_skill_fraction, "share of questions with a second skill")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            IngestReport rep;
            const auto corpus = load_corpus(in, &rep);
            const auto dir = out_dir(g);
            write_canonical_csv(corpus, dir / "corpus.csv");
            json j = {{"input_rows", rep.input_rows},         {"kept_rows", rep.kept_rows},
                      {"merged_rows", rep.merged_rows},       {"skillless_rows", rep.skillless_rows},
                      {"bad_response_rows", rep.bad_response_rows}, {"filtered_rows", rep.filtered_rows},
                      {"short_user_rows", rep.short_user_rows}, {"short_users", rep.short_users},
                      {"students", corpus.student_count()},   {"questions", corpus.question_count()},
                      {"skills", corpus.skill_count()}};
            emit(dir, "ingest_report.json", j.dump(2) + "\n");
            std::cout << (dir / "corpus.csv").string() << '\n';
        } else if (*stats) {
            const auto corpus = load_corpus(in);
            const auto table = at_stage("difficulty", [&] { return compute_stats(corpus); });
            const auto dir = out_dir(g);
            table.write_csv(dir / "stats.csv");
            std::cout << (dir / "stats.csv").string() << '\n';
        } else if (*optimize) {
            const auto corpus = load_corpus(in);
            const auto cfg = build_config(g, cf, app);
            const auto data = prepare(corpus, cfg, false);
            const auto refined =
                at_stage("optimize", [&] { return refine_corpus(data.corpus, data.difficulty, cfg.refine_options()); });
            const auto dir = out_dir(g);
            write_refined_csv(data.corpus, refined, dir / "optimized.csv");
            write_flip_ledger(refined.flips, "coo", dir / "coo_flips.csv");
            write_flip_ledger(refined.flips, "col", dir / "col_flips.csv");
            json j = {{"coo_flips", refined.flip_count("coo")},
                      {"col_flips", refined.flip_count("col")},
                      {"changed", refined.changed_count()}};
            std::cout << j.dump() << '\n';
        } else if (*embed) {
            const auto corpus = load_corpus(in);
            auto cfg = build_config(g, cf, app);
            cfg.bte = true;
            const auto data = prepare(corpus, cfg, true);
            if (!data.embedding) throw StageError("embed", "no embeddings were trained");
            auto emb = data.embedding->embeddings;
            round_to_float(emb);
            const auto dir = out_dir(g);
            save_embeddings(emb, dir / "embeddings.bin", dir / "embeddings.json");
            emit(dir, "embed_loss.csv", embed_history_csv(data.embedding->history));
        } else if (*train) {
            const auto corpus = load_corpus(in);
            const auto cfg = build_config(g, cf, app);
            const auto truth = load_truth(truth_path);
            const auto res = run_pipeline(corpus, cfg, out_dir(g), truth ? &*truth : nullptr);
            std::cout << io::read_text(fs::path(g.out) / "report.json");
        } else if (*evaluate) {
            const auto rep = at_stage("evaluate", [&] { return evaluate_run(run_dir); });
            std::cout << rep.to_json().dump(2) << '\n';
        } else if (*ablate || *quantify || *sweep) {
            const auto corpus = load_corpus(in);
            const auto cfg = build_config(g, cf, app);
            const auto truth = load_truth(truth_path);
            const MasteryTable* m = truth ? &*truth : nullptr;
            std::vector<TableRow> rows;
            std::string name;
            if (*ablate) {
                std::vector<std::string> names;
                for (const auto& v : io::split(variants, ','))
                    if (!io::trim(v).empty()) names.push_back(io::trim(v));
                rows = at_stage("ablate", [&] { return run_ablation(corpus, cfg, names, m, jobs); });
                name = "ablation.csv";
            } else if (*quantify) {
                const auto f = parse_grid(fractions, "--fractions");
                rows = at_stage("quantify", [&] { return run_quantification(corpus, cfg, f, m, jobs); });
                name = "quantification.csv";
            } else {
                const auto a = parse_grid(alphas, "--alpha-grid");
                const auto b = parse_grid(betas, "--beta-grid");
                rows = at_stage("sweep", [&] { return run_sensitivity(corpus, cfg, a, b, m, jobs); });
                name = "sensitivity.csv";
            }
            emit(out_dir(g), name, table_csv(rows));
        } else if (*synth) {
            sc.seed = g.seed;
            const auto [corpus, truth] = at_stage("synth", [&] { return generate(sc); });
            const auto dir = out_dir(g);
            write_canonical_csv(corpus, dir / "corpus.csv");
            truth.write_csv(dir / "truth.csv");
            std::cout << (dir / "corpus.csv").string() << '\n' << (dir / "truth.csv").string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "recopt: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
