#include "recopt/collaboration.hpp"
#include "recopt/coordination.hpp"
#include "recopt/corpus.hpp"
#include "recopt/difficulty.hpp"
#include "recopt/metrics.hpp"
#include "recopt/pipeline.hpp"
#include "recopt/refine.hpp"
#include "recopt/synthgen.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

namespace py = pybind11;
using json = nlohmann::json;
using namespace recopt;

namespace {

StateDifficultySeq make_seq(const std::vector<int>& states, const std::vector<double>& difficulties)
{
    if (states.size() != difficulties.size())
        throw std::invalid_argument("states and difficulties differ in length");
    StateDifficultySeq seq;
    for (std::size_t i = 0; i < states.size(); ++i) seq.push_back({states[i], difficulties[i], i});
    return seq;
}

py::list flips_of(const std::vector<Flip>& flips)
{
    py::list out;
    for (const auto& f : flips)
        out.append(py::dict(py::arg("index") = f.index, py::arg("before") = f.before, py::arg("after") = f.after,
                            py::arg("trigger") = f.trigger_position));
    return out;
}

PipelineConfig config_from(const std::string& text)
{
    PipelineConfig cfg;
    cfg.merge_json(json::parse(text.empty() ? "{}" : text));
    return PipelineConfig::from_json(cfg.to_json());
}

std::string outcome_json(const VariantOutcome& o)
{
    json j = o.report ? o.report->to_json() : json::object();
    if (o.agreement_raw) j["agreement_raw"] = *o.agreement_raw;
    if (o.agreement_refined) j["agreement_refined"] = *o.agreement_refined;
    j["coo_flips"] = o.refined.flip_count("coo");
    j["col_flips"] = o.refined.flip_count("col");
    j["changed"] = o.refined.changed_count();
    return j.dump();
}

CsvSchema schema_named(const std::string& name)
{
    if (name == "canonical") return CsvSchema::canonical();
    if (name == "assist09") return CsvSchema::assist09();
    if (name == "default") return CsvSchema{};
    throw std::invalid_argument("unknown schema '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Answer-record refinement and knowledge tracing core";

    py::class_<Corpus>(m, "Corpus")
        .def_property_readonly("student_count", &Corpus::student_count)
        .def_property_readonly("question_count", &Corpus::question_count)
        .def_property_readonly("skill_count", &Corpus::skill_count)
        .def_property_readonly("record_count", &Corpus::record_count)
        .def("students",
             [](const Corpus& c) {
                 std::vector<std::string> ids;
                 for (const auto& [id, seq] : c.sequences()) ids.push_back(id);
                 return ids;
             })
        .def("responses",
             [](const Corpus& c, const std::string& id) {
                 std::vector<int> r;
                 for (const auto& it : c.sequence(id).interactions) r.push_back(it.response);
                 return r;
             })
        .def("questions",
             [](const Corpus& c, const std::string& id) {
                 std::vector<std::string> q;
                 for (const auto& it : c.sequence(id).interactions) q.push_back(it.question_id);
                 return q;
             })
        .def("write_csv", [](const Corpus& c, const std::string& path) { write_canonical_csv(c, path); })
        .def("__eq__", [](const Corpus& a, const Corpus& b) { return a == b; });

    m.def(
        "read_csv",
        [](const std::string& path, const std::string& schema, std::size_t min_seq_len) {
            IngestOptions opts;
            opts.min_seq_len = min_seq_len;
            return ingest_csv(path, schema_named(schema), opts);
        },
        py::arg("path"), py::arg("schema") = "canonical", py::arg("min_seq_len") = 3);

    m.def(
        "synth",
        [](std::size_t students, std::size_t questions, std::size_t skills, double slip, double guess,
           std::size_t len_min, std::size_t len_max, double multi_skill, std::uint64_t seed) {
            SynthConfig c;
            c.n_students = students;
            c.n_questions = questions;
            c.n_skills = skills;
            c.slip = slip;
            c.guess = guess;
            c.seq_len_min = len_min;
            c.seq_len_max = len_max;
            c.multi_skill_fraction = multi_skill;
            c.seed = seed;
            auto [corpus, truth] = generate(c);
            py::dict mastery;
            for (const auto& [key, v] : truth.mastery) mastery[py::make_tuple(key.first, key.second)] = v;
            return py::make_tuple(std::move(corpus), mastery, truth.latent);
        },
        py::arg("students") = 200, py::arg("questions") = 50, py::arg("skills") = 10, py::arg("slip") = 0.2,
        py::arg("guess") = 0.2, py::arg("len_min") = 50, py::arg("len_max") = 50, py::arg("multi_skill") = 0.0,
        py::arg("seed") = 7);

    m.def("difficulty", [](const Corpus& c) {
        const auto table = compute_stats(c);
        std::map<std::string, double> out;
        for (const auto& [q, s] : table.stats()) out[q] = s.norm_difficulty;
        return out;
    });

    m.def("control_value", &control_value, py::arg("state"), py::arg("later_state"), py::arg("difficulty"),
          py::arg("later_difficulty"), py::arg("alpha"));

    m.def(
        "coordinate",
        [](const std::vector<int>& states, const std::vector<double>& diffs, double alpha, double discount) {
            const auto r = coordinate_sequence(make_seq(states, diffs), alpha, discount);
            return py::dict(py::arg("states") = r.final_states, py::arg("cost") = r.total_cost,
                            py::arg("flips") = flips_of(r.flips));
        },
        py::arg("states"), py::arg("difficulties"), py::arg("alpha"), py::arg("discount") = 1.0);

    m.def(
        "collaborate",
        [](const std::vector<int>& states, const std::vector<double>& diffs, double beta) {
            const auto r = collaborate_sequence(make_seq(states, diffs), beta);
            return py::dict(py::arg("states") = r.final_states, py::arg("clusters") = r.clusters,
                            py::arg("flips") = flips_of(r.flips));
        },
        py::arg("states"), py::arg("difficulties"), py::arg("beta"));

    m.def("auc", [](const std::vector<int>& y, const std::vector<double>& s) { return auc(y, s); });
    m.def("accuracy", [](const std::vector<int>& y, const std::vector<double>& s) { return accuracy(y, s); });
    m.def("rmse", [](const std::vector<int>& y, const std::vector<double>& s) { return rmse(y, s); });

    // Configs and reports cross the boundary as JSON text; the Python
    // wrapper converts them to dicts.
    m.def(
        "_run_pipeline",
        [](const Corpus& c, const std::string& config, const std::string& out_dir) {
            py::gil_scoped_release release;
            return outcome_json(run_pipeline(c, config_from(config), out_dir).outcome);
        },
        py::arg("corpus"), py::arg("config"), py::arg("out_dir") = "");

    m.def(
        "_run_ablation",
        [](const Corpus& c, const std::string& config, const std::vector<std::string>& variants, std::size_t jobs) {
            py::gil_scoped_release release;
            return table_csv(run_ablation(c, config_from(config), variants, nullptr, jobs));
        },
        py::arg("corpus"), py::arg("config"), py::arg("variants"), py::arg("jobs") = 1);

    m.def("_evaluate_run", [](const std::string& dir) { return evaluate_run(dir).to_json().dump(); });
}
