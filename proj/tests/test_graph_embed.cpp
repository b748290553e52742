#include "doctest.h"

#include "gradcheck.hpp"
#include "recopt/difficulty.hpp"
#include "recopt/graph_embed.hpp"
#include "recopt/io.hpp"
#include "recopt/synthgen.hpp"
#include "test_util.hpp"

#include <cmath>
#include <stdexcept>

using namespace recopt;

namespace {

BipartiteGraph small_graph()
{
    // q0: s0 | q1: s0, s1 | q2: s2 | q3: s1
    return BipartiteGraph(4, 3, {{0, 0}, {1, 0}, {1, 1}, {2, 2}, {3, 1}}, {0.1, 0.5, 0.9, 0.3});
}

double frob_diff(const JointGradient& a, const JointGradient& b)
{
    return (a.questions - b.questions).cwiseAbs().maxCoeff() + (a.skills - b.skills).cwiseAbs().maxCoeff() +
           (a.head_weight - b.head_weight).cwiseAbs().maxCoeff() + std::fabs(a.head_bias - b.head_bias);
}

}  // namespace

TEST_CASE("relation probability")
{
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
    CHECK(predict_relation(z, z) == 0.5);
    Eigen::VectorXd u(1), v(1);
    u << std::log(3.0);
    v << 1.0;
    CHECK(predict_relation(u, v) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(predict_relation(u, z), std::invalid_argument);
}

TEST_CASE("derived relations")
{
    const auto g = small_graph();
    CHECK(g.edge(1, 1));
    CHECK_FALSE(g.edge(0, 1));
    CHECK(g.question_relation(0, 1));
    CHECK(g.question_relation(1, 3));
    CHECK_FALSE(g.question_relation(0, 3));
    CHECK_FALSE(g.question_relation(2, 0));
    for (std::size_t q = 0; q < 4; ++q) CHECK(g.question_relation(q, q));
    CHECK(g.skill_relation(0, 1));
    CHECK_FALSE(g.skill_relation(0, 2));
    CHECK(g.skill_relation(2, 2));
    CHECK_THROWS(BipartiteGraph(2, 2, {{0, 5}}, {0.1, 0.2}));
}

TEST_CASE("relations agree with brute-force intersection")
{
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t M = 1 + rng.below(30), N = 1 + rng.below(20);
        std::vector<std::vector<int>> inc(M, std::vector<int>(N, 0));
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t q = 0; q < M; ++q)
            for (std::size_t s = 0; s < N; ++s)
                if (rng.bernoulli(0.15)) {
                    inc[q][s] = 1;
                    edges.emplace_back(q, s);
                }
        const BipartiteGraph g(M, N, edges, std::vector<double>(M, 0.5));
        for (std::size_t a = 0; a < M; ++a)
            for (std::size_t b = 0; b < M; ++b) {
                bool share = false;
                for (std::size_t s = 0; s < N; ++s) share |= inc[a][s] && inc[b][s];
                CHECK(g.question_relation(a, b) == share);
                CHECK(g.question_relation(a, b) == g.question_relation(b, a));
            }
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = 0; b < N; ++b) {
                bool share = false;
                for (std::size_t q = 0; q < M; ++q) share |= inc[q][a] && inc[q][b];
                CHECK(g.skill_relation(a, b) == share);
            }
    }
}

TEST_CASE("loss at zero embeddings")
{
    const auto g = small_graph();
    auto e = EmbeddingSet::random(4, 3, 4, 1);
    e.questions.setZero();
    e.skills.setZero();
    e.head_weight.setZero();
    e.head_bias = 0;
    const auto l = loss_joint(g, e, 0.5);
    CHECK(l.l1 == doctest::Approx(12 * std::log(2.0)).epsilon(1e-12));
    CHECK(l.l2 == doctest::Approx(16 * std::log(2.0)).epsilon(1e-12));
    CHECK(l.l3 == doctest::Approx(9 * std::log(2.0)).epsilon(1e-12));
    CHECK(l.l4 == doctest::Approx(0.01 + 0.25 + 0.81 + 0.09).epsilon(1e-12));
    CHECK(loss_joint(g, e, 1.0).total == doctest::Approx(l.l1 + l.l2 + l.l3));
    CHECK(loss_joint(g, e, 0.0).total == doctest::Approx(l.l4));
}

TEST_CASE("loss matches the loop reference")
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = gradcheck::random_graph(rng, 2 + rng.below(8), 1 + rng.below(5));
        auto e = EmbeddingSet::random(g.question_count(), g.skill_count(), 3, 100 + trial, 1.0);
        e.head_weight.setConstant(0.3);
        e.head_bias = -0.2;
        const double lambda = rng.uniform();
        const double ref = gradcheck::reference_joint_loss(g, e, lambda);
        CHECK(std::fabs(loss_joint(g, e, lambda).total - ref) <= 1e-10 * std::max(1.0, std::fabs(ref)));
    }
}

TEST_CASE("analytic gradient matches finite differences")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
        for (double lambda : {0.0, 0.3, 0.5, 1.0}) CHECK(gradcheck::embed_max_error(seed, lambda) < 1e-4);
}

TEST_CASE("term-wise accumulation equals the matrix form")
{
    Rng rng(9);
    const auto g = gradcheck::random_graph(rng, 7, 4);
    auto e = EmbeddingSet::random(7, 4, 5, 3, 0.7);
    e.head_weight.setConstant(0.1);
    const auto terms = all_terms(g);
    CHECK(terms.size() == 7 * 4 + 49 + 16 + 7);
    auto acc = zero_gradient(e);
    const auto l = accumulate_terms(terms, 0, terms.size(), e, 0.4, &acc);
    CHECK(l.total == doctest::Approx(loss_joint(g, e, 0.4).total).epsilon(1e-12));
    CHECK(frob_diff(acc, grad_joint(g, e, 0.4)) < 1e-10);
}

TEST_CASE("gradient vanishes where predictions match the targets")
{
    // one question, one skill, attribute fitted exactly: only saturation is left
    const BipartiteGraph g(1, 1, {{0, 0}}, {0.25});
    auto e = EmbeddingSet::random(1, 1, 1, 1);
    e.questions(0, 0) = 40.0;
    e.skills(0, 0) = 40.0;
    e.head_weight[0] = 0.0;
    e.head_bias = 0.25;
    const auto gr = grad_joint(g, e, 0.5);
    CHECK(gr.questions.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gr.skills.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gr.head_weight.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gr.head_bias == 0.0);
}

TEST_CASE("relabeling questions permutes the gradient")
{
    Rng rng(12);
    const auto g = gradcheck::random_graph(rng, 5, 3);
    auto e = EmbeddingSet::random(5, 3, 4, 8, 0.5);
    e.head_weight.setConstant(0.2);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};  // new index k holds old perm[k]
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> attr(5);
    auto e2 = e;
    for (std::size_t k = 0; k < 5; ++k) {
        for (auto s : g.skills_of(perm[k])) edges.emplace_back(k, s);
        attr[k] = g.attributes()[perm[k]];
        e2.questions.row(static_cast<Eigen::Index>(k)) = e.questions.row(static_cast<Eigen::Index>(perm[k]));
    }
    const BipartiteGraph g2(5, 3, edges, attr);
    const auto a = grad_joint(g, e, 0.5);
    const auto b = grad_joint(g2, e2, 0.5);
    CHECK(loss_joint(g, e, 0.5).total == doctest::Approx(loss_joint(g2, e2, 0.5).total).epsilon(1e-13));
    for (std::size_t k = 0; k < 5; ++k)
        CHECK((a.questions.row(static_cast<Eigen::Index>(perm[k])) - b.questions.row(static_cast<Eigen::Index>(k)))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    CHECK((a.skills - b.skills).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("full-batch training lowers the loss and is deterministic")
{
    Rng rng(30);
    const auto g = gradcheck::random_graph(rng, 12, 5);
    EmbedConfig cfg;
    cfg.full_batch = true;
    cfg.epochs = 10;
    cfg.dim = 8;
    cfg.lr = 0.01;
    const auto r = train_embeddings(g, cfg);
    REQUIRE(r.history.size() == 10);
    CHECK(r.history.back().total < r.history.front().total);
    for (std::size_t k = 1; k < r.history.size(); ++k) CHECK(r.history[k].total <= r.history[k - 1].total + 1e-9);

    const auto again = train_embeddings(g, cfg);
    CHECK(again.embeddings.questions == r.embeddings.questions);
    CHECK(again.embeddings.skills == r.embeddings.skills);

    cfg.full_batch = false;
    cfg.batch = 16;
    const auto s1 = train_embeddings(g, cfg);
    const auto s2 = train_embeddings(g, cfg);
    CHECK(s1.embeddings.questions == s2.embeddings.questions);
    CHECK(s1.history.back().total < s1.history.front().total);
}

TEST_CASE("attribute-only objective fits the head")
{
    Rng rng(31);
    const auto g = gradcheck::random_graph(rng, 10, 4);
    EmbedConfig cfg;
    cfg.lambda = 0.0;
    cfg.full_batch = true;
    cfg.epochs = 3000;
    cfg.dim = 16;
    cfg.lr = 0.01;
    cfg.init_scale = 0.5;
    const auto r = train_embeddings(g, cfg);
    CHECK(r.history.back().l4 / 10.0 < 1e-3);
}

TEST_CASE("fused embedding, ids and persistence")
{
    SynthConfig sc;
    sc.n_students = 10;
    sc.n_questions = 8;
    sc.n_skills = 3;
    sc.seq_len_min = 8;
    sc.seq_len_max = 8;
    sc.multi_skill_fraction = 0.5;
    const auto corpus = generate(sc).first;
    const auto g = BipartiteGraph::from_corpus(corpus, compute_stats(corpus));
    EmbedConfig cfg;
    cfg.epochs = 2;
    cfg.dim = 6;
    cfg.fused_width = 10;
    auto emb = train_embeddings(g, cfg).embeddings;
    CHECK(emb.question_ids == g.question_ids());

    for (std::size_t q = 0; q < g.question_count(); ++q) {
        const auto f = fused_question_embedding(emb, g, q);
        REQUIRE(f.size() == 10);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
        for (auto s : g.skills_of(q)) mean += emb.skills.row(static_cast<Eigen::Index>(s)).transpose();
        mean /= static_cast<double>(g.skills_of(q).size());
        CHECK((f.head(6) - emb.questions.row(static_cast<Eigen::Index>(q)).transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((f.tail(4) - mean.head(4)).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK_THROWS_AS(fused_question_embedding(emb, g, std::string("nope")), std::out_of_range);

    emb.fused_width = 20;
    const auto padded = fused_question_embedding(emb, g, std::size_t{0});
    CHECK(padded.size() == 20);
    CHECK(padded.tail(8).cwiseAbs().maxCoeff() == 0.0);

    const auto dir = testutil::temp_dir("emb_io");
    round_to_float(emb);
    save_embeddings(emb, dir / "e.bin", dir / "e.json");
    const auto back = load_embeddings(dir / "e.bin", dir / "e.json");
    CHECK(back.questions == emb.questions);
    CHECK(back.skills == emb.skills);
    CHECK(back.head_weight == emb.head_weight);
    CHECK(back.head_bias == emb.head_bias);
    CHECK(back.question_ids == emb.question_ids);
    CHECK(back.fused_width == 20);
    io::write_text(dir / "bad.bin", "XXXX");
    CHECK_THROWS(load_embeddings(dir / "bad.bin", dir / "e.json"));
}
