#include "doctest.h"

#include "gradcheck.hpp"
#include "recopt/predictor.hpp"
#include "recopt/rng.hpp"

#include <cmath>
#include <stdexcept>

using namespace recopt;

namespace {

PredictorSequence random_sequence(Rng& rng, std::size_t T, std::size_t I, int constant = -1)
{
    PredictorSequence s;
    s.inputs.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(I));
    for (Eigen::Index t = 0; t < s.inputs.rows(); ++t) {
        for (Eigen::Index c = 0; c < s.inputs.cols(); ++c) s.inputs(t, c) = rng.uniform(-1, 1);
        s.targets.push_back(constant >= 0 ? constant : static_cast<int>(rng.below(2)));
    }
    return s;
}

}  // namespace

TEST_CASE("zero weights predict one half")
{
    const auto m = PredictorModel::zeros(3, 2);
    Eigen::VectorXd x(3);
    x << 1, -2, 0.5;
    const auto out = step(m, x, Eigen::VectorXd::Zero(2));
    CHECK(out.prob == 0.5);
    CHECK(out.hidden.cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(step(m, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)), std::invalid_argument);
    CHECK_THROWS_AS(step(m, x, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("forward pass matches a scripted recurrence")
{
    Rng rng(1);
    const std::size_t I = 3, H = 2, T = 4;
    auto m = PredictorModel::init(I, H, 5);
    m.bias << 0.1, -0.2;
    m.b_out = 0.3;
    const auto seq = random_sequence(rng, T, I);

    std::vector<double> h(H, 0.0);
    double loss = 0;
    std::vector<double> probs;
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> nh(H);
        for (std::size_t a = 0; a < H; ++a) {
            double z = m.bias[static_cast<Eigen::Index>(a)];
            for (std::size_t c = 0; c < I; ++c)
                z += m.w_in(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) *
                     seq.inputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
            for (std::size_t b = 0; b < H; ++b)
                z += m.w_rec(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * h[b];
            nh[a] = std::tanh(z);
        }
        h = nh;
        double o = m.b_out;
        for (std::size_t a = 0; a < H; ++a) o += m.w_out[static_cast<Eigen::Index>(a)] * h[a];
        const double p = 1.0 / (1.0 + std::exp(-o));
        probs.push_back(p);
        loss += seq.targets[t] ? -std::log(p) : -std::log(1 - p);
    }
    const auto got = predict_sequence(m, seq);
    REQUIRE(got.size() == T);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::fabs(got[t] - probs[t]) < 1e-10);
    CHECK(std::fabs(sequence_loss(m, seq) - loss) < 1e-10);
}

TEST_CASE("backpropagation through time matches finite differences")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CHECK(gradcheck::predictor_max_error(seed, false) < 1e-4);
        CHECK(gradcheck::predictor_max_error(seed, true) < 1e-4);
    }
    CHECK(gradcheck::predictor_max_error(9, false, 6, 8, 7) < 1e-4);
}

TEST_CASE("constant answers are learned")
{
    Rng rng(2);
    std::vector<PredictorSequence> train;
    for (int k = 0; k < 40; ++k) train.push_back(random_sequence(rng, 10, 4, 1));
    auto m = PredictorModel::init(4, 8, 3);
    PredictorConfig cfg;
    cfg.lr = 0.02;
    cfg.epochs = 60;
    cfg.batch = 64;
    cfg.dropout = 0.2;
    const auto hist = train_predictor(m, train, cfg);
    CHECK(hist.train_loss.size() <= 60);
    for (double p : predict_sequence(m, random_sequence(rng, 10, 4))) CHECK(p > 0.9);
}

TEST_CASE("training is deterministic and keeps the best validation model")
{
    Rng rng(4);
    std::vector<PredictorSequence> train;
    for (int k = 0; k < 30; ++k) train.push_back(random_sequence(rng, 12, 3));
    PredictorConfig cfg;
    cfg.epochs = 15;
    cfg.patience = 2;
    cfg.lr = 0.05;
    auto a = PredictorModel::init(3, 5, 1);
    auto b = a;
    const auto ha = train_predictor(a, train, cfg);
    const auto hb = train_predictor(b, train, cfg);
    CHECK(ha.train_loss == hb.train_loss);
    CHECK(a.w_in == b.w_in);
    CHECK(a.w_out == b.w_out);
    REQUIRE(!ha.validation_loss.empty());
    const double best = *std::min_element(ha.validation_loss.begin(), ha.validation_loss.end());
    CHECK(ha.validation_loss[ha.best_epoch] == best);
    CHECK(ha.validation_loss.size() <= ha.best_epoch + 1 + cfg.patience);
}

TEST_CASE("training input errors")
{
    auto m = PredictorModel::init(3, 2, 1);
    CHECK_THROWS_AS(train_predictor(m, {}, PredictorConfig{}), std::invalid_argument);
    Rng rng(1);
    PredictorConfig cfg;
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(train_predictor(m, {random_sequence(rng, 3, 3)}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(evaluate(m, {}), std::invalid_argument);
}

TEST_CASE("evaluation report and json round trip")
{
    Rng rng(6);
    auto m = PredictorModel::init(3, 4, 2);
    std::vector<PredictorSequence> test;
    for (int k = 0; k < 5; ++k) test.push_back(random_sequence(rng, 6, 3));
    const auto rep = evaluate(m, test);
    CHECK(rep.n_predictions == 30);
    CHECK(rep.auc.has_value());
    CHECK(rep.rmse > 0.0);
    const auto j = rep.to_json();
    CHECK(j.contains("auc"));
    CHECK(j["n_predictions"] == 30);

    const auto back = PredictorModel::from_json(m.to_json());
    CHECK(back.w_in == m.w_in);
    CHECK(back.w_rec == m.w_rec);
    CHECK(back.bias == m.bias);
    CHECK(back.b_out == m.b_out);
}
