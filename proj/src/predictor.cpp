#include "recopt/predictor.hpp"

#include "recopt/metrics.hpp"
#include "recopt/optim.hpp"
#include "recopt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace recopt {

PredictorModel PredictorModel::zeros(std::size_t input_width, std::size_t hidden)
{
    const auto I = static_cast<Eigen::Index>(input_width);
    const auto H = static_cast<Eigen::Index>(hidden);
    PredictorModel m;
    m.w_in = Eigen::MatrixXd::Zero(H, I);
    m.w_rec = Eigen::MatrixXd::Zero(H, H);
    m.bias = Eigen::VectorXd::Zero(H);
    m.w_out = Eigen::VectorXd::Zero(H);
    m.b_out = 0.0;
    return m;
}

PredictorModel PredictorModel::init(std::size_t input_width, std::size_t hidden, std::uint64_t seed)
{
    if (input_width == 0 || hidden == 0) throw std::invalid_argument("PredictorModel: zero width");
    auto m = zeros(input_width, hidden);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto fill = [&](auto& a) {
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.uniform(-scale, scale);
    };
    fill(m.w_in);
    fill(m.w_rec);
    fill(m.w_out);
    return m;
}

bool PredictorModel::finite() const
{
    return w_in.allFinite() && w_rec.allFinite() && bias.allFinite() && w_out.allFinite() &&
           std::isfinite(b_out);
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j)
{
    const auto rows = j.size();
    const auto cols = rows ? j[0].size() : 0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols) throw std::runtime_error("ragged matrix in model file");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

nlohmann::json PredictorModel::to_json() const
{
    nlohmann::json j;
    j["w_in"] = matrix_json(w_in);
    j["w_rec"] = matrix_json(w_rec);
    j["bias"] = std::vector<double>(bias.data(), bias.data() + bias.size());
    j["w_out"] = std::vector<double>(w_out.data(), w_out.data() + w_out.size());
    j["b_out"] = b_out;
    return j;
}

PredictorModel PredictorModel::from_json(const nlohmann::json& j)
{
    PredictorModel m;
    m.w_in = matrix_from(j.at("w_in"));
    m.w_rec = matrix_from(j.at("w_rec"));
    const auto b = j.at("bias").get<std::vector<double>>();
    const auto w = j.at("w_out").get<std::vector<double>>();
    m.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    m.w_out = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.b_out = j.at("b_out").get<double>();
    const auto H = m.w_in.rows();
    if (m.w_rec.rows() != H || m.w_rec.cols() != H || m.bias.size() != H || m.w_out.size() != H)
        throw std::runtime_error("inconsistent predictor model shapes");
    return m;
}

StepOutput step(const PredictorModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev)
{
    if (static_cast<std::size_t>(x.size()) != model.input_width() ||
        static_cast<std::size_t>(h_prev.size()) != model.hidden_width())
        throw std::invalid_argument("step: width mismatch");
    StepOutput out;
    out.hidden = (model.w_in * x + model.w_rec * h_prev + model.bias).array().tanh();
    out.prob = sigmoid(model.w_out.dot(out.hidden) + model.b_out);
    return out;
}

PredictorGradient PredictorGradient::zeros_like(const PredictorModel& m)
{
    PredictorGradient g;
    g.w_in = Eigen::MatrixXd::Zero(m.w_in.rows(), m.w_in.cols());
    g.w_rec = Eigen::MatrixXd::Zero(m.w_rec.rows(), m.w_rec.cols());
    g.bias = Eigen::VectorXd::Zero(m.bias.size());
    g.w_out = Eigen::VectorXd::Zero(m.w_out.size());
    g.b_out = 0.0;
    return g;
}

namespace {

/// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_sequence(const PredictorModel& model, const PredictorSequence& seq)
{
    if (static_cast<std::size_t>(seq.inputs.rows()) != seq.targets.size())
        throw std::invalid_argument("sequence inputs and targets differ in length");
    if (seq.inputs.rows() > 0 && static_cast<std::size_t>(seq.inputs.cols()) != model.input_width())
        throw std::invalid_argument("sequence input width does not match the model");
}

}  // namespace

double sequence_loss(const PredictorModel& model, const PredictorSequence& seq,
                     const Eigen::MatrixXd* keep_mask, PredictorGradient* grad)
{
    check_sequence(model, seq);
    const auto T = seq.inputs.rows();
    const auto H = static_cast<Eigen::Index>(model.hidden_width());
    if (keep_mask && (keep_mask->rows() != T || keep_mask->cols() != H))
        throw std::invalid_argument("dropout mask shape mismatch");

    Eigen::MatrixXd hidden(T, H);  // row t = h_t
    std::vector<double> dz(static_cast<std::size_t>(T));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    double loss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        h = (model.w_in * seq.inputs.row(t).transpose() + model.w_rec * h + model.bias).array().tanh();
        hidden.row(t) = h.transpose();
        Eigen::VectorXd visible = h;
        if (keep_mask) visible = visible.cwiseProduct(keep_mask->row(t).transpose());
        const double z = model.w_out.dot(visible) + model.b_out;
        const double y = seq.targets[static_cast<std::size_t>(t)];
        loss += softplus(z) - y * z;
        dz[static_cast<std::size_t>(t)] = sigmoid(z) - y;
    }
    if (!grad) return loss;

    Eigen::VectorXd carry = Eigen::VectorXd::Zero(H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const double d = dz[static_cast<std::size_t>(t)];
        Eigen::VectorXd ht = hidden.row(t).transpose();
        Eigen::VectorXd mask = keep_mask ? Eigen::VectorXd(keep_mask->row(t).transpose())
                                         : Eigen::VectorXd::Ones(H);
        grad->w_out += d * ht.cwiseProduct(mask);
        grad->b_out += d;
        const Eigen::VectorXd dh = d * model.w_out.cwiseProduct(mask) + carry;
        const Eigen::VectorXd da = dh.array() * (1.0 - ht.array().square());
        grad->w_in += da * seq.inputs.row(t);
        if (t > 0) grad->w_rec += da * hidden.row(t - 1);
        grad->bias += da;
        carry = model.w_rec.transpose() * da;
    }
    return loss;
}

std::vector<double> predict_sequence(const PredictorModel& model, const PredictorSequence& seq)
{
    check_sequence(model, seq);
    std::vector<double> out;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.hidden_width()));
    for (Eigen::Index t = 0; t < seq.inputs.rows(); ++t) {
        auto s = step(model, seq.inputs.row(t).transpose(), h);
        out.push_back(s.prob);
        h = std::move(s.hidden);
    }
    return out;
}

namespace {

struct PredictorAdam {
    AdamState w_in, w_rec, bias, w_out, b_out;
    explicit PredictorAdam(const PredictorModel& m)
        : w_in(m.w_in.rows(), m.w_in.cols()), w_rec(m.w_rec.rows(), m.w_rec.cols()),
          bias(m.bias.size(), 1), w_out(m.w_out.size(), 1), b_out(1, 1)
    {
    }
    void step(const AdamConfig& cfg, PredictorModel& m, const PredictorGradient& g)
    {
        w_in.step(cfg, m.w_in, g.w_in);
        w_rec.step(cfg, m.w_rec, g.w_rec);
        bias.step(cfg, m.bias, g.bias);
        w_out.step(cfg, m.w_out, g.w_out);
        Eigen::Matrix<double, 1, 1> b{m.b_out};
        Eigen::Matrix<double, 1, 1> gb{g.b_out};
        b_out.step(cfg, b, gb);
        m.b_out = b(0, 0);
    }
};

double mean_loss(const PredictorModel& model, const std::vector<const PredictorSequence*>& seqs)
{
    double loss = 0.0;
    std::size_t n = 0;
    for (const auto* s : seqs) {
        loss += sequence_loss(model, *s);
        n += s->targets.size();
    }
    return n ? loss / static_cast<double>(n) : 0.0;
}

}  // namespace

TrainHistory train_predictor(PredictorModel& model, const std::vector<PredictorSequence>& train,
                             const PredictorConfig& config)
{
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(config.seed, 11));
    rng.shuffle(order);

    std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(train.size())));
    if (n_val >= train.size()) n_val = 0;
    std::vector<const PredictorSequence*> val, fit;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_val ? val : fit).push_back(&train[order[k]]);
    std::erase_if(fit, [](const PredictorSequence* s) { return s->targets.empty(); });
    if (fit.empty()) throw std::invalid_argument("train_predictor: no training predictions");
    if (config.dropout < 0.0 || config.dropout >= 1.0)
        throw std::invalid_argument("train_predictor: dropout must be in [0, 1)");

    AdamConfig adam;
    adam.lr = config.lr;
    PredictorAdam state(model);
    const double keep = 1.0 - config.dropout;
    const auto H = static_cast<Eigen::Index>(model.hidden_width());

    TrainHistory hist;
    PredictorModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(fit);
        double epoch_loss = 0.0;
        std::size_t epoch_n = 0;
        auto grad = PredictorGradient::zeros_like(model);
        std::size_t in_batch = 0;
        for (std::size_t k = 0; k < fit.size(); ++k) {
            const auto& seq = *fit[k];
            const auto T = seq.inputs.rows();
            Eigen::MatrixXd mask(T, H);
            for (Eigen::Index t = 0; t < T; ++t)
                for (Eigen::Index u = 0; u < H; ++u)
                    mask(t, u) = config.dropout > 0.0 ? (rng.bernoulli(keep) ? 1.0 / keep : 0.0) : 1.0;
            epoch_loss += sequence_loss(model, seq, &mask, &grad);
            epoch_n += seq.targets.size();
            in_batch += seq.targets.size();
            if (in_batch >= config.batch || k + 1 == fit.size()) {
                const double scale = 1.0 / static_cast<double>(in_batch);
                grad.w_in *= scale;
                grad.w_rec *= scale;
                grad.bias *= scale;
                grad.w_out *= scale;
                grad.b_out *= scale;
                state.step(adam, model, grad);
                grad = PredictorGradient::zeros_like(model);
                in_batch = 0;
            }
        }
        const double mean = epoch_loss / static_cast<double>(epoch_n);
        if (!std::isfinite(mean) || !model.finite())
            throw std::runtime_error("predictor training diverged at epoch " + std::to_string(epoch));
        hist.train_loss.push_back(mean);

        if (val.empty()) {
            best = model;
            hist.best_epoch = epoch;
            continue;
        }
        const double v = mean_loss(model, val);
        hist.validation_loss.push_back(v);
        if (v < best_val) {
            best_val = v;
            best = model;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    model = best;
    return hist;
}

nlohmann::json EvalReport::to_json() const
{
    nlohmann::json j;
    j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
    j["acc"] = acc;
    j["rmse"] = rmse;
    j["n_predictions"] = n_predictions;
    j["config"] = config;
    return j;
}

EvalReport evaluate(const PredictorModel& model, const std::vector<PredictorSequence>& test)
{
    std::vector<int> labels;
    std::vector<double> scores;
    for (const auto& seq : test) {
        const auto p = predict_sequence(model, seq);
        scores.insert(scores.end(), p.begin(), p.end());
        labels.insert(labels.end(), seq.targets.begin(), seq.targets.end());
    }
    if (labels.empty()) throw std::invalid_argument("evaluate: no test predictions");
    EvalReport r;
    r.auc = recopt::auc(labels, scores);
    r.acc = accuracy(labels, scores);
    r.rmse = recopt::rmse(labels, scores);
    r.n_predictions = labels.size();
    return r;
}

}  // namespace recopt
