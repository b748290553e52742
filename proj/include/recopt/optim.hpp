#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace recopt {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment update for one parameter block.
class AdamState {
public:
    AdamState() = default;
    AdamState(Eigen::Index rows, Eigen::Index cols)
        : m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols))
    {
    }

    template <typename Param, typename Grad>
    void step(const AdamConfig& cfg, Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad)
    {
        ++t_;
        m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad;
        v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
        param -= (cfg.lr * (m_ / c1).array() / ((v_ / c2).array().sqrt() + cfg.eps)).matrix();
    }

private:
    Eigen::MatrixXd m_;
    Eigen::MatrixXd v_;
    long t_ = 0;
};

inline double sigmoid(double x)
{
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace recopt
