#include "recopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace recopt {

namespace {

void check(std::span<const int> labels, std::span<const double> scores)
{
    if (labels.size() != scores.size()) throw std::invalid_argument("metrics: length mismatch");
    if (labels.empty()) throw std::invalid_argument("metrics: no predictions");
}

}  // namespace

std::optional<double> auc(std::span<const int> labels, std::span<const double> scores)
{
    check(labels, scores);
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // twice the rank sum keeps midranks integral
    long double twice_rank_sum = 0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const long double twice_mid = static_cast<long double>(i + 1 + j);  // ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                twice_rank_sum += twice_mid;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;
    const long double p = static_cast<long double>(positives);
    const long double u = twice_rank_sum / 2 - p * (p + 1) / 2;
    return static_cast<double>(u / (p * static_cast<long double>(negatives)));
}

double accuracy(std::span<const int> labels, std::span<const double> scores)
{
    check(labels, scores);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += ((scores[i] >= 0.5 ? 1 : 0) == labels[i]);
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double rmse(std::span<const int> labels, std::span<const double> scores)
{
    check(labels, scores);
    double s = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double e = scores[i] - labels[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(labels.size()));
}

}  // namespace recopt
