#include "recopt/collaboration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace recopt {

std::size_t propagation_distance(std::size_t i, std::size_t j)
{
    if (i == j) throw std::invalid_argument("propagation_distance: i == j");
    return i < j ? 1 : i - j;
}

GammaBreakdown compute_gamma(std::span<const StateDifficulty> cluster, std::size_t target)
{
    if (target >= cluster.size())
        throw std::out_of_range("compute_gamma: target " + std::to_string(target) + " out of range");
    auto lifted = [](double d) { return std::max(d, kMinCollaborationDifficulty); };

    GammaBreakdown g;
    const double d_self = lifted(cluster[target].difficulty);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < cluster.size(); ++j) {
        if (j == target) continue;
        const std::size_t dist = propagation_distance(target, j);
        const double w = 1.0 / static_cast<double>(dist);
        const double dj = lifted(cluster[j].difficulty);
        const double term = w * dj * cluster[j].state;
        num += term;
        den += w * dj;
        g.neighbors.push_back({j, dist, w, term});
    }
    g.gamma1 = 0.5 * d_self * cluster[target].state + 0.5 * num;
    g.gamma2 = 0.5 * d_self + 0.5 * den;
    g.gamma = g.gamma1 / g.gamma2;
    return g;
}

int optimize_subgoal(std::span<const StateDifficulty> cluster, std::size_t target)
{
    return compute_gamma(cluster, target).gamma >= 0.5 ? 1 : 0;
}

std::vector<std::vector<std::size_t>> form_clusters(const StateDifficultySeq& seq, double beta)
{
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!clusters.empty()) {
            auto& current = clusters.back();
            const bool fits = std::all_of(current.begin(), current.end(), [&](std::size_t m) {
                return std::abs(seq[m].difficulty - seq[i].difficulty) < beta;
            });
            if (fits) {
                current.push_back(i);
                continue;
            }
        }
        clusters.push_back({i});
    }
    return clusters;
}

namespace {

struct ClusterOutcome {
    std::vector<int> states;
    std::vector<std::size_t> trigger;  // member appended in the round of the last change
};

ClusterOutcome run_growth(std::span<const StateDifficulty> cluster)
{
    std::vector<StateDifficulty> work(cluster.begin(), cluster.end());
    ClusterOutcome out;
    out.trigger.resize(work.size());
    for (std::size_t i = 0; i < work.size(); ++i) out.trigger[i] = i;
    for (std::size_t size = 2; size <= work.size(); ++size) {
        std::span<const StateDifficulty> objective(work.data(), size);
        std::vector<int> next(size);
        for (std::size_t i = 0; i < size; ++i) next[i] = optimize_subgoal(objective, i);
        for (std::size_t i = 0; i < size; ++i) {
            if (next[i] != work[i].state) {
                work[i].state = next[i];
                out.trigger[i] = size - 1;
            }
        }
    }
    for (const auto& w : work) out.states.push_back(w.state);
    return out;
}

}  // namespace

std::vector<int> co_optimize_cluster(std::span<const StateDifficulty> cluster)
{
    return run_growth(cluster).states;
}

CollaborationResult collaborate_sequence(const StateDifficultySeq& seq, double beta)
{
    CollaborationResult out;
    out.final_states.resize(seq.size());
    out.clusters = form_clusters(seq, beta);
    for (const auto& members : out.clusters) {
        std::vector<StateDifficulty> cluster;
        for (auto m : members) cluster.push_back(seq[m]);
        const auto outcome = run_growth(cluster);
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto idx = members[k];
            out.final_states[idx] = outcome.states[k];
            if (outcome.states[k] != seq[idx].state)
                out.flips.push_back({idx, seq[idx].position, seq[idx].state, outcome.states[k],
                                     seq[members[outcome.trigger[k]]].position});
        }
    }
    std::sort(out.flips.begin(), out.flips.end(),
              [](const Flip& a, const Flip& b) { return a.index < b.index; });
    return out;
}

}  // namespace recopt
