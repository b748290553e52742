#include "recopt/coordination.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace recopt {

int control_value(int state, int later_initial_state, double difficulty, double later_difficulty,
                  double alpha)
{
    const bool far = std::abs(difficulty - later_difficulty) >= alpha;
    if (!far) return 0;
    if (state < later_initial_state && difficulty < later_difficulty) return 1;
    if (state > later_initial_state && difficulty > later_difficulty) return -1;
    return 0;
}

EntryResult optimize_entry(const StateDifficultySeq& seq, std::size_t index, double alpha,
                           double discount)
{
    if (index >= seq.size())
        throw std::out_of_range("optimize_entry: index " + std::to_string(index) + " out of range");
    const auto& self = seq[index];
    EntryResult r;
    r.initial_state = self.state;
    r.last_trigger = index;
    int state = self.state;
    double weight = 1.0;
    for (std::size_t j = index + 1; j < seq.size(); ++j) {
        const int u = control_value(state, seq[j].state, self.difficulty, seq[j].difficulty, alpha);
        state += u;
        if (state != 0 && state != 1)
            throw std::logic_error("coordination left the binary state space at entry " +
                                   std::to_string(index));
        r.controls.push_back(u);
        r.cost += weight * std::abs(u);
        weight *= discount;
        if (u != 0) r.last_trigger = j;
    }
    r.final_state = state;
    return r;
}

CoordinationResult coordinate_sequence(const StateDifficultySeq& seq, double alpha, double discount)
{
    CoordinationResult out;
    out.final_states.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        auto r = optimize_entry(seq, i, alpha, discount);
        out.final_states.push_back(r.final_state);
        out.total_cost += r.cost;
        if (r.final_state != r.initial_state)
            out.flips.push_back({i, seq[i].position, r.initial_state, r.final_state,
                                 seq[r.last_trigger].position});
        out.entries.push_back(std::move(r));
    }
    return out;
}

}  // namespace recopt
