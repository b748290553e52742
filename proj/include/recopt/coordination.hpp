#pragma once

#include "recopt/states.hpp"

#include <vector>

namespace recopt {

/// Closed-form control law. Returns +1 when the current entry is recorded
/// wrong but a much harder later entry was answered right, -1 when it is
/// recorded right but a much easier later entry was answered wrong, else 0.
/// "Much" means a normalized difficulty gap of at least `alpha`.
int control_value(int state, int later_initial_state, double difficulty, double later_difficulty,
                  double alpha);

/// Forward state recursion of one entry against every later entry.
struct EntryResult {
    int initial_state = 0;
    int final_state = 0;
    /// controls[k] is the control applied against entry index + 1 + k.
    std::vector<int> controls;
    /// Discounted control effort, sum over k of discount^k * |controls[k]|.
    double cost = 0.0;
    /// Subsequence index of the entry that produced the last nonzero control,
    /// or the entry itself when no control fired.
    std::size_t last_trigger = 0;
};

/// Scans entries index+1..n-1 in order. Comparisons always use the later
/// entries' initial states. Throws std::out_of_range for a bad index and
/// std::logic_error if a state ever leaves {0, 1}.
EntryResult optimize_entry(const StateDifficultySeq& seq, std::size_t index, double alpha,
                           double discount = 1.0);

struct CoordinationResult {
    std::vector<int> final_states;
    std::vector<EntryResult> entries;
    std::vector<Flip> flips;
    /// Sum of the per-entry costs.
    double total_cost = 0.0;
};

/// Runs optimize_entry on every entry independently.
CoordinationResult coordinate_sequence(const StateDifficultySeq& seq, double alpha,
                                       double discount = 1.0);

}  // namespace recopt
