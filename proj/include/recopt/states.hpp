#pragma once

#include <cstddef>
#include <vector>

namespace recopt {

/// One entry of a same-skill subsequence: the recorded answer state, the
/// question's normalized difficulty and where it sits in the student sequence.
struct StateDifficulty {
    int state = 0;
    double difficulty = 0.0;
    std::size_t position = 0;
};

using StateDifficultySeq = std::vector<StateDifficulty>;

/// A rewritten answer state. `index` is the entry within the subsequence,
/// `position` its place in the student sequence, and `trigger_position` the
/// sequence position of the entry that caused the final change.
struct Flip {
    std::size_t index = 0;
    std::size_t position = 0;
    int before = 0;
    int after = 0;
    std::size_t trigger_position = 0;

    bool operator==(const Flip&) const = default;
};

}  // namespace recopt
