#pragma once

#include <optional>
#include <span>

namespace recopt {

/// Area under the ROC curve by the rank statistic, tied scores sharing their
/// mean rank. Empty when only one class is present.
std::optional<double> auc(std::span<const int> labels, std::span<const double> scores);

/// Fraction of predictions on the right side of 0.5 (score >= 0.5 means 1).
double accuracy(std::span<const int> labels, std::span<const double> scores);

double rmse(std::span<const int> labels, std::span<const double> scores);

}  // namespace recopt
