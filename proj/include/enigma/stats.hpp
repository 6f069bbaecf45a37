#pragma once

#include <span>
#include <vector>

namespace enigma {

/// Product-moment correlation. Throws ValidationError for length < 3 or a
/// length mismatch, and EstimationError for zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Average ranks with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of the average-ranked data.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace enigma
