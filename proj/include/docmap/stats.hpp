#pragma once

#include <span>
#include <vector>

namespace docmap::stats {

// Pearson correlation. Throws InvalidArgument for fewer than two samples or
// mismatched lengths; returns 0 when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Average ranks (1-based, ties share the mean rank).
std::vector<double> ranks(std::span<const double> v);

// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace docmap::stats
