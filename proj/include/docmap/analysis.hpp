#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "docmap/linalg.hpp"
#include "docmap/relmap.hpp"
#include "docmap/stats.hpp"

namespace docmap::analysis {

struct Clustering {
  std::vector<int> labels;
  int k = 0;
  RowMatrix centroids;
  double wcss = 0.0;
  std::vector<double> wcss_history;  // after each assignment step
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iters is reached. With restarts > 1 the lowest-WCSS run wins.
Clustering kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iters = 300, int restarts = 1);

// k in [1, k_max] whose (k, WCSS) point lies farthest from the chord between
// the k = 1 and k = k_max points; ties go to the smaller k.
int elbow_k(const RowMatrix& points, int k_max, std::uint64_t seed);
// The same rule applied to a precomputed curve, wcss[k - 1] for k = 1..k_max.
// Only interior k are candidates; k_max < 3 yields 1.
int elbow_from_wcss(std::span<const double> wcss);

double silhouette(const RowMatrix& points, std::span<const int> labels);

// Pair-counting adjusted Rand index. Labels may be arbitrary non-negative ints.
double ari(std::span<const int> a, std::span<const int> b);

// Occupied cells take their occupant's cluster; vacant cells, in order of
// distance to the nearest occupied cell, take the majority colour of the 8
// nearest already-coloured cells (ties: colour of the nearest occupied cell
// if tied, else the lowest id). labels are indexed by item.
std::vector<int> color_cells(const relmap::GridMap& map, std::span<const int> labels);

using stats::pearson;
using stats::spearman;

}  // namespace docmap::analysis
