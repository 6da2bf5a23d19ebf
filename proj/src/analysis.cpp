#include "docmap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "docmap/error.hpp"
#include "docmap/kernels.hpp"
#include "docmap/rng.hpp"

namespace docmap::analysis {

namespace {

std::vector<int> densify(std::span<const int> labels) {
  std::map<int, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.emplace(l, static_cast<int>(ids.size())).first->second);
  return out;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

RowMatrix seed_plus_plus(const RowMatrix& points, int k, Rng& rng) {
  const auto n = points.rows();
  RowMatrix centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - centers.row(c)).squaredNorm());
  }
  return centers;
}

}  // namespace

namespace {

Clustering kmeans_once(const RowMatrix& points, int k, std::uint64_t seed, int max_iters) {
  const auto n = points.rows();
  Rng rng(seed);
  Clustering out;
  out.k = k;
  out.centroids = seed_plus_plus(points, k, rng);

  std::vector<int> labels;
  std::vector<double> dist;
  for (int it = 0; it < max_iters; ++it) {
    kernels::nearest_centroids(points, out.centroids, labels, dist);
    out.wcss = std::accumulate(dist.begin(), dist.end(), 0.0);
    out.wcss_history.push_back(out.wcss);
    const bool converged = labels == out.labels;
    out.labels = labels;
    if (converged || it + 1 == max_iters) break;

    RowMatrix sums = RowMatrix::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    // Empty clusters keep their previous centroid.
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) out.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace

Clustering kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iters, int restarts) {
  if (k < 1 || k > points.rows()) throw InvalidArgument("kmeans: k=" + std::to_string(k) + " outside [1, n]");
  if (max_iters < 1) throw InvalidArgument("kmeans: max_iters must be positive");
  if (restarts < 1) throw InvalidArgument("kmeans: restarts must be positive");
  Clustering best = kmeans_once(points, k, derive_seed(seed, 0x6b6d), max_iters);
  for (int r = 1; r < restarts; ++r) {
    auto run = kmeans_once(points, k, derive_seed(seed, 0x6b6d + static_cast<std::uint64_t>(r)), max_iters);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

int elbow_from_wcss(std::span<const double> wcss) {
  const auto k_max = static_cast<int>(wcss.size());
  if (k_max < 1) throw InvalidArgument("elbow: empty WCSS curve");
  if (k_max < 3) return 1;
  // Normalise both axes so the chord distance does not depend on WCSS units.
  const double w_first = wcss.front();
  const double w_last = wcss.back();
  const double w_range = std::abs(w_first - w_last) > 0.0 ? w_first - w_last : 1.0;
  int best = 2;
  double best_dist = -1.0;
  for (int k = 2; k < k_max; ++k) {
    const double x = static_cast<double>(k - 1) / (k_max - 1);
    const double y = (wcss[static_cast<std::size_t>(k - 1)] - w_last) / w_range;
    // Chord runs from (0, 1) to (1, 0): distance = |x + y - 1| / sqrt(2).
    const double dist = std::abs(x + y - 1.0) / std::sqrt(2.0);
    if (dist > best_dist + 1e-12) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

int elbow_k(const RowMatrix& points, int k_max, std::uint64_t seed) {
  if (k_max < 1) throw InvalidArgument("elbow_k: k_max must be positive");
  k_max = static_cast<int>(std::min<Eigen::Index>(k_max, points.rows()));
  std::vector<double> wcss;
  for (int k = 1; k <= k_max; ++k) wcss.push_back(kmeans(points, k, seed).wcss);
  return elbow_from_wcss(wcss);
}

double silhouette(const RowMatrix& points, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != points.rows())
    throw InvalidArgument("silhouette: one label per point required");
  if (labels.empty()) return 0.0;
  const auto dense = densify(labels);
  const auto s = kernels::silhouette_values(points, dense);
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double ari(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidArgument("ari: labelings differ in length");
  const auto da = densify(a);
  const auto db = densify(b);
  const int na = da.empty() ? 0 : *std::max_element(da.begin(), da.end()) + 1;
  const int nb = db.empty() ? 0 : *std::max_element(db.begin(), db.end()) + 1;
  std::vector<double> table(static_cast<std::size_t>(na) * static_cast<std::size_t>(nb), 0.0);
  std::vector<double> rows(static_cast<std::size_t>(na), 0.0), cols(static_cast<std::size_t>(nb), 0.0);
  for (std::size_t i = 0; i < da.size(); ++i) {
    table[static_cast<std::size_t>(da[i]) * static_cast<std::size_t>(nb) + static_cast<std::size_t>(db[i])] += 1.0;
    rows[static_cast<std::size_t>(da[i])] += 1.0;
    cols[static_cast<std::size_t>(db[i])] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double c : table) index += choose2(c);
  for (double r : rows) sum_a += choose2(r);
  for (double c : cols) sum_b += choose2(c);
  const double total = choose2(static_cast<double>(da.size()));
  if (total == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::vector<int> color_cells(const relmap::GridMap& map, std::span<const int> labels) {
  const long m = map.size();
  std::vector<int> color(static_cast<std::size_t>(m), -1);
  std::vector<long> occupied;
  for (long k = 0; k < m; ++k) {
    const long item = map.occupant[static_cast<std::size_t>(k)];
    if (item < 0) continue;
    if (static_cast<std::size_t>(item) >= labels.size()) throw InvalidArgument("color_cells: missing label");
    color[static_cast<std::size_t>(k)] = labels[static_cast<std::size_t>(item)];
    occupied.push_back(k);
  }
  if (occupied.empty()) return color;

  auto dist2 = [&](long a, long b) {
    const double dx = map.x[static_cast<std::size_t>(a)] - map.x[static_cast<std::size_t>(b)];
    const double dy = map.y[static_cast<std::size_t>(a)] - map.y[static_cast<std::size_t>(b)];
    return dx * dx + dy * dy;
  };

  struct Vacant {
    long cell;
    long nearest_occupied;
    double d2;
  };
  std::vector<Vacant> vacant;
  for (long k = 0; k < m; ++k) {
    if (color[static_cast<std::size_t>(k)] >= 0) continue;
    Vacant v{k, occupied.front(), std::numeric_limits<double>::infinity()};
    for (long o : occupied) {
      const double d = dist2(k, o);
      if (d < v.d2) {
        v.d2 = d;
        v.nearest_occupied = o;
      }
    }
    vacant.push_back(v);
  }
  std::stable_sort(vacant.begin(), vacant.end(), [](const Vacant& a, const Vacant& b) { return a.d2 < b.d2; });

  std::vector<long> colored = occupied;
  std::vector<std::pair<double, long>> near;
  for (const auto& v : vacant) {
    near.clear();
    for (long c : colored) near.emplace_back(dist2(v.cell, c), c);
    const std::size_t take = std::min<std::size_t>(8, near.size());
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(take), near.end());
    std::map<int, int> votes;
    for (std::size_t i = 0; i < take; ++i) ++votes[color[static_cast<std::size_t>(near[i].second)]];
    int top = 0;
    for (const auto& [c, n] : votes) top = std::max(top, n);
    const int fallback = color[static_cast<std::size_t>(v.nearest_occupied)];
    int chosen = -1;
    if (votes.contains(fallback) && votes[fallback] == top) {
      chosen = fallback;
    } else {
      for (const auto& [c, n] : votes)
        if (n == top) {
          chosen = c;
          break;
        }
    }
    color[static_cast<std::size_t>(v.cell)] = chosen;
    colored.push_back(v.cell);
  }
  return color;
}

}  // namespace docmap::analysis
