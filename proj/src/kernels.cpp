#include "docmap/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace docmap::kernels {

namespace {

inline double cell_cost(const GridView& g, long j, const Vector& e, double r, double omega_s,
                        double omega_r) {
  double cost = 0.0;
  if (omega_s != 0.0) cost += omega_s * (e.transpose() - g.weights.row(j)).norm();
  if (omega_r != 0.0) cost += omega_r * std::abs(r - g.gamma[static_cast<std::size_t>(j)]);
  return cost;
}

inline bool better(const CellMatch& a, const CellMatch& b) {
  if (a.cell < 0) return false;
  if (b.cell < 0) return true;
  return a.cost < b.cost || (a.cost == b.cost && a.cell < b.cell);
}

inline void update_cell(RowMatrix& w, std::span<const double> x, std::span<const double> y,
                        long k, double wx, double wy, const Vector& e, double lr,
                        double two_sigma_sq) {
  const double dx = x[static_cast<std::size_t>(k)] - wx;
  const double dy = y[static_cast<std::size_t>(k)] - wy;
  const double h = std::exp(-(dx * dx + dy * dy) / two_sigma_sq);
  const double step = lr * h;
  if (step == 0.0) return;
  w.row(k) += step * (e.transpose() - w.row(k));
}

inline void nearest_one(const RowMatrix& points, const RowMatrix& centroids, Eigen::Index i,
                        int& label, double& dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (points.row(i) - centroids.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  label = best;
  dist = best_d;
}

double silhouette_one(const RowMatrix& points, std::span<const int> labels, int n_labels,
                      std::span<const int> counts, Eigen::Index i) {
  const int own = labels[static_cast<std::size_t>(i)];
  if (counts[static_cast<std::size_t>(own)] <= 1) return 0.0;
  std::vector<double> sums(static_cast<std::size_t>(n_labels), 0.0);
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    if (j == i) continue;
    sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] +=
        (points.row(i) - points.row(j)).norm();
  }
  const double a = sums[static_cast<std::size_t>(own)] / (counts[static_cast<std::size_t>(own)] - 1);
  double b = std::numeric_limits<double>::infinity();
  for (int c = 0; c < n_labels; ++c) {
    if (c == own || counts[static_cast<std::size_t>(c)] == 0) continue;
    b = std::min(b, sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)]);
  }
  if (!std::isfinite(b)) return 0.0;
  const double denom = std::max(a, b);
  return denom == 0.0 ? 0.0 : (b - a) / denom;
}

std::vector<int> label_counts(std::span<const int> labels, int& n_labels) {
  n_labels = 0;
  for (int l : labels) n_labels = std::max(n_labels, l + 1);
  std::vector<int> counts(static_cast<std::size_t>(n_labels), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

}  // namespace

Vector softmax(const Vector& scores, double temperature) {
  if (scores.size() == 0) return scores;
  const Vector scaled = scores / temperature;
  const double mx = scaled.maxCoeff();
  Vector w = (scaled.array() - mx).exp().matrix();
  return w / w.sum();
}

DocumentScore score_document(const DocumentEmbeddings& doc, const Vector& key_query,
                             double temperature) {
  DocumentScore s;
  s.token_attention = doc.vectors * key_query;
  s.relevance = s.token_attention.sum();
  s.weights = softmax(s.token_attention, temperature);
  s.embedding = doc.vectors.transpose() * s.weights;
  return s;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

std::vector<DocumentScore> score_documents(std::span<const DocumentEmbeddings> docs,
                                           const Vector& key_query, double temperature) {
  std::vector<DocumentScore> out(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d)
    out[d] = score_document(docs[d], key_query, temperature);
  return out;
}

CellMatch best_vacant_cell(const GridView& grid, const Vector& embedding, double relevance,
                           double omega_s, double omega_r) {
  CellMatch best;
  for (long j = 0; j < grid.weights.rows(); ++j) {
    if (grid.occupied[static_cast<std::size_t>(j)]) continue;
    const CellMatch cand{j, cell_cost(grid, j, embedding, relevance, omega_s, omega_r)};
    if (better(cand, best)) best = cand;
  }
  return best;
}

void neighborhood_update(RowMatrix& weights, std::span<const double> x, std::span<const double> y,
                         long winner, const Vector& embedding, double lr, double sigma) {
  const double wx = x[static_cast<std::size_t>(winner)];
  const double wy = y[static_cast<std::size_t>(winner)];
  const double two_sigma_sq = 2.0 * sigma * sigma;
  for (long k = 0; k < weights.rows(); ++k)
    update_cell(weights, x, y, k, wx, wy, embedding, lr, two_sigma_sq);
}

void nearest_centroids(const RowMatrix& points, const RowMatrix& centroids,
                       std::vector<int>& labels, std::vector<double>& sq_dist) {
  labels.resize(static_cast<std::size_t>(points.rows()));
  sq_dist.resize(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    nearest_one(points, centroids, i, labels[static_cast<std::size_t>(i)],
                sq_dist[static_cast<std::size_t>(i)]);
}

std::vector<double> silhouette_values(const RowMatrix& points, std::span<const int> labels) {
  int n_labels = 0;
  const auto counts = label_counts(labels, n_labels);
  std::vector<double> s(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    s[static_cast<std::size_t>(i)] = silhouette_one(points, labels, n_labels, counts, i);
  return s;
}

}  // namespace serial

namespace omp {

std::vector<DocumentScore> score_documents(std::span<const DocumentEmbeddings> docs,
                                           const Vector& key_query, double temperature) {
  std::vector<DocumentScore> out(docs.size());
  const long n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long d = 0; d < n; ++d)
    out[static_cast<std::size_t>(d)] =
        score_document(docs[static_cast<std::size_t>(d)], key_query, temperature);
  return out;
}

CellMatch best_vacant_cell(const GridView& grid, const Vector& embedding, double relevance,
                           double omega_s, double omega_r) {
  CellMatch best;
  const long m = grid.weights.rows();
#pragma omp parallel
  {
    CellMatch local;
#pragma omp for schedule(static) nowait
    for (long j = 0; j < m; ++j) {
      if (grid.occupied[static_cast<std::size_t>(j)]) continue;
      const CellMatch cand{j, cell_cost(grid, j, embedding, relevance, omega_s, omega_r)};
      if (better(cand, local)) local = cand;
    }
#pragma omp critical(docmap_best_cell)
    if (better(local, best)) best = local;
  }
  return best;
}

void neighborhood_update(RowMatrix& weights, std::span<const double> x, std::span<const double> y,
                         long winner, const Vector& embedding, double lr, double sigma) {
  const double wx = x[static_cast<std::size_t>(winner)];
  const double wy = y[static_cast<std::size_t>(winner)];
  const double two_sigma_sq = 2.0 * sigma * sigma;
  const long m = weights.rows();
#pragma omp parallel for schedule(static)
  for (long k = 0; k < m; ++k) update_cell(weights, x, y, k, wx, wy, embedding, lr, two_sigma_sq);
}

void nearest_centroids(const RowMatrix& points, const RowMatrix& centroids,
                       std::vector<int>& labels, std::vector<double>& sq_dist) {
  labels.resize(static_cast<std::size_t>(points.rows()));
  sq_dist.resize(static_cast<std::size_t>(points.rows()));
  const long n = points.rows();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i)
    nearest_one(points, centroids, i, labels[static_cast<std::size_t>(i)],
                sq_dist[static_cast<std::size_t>(i)]);
}

std::vector<double> silhouette_values(const RowMatrix& points, std::span<const int> labels) {
  int n_labels = 0;
  const auto counts = label_counts(labels, n_labels);
  std::vector<double> s(static_cast<std::size_t>(points.rows()));
  const long n = points.rows();
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i)
    s[static_cast<std::size_t>(i)] = silhouette_one(points, labels, n_labels, counts, i);
  return s;
}

}  // namespace omp
}  // namespace docmap::kernels
