#pragma once

// Data-parallel inner loops shared by the scoring, mapping and clustering
// code. Every kernel exists twice: `serial::` is the reference used by the
// tests, `omp::` splits the outer loop across OpenMP threads. Each output
// element is produced by exactly one thread with the same operation order as
// the reference, and arg-min merges break ties on the lowest index, so the two
// variants are bit-identical for any thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "docmap/embedding.hpp"
#include "docmap/linalg.hpp"

namespace docmap {

// Per-document output of prompt scoring.
struct DocumentScore {
  Vector token_attention;  // raw bilinear score per token
  Vector weights;          // softmax(token_attention / sqrt(dim))
  Vector embedding;        // weights-averaged token vectors
  double relevance = 0.0;  // sum of token_attention
};

namespace kernels {

// Numerically stable softmax of scores / temperature.
Vector softmax(const Vector& scores, double temperature);

// Scores one document against a key-space query u = W_K^T W_Q e_p, so that
// token_attention = tokens * u.
DocumentScore score_document(const DocumentEmbeddings& doc, const Vector& key_query,
                             double temperature);

struct CellMatch {
  long cell = -1;
  double cost = 0.0;
};

// Inputs of the competitive matching and neighbourhood update.
struct GridView {
  const RowMatrix& weights;            // cells x feature_dim
  std::span<const double> gamma;       // per-cell relevance
  std::span<const double> x;           // layout coordinates
  std::span<const double> y;
  std::span<const std::uint8_t> occupied;
};

namespace serial {

std::vector<DocumentScore> score_documents(std::span<const DocumentEmbeddings> docs,
                                           const Vector& key_query, double temperature);

// Vacant cell minimising omega_s * ||e - w_j|| + omega_r * |r - gamma_j|.
CellMatch best_vacant_cell(const GridView& grid, const Vector& embedding, double relevance,
                           double omega_s, double omega_r);

// w_k += lr * exp(-|pos_k - pos_winner|^2 / (2 sigma^2)) * (e - w_k) for all k.
void neighborhood_update(RowMatrix& weights, std::span<const double> x, std::span<const double> y,
                         long winner, const Vector& embedding, double lr, double sigma);

// Index of the nearest centroid (squared Euclidean) per point, and that distance.
void nearest_centroids(const RowMatrix& points, const RowMatrix& centroids,
                       std::vector<int>& labels, std::vector<double>& sq_dist);

// Per-point silhouette coefficient; points in singleton clusters get 0.
std::vector<double> silhouette_values(const RowMatrix& points, std::span<const int> labels);

}  // namespace serial

namespace omp {

std::vector<DocumentScore> score_documents(std::span<const DocumentEmbeddings> docs,
                                           const Vector& key_query, double temperature);
CellMatch best_vacant_cell(const GridView& grid, const Vector& embedding, double relevance,
                           double omega_s, double omega_r);
void neighborhood_update(RowMatrix& weights, std::span<const double> x, std::span<const double> y,
                         long winner, const Vector& embedding, double lr, double sigma);
void nearest_centroids(const RowMatrix& points, const RowMatrix& centroids,
                       std::vector<int>& labels, std::vector<double>& sq_dist);
std::vector<double> silhouette_values(const RowMatrix& points, std::span<const int> labels);

}  // namespace omp

// Library entry points; forward to omp:: (which degrades to a serial loop
// when built without OpenMP).
using omp::best_vacant_cell;
using omp::nearest_centroids;
using omp::neighborhood_update;
using omp::score_documents;
using omp::silhouette_values;

int max_threads();

}  // namespace kernels
}  // namespace docmap
