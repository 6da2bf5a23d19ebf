// Serial reference vs OpenMP variant of each kernel. Thread count follows
// OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <random>

#include "docmap/kernels.hpp"

namespace {

using namespace docmap;

std::mt19937_64& rng() {
  static std::mt19937_64 r(42);
  return r;
}

RowMatrix gaussian(long rows, long cols) {
  std::normal_distribution<double> g;
  RowMatrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = g(rng());
  return m;
}

std::vector<DocumentEmbeddings> corpus(long docs, long tokens, long dim) {
  std::vector<DocumentEmbeddings> out(static_cast<std::size_t>(docs));
  for (auto& d : out) {
    d.vectors = gaussian(tokens, dim);
    d.tokens.assign(static_cast<std::size_t>(tokens), "t");
  }
  return out;
}

template <bool Parallel>
void BM_ScoreDocuments(benchmark::State& state) {
  const auto docs = corpus(state.range(0), 120, 64);
  const Vector u = gaussian(64, 1).col(0);
  for (auto _ : state) {
    auto r = Parallel ? kernels::omp::score_documents(docs, u, 8.0) : kernels::serial::score_documents(docs, u, 8.0);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct Grid {
  RowMatrix w;
  std::vector<double> gamma, x, y;
  std::vector<std::uint8_t> occupied;
  explicit Grid(long cells) : w(gaussian(cells, 64)) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (long k = 0; k < cells; ++k) {
      gamma.push_back(u(rng()));
      x.push_back(30.0 * u(rng()));
      y.push_back(30.0 * u(rng()));
      occupied.push_back(u(rng()) < 0.5);
    }
  }
};

template <bool Parallel>
void BM_BestVacantCell(benchmark::State& state) {
  const Grid g(state.range(0));
  const kernels::GridView view{g.w, g.gamma, g.x, g.y, g.occupied};
  const Vector e = gaussian(64, 1).col(0);
  for (auto _ : state) {
    auto m = Parallel ? kernels::omp::best_vacant_cell(view, e, 0.5, 0.7, 0.3)
                      : kernels::serial::best_vacant_cell(view, e, 0.5, 0.7, 0.3);
    benchmark::DoNotOptimize(m);
  }
}

template <bool Parallel>
void BM_NeighborhoodUpdate(benchmark::State& state) {
  Grid g(state.range(0));
  const Vector e = gaussian(64, 1).col(0);
  for (auto _ : state) {
    if (Parallel)
      kernels::omp::neighborhood_update(g.w, g.x, g.y, 3, e, 0.1, 4.0);
    else
      kernels::serial::neighborhood_update(g.w, g.x, g.y, 3, e, 0.1, 4.0);
    benchmark::ClobberMemory();
  }
}

template <bool Parallel>
void BM_NearestCentroids(benchmark::State& state) {
  const RowMatrix p = gaussian(state.range(0), 64);
  const RowMatrix c = gaussian(8, 64);
  std::vector<int> labels;
  std::vector<double> dist;
  for (auto _ : state) {
    if (Parallel)
      kernels::omp::nearest_centroids(p, c, labels, dist);
    else
      kernels::serial::nearest_centroids(p, c, labels, dist);
    benchmark::DoNotOptimize(labels.data());
  }
}

template <bool Parallel>
void BM_Silhouette(benchmark::State& state) {
  const RowMatrix p = gaussian(state.range(0), 2);
  std::vector<int> labels(static_cast<std::size_t>(p.rows()));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) {
    auto s = Parallel ? kernels::omp::silhouette_values(p, labels) : kernels::serial::silhouette_values(p, labels);
    benchmark::DoNotOptimize(s.data());
  }
}

BENCHMARK(BM_ScoreDocuments<false>)->Arg(200)->Arg(2000);
BENCHMARK(BM_ScoreDocuments<true>)->Arg(200)->Arg(2000);
BENCHMARK(BM_BestVacantCell<false>)->Arg(2500);
BENCHMARK(BM_BestVacantCell<true>)->Arg(2500);
BENCHMARK(BM_NeighborhoodUpdate<false>)->Arg(2500);
BENCHMARK(BM_NeighborhoodUpdate<true>)->Arg(2500);
BENCHMARK(BM_NearestCentroids<false>)->Arg(1797);
BENCHMARK(BM_NearestCentroids<true>)->Arg(1797);
BENCHMARK(BM_Silhouette<false>)->Arg(1797);
BENCHMARK(BM_Silhouette<true>)->Arg(1797);

}  // namespace

BENCHMARK_MAIN();
