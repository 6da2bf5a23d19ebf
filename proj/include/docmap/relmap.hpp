#pragma once

// Relevance-preserving circular grid map.
//
// Cells sit on concentric rings (ring l holds round(2*pi*l) cells at radius l,
// the centre stays empty). Each cell carries a weight vector and a relevance
// gamma in [0, 1]. Every epoch the items, in shuffled order, claim the vacant
// cell minimising
//
//   omega_s * ||e_d - w_j|| + omega_r * |r_d - gamma_j|
//
// after which the winner's neighbourhood weights move towards e_d (Gaussian
// kernel over layout distance) and the winner's whole ring shifts its gamma by
// lr * (r_d - gamma_winner).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "docmap/linalg.hpp"

namespace docmap::relmap {

struct MapItem {
  std::string id;
  Vector embedding;
  double relevance = 0.0;  // in [0, 1]
};

struct GridCell {
  long index = 0;
  int layer = 0;
  double x = 0.0;
  double y = 0.0;
  Vector weight;
  double relevance = 0.0;
  std::optional<long> occupant;  // item index
};

struct MapConfig {
  double omega_s = 1.0;
  double omega_r = 0.0;
  int epochs = 20;
  double lr0 = 0.5;
  // Initial neighbourhood width in layout units; <= 0 picks 0.4 * outer radius.
  double sigma0 = 0.0;
  double slack = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Structure-of-arrays grid; cell(k) assembles the per-cell view.
struct GridMap {
  long feature_dim = 0;
  int layer_count = 0;
  std::vector<int> layer;
  std::vector<double> x;
  std::vector<double> y;
  RowMatrix weights;
  std::vector<double> gamma;
  std::vector<double> initial_gamma;
  std::vector<std::uint8_t> occupied;
  std::vector<long> occupant;    // per cell, -1 when vacant
  std::vector<long> assignment;  // per item, cell index (-1 before the first epoch)

  long size() const { return static_cast<long>(layer.size()); }
  GridCell cell(long k) const;
  // First cell index of each ring, plus one past the end.
  std::vector<long> layer_offsets() const;
  void clear_occupancy();
};

struct FitResult {
  GridMap map;
  std::vector<double> loss_history;  // per epoch: sum of winning costs
};

// Rings are added until the cell count reaches ceil(n_items * (1 + slack)).
GridMap build_grid(long n_items, long feature_dim, double slack, std::uint64_t seed);

double matching_cost(const GridMap& map, long cell, const MapItem& item, const MapConfig& cfg);

void update_weights(GridMap& map, long winner, const MapItem& item, double lr, double sigma);
void update_relevance(GridMap& map, long winner, const MapItem& item, double lr);

// Called after the winner is chosen and before the updates run.
using AssignObserver = std::function<void(std::size_t item, long cell, double cost, const GridMap&)>;

// One competitive pass; returns the summed winning cost.
double assign_epoch(GridMap& map, std::span<const MapItem> items, const MapConfig& cfg, int epoch,
                    const AssignObserver& observer = {});

double learning_rate_at(const MapConfig& cfg, int epoch);
double sigma_at(const MapConfig& cfg, const GridMap& map, int epoch);

FitResult fit(std::span<const MapItem> items, const MapConfig& cfg,
              const AssignObserver& observer = {});

// Sum of each item's cost against its currently assigned cell.
double global_loss(const GridMap& map, std::span<const MapItem> items, const MapConfig& cfg);

// Pearson correlation between item relevance and the gamma of its assigned
// cell; initial=true uses the gamma profile from before training.
double rpc(const GridMap& map, std::span<const MapItem> items, bool initial = false);

// Min-max to [0, 1]; constant input maps to 0.5.
std::vector<double> normalize_relevance(std::span<const double> raw);

// Checks one-to-one assignment, centre vacancy and gamma range; throws on violation.
void check_invariants(const GridMap& map, std::size_t n_items);

// {cells:[{index, layer, x, y, gamma, occupant}], assignments, loss_history}
nlohmann::json layout_json(const GridMap& map, std::span<const MapItem> items,
                           std::span<const double> loss_history);

}  // namespace docmap::relmap
