#include "docmap/relmap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "docmap/error.hpp"
#include "docmap/kernels.hpp"
#include "docmap/rng.hpp"
#include "docmap/stats.hpp"

namespace docmap::relmap {

namespace {

void check_items(const GridMap& map, std::span<const MapItem> items) {
  for (const auto& item : items) {
    if (item.embedding.size() != map.feature_dim)
      throw DimensionMismatch("map item '" + item.id + "'", map.feature_dim, item.embedding.size());
    if (!(item.relevance >= 0.0 && item.relevance <= 1.0))
      throw InvalidArgument("map item '" + item.id + "' relevance outside [0, 1]");
  }
  if (static_cast<long>(items.size()) >= map.size())
    throw InvalidArgument("grid needs more cells than items");
}

kernels::GridView view(const GridMap& map) {
  return {map.weights, map.gamma, map.x, map.y, map.occupied};
}

}  // namespace

void MapConfig::validate() const {
  if (!(omega_s >= 0.0) || !(omega_r >= 0.0) || !(omega_s + omega_r > 0.0))
    throw InvalidArgument("omega_s, omega_r must be non-negative with a positive sum");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (!(lr0 >= 0.0)) throw InvalidArgument("lr0 must be non-negative");
  if (!(slack > 0.0)) throw InvalidArgument("slack must be positive");
}

GridCell GridMap::cell(long k) const {
  const auto i = static_cast<std::size_t>(k);
  GridCell c{k, layer[i], x[i], y[i], weights.row(k).transpose(), gamma[i], std::nullopt};
  if (occupant[i] >= 0) c.occupant = occupant[i];
  return c;
}

std::vector<long> GridMap::layer_offsets() const {
  std::vector<long> offsets{0};
  for (long k = 1; k < size(); ++k)
    if (layer[static_cast<std::size_t>(k)] != layer[static_cast<std::size_t>(k - 1)]) offsets.push_back(k);
  offsets.push_back(size());
  return offsets;
}

void GridMap::clear_occupancy() {
  std::fill(occupied.begin(), occupied.end(), 0);
  std::fill(occupant.begin(), occupant.end(), -1);
}

GridMap build_grid(long n_items, long feature_dim, double slack, std::uint64_t seed) {
  if (n_items < 1) throw InvalidArgument("build_grid needs at least one item");
  if (feature_dim < 1) throw InvalidArgument("feature_dim must be positive");
  if (!(slack > 0.0)) throw InvalidArgument("slack must be positive");
  const long target =
      std::max(n_items + 1, static_cast<long>(std::ceil(static_cast<double>(n_items) * (1.0 + slack))));

  GridMap map;
  map.feature_dim = feature_dim;
  std::vector<double> inv_radius;
  for (int l = 1; map.size() < target; ++l) {
    const long count = std::lround(2.0 * std::numbers::pi * l);
    for (long i = 0; i < count; ++i) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
      map.layer.push_back(l);
      map.x.push_back(l * std::cos(theta));
      map.y.push_back(l * std::sin(theta));
      inv_radius.push_back(1.0 / l);
    }
    map.layer_count = l;
  }

  const long m = map.size();
  map.gamma = normalize_relevance(inv_radius);
  map.initial_gamma = map.gamma;
  map.occupied.assign(static_cast<std::size_t>(m), 0);
  map.occupant.assign(static_cast<std::size_t>(m), -1);

  Rng rng(derive_seed(seed, 0x9e1d));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  map.weights.resize(m, feature_dim);
  for (long k = 0; k < m; ++k)
    for (long c = 0; c < feature_dim; ++c) map.weights(k, c) = unif(rng);
  return map;
}

double matching_cost(const GridMap& map, long cell, const MapItem& item, const MapConfig& cfg) {
  if (item.embedding.size() != map.feature_dim)
    throw DimensionMismatch("map item", map.feature_dim, item.embedding.size());
  return cfg.omega_s * (item.embedding.transpose() - map.weights.row(cell)).norm() +
         cfg.omega_r * std::abs(item.relevance - map.gamma[static_cast<std::size_t>(cell)]);
}

void update_weights(GridMap& map, long winner, const MapItem& item, double lr, double sigma) {
  kernels::neighborhood_update(map.weights, map.x, map.y, winner, item.embedding, lr, sigma);
}

void update_relevance(GridMap& map, long winner, const MapItem& item, double lr) {
  const int ring = map.layer[static_cast<std::size_t>(winner)];
  const double delta = lr * (item.relevance - map.gamma[static_cast<std::size_t>(winner)]);
  for (long k = 0; k < map.size(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (map.layer[i] == ring) map.gamma[i] = std::clamp(map.gamma[i] + delta, 0.0, 1.0);
  }
}

double learning_rate_at(const MapConfig& cfg, int epoch) {
  if (cfg.epochs <= 0) return cfg.lr0;
  return cfg.lr0 * (1.0 - static_cast<double>(epoch) / cfg.epochs);
}

double sigma_at(const MapConfig& cfg, const GridMap& map, int epoch) {
  const double sigma0 = cfg.sigma0 > 0.0 ? cfg.sigma0 : 0.4 * map.layer_count;
  const double frac = cfg.epochs <= 0 ? 0.0 : static_cast<double>(epoch) / cfg.epochs;
  return sigma0 * (1.0 - frac) + 0.01;
}

double assign_epoch(GridMap& map, std::span<const MapItem> items, const MapConfig& cfg, int epoch,
                    const AssignObserver& observer) {
  check_items(map, items);
  map.clear_occupancy();
  map.assignment.assign(items.size(), -1);

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = learning_rate_at(cfg, epoch);
  const double sigma = sigma_at(cfg, map, epoch);
  double loss = 0.0;
  for (std::size_t idx : order) {
    const auto& item = items[idx];
    const auto match = kernels::best_vacant_cell(view(map), item.embedding, item.relevance,
                                                 cfg.omega_s, cfg.omega_r);
    if (match.cell < 0) throw Error("no vacant cell left");
    if (observer) observer(idx, match.cell, match.cost, map);
    const auto c = static_cast<std::size_t>(match.cell);
    map.occupied[c] = 1;
    map.occupant[c] = static_cast<long>(idx);
    map.assignment[idx] = match.cell;
    loss += match.cost;
    update_weights(map, match.cell, item, lr, sigma);
    update_relevance(map, match.cell, item, lr);
  }
  return loss;
}

FitResult fit(std::span<const MapItem> items, const MapConfig& cfg, const AssignObserver& observer) {
  cfg.validate();
  if (items.empty()) throw InvalidArgument("fit needs at least one item");
  const long dim = items.front().embedding.size();
  FitResult result{build_grid(static_cast<long>(items.size()), dim, cfg.slack, cfg.seed), {}};
  check_items(result.map, items);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch)
    result.loss_history.push_back(assign_epoch(result.map, items, cfg, epoch, observer));
  return result;
}

double global_loss(const GridMap& map, std::span<const MapItem> items, const MapConfig& cfg) {
  if (map.assignment.size() != items.size()) throw InvalidArgument("map has no assignment for items");
  double loss = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) loss += matching_cost(map, map.assignment[i], items[i], cfg);
  return loss;
}

double rpc(const GridMap& map, std::span<const MapItem> items, bool initial) {
  if (items.size() < 2) throw InvalidArgument("rpc needs at least two items");
  if (map.assignment.size() != items.size()) throw InvalidArgument("map has no assignment for items");
  const auto& profile = initial ? map.initial_gamma : map.gamma;
  std::vector<double> r, g;
  r.reserve(items.size());
  g.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    r.push_back(items[i].relevance);
    g.push_back(profile[static_cast<std::size_t>(map.assignment[i])]);
  }
  return stats::pearson(r, g);
}

std::vector<double> normalize_relevance(std::span<const double> raw) {
  std::vector<double> out(raw.size(), 0.5);
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

void check_invariants(const GridMap& map, std::size_t n_items) {
  if (static_cast<long>(n_items) >= map.size()) throw Error("grid not larger than item count");
  for (long k = 0; k < map.size(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (map.x[i] == 0.0 && map.y[i] == 0.0) throw Error("cell at the centre");
    if (!(map.gamma[i] >= 0.0 && map.gamma[i] <= 1.0)) throw Error("gamma outside [0, 1]");
  }
  if (map.assignment.size() != n_items) throw Error("assignment does not cover all items");
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(map.size()), 0);
  for (std::size_t item = 0; item < n_items; ++item) {
    const long c = map.assignment[item];
    if (c < 0 || c >= map.size()) throw Error("item without a cell");
    if (seen[static_cast<std::size_t>(c)]++) throw Error("two items share a cell");
    if (map.occupant[static_cast<std::size_t>(c)] != static_cast<long>(item))
      throw Error("occupant and assignment disagree");
  }
}

nlohmann::json layout_json(const GridMap& map, std::span<const MapItem> items,
                           std::span<const double> loss_history) {
  nlohmann::json cells = nlohmann::json::array();
  for (long k = 0; k < map.size(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    nlohmann::json occ = nullptr;
    if (map.occupant[i] >= 0) occ = items[static_cast<std::size_t>(map.occupant[i])].id;
    cells.push_back({{"index", k}, {"layer", map.layer[i]}, {"x", map.x[i]}, {"y", map.y[i]},
                     {"gamma", map.gamma[i]}, {"occupant", occ}});
  }
  nlohmann::json assignments = nlohmann::json::object();
  for (std::size_t i = 0; i < items.size() && i < map.assignment.size(); ++i)
    assignments[items[i].id] = map.assignment[i];
  return {{"cells", std::move(cells)},
          {"assignments", std::move(assignments)},
          {"loss_history", std::vector<double>(loss_history.begin(), loss_history.end())}};
}

}  // namespace docmap::relmap
