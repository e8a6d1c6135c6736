#include "tdl/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tdl/error.hpp"

namespace tdl {

SamplerConfig SamplerConfig::defaults_for(Index num_patches) {
  SamplerConfig cfg;
  cfg.n_fg = std::max<Index>(1, static_cast<Index>(std::lround(0.2 * static_cast<double>(num_patches))));
  cfg.n_bg = cfg.n_fg;
  cfg.samples_per_side = std::min<Index>(10, cfg.n_fg);
  return cfg;
}

void SamplerConfig::validate(Index num_patches) const {
  if (n_fg < 1 || n_bg < 1 || samples_per_side < 1)
    throw Error(ErrorCode::InvalidConfig, "sampler counts must be positive");
  if (samples_per_side > std::min(n_fg, n_bg))
    throw Error(ErrorCode::InvalidConfig, "samples_per_side exceeds a candidate pool size");
  if (n_fg + n_bg > num_patches)
    throw Error(ErrorCode::InvalidConfig, "n_fg + n_bg exceeds the number of patches");
  if (histogram_bins < 2) throw Error(ErrorCode::InvalidConfig, "histogram needs at least 2 bins");
}

std::vector<PatchLocation> SampledPatchSet::fg_subset() const {
  std::vector<PatchLocation> out;
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (labels[i] == 1) out.push_back(locations[i]);
  return out;
}

std::vector<PatchLocation> SampledPatchSet::bg_subset() const {
  std::vector<PatchLocation> out;
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (labels[i] == 0) out.push_back(locations[i]);
  return out;
}

std::vector<double> histogram_edges(double lo, double hi, int bins) {
  std::vector<double> edges(static_cast<std::size_t>(bins));
  edges[0] = lo;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (int i = 1; i < bins; ++i) edges[static_cast<std::size_t>(i)] = lo + i * width;
  return edges;
}

double otsu_threshold(const Eigen::Ref<const Eigen::MatrixXd>& values, int bins) {
  if (bins < 2) throw Error(ErrorCode::InvalidConfig, "histogram needs at least 2 bins");
  if (values.size() == 0) throw Error(ErrorCode::DegenerateMap, "empty map");
  if (!values.allFinite()) throw Error(ErrorCode::DegenerateMap, "non-finite activation");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) throw Error(ErrorCode::DegenerateMap, "all activations are equal");

  const std::vector<double> edges = histogram_edges(lo, hi, bins);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values(i % values.rows(), i / values.rows());
    const auto bin = std::upper_bound(edges.begin() + 1, edges.end(), v) - (edges.begin() + 1);
    ++counts[static_cast<std::size_t>(bin)];
  }

  const std::int64_t n = values.size();
  std::int64_t total_sum = 0;
  for (int b = 0; b < bins; ++b) total_sum += b * counts[static_cast<std::size_t>(b)];

  // Between-class variance on bin indices, up to the constant factor width^2 / n^2:
  // (S0 * n - S * n0)^2 / (n0 * n1). Kept exact as quotient and remainder.
  using Wide = __int128;
  Wide best_q = -1, best_r = 0, best_den = 1;
  int best_edge = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int i = 1; i < bins; ++i) {
    n0 += counts[static_cast<std::size_t>(i - 1)];
    s0 += (i - 1) * counts[static_cast<std::size_t>(i - 1)];
    const std::int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const Wide a = static_cast<Wide>(s0) * n - static_cast<Wide>(total_sum) * n0;
    const Wide den = static_cast<Wide>(n0) * n1;
    const Wide q = a * a / den;
    const Wide r = a * a % den;
    if (q > best_q || (q == best_q && r * best_den > best_r * den)) {
      best_q = q;
      best_r = r;
      best_den = den;
      best_edge = i;
    }
  }
  return edges[static_cast<std::size_t>(best_edge)];
}

Eigen::MatrixXd to_patch_grid(const Eigen::Ref<const Eigen::MatrixXd>& values, Index rows,
                              Index cols) {
  const Index h = values.rows();
  const Index w = values.cols();
  if (rows < 1 || cols < 1 || rows > h || cols > w)
    throw Error(ErrorCode::DimensionMismatch, "patch grid must be no larger than the map");
  Eigen::MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Index r0 = i * h / rows, r1 = (i + 1) * h / rows;
    for (Index j = 0; j < cols; ++j) {
      const Index c0 = j * w / cols, c1 = (j + 1) * w / cols;
      out(i, j) = values.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

CandidatePools candidate_pools(const Eigen::Ref<const Eigen::MatrixXd>& grid,
                               const SamplerConfig& cfg) {
  const Index cols = grid.cols();
  const Index total = grid.size();
  cfg.validate(total);

  CandidatePools pools;
  pools.threshold = otsu_threshold(grid, cfg.histogram_bins);

  auto value_at = [&](Index flat) { return grid(flat / cols, flat % cols); };
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});

  // Descending by value; ties by row-major index.
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return value_at(a) > value_at(b); });
  std::vector<bool> is_fg(static_cast<std::size_t>(total), false);
  for (Index i = 0; i < cfg.n_fg; ++i) {
    const Index flat = order[static_cast<std::size_t>(i)];
    is_fg[static_cast<std::size_t>(flat)] = true;
    pools.fg.push_back({flat / cols, flat % cols});
  }

  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return value_at(a) < value_at(b); });
  for (Index i = 0; i < cfg.n_bg; ++i) {
    const Index flat = order[static_cast<std::size_t>(i)];
    if (is_fg[static_cast<std::size_t>(flat)] || !(value_at(flat) < pools.threshold)) continue;
    pools.bg.push_back({flat / cols, flat % cols});
  }
  return pools;
}

namespace {

std::vector<PatchLocation> draw(std::vector<PatchLocation> pool, Index count, Rng& rng) {
  // Partial Fisher-Yates.
  for (Index i = 0; i < count; ++i) {
    const auto remaining = static_cast<std::uint64_t>(pool.size()) - static_cast<std::uint64_t>(i);
    const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.below(remaining));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace

SampledPatchSet sample_fg_bg(const Eigen::Ref<const Eigen::MatrixXd>& grid,
                             const SamplerConfig& cfg, Rng& rng) {
  const CandidatePools pools = candidate_pools(grid, cfg);
  if (static_cast<Index>(pools.bg.size()) < cfg.samples_per_side)
    throw Error(ErrorCode::InsufficientBackground,
                "background pool has " + std::to_string(pools.bg.size()) + " cells, need " +
                    std::to_string(cfg.samples_per_side));
  SampledPatchSet out;
  for (const auto& loc : draw(pools.fg, cfg.samples_per_side, rng)) {
    out.locations.push_back(loc);
    out.labels.push_back(1);
  }
  for (const auto& loc : draw(pools.bg, cfg.samples_per_side, rng)) {
    out.locations.push_back(loc);
    out.labels.push_back(0);
  }
  return out;
}

}  // namespace tdl
