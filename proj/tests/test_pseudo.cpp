#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "tdl/error.hpp"
#include "tdl/pseudo.hpp"

using namespace tdl;

namespace {

SamplerConfig sampler(Index n_fg, Index n_bg, Index per_side) {
  SamplerConfig cfg;
  cfg.n_fg = n_fg;
  cfg.n_bg = n_bg;
  cfg.samples_per_side = per_side;
  return cfg;
}

Eigen::MatrixXd random_map(Index h, Index w, Rng& rng) {
  Eigen::MatrixXd m(h, w);
  // Mix of quantized and continuous values so that ties and empty bins occur.
  const bool quantized = rng.uniform() < 0.5;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      m(r, c) = quantized ? static_cast<double>(rng.below(6)) : rng.uniform() * rng.uniform();
  m(0, 0) = 0.0;
  m(h - 1, w - 1) = 1.5;
  return m;
}

std::set<PatchLocation> as_set(const std::vector<PatchLocation>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Otsu, BinaryMapSplitsByValue) {
  Eigen::MatrixXd m(2, 3);
  m << 0, 1, 0, 1, 1, 0;
  const double t = otsu_threshold(m);
  EXPECT_GT(t, 0.0);
  EXPECT_LT(t, 1.0);
}

TEST(Otsu, TwoClustersMatchExhaustiveSearch) {
  Eigen::MatrixXd m(10, 10);
  for (Index i = 0; i < 100; ++i) m(i / 10, i % 10) = i < 50 ? 0.1 : 0.9;
  const double t = otsu_threshold(m, 256);
  EXPECT_GT(t, 0.1);
  EXPECT_LT(t, 0.9);
  EXPECT_EQ(t, oracle::otsu(m, 256));
}

TEST(Otsu, ConstantMapIsDegenerate) {
  try {
    otsu_threshold(Eigen::MatrixXd::Constant(4, 4, 0.3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateMap);
  }
}

TEST(Otsu, AgreesWithBruteForceOnRandomMaps) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Index h = 2 + static_cast<Index>(rng.below(20));
    const Index w = 2 + static_cast<Index>(rng.below(20));
    const int bins = trial % 3 == 0 ? 8 : 256;
    const Eigen::MatrixXd m = random_map(h, w, rng);
    EXPECT_EQ(otsu_threshold(m, bins), oracle::otsu(m, bins)) << "trial " << trial;
  }
}

TEST(Otsu, SymmetricTieGoesToLowerEdge) {
  // Three equal clusters at bins 0, 2 and 4 of a 5-bin histogram: the splits
  // {0 | 2 4} and {0 2 | 4} score identically.
  Eigen::MatrixXd m(1, 6);
  m << 0.0, 0.0, 0.5, 0.5, 1.0, 1.0;
  const double t = otsu_threshold(m, 5);
  EXPECT_EQ(t, oracle::otsu(m, 5));
  EXPECT_LT(t, 0.5);
}

TEST(ToPatchGrid, IdentityAtFullResolution) {
  Rng rng(1);
  const Eigen::MatrixXd m = oracle::random_matrix(5, 4, rng);
  EXPECT_TRUE(to_patch_grid(m, 5, 4) == m);
}

TEST(ToPatchGrid, HandPooledValues) {
  Eigen::MatrixXd m(2, 2);
  m << 0, 0, 1, 1;
  EXPECT_DOUBLE_EQ(to_patch_grid(m, 1, 1)(0, 0), 0.5);
  Eigen::MatrixXd one = Eigen::MatrixXd::Zero(4, 4);
  one(0, 0) = 1.0;
  Eigen::MatrixXd expected(2, 2);
  expected << 0.25, 0, 0, 0;
  EXPECT_TRUE(to_patch_grid(one, 2, 2) == expected);
}

TEST(ToPatchGrid, RangeIsPreservedForUnevenCells) {
  Rng rng(2);
  const Eigen::MatrixXd m = oracle::random_matrix(7, 11, rng);
  const Eigen::MatrixXd g = to_patch_grid(m, 3, 4);
  EXPECT_GE(g.minCoeff(), m.minCoeff());
  EXPECT_LE(g.maxCoeff(), m.maxCoeff());
}

TEST(ToPatchGrid, RejectsLargerGrid) {
  EXPECT_THROW(to_patch_grid(Eigen::MatrixXd::Zero(2, 2), 3, 1), Error);
}

TEST(Sampler, UniqueMaximumIsTheForegroundSample) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 5);
  g(2, 3) = 1.0;
  g(0, 0) = 0.2;
  Rng rng(0);
  const auto s = sample_fg_bg(g, sampler(1, 3, 1), rng);
  ASSERT_EQ(s.fg_subset().size(), 1u);
  EXPECT_EQ(s.fg_subset()[0], (PatchLocation{2, 3}));
}

TEST(Sampler, ThreeByThreeMatchesFullSort) {
  Eigen::MatrixXd g(3, 3);
  g << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Rng rng(4);
  const auto s = sample_fg_bg(g, sampler(2, 2, 2), rng);

  std::vector<Index> order(9);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return g(a / 3, a % 3) < g(b / 3, b % 3); });
  const std::set<PatchLocation> bottom{{order[0] / 3, order[0] % 3}, {order[1] / 3, order[1] % 3}};
  const std::set<PatchLocation> top{{order[8] / 3, order[8] % 3}, {order[7] / 3, order[7] % 3}};
  EXPECT_EQ(as_set(s.fg_subset()), top);
  EXPECT_EQ(as_set(s.bg_subset()), bottom);
  EXPECT_EQ(as_set(s.fg_subset()), (std::set<PatchLocation>{{2, 2}, {2, 1}}));
  EXPECT_EQ(as_set(s.bg_subset()), (std::set<PatchLocation>{{0, 0}, {0, 1}}));
}

TEST(Sampler, TiesBreakByRowMajorIndex) {
  const Eigen::MatrixXd g = (Eigen::MatrixXd(2, 3) << 1, 1, 0, 1, 0, 0).finished();
  const auto pools = candidate_pools(g, sampler(2, 2, 1));
  EXPECT_EQ(pools.fg, (std::vector<PatchLocation>{{0, 0}, {0, 1}}));
  EXPECT_EQ(pools.bg, (std::vector<PatchLocation>{{0, 2}, {1, 1}}));
}

TEST(Sampler, InsufficientBackground) {
  // Only one cell lies below the Otsu threshold.
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(3, 3);
  g(1, 1) = 0.0;
  Rng rng(0);
  try {
    sample_fg_bg(g, sampler(2, 4, 2), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientBackground);
  }
}

TEST(Sampler, RejectsInvalidCounts) {
  Rng rng(0);
  const Eigen::MatrixXd g = oracle::random_matrix(4, 4, rng);
  EXPECT_THROW(sample_fg_bg(g, sampler(0, 2, 1), rng), Error);
  EXPECT_THROW(sample_fg_bg(g, sampler(2, 2, 3), rng), Error);
  EXPECT_THROW(sample_fg_bg(g, sampler(10, 10, 1), rng), Error);
}

TEST(Sampler, DefaultsAreTwentyPercent) {
  const auto cfg = SamplerConfig::defaults_for(576);
  EXPECT_EQ(cfg.n_fg, 115);
  EXPECT_EQ(cfg.n_bg, 115);
  EXPECT_EQ(cfg.samples_per_side, 10);
  EXPECT_EQ(cfg.histogram_bins, 256);
}

TEST(Sampler, SameStateSameDrawsSteppingStateDiffers) {
  Rng init(9);
  const Eigen::MatrixXd g = oracle::random_matrix(8, 8, init);
  Rng a(5), b(5);
  const auto cfg = sampler(20, 20, 5);
  const auto first = sample_fg_bg(g, cfg, a);
  EXPECT_EQ(first.locations, sample_fg_bg(g, cfg, b).locations);
  bool differs = false;
  for (int i = 0; i < 5 && !differs; ++i) differs = sample_fg_bg(g, cfg, a).locations != first.locations;
  EXPECT_TRUE(differs);
}

TEST(Sampler, ContractOnRandomGrids) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Index h = 4 + static_cast<Index>(rng.below(12));
    const Index w = 4 + static_cast<Index>(rng.below(12));
    const Eigen::MatrixXd g = oracle::random_matrix(h, w, rng);
    const Index n_fg = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(h * w / 4)));
    const Index n_bg = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(h * w / 2)));
    const auto cfg = sampler(n_fg, n_bg, 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min(n_fg, n_bg)))));
    const auto pools = candidate_pools(g, cfg);
    if (static_cast<Index>(pools.bg.size()) < cfg.samples_per_side) continue;
    const auto s = sample_fg_bg(g, cfg, rng);
    const auto fg = s.fg_subset(), bg = s.bg_subset();
    EXPECT_EQ(static_cast<Index>(fg.size()), cfg.samples_per_side);
    EXPECT_EQ(fg.size(), bg.size());
    std::vector<double> values(g.data(), g.data() + g.size());
    std::sort(values.begin(), values.end(), std::greater<>());
    const double nth = values[static_cast<std::size_t>(n_fg - 1)];
    const double threshold = oracle::otsu(g, cfg.histogram_bins);
    for (const auto& p : fg) {
      EXPECT_GE(g(p.row, p.col), nth);
      EXPECT_EQ(std::count(bg.begin(), bg.end(), p), 0);
    }
    for (const auto& p : bg) EXPECT_LT(g(p.row, p.col), threshold);
    EXPECT_EQ(as_set(fg).size(), fg.size());
    EXPECT_EQ(as_set(bg).size(), bg.size());
  }
}
