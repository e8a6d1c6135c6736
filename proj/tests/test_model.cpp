#include <gtest/gtest.h>

#include <type_traits>

#include "oracles.hpp"
#include "tdl/encoder.hpp"
#include "tdl/model.hpp"

using namespace tdl;

namespace {

EncoderOutput<double> random_input(Index rows, Index cols, Index channels, Rng& rng) {
  return {{rows, cols}, oracle::random_matrix(rows * cols, channels, rng), "probe"};
}

ModelParameters<double> random_params(const ModelConfig& cfg, Rng& rng) {
  ModelParameters<double> p = ModelParameters<double>::zeros(cfg);
  Eigen::VectorXd flat = oracle::random_matrix(p.size(), 1, rng) * 0.5;
  p.assign(flat);
  return p;
}

AnchorSet<double> basis_anchors(Index k, Index d) {
  std::vector<std::string> names;
  for (Index i = 0; i < k; ++i) names.push_back("c" + std::to_string(i));
  return AnchorSet<double>(RowMatrixXd::Identity(k, d), names, true);
}

}  // namespace

TEST(Decode, UpscalesShape) {
  Rng rng(1);
  ModelConfig cfg{3, 4, 2, {}};
  const auto enc = random_input(2, 2, 3, rng);
  const auto grid = decode(enc, random_params(cfg, rng).decoder, 2);
  EXPECT_EQ(grid.shape, (GridShape{4, 4}));
  EXPECT_EQ(grid.z.rows(), 16);
  EXPECT_EQ(grid.z.cols(), 4);
}

TEST(Decode, UnitScaleWithIdentityProjectionIsPassThrough) {
  Rng rng(2);
  ModelConfig cfg{5, 5, 1, {}};
  auto params = ModelParameters<double>::zeros(cfg);
  params.decoder.projection = RowMatrixXd::Identity(5, 5);
  const auto enc = random_input(3, 4, 5, rng);
  EXPECT_TRUE(decode(enc, params.decoder, 1).z == enc.features);
}

TEST(Decode, UpsamplingKeepsConstantsConstant) {
  ModelConfig cfg{1, 1, 3, {}};
  auto params = ModelParameters<double>::zeros(cfg);
  params.decoder.projection(0, 0) = 1.0;
  EncoderOutput<double> enc{{2, 3}, RowMatrixXd::Constant(6, 1, 0.7), "c"};
  const auto grid = decode(enc, params.decoder, 3);
  EXPECT_NEAR((grid.z.array() - 0.7).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(Decode, AdjointIdentityHolds) {
  Rng rng(3);
  const GridShape shape{3, 5};
  const RowMatrixXd x = oracle::random_matrix(shape.size(), 2, rng);
  const RowMatrixXd y = oracle::random_matrix(shape.size() * 4, 2, rng);
  const double lhs = (detail::upsample(x, shape, 2).array() * y.array()).sum();
  const double rhs = (x.array() * detail::upsample_adjoint(y, shape, 2).array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
  const RowMatrixXd k = oracle::random_matrix(2, 9, rng);
  const RowMatrixXd u = oracle::random_matrix(shape.size(), 2, rng);
  const RowMatrixXd v = oracle::random_matrix(shape.size(), 2, rng);
  EXPECT_NEAR((detail::depthwise3x3(u, shape, k, false).array() * v.array()).sum(),
              (u.array() * detail::depthwise3x3(v, shape, k, true).array()).sum(), 1e-12);
}

TEST(Decode, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  ModelConfig cfg{3, 4, 2, {}};
  const auto enc = random_input(3, 2, 3, rng);
  const auto params = random_params(cfg, rng);
  const RowMatrixXd probe = oracle::random_matrix(6 * 4, 4, rng);  // random linear functional of z
  auto f = [&](const Eigen::VectorXd& flat) {
    ModelParameters<double> p = params;
    p.assign(flat);
    return (decode(enc, p.decoder, 2).z.array() * probe.array()).sum();
  };
  DecoderCache<double> cache;
  decode(enc, params.decoder, 2, &cache);
  ModelParameters<double> grad = ModelParameters<double>::zeros(cfg);
  grad.decoder = decode_backward(enc, params.decoder, cache, probe, 2);
  const Eigen::VectorXd numeric = oracle::numeric_gradient(f, params.flatten());
  EXPECT_LT(oracle::max_relative_error(grad.flatten(), numeric), 1e-4);
}

TEST(Decode, RejectsChannelMismatch) {
  Rng rng(5);
  ModelConfig cfg{3, 4, 2, {}};
  const auto enc = random_input(2, 2, 5, rng);
  EXPECT_THROW(decode(enc, ModelParameters<double>::zeros(cfg).decoder, 2), Error);
}

TEST(PatchScores, ZeroClassifierGivesHalf) {
  Rng rng(6);
  PatchEmbeddingGrid<double> grid{{2, 2}, oracle::random_matrix(4, 3, rng)};
  ClassifierParams<double> c{Eigen::VectorXd::Zero(3), 0.0};
  EXPECT_TRUE((patch_scores(grid, c).scores.array() == 0.5).all());
}

TEST(PatchScores, HandEvaluatedLogistic) {
  PatchEmbeddingGrid<double> grid{{1, 1}, RowMatrixXd(1, 2)};
  grid.z << 1, 0;
  ClassifierParams<double> c{Eigen::Vector2d(2, 0), -1.0};
  EXPECT_NEAR(patch_scores(grid, c).scores(0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(patch_scores(grid, c).scores(0), 0.7311, 5e-5);
}

TEST(PatchScores, MonotoneInBias) {
  Rng rng(7);
  PatchEmbeddingGrid<double> grid{{3, 3}, oracle::random_matrix(9, 2, rng)};
  ClassifierParams<double> c{Eigen::Vector2d(0.3, -0.2), 0.0};
  Eigen::VectorXd last = patch_scores(grid, c).scores;
  for (double b : {1.0, 5.0, 20.0, 40.0}) {
    c.bias = b;
    const Eigen::VectorXd now = patch_scores(grid, c).scores;
    EXPECT_TRUE((now.array() >= last.array()).all());
    last = now;
  }
  EXPECT_NEAR(last.minCoeff(), 1.0, 1e-12);
}

TEST(Aggregate, HandComputedWeightedMean) {
  PatchEmbeddingGrid<double> grid{{1, 2}, RowMatrixXd::Identity(2, 2)};
  LocalizationMap<double> map{{1, 2}, Eigen::Vector2d(0.25, 0.75)};
  const auto global = aggregate(grid, map);
  EXPECT_NEAR(global.h(0), 0.25, 1e-7);
  EXPECT_NEAR(global.h(1), 0.75, 1e-7);
}

TEST(Aggregate, UniformAndOneHotEdgeCases) {
  Rng rng(8);
  PatchEmbeddingGrid<double> grid{{2, 3}, oracle::random_matrix(6, 4, rng)};
  LocalizationMap<double> flat{{2, 3}, Eigen::VectorXd::Constant(6, 0.3)};
  const auto uniform = aggregate(grid, flat);
  EXPECT_LT((uniform.h - grid.z.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-15);
  LocalizationMap<double> hot{{2, 3}, Eigen::VectorXd::Zero(6)};
  hot.scores(4) = 1.0;
  const auto delta = aggregate(grid, hot);
  EXPECT_LT((delta.h - grid.z.row(4).transpose()).cwiseAbs().maxCoeff(), 1e-7);
  LocalizationMap<double> zero{{2, 3}, Eigen::VectorXd::Zero(6)};
  EXPECT_NEAR(aggregate(grid, zero).weights.sum(), 1.0, 1e-15);
}

TEST(Aggregate, WeightsFormADistribution) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(50));
    PatchEmbeddingGrid<double> grid{{1, n}, oracle::random_matrix(n, 3, rng)};
    LocalizationMap<double> map{{1, n}, Eigen::VectorXd(n)};
    for (Index i = 0; i < n; ++i) map.scores(i) = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    const auto global = aggregate(grid, map);
    EXPECT_NEAR(global.weights.sum(), 1.0, 1e-12);
    EXPECT_GE(global.weights.minCoeff(), 0.0);
  }
}

TEST(Forward, UntrainedClassifierGivesFlatMapAndMeanEmbedding) {
  Rng rng(10);
  ModelConfig cfg{4, 4, 2, {}};
  const auto params = ModelParameters<double>::initialize(cfg, rng);
  const auto enc = random_input(3, 3, 4, rng);
  const auto pred = forward(enc, params, basis_anchors(3, 4), cfg);
  EXPECT_TRUE((pred.map.scores.array() == 0.5).all());
  EXPECT_LT((pred.global.h - pred.grid.z.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(pred.class_probs.sum(), 1.0, 1e-9);
}

TEST(Forward, ProbabilitiesSumToOne) {
  Rng rng(11);
  ModelConfig cfg{3, 5, 2, {0.3, true}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto pred = forward(random_input(2, 3, 3, rng), random_params(cfg, rng), basis_anchors(4, 5), cfg);
    EXPECT_NEAR(pred.class_probs.sum(), 1.0, 1e-9);
    EXPECT_TRUE((pred.map.scores.array() > 0).all() && (pred.map.scores.array() < 1).all());
  }
}

TEST(Forward, TakesNoLabel) {
  using Signature = Prediction<double> (*)(const EncoderOutput<double>&, const ModelParameters<double>&,
                                           const AnchorSet<double>&, const ModelConfig&);
  static_assert(std::is_same_v<decltype(&forward<double>), Signature>);
  SUCCEED();
}

TEST(Forward, RejectsAnchorDimensionMismatch) {
  Rng rng(12);
  ModelConfig cfg{3, 4, 1, {}};
  EXPECT_THROW(forward(random_input(2, 2, 3, rng), ModelParameters<double>::zeros(cfg), basis_anchors(2, 5), cfg),
               Error);
}

TEST(Parameters, FlattenAssignRoundTrip) {
  Rng rng(13);
  ModelConfig cfg{3, 4, 2, {}};
  const auto p = random_params(cfg, rng);
  auto q = ModelParameters<double>::zeros(cfg);
  q.assign(p.flatten());
  EXPECT_TRUE(q.flatten() == p.flatten());
  EXPECT_EQ(p.size(), 4 * 3 + 4 + 4 * 9 + 4 + 1);
}

TEST(Parameters, InitializationIsSeeded) {
  ModelConfig cfg{6, 4, 2, {}};
  Rng a(3), b(3), c(4);
  EXPECT_TRUE(ModelParameters<double>::initialize(cfg, a).flatten() ==
              ModelParameters<double>::initialize(cfg, b).flatten());
  EXPECT_FALSE(ModelParameters<double>::initialize(cfg, a).flatten() ==
               ModelParameters<double>::initialize(cfg, c).flatten());
}

TEST(Parameters, FloatInstantiation) {
  ModelConfig cfg{2, 2, 2, {}};
  auto p = ModelParameters<float>::zeros(cfg);
  p.decoder.projection.setIdentity();
  EncoderOutput<float> enc{{1, 1}, RowMatrix<float>::Ones(1, 2), "f"};
  std::vector<std::string> names{"a", "b"};
  AnchorSet<float> anchors(RowMatrix<float>::Identity(2, 2), names, true);
  const auto pred = forward(enc, p, anchors, cfg);
  EXPECT_EQ(pred.grid.shape, (GridShape{2, 2}));
  EXPECT_NEAR(pred.class_probs.sum(), 1.0f, 1e-6f);
}

TEST(Encoder, SyntheticIsIdentityAndDeterministic) {
  Rng rng(14);
  io::FeatureGrid input{{3, 3}, oracle::random_matrix(9, 4, rng)};
  SyntheticEncoder enc;
  const auto a = enc.encode(input, "x");
  EXPECT_TRUE(a.features == input.values);
  EXPECT_TRUE(enc.encode(input, "x").features == a.features);
  EXPECT_EQ(a.shape, input.shape);
}

TEST(Encoder, UnknownAdapterIsUnavailable) {
  try {
    make_encoder("clip-vit-b16");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AdapterUnavailable);
  }
  try {
    make_encoder("external:/nonexistent/weights.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AdapterUnavailable);
  }
}
