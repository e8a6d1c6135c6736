#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tdl/anchors.hpp"
#include "tdl/error.hpp"
#include "tdl/rng.hpp"
#include "tdl/types.hpp"

namespace tdl {

/// How embeddings are scored against anchors.
struct ScoringOptions {
  double temperature = 1.0;
  bool normalize = true;
};

struct ModelConfig {
  Index input_dim = 16;  // encoder channels d_e
  Index embed_dim = 16;  // anchor dimension d
  Index upscale = 2;     // decoder spatial factor s
  ScoringOptions scoring;

  void validate() const {
    if (input_dim < 1 || embed_dim < 1)
      throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
    if (upscale < 1) throw Error(ErrorCode::InvalidConfig, "upscale must be >= 1");
    if (!(scoring.temperature > 0.0))
      throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
  }
};

/* Frozen-encoder output: one d_e-dim feature row per patch, row-major over the grid. */
template <typename Scalar>
struct EncoderOutput {
  GridShape shape;
  RowMatrix<Scalar> features;
  std::string image_id;
};

/* Decoder output z_p, one d-dim row per patch of the upscaled grid. */
template <typename Scalar>
struct PatchEmbeddingGrid {
  GridShape shape;
  RowMatrix<Scalar> z;
};

/* Per-patch foreground probabilities g(z_p), row-major. */
template <typename Scalar>
struct LocalizationMap {
  GridShape shape;
  Vector<Scalar> scores;

  Eigen::MatrixXd as_matrix() const {
    Eigen::MatrixXd out(shape.rows, shape.cols);
    for (Index r = 0; r < shape.rows; ++r)
      for (Index c = 0; c < shape.cols; ++c)
        out(r, c) = static_cast<double>(scores(shape.flat(r, c)));
    return out;
  }
};

/* h = sum_p a_p z_p together with the weights a_p. */
template <typename Scalar>
struct GlobalEmbedding {
  Vector<Scalar> h;
  Vector<Scalar> weights;
};

inline constexpr double kAggregationEpsilon = 1e-8;
inline constexpr Index kRefineTaps = 9;

template <typename Scalar>
struct DecoderParams {
  RowMatrix<Scalar> projection;  // d x d_e
  Vector<Scalar> bias;           // d
  RowMatrix<Scalar> refine;      // d x 9 depthwise 3x3 residual kernel
};

template <typename Scalar>
struct ClassifierParams {
  Vector<Scalar> weight;  // d
  Scalar bias = 0;
};

/* Trainable parameters: decoder and patch classifier. The encoder is external. */
template <typename Scalar>
struct ModelParameters {
  DecoderParams<Scalar> decoder;
  ClassifierParams<Scalar> classifier;

  static ModelParameters zeros(const ModelConfig& cfg) {
    ModelParameters p;
    p.decoder.projection = RowMatrix<Scalar>::Zero(cfg.embed_dim, cfg.input_dim);
    p.decoder.bias = Vector<Scalar>::Zero(cfg.embed_dim);
    p.decoder.refine = RowMatrix<Scalar>::Zero(cfg.embed_dim, kRefineTaps);
    p.classifier.weight = Vector<Scalar>::Zero(cfg.embed_dim);
    p.classifier.bias = 0;
    return p;
  }

  /// Gaussian projection scaled by 1/sqrt(d_e); zero refinement and zero classifier.
  static ModelParameters initialize(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParameters p = zeros(cfg);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    for (Index i = 0; i < p.decoder.projection.rows(); ++i)
      for (Index j = 0; j < p.decoder.projection.cols(); ++j)
        p.decoder.projection(i, j) = static_cast<Scalar>(scale * rng.normal());
    return p;
  }

  Index size() const {
    return decoder.projection.size() + decoder.bias.size() + decoder.refine.size() +
           classifier.weight.size() + 1;
  }

  Vector<Scalar> flatten() const {
    Vector<Scalar> out(size());
    Index at = 0;
    auto put = [&](const auto& block) {
      for (Index r = 0; r < block.rows(); ++r)
        for (Index c = 0; c < block.cols(); ++c) out(at++) = block(r, c);
    };
    put(decoder.projection);
    put(decoder.bias);
    put(decoder.refine);
    put(classifier.weight);
    out(at++) = classifier.bias;
    return out;
  }

  void assign(const Vector<Scalar>& flat) {
    if (flat.size() != size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector size");
    Index at = 0;
    auto take = [&](auto& block) {
      for (Index r = 0; r < block.rows(); ++r)
        for (Index c = 0; c < block.cols(); ++c) block(r, c) = flat(at++);
    };
    take(decoder.projection);
    take(decoder.bias);
    take(decoder.refine);
    take(classifier.weight);
    classifier.bias = flat(at++);
  }

  bool all_finite() const {
    return decoder.projection.allFinite() && decoder.bias.allFinite() &&
           decoder.refine.allFinite() && classifier.weight.allFinite() &&
           std::isfinite(static_cast<double>(classifier.bias));
  }
};

namespace detail {

struct Tap {
  Index lo = 0;
  Index hi = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
};

/* Bilinear taps for an s-times upscale with half-pixel centres and edge clamping. */
inline std::vector<Tap> upsample_taps(Index n, Index s) {
  std::vector<Tap> taps(static_cast<std::size_t>(n * s));
  for (Index o = 0; o < n * s; ++o) {
    double x = (static_cast<double>(o) + 0.5) / static_cast<double>(s) - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(n - 1));
    Tap t;
    t.lo = static_cast<Index>(std::floor(x));
    t.hi = std::min(t.lo + 1, n - 1);
    t.w_hi = x - static_cast<double>(t.lo);
    t.w_lo = 1.0 - t.w_hi;
    taps[static_cast<std::size_t>(o)] = t;
  }
  return taps;
}

template <typename Scalar>
RowMatrix<Scalar> upsample(const RowMatrix<Scalar>& in, GridShape shape, Index s) {
  if (s == 1) return in;
  const auto rt = upsample_taps(shape.rows, s);
  const auto ct = upsample_taps(shape.cols, s);
  const GridShape out_shape{shape.rows * s, shape.cols * s};
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(out_shape.size(), in.cols());
  for (Index r = 0; r < out_shape.rows; ++r) {
    const Tap& tr = rt[static_cast<std::size_t>(r)];
    for (Index c = 0; c < out_shape.cols; ++c) {
      const Tap& tc = ct[static_cast<std::size_t>(c)];
      auto row = out.row(out_shape.flat(r, c));
      row += Scalar(tr.w_lo * tc.w_lo) * in.row(shape.flat(tr.lo, tc.lo));
      row += Scalar(tr.w_lo * tc.w_hi) * in.row(shape.flat(tr.lo, tc.hi));
      row += Scalar(tr.w_hi * tc.w_lo) * in.row(shape.flat(tr.hi, tc.lo));
      row += Scalar(tr.w_hi * tc.w_hi) * in.row(shape.flat(tr.hi, tc.hi));
    }
  }
  return out;
}

/// Adjoint of upsample().
template <typename Scalar>
RowMatrix<Scalar> upsample_adjoint(const RowMatrix<Scalar>& grad_out, GridShape shape, Index s) {
  if (s == 1) return grad_out;
  const auto rt = upsample_taps(shape.rows, s);
  const auto ct = upsample_taps(shape.cols, s);
  const GridShape out_shape{shape.rows * s, shape.cols * s};
  RowMatrix<Scalar> grad_in = RowMatrix<Scalar>::Zero(shape.size(), grad_out.cols());
  for (Index r = 0; r < out_shape.rows; ++r) {
    const Tap& tr = rt[static_cast<std::size_t>(r)];
    for (Index c = 0; c < out_shape.cols; ++c) {
      const Tap& tc = ct[static_cast<std::size_t>(c)];
      const auto g = grad_out.row(out_shape.flat(r, c));
      grad_in.row(shape.flat(tr.lo, tc.lo)) += Scalar(tr.w_lo * tc.w_lo) * g;
      grad_in.row(shape.flat(tr.lo, tc.hi)) += Scalar(tr.w_lo * tc.w_hi) * g;
      grad_in.row(shape.flat(tr.hi, tc.lo)) += Scalar(tr.w_hi * tc.w_lo) * g;
      grad_in.row(shape.flat(tr.hi, tc.hi)) += Scalar(tr.w_hi * tc.w_hi) * g;
    }
  }
  return grad_in;
}

/* Depthwise 3x3 correlation with zero padding; tap t covers offset
 * (t / 3 - 1, t % 3 - 1). */
template <typename Scalar>
RowMatrix<Scalar> depthwise3x3(const RowMatrix<Scalar>& in, GridShape shape,
                               const RowMatrix<Scalar>& kernel, bool adjoint) {
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(in.rows(), in.cols());
  for (Index r = 0; r < shape.rows; ++r)
    for (Index c = 0; c < shape.cols; ++c)
      for (Index t = 0; t < kRefineTaps; ++t) {
        const Index rr = r + t / 3 - 1;
        const Index cc = c + t % 3 - 1;
        if (rr < 0 || rr >= shape.rows || cc < 0 || cc >= shape.cols) continue;
        if (!adjoint)
          out.row(shape.flat(r, c)) +=
              in.row(shape.flat(rr, cc)).cwiseProduct(kernel.col(t).transpose());
        else
          out.row(shape.flat(rr, cc)) +=
              in.row(shape.flat(r, c)).cwiseProduct(kernel.col(t).transpose());
      }
  return out;
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace detail

/// Intermediate values decode() keeps for its backward pass.
template <typename Scalar>
struct DecoderCache {
  RowMatrix<Scalar> upsampled;
};

/* z = u + depthwise3x3(u), u = upsample(features * W^T + b). */
template <typename Scalar>
PatchEmbeddingGrid<Scalar> decode(const EncoderOutput<Scalar>& enc,
                                  const DecoderParams<Scalar>& params, Index upscale,
                                  DecoderCache<Scalar>* cache = nullptr) {
  if (enc.features.rows() != enc.shape.size())
    throw Error(ErrorCode::ShapeMismatch, "feature rows differ from grid size");
  if (enc.features.cols() != params.projection.cols())
    throw Error(ErrorCode::ShapeMismatch, "encoder channels differ from decoder input dim");
  if (upscale < 1) throw Error(ErrorCode::ShapeMismatch, "upscale must be >= 1");
  RowMatrix<Scalar> projected = enc.features * params.projection.transpose();
  projected.rowwise() += params.bias.transpose();
  const GridShape out_shape{enc.shape.rows * upscale, enc.shape.cols * upscale};
  RowMatrix<Scalar> u = detail::upsample(projected, enc.shape, upscale);
  PatchEmbeddingGrid<Scalar> grid{out_shape, u + detail::depthwise3x3(u, out_shape, params.refine, false)};
  if (cache) cache->upsampled = std::move(u);
  return grid;
}

/// Parameter gradients of decode() given dL/dz.
template <typename Scalar>
DecoderParams<Scalar> decode_backward(const EncoderOutput<Scalar>& enc,
                                      const DecoderParams<Scalar>& params,
                                      const DecoderCache<Scalar>& cache,
                                      const RowMatrix<Scalar>& grad_z, Index upscale) {
  const GridShape out_shape{enc.shape.rows * upscale, enc.shape.cols * upscale};
  const RowMatrix<Scalar>& u = cache.upsampled;
  DecoderParams<Scalar> grad;
  grad.refine = RowMatrix<Scalar>::Zero(params.refine.rows(), params.refine.cols());
  for (Index r = 0; r < out_shape.rows; ++r)
    for (Index c = 0; c < out_shape.cols; ++c)
      for (Index t = 0; t < kRefineTaps; ++t) {
        const Index rr = r + t / 3 - 1;
        const Index cc = c + t % 3 - 1;
        if (rr < 0 || rr >= out_shape.rows || cc < 0 || cc >= out_shape.cols) continue;
        grad.refine.col(t) += grad_z.row(out_shape.flat(r, c))
                                  .cwiseProduct(u.row(out_shape.flat(rr, cc)))
                                  .transpose();
      }
  const RowMatrix<Scalar> grad_u = grad_z + detail::depthwise3x3(grad_z, out_shape, params.refine, true);
  const RowMatrix<Scalar> grad_projected = detail::upsample_adjoint(grad_u, enc.shape, upscale);
  grad.projection = grad_projected.transpose() * enc.features;
  grad.bias = grad_projected.colwise().sum().transpose();
  return grad;
}

/// g(z_p) = logistic(<w, z_p> + b) for every patch.
template <typename Scalar>
LocalizationMap<Scalar> patch_scores(const PatchEmbeddingGrid<Scalar>& grid,
                                     const ClassifierParams<Scalar>& params) {
  if (grid.z.cols() != params.weight.size())
    throw Error(ErrorCode::ShapeMismatch, "classifier dimension differs from embedding dimension");
  Vector<Scalar> logits = grid.z * params.weight;
  logits.array() += params.bias;
  return {grid.shape, logits.unaryExpr([](Scalar x) { return detail::logistic(x); })};
}

/* Classifier gradients given dL/dg; adds the embedding gradient into grad_z. */
template <typename Scalar>
ClassifierParams<Scalar> patch_scores_backward(const PatchEmbeddingGrid<Scalar>& grid,
                                               const ClassifierParams<Scalar>& params,
                                               const LocalizationMap<Scalar>& map,
                                               const Vector<Scalar>& grad_g,
                                               RowMatrix<Scalar>& grad_z) {
  const Vector<Scalar> grad_logit =
      grad_g.cwiseProduct(map.scores.cwiseProduct((Scalar(1) - map.scores.array()).matrix()));
  ClassifierParams<Scalar> grad;
  grad.weight = grid.z.transpose() * grad_logit;
  grad.bias = grad_logit.sum();
  grad_z.noalias() += grad_logit * params.weight.transpose();
  return grad;
}

/* Weighted average of patch embeddings with a_p = (g_p + eps) / sum_j (g_j + eps). */
template <typename Scalar>
GlobalEmbedding<Scalar> aggregate(const PatchEmbeddingGrid<Scalar>& grid,
                                  const LocalizationMap<Scalar>& map) {
  if (map.scores.size() != grid.z.rows())
    throw Error(ErrorCode::ShapeMismatch, "map size differs from grid size");
  Vector<Scalar> weights = map.scores.array() + Scalar(kAggregationEpsilon);
  weights /= weights.sum();
  Vector<Scalar> h = grid.z.transpose() * weights;
  return {std::move(h), std::move(weights)};
}

/// Given dL/dh, adds dL/dz into grad_z and dL/dg into grad_g.
template <typename Scalar>
void aggregate_backward(const PatchEmbeddingGrid<Scalar>& grid, const LocalizationMap<Scalar>& map,
                        const GlobalEmbedding<Scalar>& global, const Vector<Scalar>& grad_h,
                        RowMatrix<Scalar>& grad_z, Vector<Scalar>& grad_g) {
  const Scalar total = (map.scores.array() + Scalar(kAggregationEpsilon)).sum();
  grad_z.noalias() += global.weights * grad_h.transpose();
  grad_g += ((grid.z * grad_h).array() - global.h.dot(grad_h)).matrix() / total;
}

template <typename Scalar>
struct Prediction {
  PatchEmbeddingGrid<Scalar> grid;
  LocalizationMap<Scalar> map;
  GlobalEmbedding<Scalar> global;
  Vector<Scalar> class_probs;
};

/* Inference. Takes no class label: localization comes from g and the class
 * from the anchors' scores of h. */
template <typename Scalar>
Prediction<Scalar> forward(const EncoderOutput<Scalar>& enc, const ModelParameters<Scalar>& params,
                           const AnchorSet<Scalar>& anchors, const ModelConfig& cfg) {
  if (cfg.embed_dim != anchors.dim())
    throw Error(ErrorCode::DimensionMismatch, "embedding dimension differs from anchor dimension");
  Prediction<Scalar> out;
  out.grid = decode(enc, params.decoder, cfg.upscale);
  out.map = patch_scores(out.grid, params.classifier);
  out.global = aggregate(out.grid, out.map);
  out.class_probs =
      class_probabilities(out.global.h, anchors, cfg.scoring.temperature, cfg.scoring.normalize);
  return out;
}

}  // namespace tdl
