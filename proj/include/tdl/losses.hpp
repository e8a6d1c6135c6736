#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tdl/anchors.hpp"
#include "tdl/error.hpp"
#include "tdl/model.hpp"
#include "tdl/pseudo.hpp"

namespace tdl {

struct LossWeights {
  double kd = 1.0;   // lambda_1
  double pcl = 1.0;  // lambda_2
  double icl = 1.0;  // lambda_3

  void validate() const {
    if (kd < 0 || pcl < 0 || icl < 0 || !std::isfinite(kd + pcl + icl))
      throw Error(ErrorCode::InvalidConfig, "loss weights must be finite and non-negative");
    if (kd == 0 && pcl == 0 && icl == 0)
      throw Error(ErrorCode::InvalidConfig, "at least one loss weight must be positive");
  }
};

struct LossBreakdown {
  double l_kd = 0.0;
  double p_cl = 0.0;
  double i_cl = 0.0;
  double total = 0.0;
};

struct LossOptions {
  ScoringOptions scoring;
  bool mean_over_patches = false;  // divide the patch sums by the sample count
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Cross-entropy of anchor-softmax probabilities against a class, and its gradient w.r.t. v.
template <typename Scalar>
struct AnchorCrossEntropy {
  Scalar value = 0;
  Vector<Scalar> grad;
};

template <typename Derived>
AnchorCrossEntropy<typename Derived::Scalar> anchor_cross_entropy(
    const Eigen::MatrixBase<Derived>& v, Index label,
    const AnchorSet<typename Derived::Scalar>& anchors, const ScoringOptions& scoring) {
  using Scalar = typename Derived::Scalar;
  if (label < 0 || label >= anchors.num_classes())
    throw Error(ErrorCode::InvalidConfig, "label out of range");
  const Scalar inv_t = Scalar(1.0 / scoring.temperature);
  Scalar norm = 1;
  if (scoring.normalize) {
    norm = v.norm();
    if (norm < Scalar(1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  }
  const Vector<Scalar> unit = v.derived() / norm;
  const Vector<Scalar> logits = (anchors.matrix() * unit) * inv_t;
  const Scalar top = logits.maxCoeff();
  const Scalar log_partition = std::log((logits.array() - top).exp().sum()) + top;

  AnchorCrossEntropy<Scalar> out;
  out.value = log_partition - logits(label);
  Vector<Scalar> grad_logits = (logits.array() - log_partition).exp().matrix();
  grad_logits(label) -= Scalar(1);
  const Vector<Scalar> grad_unit = anchors.matrix().transpose() * grad_logits * inv_t;
  out.grad = scoring.normalize ? Vector<Scalar>((grad_unit - unit * unit.dot(grad_unit)) / norm)
                               : grad_unit;
  return out;
}

/// Loss value with its gradient w.r.t. the patch embeddings.
template <typename Scalar>
struct EmbeddingLoss {
  Scalar value = 0;
  RowMatrix<Scalar> grad_z;
};

/// Loss value with its gradient w.r.t. the per-patch FG probabilities.
template <typename Scalar>
struct MapLoss {
  Scalar value = 0;
  Vector<Scalar> grad_g;
};

/// Loss value with its gradient w.r.t. the global embedding.
template <typename Scalar>
struct GlobalLoss {
  Scalar value = 0;
  Vector<Scalar> grad_h;
};

/* Distillation: sum over FG patches of CE(y, softmax(f(z_p, t_k))). Patches
 * outside fg contribute neither value nor gradient; an empty fg gives 0. */
template <typename Scalar>
EmbeddingLoss<Scalar> kd_loss(const PatchEmbeddingGrid<Scalar>& grid,
                              const std::vector<PatchLocation>& fg, Index label,
                              const AnchorSet<Scalar>& anchors, const LossOptions& opts = {}) {
  EmbeddingLoss<Scalar> out;
  out.grad_z = RowMatrix<Scalar>::Zero(grid.z.rows(), grid.z.cols());
  if (fg.empty()) return out;
  const Scalar scale = opts.mean_over_patches ? Scalar(1.0 / static_cast<double>(fg.size())) : Scalar(1);
  for (const PatchLocation& loc : fg) {
    if (loc.row < 0 || loc.row >= grid.shape.rows || loc.col < 0 || loc.col >= grid.shape.cols)
      throw Error(ErrorCode::ShapeMismatch, "FG location outside the patch grid");
    const Index p = grid.shape.flat(loc.row, loc.col);
    const auto ce = anchor_cross_entropy(grid.z.row(p).transpose(), label, anchors, opts.scoring);
    out.value += scale * ce.value;
    out.grad_z.row(p) += scale * ce.grad.transpose();
  }
  return out;
}

/* Patch FG/BG classification: sum over sampled locations of binary CE against
 * the pseudo-label, with g clamped to [1e-7, 1 - 1e-7]. */
template <typename Scalar>
MapLoss<Scalar> patch_cls_loss(const LocalizationMap<Scalar>& map, const SampledPatchSet& sampled,
                               const LossOptions& opts = {}) {
  MapLoss<Scalar> out;
  out.grad_g = Vector<Scalar>::Zero(map.scores.size());
  if (sampled.locations.empty()) return out;
  const Scalar scale =
      opts.mean_over_patches ? Scalar(1.0 / static_cast<double>(sampled.locations.size())) : Scalar(1);
  const Scalar lo = Scalar(kProbabilityClamp);
  const Scalar hi = Scalar(1) - lo;
  for (std::size_t i = 0; i < sampled.locations.size(); ++i) {
    const PatchLocation& loc = sampled.locations[i];
    if (loc.row < 0 || loc.row >= map.shape.rows || loc.col < 0 || loc.col >= map.shape.cols)
      throw Error(ErrorCode::ShapeMismatch, "sampled location outside the map");
    const Index p = map.shape.flat(loc.row, loc.col);
    const Scalar g = map.scores(p);
    const Scalar clamped = std::clamp(g, lo, hi);
    const bool fg = sampled.labels[i] == 1;
    out.value += scale * (fg ? -std::log(clamped) : -std::log(Scalar(1) - clamped));
    if (g > lo && g < hi) out.grad_g(p) += scale * (fg ? -Scalar(1) / g : Scalar(1) / (Scalar(1) - g));
  }
  return out;
}

/// Image classification: CE(y, softmax(f(h, t_k))).
template <typename Scalar>
GlobalLoss<Scalar> image_cls_loss(const GlobalEmbedding<Scalar>& global, Index label,
                                  const AnchorSet<Scalar>& anchors, const LossOptions& opts = {}) {
  const auto ce = anchor_cross_entropy(global.h, label, anchors, opts.scoring);
  return {ce.value, ce.grad};
}

inline LossBreakdown total_loss(double l_kd, double p_cl, double i_cl, const LossWeights& w) {
  return {l_kd, p_cl, i_cl, w.kd * l_kd + w.pcl * p_cl + w.icl * i_cl};
}

template <typename Scalar>
struct ObjectiveResult {
  LossBreakdown losses;
  ModelParameters<Scalar> grad;
};

/* Weighted objective for one image and its gradient w.r.t. every trainable
 * parameter. Terms with zero weight are still evaluated for reporting. */
template <typename Scalar>
ObjectiveResult<Scalar> objective(const EncoderOutput<Scalar>& enc,
                                  const ModelParameters<Scalar>& params,
                                  const SampledPatchSet& sampled, Index label,
                                  const AnchorSet<Scalar>& anchors, const ModelConfig& cfg,
                                  const LossWeights& weights, const LossOptions& opts) {
  DecoderCache<Scalar> cache;
  const PatchEmbeddingGrid<Scalar> grid = decode(enc, params.decoder, cfg.upscale, &cache);
  const LocalizationMap<Scalar> map = patch_scores(grid, params.classifier);
  const GlobalEmbedding<Scalar> global = aggregate(grid, map);

  const auto kd = kd_loss(grid, sampled.fg_subset(), label, anchors, opts);
  const auto pcl = patch_cls_loss(map, sampled, opts);
  const auto icl = image_cls_loss(global, label, anchors, opts);

  ObjectiveResult<Scalar> out;
  out.losses = total_loss(static_cast<double>(kd.value), static_cast<double>(pcl.value),
                          static_cast<double>(icl.value), weights);

  RowMatrix<Scalar> grad_z = Scalar(weights.kd) * kd.grad_z;
  Vector<Scalar> grad_g = Scalar(weights.pcl) * pcl.grad_g;
  const Vector<Scalar> grad_h = Scalar(weights.icl) * icl.grad_h;
  aggregate_backward(grid, map, global, grad_h, grad_z, grad_g);
  out.grad.classifier = patch_scores_backward(grid, params.classifier, map, grad_g, grad_z);
  out.grad.decoder = decode_backward(enc, params.decoder, cache, grad_z, cfg.upscale);
  return out;
}

}  // namespace tdl
