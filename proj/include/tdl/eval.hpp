#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tdl/anchors.hpp"
#include "tdl/bbox.hpp"
#include "tdl/dataset.hpp"
#include "tdl/encoder.hpp"
#include "tdl/model.hpp"

namespace tdl {

struct EvalConfig {
  double iou_threshold = 0.5;  // sigma
  Index map_resolution = 256;  // maps and GT boxes are compared on an R x R canvas
  std::vector<double> thresholds = default_sweep();

  /// n evenly spaced values strictly inside (0, 1): i / (n + 1), i = 1..n.
  static std::vector<double> default_sweep(std::size_t n = 100);
  void validate() const;
};

/// Rescales to [0, 1]; a constant map becomes all zeros.
Eigen::MatrixXd min_max_normalize(const Eigen::Ref<const Eigen::MatrixXd>& map);

/// Bilinear resampling with half-pixel centres and edge clamping.
Eigen::MatrixXd resize_bilinear(const Eigen::Ref<const Eigen::MatrixXd>& map, Index rows, Index cols);

/* Tight box around the largest 4-connected component of {map > threshold}.
 * Equal-size components resolve to the one whose first pixel comes first in
 * row-major order. With no pixel above threshold the full map box is returned. */
BBox map_to_box(const Eigen::Ref<const Eigen::MatrixXd>& map, double threshold);

/// map_to_box for every threshold of an ascending sweep, in one incremental pass.
std::vector<BBox> map_to_boxes(const Eigen::Ref<const Eigen::MatrixXd>& map,
                               const std::vector<double>& thresholds);

BBox scale_box(const BBox& box, Index from_width, Index from_height, Index to_width, Index to_height);

/* A localization map (any resolution) for an image of the given pixel size
 * with its ground-truth boxes in image pixels. */
struct LocalizationTarget {
  Eigen::MatrixXd map;
  Index image_width = 0;
  Index image_height = 0;
  std::vector<BBox> gt_boxes;
};

/* IoU at every sweep threshold (max over GT boxes), after resizing to the
 * evaluation canvas and min-max normalizing. */
std::vector<double> iou_curve(const LocalizationTarget& target, const EvalConfig& cfg);

struct CurvePoint {
  double threshold = 0.0;
  double accuracy = 0.0;
};

struct BoxAccuracy {
  double value = 0.0;
  std::size_t best_index = 0;  // first sweep index attaining the maximum
  std::vector<CurvePoint> curve;
};

/// Max over thresholds of the fraction of images with IoU >= sigma.
BoxAccuracy maxboxacc(const std::vector<std::vector<double>>& iou_curves, const EvalConfig& cfg);

/// True when fewer than k classes outrank `label` (ties rank the lower index first).
bool in_top_k(const Vector<double>& probs, Index label, Index k);

Index argmax_class(const Vector<double>& probs);

/* Fraction of images whose label is in the top-k predictions and whose IoU at
 * the dataset-level best threshold reaches sigma. */
double topk_loc(const std::vector<std::vector<double>>& iou_curves,
                const std::vector<Vector<double>>& class_probs, const std::vector<Index>& labels,
                Index k, const EvalConfig& cfg);

struct ImageRecord {
  std::string id;
  double iou = 0.0;
  Index pred_class = 0;
  Index label = 0;
  bool correct = false;
};

struct EvalReport {
  std::string source;        // which map was localized
  bool uses_labels = false;  // true only for the patch-text diagnostic
  double maxboxacc = 0.0;
  double top1_loc = 0.0;
  double top5_loc = 0.0;
  double top1_cls = 0.0;
  double best_threshold = 0.0;
  std::vector<CurvePoint> curve;
  std::vector<ImageRecord> per_image;

  nlohmann::json to_json() const;
};

struct ImageEvaluation {
  std::string id;
  Index label = 0;
  LocalizationTarget target;
  Vector<double> class_probs;
};

EvalReport build_report(const std::string& source, bool uses_labels,
                        const std::vector<ImageEvaluation>& images, const EvalConfig& cfg);

/* Diagnostic map <z_p / |z_p|, t_label>, min-max normalized. Consumes the
 * ground-truth label, so it is never part of inference. */
LocalizationMap<double> patch_text_localize(const PatchEmbeddingGrid<double>& grid, Index label,
                                            const AnchorSet<double>& anchors);

struct EvaluationOptions {
  EvalConfig eval;
  bool patch_text = true;
  Index jobs = 1;
};

struct Evaluation {
  EvalReport localization;                // g-map, label-free
  std::optional<EvalReport> patch_text;   // label-consuming diagnostic

  nlohmann::json to_json() const;
};

/// Label-free localization MaxBoxAcc only; used for model selection.
double localization_maxboxacc(const ModelParameters<double>& params, const ModelConfig& model,
                              const AnchorSet<double>& anchors,
                              const std::vector<EncoderOutput<double>>& inputs,
                              const std::vector<Sample>& samples, const EvalConfig& cfg, Index jobs = 1);

Evaluation evaluate_model(const ModelParameters<double>& params, const ModelConfig& model,
                          const AnchorSet<double>& anchors, const Encoder& encoder,
                          const std::vector<Sample>& samples, const EvaluationOptions& opts);

/* Loads a checkpoint, its anchors (or anchors_override) and the split of the
 * manifest, then runs evaluate_model. Throws EmptyDataset for an empty split. */
Evaluation evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    const std::string& split, const EvaluationOptions& opts,
                    const std::string& encoder_spec = "synthetic",
                    const std::optional<std::filesystem::path>& anchors_override = std::nullopt);

}  // namespace tdl
