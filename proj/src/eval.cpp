#include "tdl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tdl/error.hpp"
#include "tdl/parallel.hpp"

namespace tdl {

namespace fs = std::filesystem;

std::vector<double> EvalConfig::default_sweep(std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
  return out;
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw Error(ErrorCode::InvalidConfig, "iou_threshold must be in (0, 1)");
  if (map_resolution < 1) throw Error(ErrorCode::InvalidConfig, "map_resolution must be positive");
  if (thresholds.empty()) throw Error(ErrorCode::InvalidConfig, "threshold sweep is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
      throw Error(ErrorCode::InvalidConfig, "sweep thresholds must lie in (0, 1)");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      throw Error(ErrorCode::InvalidConfig, "sweep thresholds must be strictly increasing");
  }
}

Eigen::MatrixXd min_max_normalize(const Eigen::Ref<const Eigen::MatrixXd>& map) {
  const double lo = map.minCoeff();
  const double hi = map.maxCoeff();
  if (!(hi - lo > 1e-12)) return Eigen::MatrixXd::Zero(map.rows(), map.cols());
  return (map.array() - lo) / (hi - lo);
}

namespace {

struct Taps {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

Taps resize_taps(Index in, Index out) {
  Taps t;
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double x = (static_cast<double>(o) + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<Index>(std::floor(x));
    t.lo.push_back(lo);
    t.hi.push_back(std::min(lo + 1, in - 1));
    t.frac.push_back(x - static_cast<double>(lo));
  }
  return t;
}

/// Disjoint-set forest over pixel indices, tracking component statistics at roots.
class Components {
 public:
  Components(Index rows, Index cols)
      : cols_(cols),
        parent_(static_cast<std::size_t>(rows * cols), -1),
        size_(static_cast<std::size_t>(rows * cols), 0),
        first_(static_cast<std::size_t>(rows * cols), 0),
        box_(static_cast<std::size_t>(rows * cols)) {}

  bool active(Index p) const { return parent_[static_cast<std::size_t>(p)] >= 0; }

  void add(Index p) {
    const auto i = static_cast<std::size_t>(p);
    parent_[i] = p;
    size_[i] = 1;
    first_[i] = p;
    const std::int64_t r = p / cols_, c = p % cols_;
    box_[i] = BBox{c, r, c + 1, r + 1};
  }

  Index find(Index p) {
    Index root = p;
    while (parent_[static_cast<std::size_t>(root)] != root) root = parent_[static_cast<std::size_t>(root)];
    while (parent_[static_cast<std::size_t>(p)] != root) {
      const Index next = parent_[static_cast<std::size_t>(p)];
      parent_[static_cast<std::size_t>(p)] = root;
      p = next;
    }
    return root;
  }

  Index unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)]) std::swap(a, b);
    const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
    parent_[ib] = a;
    size_[ia] += size_[ib];
    first_[ia] = std::min(first_[ia], first_[ib]);
    BBox& box = box_[ia];
    box.x_min = std::min(box.x_min, box_[ib].x_min);
    box.y_min = std::min(box.y_min, box_[ib].y_min);
    box.x_max = std::max(box.x_max, box_[ib].x_max);
    box.y_max = std::max(box.y_max, box_[ib].y_max);
    return a;
  }

  /// Larger component wins; equal sizes resolve to the smaller first pixel.
  bool better(Index root_a, Index root_b) const {
    const auto a = static_cast<std::size_t>(root_a), b = static_cast<std::size_t>(root_b);
    return size_[a] > size_[b] || (size_[a] == size_[b] && first_[a] < first_[b]);
  }

  const BBox& box(Index root) const { return box_[static_cast<std::size_t>(root)]; }

 private:
  Index cols_;
  std::vector<Index> parent_;
  std::vector<Index> size_;
  std::vector<Index> first_;
  std::vector<BBox> box_;
};

BBox full_box(Index rows, Index cols) { return BBox{0, 0, cols, rows}; }

}  // namespace

Eigen::MatrixXd resize_bilinear(const Eigen::Ref<const Eigen::MatrixXd>& map, Index rows, Index cols) {
  if (rows < 1 || cols < 1 || map.size() == 0)
    throw Error(ErrorCode::ShapeMismatch, "resize to an empty map");
  const Taps rt = resize_taps(map.rows(), rows);
  const Taps ct = resize_taps(map.cols(), cols);
  Eigen::MatrixXd out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const double fr = rt.frac[ri];
    for (Index c = 0; c < cols; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double fc = ct.frac[ci];
      out(r, c) = (1 - fr) * ((1 - fc) * map(rt.lo[ri], ct.lo[ci]) + fc * map(rt.lo[ri], ct.hi[ci])) +
                  fr * ((1 - fc) * map(rt.hi[ri], ct.lo[ci]) + fc * map(rt.hi[ri], ct.hi[ci]));
    }
  }
  return out;
}

BBox map_to_box(const Eigen::Ref<const Eigen::MatrixXd>& map, double threshold) {
  // Two-pass labelling: provisional labels with equivalences, then resolution.
  const Index rows = map.rows(), cols = map.cols();
  Components comps(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      if (!(map(r, c) > threshold)) continue;
      const Index p = r * cols + c;
      comps.add(p);
      if (r > 0 && comps.active(p - cols)) comps.unite(p, p - cols);
      if (c > 0 && comps.active(p - 1)) comps.unite(p, p - 1);
    }
  Index best = -1;
  for (Index p = 0; p < rows * cols; ++p) {
    if (!comps.active(p) || comps.find(p) != p) continue;
    if (best < 0 || comps.better(p, best)) best = p;
  }
  return best < 0 ? full_box(rows, cols) : comps.box(best);
}

std::vector<BBox> map_to_boxes(const Eigen::Ref<const Eigen::MatrixXd>& map,
                               const std::vector<double>& thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw Error(ErrorCode::InvalidConfig, "thresholds must be strictly increasing");
  const Index rows = map.rows(), cols = map.cols();
  const Index n = rows * cols;
  std::vector<double> values(static_cast<std::size_t>(n));
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) values[static_cast<std::size_t>(r * cols + c)] = map(r, c);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });

  // Lower thresholds switch on a superset of pixels, so components only grow
  // and merge while walking the sweep downwards.
  Components comps(rows, cols);
  std::vector<BBox> boxes(thresholds.size(), full_box(rows, cols));
  Index best = -1;
  std::size_t next = 0;
  auto consider = [&](Index p) {
    const Index root = comps.find(p);
    if (best < 0 || comps.better(root, comps.find(best))) best = root;
  };
  for (std::size_t t = thresholds.size(); t-- > 0;) {
    while (next < order.size() && values[static_cast<std::size_t>(order[next])] > thresholds[t]) {
      const Index p = order[next++];
      comps.add(p);
      const Index r = p / cols, c = p % cols;
      if (r > 0 && comps.active(p - cols)) comps.unite(p, p - cols);
      if (r + 1 < rows && comps.active(p + cols)) comps.unite(p, p + cols);
      if (c > 0 && comps.active(p - 1)) comps.unite(p, p - 1);
      if (c + 1 < cols && comps.active(p + 1)) comps.unite(p, p + 1);
      consider(p);
    }
    if (best >= 0) boxes[t] = comps.box(comps.find(best));
  }
  return boxes;
}

BBox scale_box(const BBox& box, Index from_width, Index from_height, Index to_width, Index to_height) {
  auto scale = [](std::int64_t v, Index from, Index to) {
    return static_cast<std::int64_t>(std::lround(static_cast<double>(v) * static_cast<double>(to) /
                                                 static_cast<double>(from)));
  };
  BBox out{scale(box.x_min, from_width, to_width), scale(box.y_min, from_height, to_height),
           scale(box.x_max, from_width, to_width), scale(box.y_max, from_height, to_height)};
  if (out.x_max <= out.x_min) out.x_max = out.x_min + 1;
  if (out.y_max <= out.y_min) out.y_max = out.y_min + 1;
  return out;
}

std::vector<double> iou_curve(const LocalizationTarget& target, const EvalConfig& cfg) {
  if (target.gt_boxes.empty()) throw Error(ErrorCode::InvalidManifest, "image without a GT box");
  if (target.image_width < 1 || target.image_height < 1)
    throw Error(ErrorCode::InvalidManifest, "image size unknown");
  const Index res = cfg.map_resolution;
  const Eigen::MatrixXd canvas = min_max_normalize(resize_bilinear(target.map, res, res));
  const std::vector<BBox> boxes = map_to_boxes(canvas, cfg.thresholds);
  std::vector<BBox> gts;
  for (const BBox& gt : target.gt_boxes)
    gts.push_back(scale_box(gt, target.image_width, target.image_height, res, res));
  std::vector<double> out(boxes.size(), 0.0);
  for (std::size_t t = 0; t < boxes.size(); ++t)
    for (const BBox& gt : gts) out[t] = std::max(out[t], iou(boxes[t], gt));
  return out;
}

BoxAccuracy maxboxacc(const std::vector<std::vector<double>>& iou_curves, const EvalConfig& cfg) {
  if (iou_curves.empty()) throw Error(ErrorCode::EmptyDataset, "no images to evaluate");
  const std::size_t t_count = cfg.thresholds.size();
  BoxAccuracy out;
  out.value = -1.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    std::size_t hits = 0;
    for (const auto& curve : iou_curves) {
      if (curve.size() != t_count) throw Error(ErrorCode::ShapeMismatch, "IoU curve length differs from sweep");
      if (curve[t] >= cfg.iou_threshold) ++hits;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(iou_curves.size());
    out.curve.push_back({cfg.thresholds[t], acc});
    if (acc > out.value) {
      out.value = acc;
      out.best_index = t;
    }
  }
  return out;
}

Index argmax_class(const Vector<double>& probs) {
  Index best = 0;
  for (Index k = 1; k < probs.size(); ++k)
    if (probs(k) > probs(best)) best = k;
  return best;
}

bool in_top_k(const Vector<double>& probs, Index label, Index k) {
  Index ahead = 0;
  for (Index j = 0; j < probs.size(); ++j)
    if (probs(j) > probs(label) || (probs(j) == probs(label) && j < label)) ++ahead;
  return ahead < k;
}

double topk_loc(const std::vector<std::vector<double>>& iou_curves,
                const std::vector<Vector<double>>& class_probs, const std::vector<Index>& labels,
                Index k, const EvalConfig& cfg) {
  if (iou_curves.size() != class_probs.size() || iou_curves.size() != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "per-image inputs differ in length");
  const BoxAccuracy box = maxboxacc(iou_curves, cfg);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < iou_curves.size(); ++i)
    if (in_top_k(class_probs[i], labels[i], k) && iou_curves[i][box.best_index] >= cfg.iou_threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(iou_curves.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["source"] = source;
  j["uses_labels"] = uses_labels;
  j["maxboxacc"] = maxboxacc;
  j["top1_loc"] = top1_loc;
  j["top5_loc"] = top5_loc;
  j["top1_cls"] = top1_cls;
  j["best_threshold"] = best_threshold;
  j["curve"] = nlohmann::json::array();
  for (const CurvePoint& p : curve) j["curve"].push_back({{"threshold", p.threshold}, {"acc", p.accuracy}});
  j["per_image"] = nlohmann::json::array();
  for (const ImageRecord& r : per_image)
    j["per_image"].push_back(
        {{"id", r.id}, {"iou", r.iou}, {"pred_class", r.pred_class}, {"label", r.label}, {"correct", r.correct}});
  return j;
}

EvalReport build_report(const std::string& source, bool uses_labels,
                        const std::vector<ImageEvaluation>& images, const EvalConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw Error(ErrorCode::EmptyDataset, "no images to evaluate");
  std::vector<std::vector<double>> curves;
  std::vector<Vector<double>> probs;
  std::vector<Index> labels;
  for (const ImageEvaluation& im : images) {
    curves.push_back(iou_curve(im.target, cfg));
    probs.push_back(im.class_probs);
    labels.push_back(im.label);
  }
  const BoxAccuracy box = maxboxacc(curves, cfg);

  EvalReport report;
  report.source = source;
  report.uses_labels = uses_labels;
  report.maxboxacc = box.value;
  report.best_threshold = cfg.thresholds[box.best_index];
  report.curve = box.curve;
  report.top1_loc = topk_loc(curves, probs, labels, 1, cfg);
  report.top5_loc = topk_loc(curves, probs, labels, 5, cfg);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ImageRecord r;
    r.id = images[i].id;
    r.iou = curves[i][box.best_index];
    r.pred_class = argmax_class(probs[i]);
    r.label = labels[i];
    r.correct = r.pred_class == r.label;
    correct += r.correct ? 1 : 0;
    report.per_image.push_back(std::move(r));
  }
  report.top1_cls = static_cast<double>(correct) / static_cast<double>(images.size());
  return report;
}

LocalizationMap<double> patch_text_localize(const PatchEmbeddingGrid<double>& grid, Index label,
                                            const AnchorSet<double>& anchors) {
  if (label < 0 || label >= anchors.num_classes())
    throw Error(ErrorCode::InvalidConfig, "label out of range");
  Vector<double> s(grid.z.rows());
  for (Index p = 0; p < grid.z.rows(); ++p) s(p) = score(grid.z.row(p).transpose(), label, anchors, true);
  const double lo = s.minCoeff(), hi = s.maxCoeff();
  if (hi - lo > 1e-12)
    s = (s.array() - lo) / (hi - lo);
  else
    s.setZero();
  return {grid.shape, s};
}

nlohmann::json Evaluation::to_json() const {
  nlohmann::json j = localization.to_json();
  if (patch_text) j["patch_text"] = patch_text->to_json();
  return j;
}

double localization_maxboxacc(const ModelParameters<double>& params, const ModelConfig& model,
                              const AnchorSet<double>& anchors,
                              const std::vector<EncoderOutput<double>>& inputs,
                              const std::vector<Sample>& samples, const EvalConfig& cfg, Index jobs) {
  if (inputs.size() != samples.size()) throw Error(ErrorCode::ShapeMismatch, "inputs differ from samples");
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no validation images");
  std::vector<std::vector<double>> curves(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const Prediction<double> pred = forward(inputs[i], params, anchors, model);
    curves[i] = iou_curve({pred.map.as_matrix(), samples[i].image_width, samples[i].image_height,
                           samples[i].gt_boxes},
                          cfg);
  });
  return maxboxacc(curves, cfg).value;
}

Evaluation evaluate_model(const ModelParameters<double>& params, const ModelConfig& model,
                          const AnchorSet<double>& anchors, const Encoder& encoder,
                          const std::vector<Sample>& samples, const EvaluationOptions& opts) {
  opts.eval.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no images to evaluate");
  std::vector<ImageEvaluation> g_maps(samples.size()), text_maps(samples.size());
  parallel_for(samples.size(), opts.jobs, [&](std::size_t i) {
    const Sample& s = samples[i];
    const EncoderOutput<double> enc = encoder.encode(s.features, s.id);
    // Inference: no label enters here.
    const Prediction<double> pred = forward(enc, params, anchors, model);
    g_maps[i] = {s.id, s.label, {pred.map.as_matrix(), s.image_width, s.image_height, s.gt_boxes},
                 pred.class_probs};
    if (opts.patch_text) {
      const LocalizationMap<double> text = patch_text_localize(pred.grid, s.label, anchors);
      text_maps[i] = {s.id, s.label, {text.as_matrix(), s.image_width, s.image_height, s.gt_boxes},
                      pred.class_probs};
    }
  });
  Evaluation out;
  out.localization = build_report("patch_classifier", false, g_maps, opts.eval);
  if (opts.patch_text) out.patch_text = build_report("patch_text", true, text_maps, opts.eval);
  return out;
}

Evaluation evaluate(const fs::path& checkpoint, const fs::path& manifest, const std::string& split,
                    const EvaluationOptions& opts, const std::string& encoder_spec,
                    const std::optional<fs::path>& anchors_override) {
  const io::Checkpoint ckpt = io::read_checkpoint(checkpoint);
  fs::path anchors_path = anchors_override.value_or(fs::path(ckpt.anchors_path));
  if (!anchors_override && anchors_path.is_relative() && !fs::exists(anchors_path))
    anchors_path = checkpoint.parent_path() / anchors_path;
  const AnchorSet<double> anchors = io::load_anchors(anchors_path);
  if (!anchors_override && !ckpt.anchors_hash.empty() && io::file_hash(anchors_path) != ckpt.anchors_hash)
    throw Error(ErrorCode::FormatError, "anchor file " + anchors_path.string() + " does not match the checkpoint hash");
  const auto encoder = make_encoder(encoder_spec);
  const std::vector<Sample> samples = select_split(load_samples(manifest), split);
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "split '" + split + "' is empty");
  return evaluate_model(ckpt.params, ckpt.model, anchors, *encoder, samples, opts);
}

}  // namespace tdl
