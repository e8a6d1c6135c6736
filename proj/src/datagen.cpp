#include "tdl/datagen.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/QR>

#include "tdl/error.hpp"
#include "tdl/rng.hpp"

namespace tdl {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InfeasibleConfig, msg); };
  if (num_classes < 2) fail("need at least two classes");
  if (num_classes > anchor_dim) fail("num_classes exceeds anchor_dim");
  if (num_classes + distractors > input_dim) fail("class and distractor directions exceed input_dim");
  if (grid < 1 || patch_pixels < 1) fail("grid and patch_pixels must be positive");
  if (block_min < 1 || block_min > block_max || block_max > grid) fail("FG block range must fit in the grid");
  if (block_max >= grid) fail("FG block must leave some background");
  if (distractors < 0) fail("negative distractor count");
  if (noise < 0 || fg_amplitude <= 0 || bg_amplitude < 0) fail("amplitudes must be non-negative");
  if (cam_corruption < 0 || cam_corruption > 1) fail("cam_corruption must be in [0, 1]");
  if (cam_jitter < 0 || cam_jitter >= 0.5) fail("cam_jitter must be in [0, 0.5)");
  if (!(anchor_correlation > -1 && anchor_correlation < 1)) fail("anchor_correlation must be in (-1, 1)");
  if (correlated_pairs < 0 || 2 * correlated_pairs > num_classes) fail("too many correlated pairs");
  for (Index n : {n_train, n_val, n_test})
    if (n < 0 || n % num_classes != 0) fail("split sizes must be multiples of num_classes");
  if (n_train + n_val + n_test == 0) fail("empty dataset");
}

void SynthConfig::apply(const KeyValues& kv) {
  num_classes = kv.get_int("num_classes", num_classes);
  grid = kv.get_int("grid", grid);
  input_dim = kv.get_int("input_dim", input_dim);
  anchor_dim = kv.get_int("anchor_dim", anchor_dim);
  block_min = kv.get_int("block_min", block_min);
  block_max = kv.get_int("block_max", block_max);
  patch_pixels = kv.get_int("patch_pixels", patch_pixels);
  distractors = kv.get_int("distractors", distractors);
  fg_amplitude = kv.get_double("fg_amplitude", fg_amplitude);
  bg_amplitude = kv.get_double("bg_amplitude", bg_amplitude);
  noise = kv.get_double("noise", noise);
  cam_corruption = kv.get_double("cam_corruption", cam_corruption);
  cam_jitter = kv.get_double("cam_jitter", cam_jitter);
  anchor_correlation = kv.get_double("anchor_correlation", anchor_correlation);
  correlated_pairs = kv.get_int("correlated_pairs", correlated_pairs);
  n_train = kv.get_int("n_train", n_train);
  n_val = kv.get_int("n_val", n_val);
  n_test = kv.get_int("n_test", n_test);
  seed = kv.get_uint("seed", seed);
}

KeyValues SynthConfig::to_key_values() const {
  KeyValues kv;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  kv.set("num_classes", std::to_string(num_classes));
  kv.set("grid", std::to_string(grid));
  kv.set("input_dim", std::to_string(input_dim));
  kv.set("anchor_dim", std::to_string(anchor_dim));
  kv.set("block_min", std::to_string(block_min));
  kv.set("block_max", std::to_string(block_max));
  kv.set("patch_pixels", std::to_string(patch_pixels));
  kv.set("distractors", std::to_string(distractors));
  kv.set("fg_amplitude", num(fg_amplitude));
  kv.set("bg_amplitude", num(bg_amplitude));
  kv.set("noise", num(noise));
  kv.set("cam_corruption", num(cam_corruption));
  kv.set("cam_jitter", num(cam_jitter));
  kv.set("anchor_correlation", num(anchor_correlation));
  kv.set("correlated_pairs", std::to_string(correlated_pairs));
  kv.set("n_train", std::to_string(n_train));
  kv.set("n_val", std::to_string(n_val));
  kv.set("n_test", std::to_string(n_test));
  kv.set("seed", std::to_string(seed));
  return kv;
}

namespace {

/// Columns of an orthonormal basis for `count` random Gaussian directions in R^dim.
Eigen::MatrixXd random_orthonormal(Index dim, Index count, Rng& rng) {
  Eigen::MatrixXd g(dim, count);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < dim; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(dim, count);
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

SyntheticDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset out;
  out.config = cfg;

  const Index k_classes = cfg.num_classes;
  const Eigen::MatrixXd dirs = random_orthonormal(cfg.input_dim, k_classes + cfg.distractors, rng);
  out.class_directions = dirs.leftCols(k_classes).transpose();
  out.distractor_directions = dirs.rightCols(cfg.distractors).transpose();

  // Raw class embeddings: an orthonormal frame, with designated pairs bent to
  // cosine anchor_correlation, then each row rescaled.
  const Eigen::MatrixXd frame = random_orthonormal(cfg.anchor_dim, k_classes, rng);
  RowMatrixXd anchors = frame.transpose();
  const double rho = cfg.anchor_correlation;
  for (Index p = 0; p < cfg.correlated_pairs; ++p) {
    const Index a = 2 * p, b = 2 * p + 1;
    anchors.row(b) = rho * frame.col(a).transpose() + std::sqrt(1 - rho * rho) * frame.col(b).transpose();
  }
  for (Index k = 0; k < k_classes; ++k) anchors.row(k) *= rng.uniform(0.5, 2.0);
  out.raw_anchors.rows = anchors.unaryExpr(&to_f32);
  for (Index k = 0; k < k_classes; ++k) {
    std::ostringstream name;
    name << "class_" << std::setw(2) << std::setfill('0') << k;
    out.raw_anchors.class_names.push_back(name.str());
  }
  out.raw_anchors.orthogonalized = false;

  const Index side = cfg.grid * cfg.patch_pixels;
  const std::pair<const char*, Index> splits[] = {
      {"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  for (const auto& [split, count] : splits) {
    std::vector<Index> labels(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = i % k_classes;
    shuffle(labels, rng);

    for (Index i = 0; i < count; ++i) {
      Sample s;
      std::ostringstream id;
      id << split << '_' << std::setw(4) << std::setfill('0') << i;
      s.id = id.str();
      s.split = split;
      s.label = labels[static_cast<std::size_t>(i)];

      const Index bh = cfg.block_min + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.block_max - cfg.block_min + 1)));
      const Index bw = cfg.block_min + static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.block_max - cfg.block_min + 1)));
      const Index r0 = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.grid - bh + 1)));
      const Index c0 = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cfg.grid - bw + 1)));
      auto in_block = [&](Index r, Index c) { return r >= r0 && r < r0 + bh && c >= c0 && c < c0 + bw; };

      s.features.shape = {cfg.grid, cfg.grid};
      s.features.values.resize(cfg.grid * cfg.grid, cfg.input_dim);
      for (Index r = 0; r < cfg.grid; ++r)
        for (Index c = 0; c < cfg.grid; ++c) {
          Eigen::RowVectorXd f;
          if (in_block(r, c)) {
            f = cfg.fg_amplitude * out.class_directions.row(s.label);
          } else {
            f = Eigen::RowVectorXd::Zero(cfg.input_dim);
            for (Index j = 0; j < cfg.distractors; ++j)
              f += rng.uniform(0.0, cfg.bg_amplitude) * out.distractor_directions.row(j);
          }
          for (Index ch = 0; ch < cfg.input_dim; ++ch) f(ch) += cfg.noise * rng.normal();
          s.features.values.row(s.features.shape.flat(r, c)) = f.unaryExpr(&to_f32);
        }

      // Pixel-level teacher CAM.
      s.cam.resize(side, side);
      std::vector<Index> inside, outside;
      for (Index y = 0; y < side; ++y)
        for (Index x = 0; x < side; ++x) {
          const bool fg = in_block(y / cfg.patch_pixels, x / cfg.patch_pixels);
          s.cam(y, x) = fg ? 1.0 - cfg.cam_jitter * rng.uniform() : cfg.cam_jitter * rng.uniform();
          (fg ? inside : outside).push_back(y * side + x);
        }
      const auto moved = static_cast<Index>(std::ceil(cfg.cam_corruption * static_cast<double>(inside.size())));
      if (moved > static_cast<Index>(outside.size()))
        throw Error(ErrorCode::InfeasibleConfig, "CAM corruption exceeds the background area");
      if (moved > 0) {
        shuffle(inside, rng);
        shuffle(outside, rng);
        for (Index m = 0; m < moved; ++m) {
          const Index pin = inside[static_cast<std::size_t>(m)];
          const Index pout = outside[static_cast<std::size_t>(m)];
          s.cam(pin / side, pin % side) = cfg.cam_jitter * rng.uniform();
          s.cam(pout / side, pout % side) = 1.0 - cfg.cam_jitter * rng.uniform();
        }
      }
      s.cam = s.cam.unaryExpr(&to_f32);

      s.gt_boxes = {BBox{c0 * cfg.patch_pixels, r0 * cfg.patch_pixels, (c0 + bw) * cfg.patch_pixels,
                         (r0 + bh) * cfg.patch_pixels}};
      s.image_width = side;
      s.image_height = side;
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

void write_dataset(const SyntheticDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "cams");
  io::write_anchor_file(dir / "anchors_raw.tdla", data.raw_anchors);
  std::vector<ManifestEntry> entries;
  for (const Sample& s : data.samples) {
    ManifestEntry e;
    e.id = s.id;
    e.label = s.label;
    e.split = s.split;
    e.features_path = fs::path("features") / (s.id + ".tdlf");
    e.cam_path = fs::path("cams") / (s.id + ".tdlm");
    e.gt_boxes = s.gt_boxes;
    e.image_size = std::make_pair(s.image_width, s.image_height);
    io::write_features(dir / e.features_path, s.features);
    io::write_cam(dir / e.cam_path, s.cam);
    entries.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.jsonl", entries);
  io::write_atomic(dir / "synth_config.txt", data.config.to_key_values().dump());
}

}  // namespace tdl
