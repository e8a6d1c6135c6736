#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tdl/config.hpp"
#include "tdl/dataset.hpp"
#include "tdl/io.hpp"

namespace tdl {

struct SynthConfig {
  Index num_classes = 8;
  Index grid = 12;           // encoder patch grid is grid x grid
  Index input_dim = 16;      // feature channels d_e
  Index anchor_dim = 16;     // class embedding dimension d
  Index block_min = 4;       // FG block side range, in patches
  Index block_max = 8;
  Index patch_pixels = 4;    // image pixels per patch side
  Index distractors = 2;     // shared BG directions
  double fg_amplitude = 1.0;
  double bg_amplitude = 1.0;  // BG mixing weights are uniform in [0, bg_amplitude)
  double noise = 0.3;         // per-coordinate Gaussian sigma
  double cam_corruption = 0.0;  // fraction of FG CAM mass moved outside the block
  double cam_jitter = 0.05;     // CAM values are 1 - U*jitter inside, U*jitter outside
  double anchor_correlation = 0.95;
  Index correlated_pairs = 0;   // classes (0,1), (2,3), ... get raw cosine anchor_correlation
  Index n_train = 256;
  Index n_val = 64;
  Index n_test = 64;
  std::uint64_t seed = 7;

  /// Throws InfeasibleConfig.
  void validate() const;
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct SyntheticDataset {
  SynthConfig config;
  io::AnchorFile raw_anchors;
  RowMatrixXd class_directions;       // K x d_e, u_k
  RowMatrixXd distractor_directions;  // J x d_e
  std::vector<Sample> samples;
};

SyntheticDataset generate(const SynthConfig& cfg);

/* Writes features/<id>.tdlf, cams/<id>.tdlm, anchors_raw.tdla and
 * manifest.jsonl (paths relative to dir). */
void write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace tdl
