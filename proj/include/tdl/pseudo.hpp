#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdl/rng.hpp"
#include "tdl/types.hpp"

namespace tdl {

/* Teacher CAM, H x W, arbitrary scale. */
struct ActivationMap {
  Eigen::MatrixXd values;
  std::string image_id;
};

struct SamplerConfig {
  Index n_fg = 0;              // n+, FG candidate pool size
  Index n_bg = 0;              // n-, BG candidate pool size
  Index samples_per_side = 0;  // locations drawn from each pool per step
  int histogram_bins = 256;
  std::uint64_t seed = 0;

  /// n+ = n- = 20% of the patches, up to 10 samples per side.
  static SamplerConfig defaults_for(Index num_patches);
  void validate(Index num_patches) const;
};

struct PatchLocation {
  Index row = 0;
  Index col = 0;
  bool operator==(const PatchLocation&) const = default;
  auto operator<=>(const PatchLocation&) const = default;
};

/* Balanced FG/BG pseudo-labels for one image at one step. FG entries come first. */
struct SampledPatchSet {
  std::vector<PatchLocation> locations;
  std::vector<std::uint8_t> labels;  // 1 = FG, 0 = BG

  std::vector<PatchLocation> fg_subset() const;
  std::vector<PatchLocation> bg_subset() const;
};

/* Bin edges of an equal-width histogram over [min, max]: edge i (1 <= i < bins)
 * is min + i * (max - min) / bins. Element 0 holds min. */
std::vector<double> histogram_edges(double lo, double hi, int bins);

/* Otsu's threshold over a `bins`-bin histogram of the values. Candidates are the
 * interior bin edges; values >= threshold form the upper class. Ties go to the
 * lower threshold. Throws DegenerateMap for constant input. */
double otsu_threshold(const Eigen::Ref<const Eigen::MatrixXd>& values, int bins = 256);

/// Average-pools a map into rows x cols cells with floor-division boundaries.
Eigen::MatrixXd to_patch_grid(const Eigen::Ref<const Eigen::MatrixXd>& values, Index rows,
                              Index cols);

struct CandidatePools {
  std::vector<PatchLocation> fg;  // top-n+ cells, descending
  std::vector<PatchLocation> bg;  // bottom-n- cells below the threshold and outside fg, ascending
  double threshold = 0.0;
};

CandidatePools candidate_pools(const Eigen::Ref<const Eigen::MatrixXd>& grid,
                               const SamplerConfig& cfg);

/* Draws cfg.samples_per_side locations without replacement from each pool.
 * Throws InsufficientBackground when the BG pool is too small. */
SampledPatchSet sample_fg_bg(const Eigen::Ref<const Eigen::MatrixXd>& grid,
                             const SamplerConfig& cfg, Rng& rng);

}  // namespace tdl
