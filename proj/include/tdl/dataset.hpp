#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tdl/bbox.hpp"
#include "tdl/io.hpp"

namespace tdl {

/* One manifest line: {id, label, features_path, cam_path, gt_box:[x0,y0,x1,y1],
 * split} plus optional gt_boxes (multi-box) and image_size [width, height]. */
struct ManifestEntry {
  std::string id;
  Index label = 0;
  std::filesystem::path features_path;
  std::filesystem::path cam_path;
  std::vector<BBox> gt_boxes;
  std::string split;
  std::optional<std::pair<Index, Index>> image_size;  // width, height
};

nlohmann::json manifest_entry_to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const nlohmann::json& j);

/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/* An image loaded in memory. cam is empty when the manifest has no CAM for it. */
struct Sample {
  std::string id;
  Index label = 0;
  std::string split;
  io::FeatureGrid features;
  Eigen::MatrixXd cam;
  std::vector<BBox> gt_boxes;
  Index image_width = 0;
  Index image_height = 0;
};

std::vector<Sample> load_samples(const std::filesystem::path& manifest_path);

std::vector<Sample> select_split(const std::vector<Sample>& samples, const std::string& split);

}  // namespace tdl
