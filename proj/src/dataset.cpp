#include "tdl/dataset.hpp"

#include <fstream>
#include <sstream>

#include "tdl/error.hpp"

namespace tdl {

namespace fs = std::filesystem;

namespace {

BBox box_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<std::int64_t>>();
  if (v.size() != 4) throw Error(ErrorCode::InvalidManifest, "gt box needs 4 coordinates");
  BBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw Error(ErrorCode::InvalidManifest, "empty gt box");
  return b;
}

nlohmann::json box_to_json(const BBox& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

}  // namespace

nlohmann::json manifest_entry_to_json(const ManifestEntry& e) {
  nlohmann::json j;
  j["id"] = e.id;
  j["label"] = e.label;
  j["features_path"] = e.features_path.generic_string();
  j["cam_path"] = e.cam_path.generic_string();
  j["gt_box"] = e.gt_boxes.empty() ? nlohmann::json() : box_to_json(e.gt_boxes.front());
  if (e.gt_boxes.size() > 1) {
    j["gt_boxes"] = nlohmann::json::array();
    for (const BBox& b : e.gt_boxes) j["gt_boxes"].push_back(box_to_json(b));
  }
  j["split"] = e.split;
  if (e.image_size) j["image_size"] = {e.image_size->first, e.image_size->second};
  return j;
}

ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  try {
    e.id = j.at("id").get<std::string>();
    e.label = j.at("label").get<Index>();
    e.features_path = j.at("features_path").get<std::string>();
    e.cam_path = j.value("cam_path", std::string());
    if (j.contains("gt_boxes")) {
      for (const auto& b : j.at("gt_boxes")) e.gt_boxes.push_back(box_from_json(b));
    } else if (j.contains("gt_box") && !j.at("gt_box").is_null()) {
      e.gt_boxes.push_back(box_from_json(j.at("gt_box")));
    }
    e.split = j.at("split").get<std::string>();
    if (j.contains("image_size")) {
      const auto s = j.at("image_size").get<std::vector<Index>>();
      if (s.size() != 2 || s[0] < 1 || s[1] < 1)
        throw Error(ErrorCode::InvalidManifest, "image_size must be [width, height]");
      e.image_size = std::make_pair(s[0], s[1]);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidManifest, ex.what());
  }
  if (e.label < 0) throw Error(ErrorCode::InvalidManifest, "negative label for " + e.id);
  return e;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidManifest, "cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::InvalidManifest,
                  "line " + std::to_string(line_no) + ": " + std::string(ex.what()));
    }
    ManifestEntry e = manifest_entry_from_json(j);
    if (e.features_path.is_relative()) e.features_path = base / e.features_path;
    if (!e.cam_path.empty() && e.cam_path.is_relative()) e.cam_path = base / e.cam_path;
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const ManifestEntry& e : entries) os << manifest_entry_to_json(e).dump() << '\n';
  io::write_atomic(path, os.str());
}

std::vector<Sample> load_samples(const fs::path& manifest_path) {
  std::vector<Sample> samples;
  for (const ManifestEntry& e : read_manifest(manifest_path)) {
    Sample s;
    s.id = e.id;
    s.label = e.label;
    s.split = e.split;
    s.features = io::read_features(e.features_path);
    if (!e.cam_path.empty() && fs::exists(e.cam_path)) s.cam = io::read_cam(e.cam_path).values;
    s.gt_boxes = e.gt_boxes;
    if (e.image_size) {
      s.image_width = e.image_size->first;
      s.image_height = e.image_size->second;
    } else if (s.cam.size() > 0) {
      s.image_width = s.cam.cols();
      s.image_height = s.cam.rows();
    } else {
      s.image_width = s.features.shape.cols;
      s.image_height = s.features.shape.rows;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> select_split(const std::vector<Sample>& samples, const std::string& split) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

}  // namespace tdl
