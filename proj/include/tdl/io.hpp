#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tdl/anchors.hpp"
#include "tdl/model.hpp"
#include "tdl/pseudo.hpp"
#include "tdl/types.hpp"

namespace tdl::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kFormatVersion = 1;

std::string read_bytes(const fs::path& path);

/// Writes to a temporary sibling and renames it over the target.
void write_atomic(const fs::path& path, std::string_view bytes);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);
/// Hex FNV-1a digest of a file's bytes.
std::string file_hash(const fs::path& path);

/* Anchor file: "TDLA", u32 version, u32 K, u32 d, u8 orthogonalized,
 * u32 byte length + UTF-8 JSON array of class names, K*d f32, all little-endian. */
struct AnchorFile {
  RowMatrixXd rows;
  std::vector<std::string> class_names;
  bool orthogonalized = false;
};

std::string encode_anchor_file(const AnchorFile& file);
AnchorFile decode_anchor_file(std::string_view bytes);
AnchorFile read_anchor_file(const fs::path& path);
void write_anchor_file(const fs::path& path, const AnchorFile& file);

/// Anchors ready for scoring: orthonormal rows as stored, or raw rows L2-normalized.
AnchorSet<double> load_anchors(const fs::path& path);
void save_anchors(const fs::path& path, const AnchorSet<double>& anchors);

/* CAM file: "TDLM", u32 version, u32 H, u32 W, H*W f32 row-major. */
std::string encode_cam(const Eigen::MatrixXd& values);
Eigen::MatrixXd decode_cam(std::string_view bytes);
ActivationMap read_cam(const fs::path& path);
void write_cam(const fs::path& path, const Eigen::MatrixXd& values);

/* Feature grid file: "TDLF", u32 version, u32 rows, u32 cols, u32 channels,
 * rows*cols*channels f32 with channels fastest. */
struct FeatureGrid {
  GridShape shape;
  RowMatrixXd values;  // patches x channels
};

FeatureGrid read_features(const fs::path& path);
void write_features(const fs::path& path, const FeatureGrid& grid);

/* Parameter container: "TDLC", u32 version, u32 header length, JSON header,
 * then the blocks listed in header["blocks"] as little-endian f32 or f64. */
struct Block {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  std::vector<double> data;
};

struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<Block> blocks;

  const Block& block(const std::string& name) const;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes);
Container read_container(const fs::path& path);
void write_container(const fs::path& path, const Container& c);

/* Model checkpoint: the decoder and classifier blocks as f32, plus
 * model config, anchor file path and hash, and the step counter. */
struct Checkpoint {
  ModelConfig model;
  ModelParameters<double> params;
  std::string anchors_path;
  std::string anchors_hash;
  std::int64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const fs::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace tdl::io
