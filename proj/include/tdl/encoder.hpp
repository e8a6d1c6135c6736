#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "tdl/io.hpp"
#include "tdl/model.hpp"

namespace tdl {

/* Frozen backbone adapter. Implementations must be deterministic and hold no
 * trainable state. */
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput<double> encode(const io::FeatureGrid& input, const std::string& image_id) const = 0;
  virtual Index output_dim(Index input_channels) const = 0;
  virtual std::string name() const = 0;
};

/// Passes synthetic feature grids through unchanged.
class SyntheticEncoder final : public Encoder {
 public:
  EncoderOutput<double> encode(const io::FeatureGrid& input, const std::string& image_id) const override;
  Index output_dim(Index input_channels) const override { return input_channels; }
  std::string name() const override { return "synthetic"; }
};

/* Frozen linear backbone read from a JSON file {"weights": [[...], ...]}
 * of shape out_channels x in_channels. */
class ProjectionEncoder final : public Encoder {
 public:
  explicit ProjectionEncoder(const std::filesystem::path& path);
  EncoderOutput<double> encode(const io::FeatureGrid& input, const std::string& image_id) const override;
  Index output_dim(Index input_channels) const override;
  std::string name() const override { return "external:" + path_.string(); }

 private:
  std::filesystem::path path_;
  RowMatrixXd weights_;
};

/// "synthetic" or "external:<path>"; throws AdapterUnavailable otherwise.
std::unique_ptr<Encoder> make_encoder(const std::string& spec);

}  // namespace tdl
