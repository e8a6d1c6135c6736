#include "tdl/encoder.hpp"

#include "tdl/error.hpp"

namespace tdl {

EncoderOutput<double> SyntheticEncoder::encode(const io::FeatureGrid& input,
                                               const std::string& image_id) const {
  return {input.shape, input.values, image_id};
}

ProjectionEncoder::ProjectionEncoder(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::AdapterUnavailable, "backbone file not found: " + path.string());
  try {
    const auto j = nlohmann::json::parse(io::read_bytes(path));
    const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows.front().empty())
      throw Error(ErrorCode::AdapterUnavailable, "empty backbone weights");
    weights_.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size())
        throw Error(ErrorCode::AdapterUnavailable, "ragged backbone weights");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        weights_(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::AdapterUnavailable, std::string("unreadable backbone: ") + e.what());
  }
}

EncoderOutput<double> ProjectionEncoder::encode(const io::FeatureGrid& input,
                                                const std::string& image_id) const {
  if (input.values.cols() != weights_.cols())
    throw Error(ErrorCode::ShapeMismatch, "input channels differ from backbone input size");
  return {input.shape, input.values * weights_.transpose(), image_id};
}

Index ProjectionEncoder::output_dim(Index input_channels) const {
  if (input_channels != weights_.cols())
    throw Error(ErrorCode::ShapeMismatch, "input channels differ from backbone input size");
  return weights_.rows();
}

std::unique_ptr<Encoder> make_encoder(const std::string& spec) {
  if (spec == "synthetic") return std::make_unique<SyntheticEncoder>();
  constexpr std::string_view prefix = "external:";
  if (spec.rfind(prefix, 0) == 0)
    return std::make_unique<ProjectionEncoder>(spec.substr(prefix.size()));
  throw Error(ErrorCode::AdapterUnavailable, "unknown encoder '" + spec + "'");
}

}  // namespace tdl
