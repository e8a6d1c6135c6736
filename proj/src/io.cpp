#include "tdl/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tdl/error.hpp"

namespace tdl::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

class ByteWriter {
 public:
  void raw(std::string_view bytes) { out_.append(bytes); }

  template <typename T>
  void put(T value) {
    value = to_little(value);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out_.append(bytes, sizeof(T));
  }

  void u32(std::uint64_t value) {
    if (value > 0xffffffffULL) throw Error(ErrorCode::FormatError, "value exceeds u32");
    put(static_cast<std::uint32_t>(value));
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view raw(std::size_t n) {
    if (n > bytes_.size() - at_) throw Error(ErrorCode::FormatError, "truncated file");
    std::string_view out = bytes_.substr(at_, n);
    at_ += n;
    return out;
  }

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, raw(sizeof(T)).data(), sizeof(T));
    return to_little(value);
  }

  std::uint32_t u32() { return get<std::uint32_t>(); }

  void expect_magic(std::string_view magic) {
    if (raw(magic.size()) != magic)
      throw Error(ErrorCode::FormatError, "bad magic, expected " + std::string(magic));
  }

  void expect_version() {
    const std::uint32_t version = u32();
    if (version != kFormatVersion)
      throw Error(ErrorCode::FormatError, "unsupported format version " + std::to_string(version));
  }

  void expect_end() const {
    if (at_ != bytes_.size()) throw Error(ErrorCode::FormatError, "trailing bytes");
  }

 private:
  std::string_view bytes_;
  std::size_t at_ = 0;
};

void put_floats(ByteWriter& w, const RowMatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) w.put(static_cast<float>(m(r, c)));
}

RowMatrixXd get_floats(ByteReader& r, Index rows, Index cols) {
  RowMatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      const float v = r.get<float>();
      if (!std::isfinite(v)) throw Error(ErrorCode::FormatError, "non-finite value in file");
      m(i, j) = v;
    }
  return m;
}

}  // namespace

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
  return out;
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_bytes(path))); }

// ---------------------------------------------------------------- anchors

std::string encode_anchor_file(const AnchorFile& file) {
  if (static_cast<Index>(file.class_names.size()) != file.rows.rows())
    throw Error(ErrorCode::DimensionMismatch, "class name count differs from row count");
  ByteWriter w;
  w.raw("TDLA");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint64_t>(file.rows.rows()));
  w.u32(static_cast<std::uint64_t>(file.rows.cols()));
  w.put(static_cast<std::uint8_t>(file.orthogonalized ? 1 : 0));
  const std::string names = nlohmann::json(file.class_names).dump();
  w.u32(names.size());
  w.raw(names);
  put_floats(w, file.rows);
  return w.take();
}

AnchorFile decode_anchor_file(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic("TDLA");
  r.expect_version();
  const Index k = r.u32();
  const Index d = r.u32();
  const std::uint8_t flag = r.get<std::uint8_t>();
  if (flag > 1) throw Error(ErrorCode::FormatError, "orthogonalized flag must be 0 or 1");
  const std::uint32_t name_len = r.u32();
  AnchorFile file;
  file.orthogonalized = flag == 1;
  try {
    const auto names = nlohmann::json::parse(r.raw(name_len));
    file.class_names = names.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("class names: ") + e.what());
  }
  if (static_cast<Index>(file.class_names.size()) != k)
    throw Error(ErrorCode::FormatError, "class name count differs from K");
  file.rows = get_floats(r, k, d);
  r.expect_end();
  return file;
}

AnchorFile read_anchor_file(const fs::path& path) { return decode_anchor_file(read_bytes(path)); }

void write_anchor_file(const fs::path& path, const AnchorFile& file) {
  write_atomic(path, encode_anchor_file(file));
}

AnchorSet<double> load_anchors(const fs::path& path) {
  AnchorFile file = read_anchor_file(path);
  RawEmbeddingMatrix<double> raw{file.rows, file.class_names};
  if (!file.orthogonalized) return AnchorSet<double>::from_raw(raw);
  raw.validate();
  // Stored as f32: re-normalize rows; orthogonality holds to float precision.
  RowMatrixXd rows = file.rows;
  for (Index k = 0; k < rows.rows(); ++k) {
    const double norm = rows.row(k).norm();
    if (std::abs(norm - 1.0) > 1e-5)
      throw Error(ErrorCode::FormatError, "orthogonalized anchors are not unit norm");
    rows.row(k) /= norm;
  }
  return AnchorSet<double>(std::move(rows), file.class_names, true);
}

void save_anchors(const fs::path& path, const AnchorSet<double>& anchors) {
  write_anchor_file(path, {anchors.matrix(), anchors.class_names(), anchors.orthogonalized()});
}

// ---------------------------------------------------------------- CAMs

std::string encode_cam(const Eigen::MatrixXd& values) {
  ByteWriter w;
  w.raw("TDLM");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint64_t>(values.rows()));
  w.u32(static_cast<std::uint64_t>(values.cols()));
  put_floats(w, values);
  return w.take();
}

Eigen::MatrixXd decode_cam(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic("TDLM");
  r.expect_version();
  const Index h = r.u32();
  const Index w = r.u32();
  if (h < 1 || w < 1) throw Error(ErrorCode::FormatError, "empty CAM");
  Eigen::MatrixXd values = get_floats(r, h, w);
  r.expect_end();
  return values;
}

ActivationMap read_cam(const fs::path& path) {
  return {decode_cam(read_bytes(path)), path.stem().string()};
}

void write_cam(const fs::path& path, const Eigen::MatrixXd& values) {
  write_atomic(path, encode_cam(values));
}

// ---------------------------------------------------------------- features

FeatureGrid read_features(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  ByteReader r(bytes);
  r.expect_magic("TDLF");
  r.expect_version();
  FeatureGrid grid;
  grid.shape.rows = r.u32();
  grid.shape.cols = r.u32();
  const Index channels = r.u32();
  if (grid.shape.size() < 1 || channels < 1) throw Error(ErrorCode::FormatError, "empty feature grid");
  grid.values = get_floats(r, grid.shape.size(), channels);
  r.expect_end();
  return grid;
}

void write_features(const fs::path& path, const FeatureGrid& grid) {
  if (grid.values.rows() != grid.shape.size())
    throw Error(ErrorCode::ShapeMismatch, "feature rows differ from grid size");
  ByteWriter w;
  w.raw("TDLF");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint64_t>(grid.shape.rows));
  w.u32(static_cast<std::uint64_t>(grid.shape.cols));
  w.u32(static_cast<std::uint64_t>(grid.values.cols()));
  put_floats(w, grid.values);
  write_atomic(path, w.take());
}

// ---------------------------------------------------------------- container

const Block& Container::block(const std::string& name) const {
  for (const Block& b : blocks)
    if (b.name == name) return b;
  throw Error(ErrorCode::FormatError, "missing block " + name);
}

std::string encode_container(const Container& c) {
  nlohmann::json header = c.header;
  header["blocks"] = nlohmann::json::array();
  for (const Block& b : c.blocks) {
    if (b.dtype != "f32" && b.dtype != "f64")
      throw Error(ErrorCode::FormatError, "unknown dtype " + b.dtype);
    header["blocks"].push_back({{"name", b.name}, {"dtype", b.dtype}, {"count", b.data.size()}});
  }
  const std::string text = header.dump();
  ByteWriter w;
  w.raw("TDLC");
  w.u32(kFormatVersion);
  w.u32(text.size());
  w.raw(text);
  for (const Block& b : c.blocks)
    for (double v : b.data) {
      if (b.dtype == "f32")
        w.put(static_cast<float>(v));
      else
        w.put(v);
    }
  return w.take();
}

Container decode_container(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic("TDLC");
  r.expect_version();
  const std::uint32_t len = r.u32();
  Container c;
  try {
    c.header = nlohmann::json::parse(r.raw(len));
    for (const auto& entry : c.header.at("blocks")) {
      Block b;
      b.name = entry.at("name").get<std::string>();
      b.dtype = entry.at("dtype").get<std::string>();
      const auto count = entry.at("count").get<std::size_t>();
      b.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (b.dtype == "f32")
          b.data[i] = r.get<float>();
        else if (b.dtype == "f64")
          b.data[i] = r.get<double>();
        else
          throw Error(ErrorCode::FormatError, "unknown dtype " + b.dtype);
      }
      c.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("container header: ") + e.what());
  }
  r.expect_end();
  c.header.erase("blocks");
  return c;
}

Container read_container(const fs::path& path) { return decode_container(read_bytes(path)); }

void write_container(const fs::path& path, const Container& c) {
  write_atomic(path, encode_container(c));
}

// ---------------------------------------------------------------- checkpoint

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"input_dim", cfg.input_dim},
          {"embed_dim", cfg.embed_dim},
          {"upscale", cfg.upscale},
          {"temperature", cfg.scoring.temperature},
          {"normalize", cfg.scoring.normalize}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.input_dim = j.at("input_dim").get<Index>();
  cfg.embed_dim = j.at("embed_dim").get<Index>();
  cfg.upscale = j.at("upscale").get<Index>();
  cfg.scoring.temperature = j.at("temperature").get<double>();
  cfg.scoring.normalize = j.at("normalize").get<bool>();
  cfg.validate();
  return cfg;
}

namespace {

std::vector<double> to_vector(const Vector<double>& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Container c;
  c.header["kind"] = "checkpoint";
  c.header["model"] = model_config_to_json(ckpt.model);
  c.header["anchors_path"] = ckpt.anchors_path;
  c.header["anchors_hash"] = ckpt.anchors_hash;
  c.header["step"] = ckpt.step;
  c.header["extra"] = ckpt.extra;

  const Vector<double> flat = ckpt.params.flatten();
  const Index classifier_size = ckpt.params.classifier.weight.size() + 1;
  const Index decoder_size = flat.size() - classifier_size;
  c.blocks.push_back({"decoder", "f32", to_vector(flat.head(decoder_size))});
  c.blocks.push_back({"classifier", "f32", to_vector(flat.tail(classifier_size))});
  write_container(path, c);
}

Checkpoint read_checkpoint(const fs::path& path) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "checkpoint")
    throw Error(ErrorCode::FormatError, path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.model = model_config_from_json(c.header.at("model"));
    ckpt.anchors_path = c.header.at("anchors_path").get<std::string>();
    ckpt.anchors_hash = c.header.at("anchors_hash").get<std::string>();
    ckpt.step = c.header.at("step").get<std::int64_t>();
    ckpt.extra = c.header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("checkpoint header: ") + e.what());
  }
  ckpt.params = ModelParameters<double>::zeros(ckpt.model);
  const Block& dec = c.block("decoder");
  const Block& cls = c.block("classifier");
  Vector<double> flat(static_cast<Index>(dec.data.size() + cls.data.size()));
  if (flat.size() != ckpt.params.size())
    throw Error(ErrorCode::FormatError, "checkpoint parameter count does not match its model config");
  Index at = 0;
  for (double v : dec.data) flat(at++) = v;
  for (double v : cls.data) flat(at++) = v;
  ckpt.params.assign(flat);
  return ckpt;
}

}  // namespace tdl::io
