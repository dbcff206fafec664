// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "affkit/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "affkit/error.hpp"
#include "affkit/rng.hpp"

namespace affkit::io {

namespace {

constexpr char kFeatureMagic[4] = {'A', 'F', 'K', '1'};
constexpr char kCheckpointMagic[4] = {'A', 'F', 'C', 'K'};

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic(const char (&expected)[4], const char* what) {
    need(4, what);
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) throw FormatError(std::string("bad magic in ") + what, pos_);
    pos_ += 4;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Netpbm header: magic, then `count` unsigned integers separated by whitespace
// or comments, then exactly one whitespace byte.
std::vector<std::size_t> parse_netpbm_header(std::span<const std::uint8_t> bytes, const char* magic, std::size_t count,
                                             std::size_t& data_offset) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
    throw FormatError(std::string("expected ") + magic + " header", 0);
  std::size_t pos = 2;
  std::vector<std::size_t> values;
  while (values.size() < count) {
    if (pos >= bytes.size()) throw FormatError("truncated header", pos);
    const unsigned char c = bytes[pos];
    if (std::isspace(c)) {
      ++pos;
    } else if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isdigit(c)) {
      if (values.empty() && pos == 2) throw FormatError("missing whitespace after magic", pos);
      std::size_t v = 0;
      const std::size_t start = pos;
      while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        v = v * 10 + (bytes[pos] - '0');
        if (pos - start > 9) throw FormatError("header value too large", start);
        ++pos;
      }
      if (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
        throw FormatError("malformed header value", pos);
      values.push_back(v);
    } else {
      throw FormatError("malformed header", pos);
    }
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("missing whitespace after header", pos);
  data_offset = pos + 1;
  return values;
}

std::string join_path_field(const std::string& s) { return s.empty() ? "-" : s; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Tensor parse_features(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.magic(kFeatureMagic, "feature header");
  const std::uint32_t rows = r.u32("feature header");
  const std::uint32_t cols = r.u32("feature header");
  if (rows == 0 || cols == 0) throw FormatError("feature file with zero extent", 4);
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  r.need(count * 4, "feature data");
  std::vector<double> values(count);
  for (auto& v : values) v = r.f32("feature data");
  if (!r.at_end()) throw FormatError("trailing bytes after feature data", r.offset());
  return Tensor({rows, cols}, std::move(values));
}

std::vector<std::uint8_t> serialize_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("feature files hold [rows x cols] tensors");
  ByteWriter w;
  w.raw(kFeatureMagic, 4);
  w.u32(static_cast<std::uint32_t>(features.dim(0)));
  w.u32(static_cast<std::uint32_t>(features.dim(1)));
  for (double v : features.data()) w.f32(v);
  return w.take();
}

Tensor load_feature_file(const fs::path& path) { return parse_features(read_bytes(path)); }
void save_feature_file(const fs::path& path, const Tensor& features) {
  write_bytes(path, serialize_features(features));
}

LabelGrid parse_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  const auto h = parse_netpbm_header(bytes, "P5", 3, off);
  const std::size_t width = h[0], height = h[1], maxval = h[2];
  if (width == 0 || height == 0) throw FormatError("PGM with zero extent", 2);
  if (maxval == 0 || maxval > 255) throw FormatError("PGM maxval must be in 1..255", off - 1);
  if (bytes.size() - off < width * height) throw FormatError("truncated PGM data", bytes.size());
  LabelGrid g(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    const int v = bytes[off + i];
    if (static_cast<std::size_t>(v) > maxval) throw FormatError("PGM value above maxval", off + i);
    g.labels[i] = v;
  }
  return g;
}

std::vector<std::uint8_t> serialize_pgm(const LabelGrid& grid) {
  if (grid.height == 0 || grid.width == 0 || grid.labels.size() != grid.height * grid.width)
    throw DimensionError("save_mask: malformed label grid");
  const std::string header = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + grid.size());
  for (int v : grid.labels) {
    if (v < 0 || v > 255) throw ContractViolation("save_mask: label outside 0..255");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

LabelGrid load_mask(const fs::path& path) { return parse_pgm(read_bytes(path)); }
void save_mask(const fs::path& path, const LabelGrid& grid) { write_bytes(path, serialize_pgm(grid)); }

RgbImage parse_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  const auto h = parse_netpbm_header(bytes, "P6", 3, off);
  const std::size_t width = h[0], height = h[1], maxval = h[2];
  if (width == 0 || height == 0) throw FormatError("PPM with zero extent", 2);
  if (maxval != 255) throw FormatError("PPM maxval must be 255", off - 1);
  if (bytes.size() - off < width * height * 3) throw FormatError("truncated PPM data", bytes.size());
  RgbImage img(height, width);
  std::copy_n(bytes.begin() + off, width * height * 3, img.rgb.begin());
  return img;
}

std::vector<std::uint8_t> serialize_ppm(const RgbImage& image) {
  if (image.height == 0 || image.width == 0 || image.rgb.size() != image.height * image.width * 3)
    throw DimensionError("save_image: malformed image");
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

RgbImage load_image(const fs::path& path) { return parse_ppm(read_bytes(path)); }
void save_image(const fs::path& path, const RgbImage& image) { write_bytes(path, serialize_ppm(image)); }

v2c::Vocabulary load_vocabulary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return v2c::Vocabulary(std::move(tokens));
  } catch (const ContractViolation& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_vocabulary(const fs::path& path, const v2c::Vocabulary& vocab) {
  std::string text;
  for (const auto& t : vocab.tokens()) text += t + "\n";
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string format_manifest_line(const ManifestRecord& r) {
  for (const std::string* s : {&r.id, &r.features, &r.command, &r.mask})
    if (s->find('\t') != std::string::npos || s->find('\n') != std::string::npos)
      throw ContractViolation("manifest fields may not contain tabs or newlines");
  std::string boxes;
  for (const auto& b : r.boxes) {
    if (!boxes.empty()) boxes += ';';
    boxes += std::to_string(b.class_id) + "@" + format_double(b.box.x1) + "," + format_double(b.box.y1) + "," +
             format_double(b.box.x2) + "," + format_double(b.box.y2);
  }
  return r.id + "\t" + join_path_field(r.features) + "\t" + join_path_field(r.command) + "\t" +
         (r.action ? std::to_string(*r.action) : "-") + "\t" + join_path_field(boxes) + "\t" + join_path_field(r.mask);
}

ManifestRecord parse_manifest_line(const std::string& line, std::size_t line_number) {
  const auto where = [&](const std::string& msg) { return DataError("manifest line " + std::to_string(line_number) + ": " + msg); };
  const auto fields = split(line, '\t');
  if (fields.size() != 6) throw where("expected 6 tab-separated fields, found " + std::to_string(fields.size()));
  const auto opt = [](const std::string& s) { return s == "-" ? std::string() : s; };
  ManifestRecord r;
  r.id = fields[0];
  if (r.id.empty() || r.id == "-") throw where("missing id");
  r.features = opt(fields[1]);
  r.command = opt(fields[2]);
  r.mask = opt(fields[5]);
  if (fields[3] != "-") {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(fields[3], &used);
    } catch (const std::exception&) {
      throw where("bad action class '" + fields[3] + "'");
    }
    if (used != fields[3].size()) throw where("bad action class '" + fields[3] + "'");
    r.action = v;
  }
  if (fields[4] != "-") {
    for (const auto& item : split(fields[4], ';')) {
      const auto at = item.find('@');
      if (at == std::string::npos) throw where("bad box '" + item + "'");
      const auto coords = split(item.substr(at + 1), ',');
      if (coords.size() != 4) throw where("bad box '" + item + "'");
      ManifestBox b;
      try {
        b.class_id = std::stoul(item.substr(0, at));
        b.box = {std::stod(coords[0]), std::stod(coords[1]), std::stod(coords[2]), std::stod(coords[3])};
      } catch (const std::exception&) {
        throw where("bad box '" + item + "'");
      }
      if (!b.box.valid()) throw where("degenerate box '" + item + "'");
      r.boxes.push_back(b);
    }
  }
  return r;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Manifest m;
  m.directory = path.parent_path();
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ManifestRecord r = parse_manifest_line(line, n);
    if (!ids.insert(r.id).second) throw DataError("manifest line " + std::to_string(n) + ": duplicate id " + r.id);
    for (const std::string* f : {&r.features, &r.mask})
      if (!f->empty() && !fs::exists(m.resolve(*f)))
        throw DataError("manifest line " + std::to_string(n) + ": missing file " + m.resolve(*f).string());
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::string text = "# id\tfeatures\tcommand\taction\tboxes\tmask\n";
  for (const auto& r : records) text += format_manifest_line(r) + "\n";
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ManifestSplit split_manifest(const std::vector<ManifestRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ParameterError("train fraction must be in [0, 1]");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(records.size())));
  ManifestSplit s;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? s.train : s.test).push_back(records[order[i]]);
  return s;
}

Checkpoint capture(const ParameterSet& params, const Adam* optimizer, std::uint64_t seed,
                   std::map<std::string, std::string> metadata) {
  Checkpoint c;
  c.seed = seed;
  c.metadata = std::move(metadata);
  c.has_optimizer = optimizer != nullptr;
  if (optimizer) c.optimizer_steps = optimizer->step_count();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParameterBlob b;
    b.name = params[i].name;
    b.value = params[i].value;
    if (optimizer) {
      b.adam_m = optimizer->first_moments()[i];
      b.adam_v = optimizer->second_moments()[i];
    }
    c.params.push_back(std::move(b));
  }
  return c;
}

void restore(const Checkpoint& checkpoint, ParameterSet& params, Adam* optimizer) {
  if (checkpoint.params.size() != params.size())
    throw DataError("checkpoint holds " + std::to_string(checkpoint.params.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& b = checkpoint.params[i];
    if (b.name != params[i].name) throw DataError("checkpoint parameter " + b.name + " where " + params[i].name + " expected");
    if (b.value.shape() != params[i].value.shape())
      throw DataError("checkpoint shape mismatch for " + b.name + ": " + to_string(b.value.shape()) + " vs " +
                      to_string(params[i].value.shape()));
  }
  if (optimizer && !checkpoint.has_optimizer) throw DataError("checkpoint has no optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value = checkpoint.params[i].value;
    params[i].zero_grad();
    if (optimizer) {
      optimizer->first_moments()[i] = checkpoint.params[i].adam_m;
      optimizer->second_moments()[i] = checkpoint.params[i].adam_v;
    }
  }
  if (optimizer) optimizer->set_step_count(checkpoint.optimizer_steps);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c, BlobType type) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(c.version);
  w.u64(c.seed);
  w.u64(c.optimizer_steps);
  w.u8(c.has_optimizer ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  const auto values = [&](const Tensor& t) {
    for (double v : t.data()) type == BlobType::F32 ? w.f32(v) : w.f64(v);
  };
  for (const auto& b : c.params) {
    w.str(b.name);
    w.u8(static_cast<std::uint8_t>(type));
    w.u32(static_cast<std::uint32_t>(b.value.rank()));
    for (std::size_t d : b.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    values(b.value);
    if (c.has_optimizer) {
      require_same_shape(b.value, b.adam_m, "checkpoint moments");
      require_same_shape(b.value, b.adam_v, "checkpoint moments");
      values(b.adam_m);
      values(b.adam_v);
    }
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.magic(kCheckpointMagic, "checkpoint header");
  Checkpoint c;
  const std::size_t version_at = r.offset();
  c.version = r.u32("checkpoint header");
  if (c.version != Checkpoint::kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(c.version), version_at);
  c.seed = r.u64("checkpoint header");
  c.optimizer_steps = r.u64("checkpoint header");
  const std::size_t flag_at = r.offset();
  const std::uint8_t flag = r.u8("checkpoint header");
  if (flag > 1) throw FormatError("bad optimizer flag", flag_at);
  c.has_optimizer = flag == 1;
  const std::uint32_t meta = r.u32("checkpoint metadata");
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str("checkpoint metadata");
    c.metadata[k] = r.str("checkpoint metadata");
  }
  const std::uint32_t count = r.u32("checkpoint parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ParameterBlob b;
    b.name = r.str("parameter name");
    const std::size_t type_at = r.offset();
    const std::uint8_t type = r.u8("parameter type");
    if (type != static_cast<std::uint8_t>(BlobType::F32) && type != static_cast<std::uint8_t>(BlobType::F64))
      throw FormatError("unknown blob type for " + b.name, type_at);
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("parameter rank");
    if (rank > 8) throw FormatError("implausible rank for " + b.name, rank_at);
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      const std::size_t dim_at = r.offset();
      d = r.u32("parameter shape");
      if (d == 0) throw FormatError("zero extent in " + b.name, dim_at);
      n *= d;
    }
    const std::size_t width = type == static_cast<std::uint8_t>(BlobType::F32) ? 4 : 8;
    r.need(n * width * (c.has_optimizer ? 3 : 1), "parameter data");
    const auto values = [&]() {
      std::vector<double> v(n);
      for (auto& x : v) x = width == 4 ? r.f32("parameter data") : r.f64("parameter data");
      return Tensor(shape, std::move(v));
    };
    b.value = values();
    if (c.has_optimizer) {
      b.adam_m = values();
      b.adam_v = values();
    }
    c.params.push_back(std::move(b));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint, BlobType type) {
  write_bytes(path, serialize_checkpoint(checkpoint, type));
}

Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(read_bytes(path)); }

std::vector<v2c::Example> load_v2c_examples(const Manifest& manifest, const v2c::Vocabulary& vocab, std::size_t frames,
                                            const Tensor& mean_feature) {
  std::vector<v2c::Example> out;
  for (const auto& r : manifest.records) {
    if (r.features.empty() || !r.action) throw DataError("record " + r.id + " lacks features or an action class");
    v2c::Example ex;
    ex.id = r.id;
    const Tensor raw = load_feature_file(manifest.resolve(r.features));
    if (raw.dim(1) != mean_feature.size())
      throw DataError("record " + r.id + ": feature width " + std::to_string(raw.dim(1)) + " differs from mean feature width " +
                      std::to_string(mean_feature.size()));
    ex.features = v2c::pad_frames(raw, frames, mean_feature);
    try {
      ex.command = v2c::encode_command(r.command, vocab);
    } catch (const ContractViolation& e) {
      throw DataError("record " + r.id + ": " + e.what());
    }
    if (ex.command.empty() || ex.command.size() + 1 > frames)
      throw DataError("record " + r.id + ": command length " + std::to_string(ex.command.size()) + " out of range");
    ex.action = *r.action;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<toy::SyntheticScene> load_affordance_scenes(const Manifest& manifest) {
  std::vector<toy::SyntheticScene> out;
  for (const auto& r : manifest.records) {
    if (r.features.empty() || r.mask.empty() || r.boxes.empty())
      throw DataError("record " + r.id + " lacks an image, mask or boxes");
    toy::SyntheticScene s;
    s.image = load_image(manifest.resolve(r.features));
    s.affordances = load_mask(manifest.resolve(r.mask));
    if (s.affordances.height != s.image.height || s.affordances.width != s.image.width)
      throw DataError("record " + r.id + ": mask and image sizes differ");
    for (const auto& b : r.boxes) {
      if (b.class_id < 1 || b.class_id >= toy::kNumObjectClasses)
        throw DataError("record " + r.id + ": object class " + std::to_string(b.class_id) + " out of range");
      toy::SceneObject o;
      o.object_class = static_cast<toy::ObjectClass>(b.class_id);
      o.box = b.box;
      s.objects.push_back(o);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_v2c_toyset(const fs::path& dir, const toy::V2CToySet& set) {
  save_vocabulary(dir / "vocab.txt", set.vocab);
  save_feature_file(dir / "mean_feature.afk", set.mean_feature.reshaped({1, set.mean_feature.size()}));
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    ManifestRecord r;
    r.id = set.examples[i].id;
    r.features = "features/" + r.id + ".afk";
    r.command = set.commands[i];
    r.action = set.examples[i].action;
    save_feature_file(dir / r.features, set.raw_features[i]);
    records.push_back(std::move(r));
  }
  save_manifest(dir / "manifest.tsv", records);
}

void write_affordance_toyset(const fs::path& dir, std::span<const toy::SyntheticScene> scenes) {
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ManifestRecord r;
    r.id = "s" + std::to_string(i);
    r.features = "images/" + r.id + ".ppm";
    r.mask = "masks/" + r.id + ".pgm";
    for (const auto& o : scenes[i].objects) r.boxes.push_back({static_cast<std::size_t>(o.object_class), o.box});
    save_image(dir / r.features, scenes[i].image);
    save_mask(dir / r.mask, scenes[i].affordances);
    records.push_back(std::move(r));
  }
  save_manifest(dir / "manifest.tsv", records);
}

}  // namespace affkit::io
