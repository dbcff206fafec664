// Copyright 2026 The affkit Authors
// SPDX-License-Identifier: Apache-2.0

// File formats.
//
//   AFK1 features   "AFK1", u32 rows, u32 cols, rows*cols f32 (all little-endian)
//   masks           binary PGM (P5), gray level = label id
//   images          binary PPM (P6), maxval 255
//   vocabulary      UTF-8, one token per line, index = line number
//   manifest        tab-separated records, see ManifestRecord
//   checkpoint      "AFCK" container, see save_checkpoint

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affkit/autodiff.hpp"
#include "affkit/geometry.hpp"
#include "affkit/image.hpp"
#include "affkit/label_grid.hpp"
#include "affkit/optim.hpp"
#include "affkit/toy.hpp"
#include "affkit/v2c.hpp"

namespace affkit::io {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes);

/// Rank-2 tensor [rows x cols]; values are rounded to f32 on save.
Tensor parse_features(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_features(const Tensor& features);
Tensor load_feature_file(const fs::path& path);
void save_feature_file(const fs::path& path, const Tensor& features);

LabelGrid parse_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_pgm(const LabelGrid& grid);
LabelGrid load_mask(const fs::path& path);
void save_mask(const fs::path& path, const LabelGrid& grid);

RgbImage parse_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_ppm(const RgbImage& image);
RgbImage load_image(const fs::path& path);
void save_image(const fs::path& path, const RgbImage& image);

v2c::Vocabulary load_vocabulary(const fs::path& path);
void save_vocabulary(const fs::path& path, const v2c::Vocabulary& vocab);

struct ManifestBox {
  std::size_t class_id = 0;
  det::BoundingBox box;

  friend bool operator==(const ManifestBox&, const ManifestBox&) = default;
};

/// One line: id, features, command, action, boxes, mask (tab-separated).
/// Unused fields hold "-". Boxes are ';'-separated "class@x1,y1,x2,y2".
/// Paths are stored relative to the manifest directory.
struct ManifestRecord {
  std::string id;
  std::string features;
  std::string command;
  std::optional<std::size_t> action;
  std::vector<ManifestBox> boxes;
  std::string mask;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  fs::path directory;
  std::vector<ManifestRecord> records;

  fs::path resolve(const std::string& relative) const { return directory / relative; }
};

std::string format_manifest_line(const ManifestRecord& record);
ManifestRecord parse_manifest_line(const std::string& line, std::size_t line_number);
/// Checks unique ids and that every referenced file exists.
Manifest load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const std::vector<ManifestRecord>& records);

struct ManifestSplit {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> test;
};

/// Seeded shuffle, then the first round(fraction * N) records train.
ManifestSplit split_manifest(const std::vector<ManifestRecord>& records, double train_fraction, std::uint64_t seed);

enum class BlobType : std::uint8_t { F32 = 1, F64 = 2 };

struct ParameterBlob {
  std::string name;
  Tensor value;
  Tensor adam_m;  ///< empty-shaped scalar when no optimizer state was saved
  Tensor adam_v;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t seed = 0;
  std::uint64_t optimizer_steps = 0;
  bool has_optimizer = false;
  std::map<std::string, std::string> metadata;
  std::vector<ParameterBlob> params;
};

Checkpoint capture(const ParameterSet& params, const Adam* optimizer, std::uint64_t seed,
                   std::map<std::string, std::string> metadata = {});
/// Copies values (and optimizer moments when present) back. Names and shapes
/// must match the parameter set exactly.
void restore(const Checkpoint& checkpoint, ParameterSet& params, Adam* optimizer);

// Layout: "AFCK", u32 version, u64 seed, u64 optimizer steps, u8 has-optimizer,
// u32 metadata count, (string key, string value)*, u32 parameter count, then per
// parameter: string name, u8 blob type, u32 rank, u32 dims..., values
// [, m values, v values]. Strings are u32 length + bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint, BlobType type = BlobType::F32);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint, BlobType type = BlobType::F32);
Checkpoint load_checkpoint(const fs::path& path);

// --- datasets on disk ---------------------------------------------------------

/// Reads every record's feature file, pads it to `frames` rows and encodes its
/// command. Records need features, command and action.
std::vector<v2c::Example> load_v2c_examples(const Manifest& manifest, const v2c::Vocabulary& vocab, std::size_t frames,
                                            const Tensor& mean_feature);

/// Reads every record's image, mask and boxes. Objects take their class from the box.
std::vector<toy::SyntheticScene> load_affordance_scenes(const Manifest& manifest);

/// Layout under `dir`: vocab.txt, mean_feature.afk, manifest.tsv, features/<id>.afk.
void write_v2c_toyset(const fs::path& dir, const toy::V2CToySet& set);
/// Layout under `dir`: manifest.tsv, images/<id>.ppm, masks/<id>.pgm.
void write_affordance_toyset(const fs::path& dir, std::span<const toy::SyntheticScene> scenes);

}  // namespace affkit::io
