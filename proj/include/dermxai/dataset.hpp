#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dermxai/image.hpp"
#include "dermxai/labels.hpp"

namespace dermxai {

enum class Sex { kMale, kFemale };

struct LesionRecord {
  std::string image_id;
  std::string lesion_id;
  ClassLabel label = ClassLabel::NV;
  std::filesystem::path image_path;
  std::optional<double> age;
  std::optional<Sex> sex;
  std::optional<std::string> localization;
};

/// Parses HAM10000-style metadata. Header must contain lesion_id, image_id,
/// dx, dx_type, age, sex, localization (any order). Image files are not
/// touched here; a missing file surfaces when the image is loaded.
std::vector<LesionRecord> parse_metadata(std::string_view csv_content, const std::filesystem::path& image_root);

/// Loads the record's image and squashes it to side x side (aspect ratio is
/// not preserved). Throws kIo with a message carrying the image_id.
ImageTensor load_and_resize(const LesionRecord& record, int side);

enum class Partition { kTrain = 0, kVal = 1, kTest = 2 };

std::string_view partition_name(Partition p);
Partition partition_from_name(std::string_view name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

using PartitionCounts = std::array<std::array<int, 3>, kNumClasses>;  // [class][partition]

struct SplitManifest {
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::map<std::string, Partition> assignments;  // image_id -> partition
  PartitionCounts class_counts{};
  std::vector<std::string> order;  // every image_id in manifest order

  int partition_size(Partition p) const;
  int total() const;

  /// Record ids of one partition in manifest order (class index, then the
  /// seeded within-class order).
  std::vector<std::string> ordered_ids(Partition p) const;
};

/// Exact stratified split. Partition sizes follow a nested holdout:
///   n_test = ceil(test * N), n_val = ceil(val * (N - n_test)), rest train,
/// each distributed over classes by largest remainder (seeded tie-break).
/// Records of each class are then shuffled with the seed and cut in
/// train / val / test order.
SplitManifest stratified_split(const std::vector<LesionRecord>& records, const SplitRatios& ratios,
                               std::uint64_t seed);

/// Largest-remainder allocation of `draws` items over `class_counts`.
/// Exposed for testing.
std::array<int, kNumClasses> allocate_largest_remainder(const std::array<int, kNumClasses>& class_counts,
                                                        int draws, std::mt19937_64& rng);

nlohmann::json manifest_to_json(const SplitManifest& manifest);
SplitManifest manifest_from_json(const nlohmann::json& j);

/// Table-I-style CSV: Class,Train,Validation,Test.
std::string split_report_csv(const SplitManifest& manifest);

}  // namespace dermxai
