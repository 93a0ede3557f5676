#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dermxai/dataset.hpp"
#include "dermxai/image.hpp"

namespace dermxai {

// Binary tensor archive (.dxa), little-endian:
//   magic "DXARCH01" | u32 height | u32 width | u32 channels | u64 count
//   | count*H*W*C float32 image block (HWC per item)
//   | count int32 label block
//   | count * (u32 length + bytes) image_id block
// Items are random-access so a partition never has to fit in memory.

class ArchiveWriter {
 public:
  ArchiveWriter(const std::filesystem::path& path, int height, int width, int channels, std::uint64_t count);
  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  void append(const ImageTensor& image, int label, const std::string& image_id);
  /// Writes the label and id blocks. Throws if fewer items than declared were appended.
  void finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  int height_, width_, channels_;
  std::uint64_t count_;
  std::vector<std::int32_t> labels_;
  std::vector<std::string> ids_;
  bool finished_ = false;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path);

  std::size_t size() const { return labels_.size(); }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  const std::vector<std::int32_t>& labels() const { return labels_; }
  const std::vector<std::string>& image_ids() const { return ids_; }

  ImageTensor image(std::size_t index) const;

 private:
  std::filesystem::path path_;
  mutable std::ifstream in_;
  int height_ = 0, width_ = 0, channels_ = 0;
  std::vector<std::int32_t> labels_;
  std::vector<std::string> ids_;
  std::streamoff data_offset_ = 0;
};

std::filesystem::path archive_path(const std::filesystem::path& dir, Partition p);

/// Writes train/val/test archives plus split.json (seed, ratios, counts,
/// assignments) into `out_dir`. Images are loaded and resized to `side`.
/// Any load failure aborts after attempting every record; the error lists
/// all failed image_ids.
void export_archive(const SplitManifest& manifest, const std::vector<LesionRecord>& records, int side,
                    const std::filesystem::path& out_dir, int workers = 1);

}  // namespace dermxai
