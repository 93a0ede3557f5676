#include "dermxai/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <future>
#include <sstream>

#include "dermxai/error.hpp"

namespace dermxai {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'X', 'A', 'R', 'C', 'H', '0', '1'};
constexpr std::streamoff kHeaderBytes = 8 + 4 * 3 + 8;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

ArchiveWriter::ArchiveWriter(const std::filesystem::path& path, int height, int width, int channels,
                             std::uint64_t count)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), height_(height), width_(width),
      channels_(channels), count_(count) {
  if (!out_) fail(ErrorCode::kIo, "cannot create archive " + path.string());
  out_.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(height));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(width));
  put<std::uint32_t>(out_, static_cast<std::uint32_t>(channels));
  put<std::uint64_t>(out_, count);
}

void ArchiveWriter::append(const ImageTensor& image, int label, const std::string& image_id) {
  require(!finished_, "archive already finished");
  require(image.height == height_ && image.width == width_ && image.channels == channels_,
          "archive: image shape mismatch for " + image_id);
  require(labels_.size() < count_, "archive: more items than declared");
  out_.write(reinterpret_cast<const char*>(image.values.data()),
             static_cast<std::streamsize>(image.values.size() * sizeof(float)));
  labels_.push_back(label);
  ids_.push_back(image_id);
}

void ArchiveWriter::finish() {
  if (finished_) return;
  if (labels_.size() != count_) {
    fail(ErrorCode::kInternal, "archive " + path_.string() + ": " + std::to_string(labels_.size()) + " of " +
                                   std::to_string(count_) + " items written");
  }
  out_.write(reinterpret_cast<const char*>(labels_.data()),
             static_cast<std::streamsize>(labels_.size() * sizeof(std::int32_t)));
  for (const auto& id : ids_) {
    put<std::uint32_t>(out_, static_cast<std::uint32_t>(id.size()));
    out_.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  out_.flush();
  if (!out_) fail(ErrorCode::kIo, "write failed for archive " + path_.string());
  out_.close();
  finished_ = true;
}

ArchiveReader::ArchiveReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(ErrorCode::kNotFound, "archive not found: " + path.string());
  char magic[8];
  in_.read(magic, sizeof(magic));
  if (!in_ || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    fail(ErrorCode::kParse, "not a dermxai archive: " + path.string());
  }
  height_ = static_cast<int>(get<std::uint32_t>(in_));
  width_ = static_cast<int>(get<std::uint32_t>(in_));
  channels_ = static_cast<int>(get<std::uint32_t>(in_));
  const auto count = get<std::uint64_t>(in_);
  data_offset_ = kHeaderBytes;
  const auto item_bytes = static_cast<std::streamoff>(height_) * width_ * channels_ * sizeof(float);
  in_.seekg(data_offset_ + static_cast<std::streamoff>(count) * item_bytes);
  labels_.resize(count);
  in_.read(reinterpret_cast<char*>(labels_.data()), static_cast<std::streamsize>(count * sizeof(std::int32_t)));
  ids_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in_);
    std::string id(len, '\0');
    in_.read(id.data(), len);
    ids_.push_back(std::move(id));
  }
  if (!in_) fail(ErrorCode::kParse, "truncated archive: " + path.string());
}

ImageTensor ArchiveReader::image(std::size_t index) const {
  require(index < size(), "archive index out of range");
  ImageTensor img(height_, width_, channels_);
  const auto item_bytes = static_cast<std::streamoff>(img.values.size() * sizeof(float));
  in_.seekg(data_offset_ + static_cast<std::streamoff>(index) * item_bytes);
  in_.read(reinterpret_cast<char*>(img.values.data()), item_bytes);
  if (!in_) fail(ErrorCode::kIo, "read failed in archive " + path_.string());
  return img;
}

std::filesystem::path archive_path(const std::filesystem::path& dir, Partition p) {
  return dir / (std::string(partition_name(p)) + ".dxa");
}

void export_archive(const SplitManifest& manifest, const std::vector<LesionRecord>& records, int side,
                    const std::filesystem::path& out_dir, int workers) {
  require(side > 0, "export: side must be positive");
  std::map<std::string, const LesionRecord*> by_id;
  for (const auto& r : records) by_id[r.image_id] = &r;
  for (const auto& [id, rec] : by_id) {
    if (!manifest.assignments.contains(id)) fail(ErrorCode::kData, "manifest does not cover record " + id);
  }
  for (const auto& id : manifest.order) {
    if (!by_id.contains(id)) fail(ErrorCode::kData, "manifest references unknown record " + id);
  }
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> failed;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, workers)) * 8;
  for (Partition p : {Partition::kTrain, Partition::kVal, Partition::kTest}) {
    const auto ids = manifest.ordered_ids(p);
    ArchiveWriter writer(archive_path(out_dir, p), side, side, 3, ids.size());
    for (std::size_t begin = 0; begin < ids.size(); begin += chunk) {
      const std::size_t end = std::min(ids.size(), begin + chunk);
      std::vector<std::future<ImageTensor>> pending;
      for (std::size_t i = begin; i < end; ++i) {
        const LesionRecord* rec = by_id.at(ids[i]);
        pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                     [rec, side] { return load_and_resize(*rec, side); }));
      }
      for (std::size_t i = begin; i < end; ++i) {
        try {
          ImageTensor img = pending[i - begin].get();
          if (failed.empty()) writer.append(img, class_index(by_id.at(ids[i])->label), ids[i]);
        } catch (const Error&) {
          failed.push_back(ids[i]);
        }
      }
    }
    if (failed.empty()) writer.finish();
  }
  if (!failed.empty()) {
    for (Partition p : {Partition::kTrain, Partition::kVal, Partition::kTest}) {
      std::error_code ec;
      std::filesystem::remove(archive_path(out_dir, p), ec);
    }
    std::ostringstream os;
    os << "failed to load " << failed.size() << " image(s):";
    for (const auto& id : failed) os << ' ' << id;
    fail(ErrorCode::kIo, os.str());
  }
  std::ofstream sidecar(out_dir / "split.json");
  sidecar << manifest_to_json(manifest).dump(2) << '\n';
  if (!sidecar) fail(ErrorCode::kIo, "cannot write " + (out_dir / "split.json").string());
}

}  // namespace dermxai
