#include "dermxai/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dermxai/error.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Ceiling that ignores binary round-off (0.1 * 10 must give 1, not 2).
int ceil_count(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

}  // namespace

std::vector<LesionRecord> parse_metadata(std::string_view csv_content, const std::filesystem::path& image_root) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= csv_content.size()) {
    std::size_t end = csv_content.find('\n', start);
    if (end == std::string_view::npos) end = csv_content.size();
    std::string_view line = csv_content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty() || trim(std::string(lines[0])).empty()) fail(ErrorCode::kParse, "metadata: missing header");

  const auto header = split_csv_line(lines[0]);
  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    fail(ErrorCode::kParse, "metadata: missing column " + std::string(name));
  };
  const std::size_t c_lesion = column("lesion_id");
  const std::size_t c_image = column("image_id");
  const std::size_t c_dx = column("dx");
  column("dx_type");
  const std::size_t c_age = column("age");
  const std::size_t c_sex = column("sex");
  const std::size_t c_loc = column("localization");
  const std::size_t needed = std::max({c_lesion, c_image, c_dx, c_age, c_sex, c_loc}) + 1;

  std::vector<LesionRecord> records;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(std::string(lines[ln])).empty()) continue;
    auto f = split_csv_line(lines[ln]);
    if (f.size() < needed) {
      fail(ErrorCode::kParse, "metadata line " + std::to_string(ln + 1) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    }
    for (auto& v : f) v = trim(std::move(v));
    LesionRecord r;
    r.lesion_id = f[c_lesion];
    r.image_id = f[c_image];
    if (r.image_id.empty()) fail(ErrorCode::kParse, "metadata line " + std::to_string(ln + 1) + ": empty image_id");
    r.label = class_from_dx(f[c_dx]);
    r.image_path = image_root / (r.image_id + ".jpg");
    if (!f[c_age].empty()) {
      try {
        std::size_t used = 0;
        r.age = std::stod(f[c_age], &used);
        if (used != f[c_age].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(ErrorCode::kParse, "metadata line " + std::to_string(ln + 1) + ": bad age " + f[c_age]);
      }
    }
    if (f[c_sex] == "male") r.sex = Sex::kMale;
    else if (f[c_sex] == "female") r.sex = Sex::kFemale;
    if (!f[c_loc].empty() && f[c_loc] != "unknown") r.localization = f[c_loc];
    records.push_back(std::move(r));
  }
  return records;
}

ImageTensor load_and_resize(const LesionRecord& record, int side) {
  require(side > 0, "load_and_resize: side must be positive");
  ImageTensor raw;
  try {
    raw = read_image(record.image_path);
  } catch (const Error& e) {
    fail(ErrorCode::kIo, record.image_id + ": " + e.what());
  }
  return resize_bilinear(raw, side, side);
}

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "?";
}

Partition partition_from_name(std::string_view name) {
  if (name == "train") return Partition::kTrain;
  if (name == "val" || name == "validation") return Partition::kVal;
  if (name == "test") return Partition::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown partition " + std::string(name) + " (expected train, val or test)");
}

int SplitManifest::partition_size(Partition p) const {
  int n = 0;
  for (const auto& row : class_counts) n += row[static_cast<std::size_t>(p)];
  return n;
}

int SplitManifest::total() const {
  return partition_size(Partition::kTrain) + partition_size(Partition::kVal) + partition_size(Partition::kTest);
}

std::vector<std::string> SplitManifest::ordered_ids(Partition p) const {
  std::vector<std::string> out;
  for (const auto& id : order) {
    if (assignments.at(id) == p) out.push_back(id);
  }
  return out;
}

std::array<int, kNumClasses> allocate_largest_remainder(const std::array<int, kNumClasses>& class_counts,
                                                        int draws, std::mt19937_64& rng) {
  const long total = std::accumulate(class_counts.begin(), class_counts.end(), 0L);
  require(draws >= 0 && draws <= total, "allocation: draws exceed population");
  std::array<int, kNumClasses> out{};
  if (total == 0) return out;
  std::array<double, kNumClasses> remainder{};
  int assigned = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const double exact = static_cast<double>(class_counts[c]) * draws / static_cast<double>(total);
    out[c] = static_cast<int>(std::floor(exact));
    remainder[c] = exact - out[c];
    assigned += out[c];
  }
  int need = draws - assigned;
  // Visit distinct remainder values from largest down; equal remainders are
  // tied and resolved by a seeded draw.
  std::vector<double> levels(remainder.begin(), remainder.end());
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (double level : levels) {
    if (need == 0) break;
    std::vector<int> tied;
    for (int c = 0; c < kNumClasses; ++c) {
      if (remainder[c] == level) tied.push_back(c);
    }
    seeded_shuffle(std::span<int>(tied), rng);
    const int take = std::min<int>(need, static_cast<int>(tied.size()));
    for (int i = 0; i < take; ++i) ++out[tied[static_cast<std::size_t>(i)]];
    need -= take;
  }
  return out;
}

SplitManifest stratified_split(const std::vector<LesionRecord>& records, const SplitRatios& ratios,
                               std::uint64_t seed) {
  require(ratios.train >= 0 && ratios.val >= 0 && ratios.test >= 0, "split ratios must be nonnegative");
  require(std::abs(ratios.train + ratios.val + ratios.test - 1.0) <= 1e-9, "split ratios must sum to 1");

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen.emplace(records[i].image_id, true).second) {
      fail(ErrorCode::kData, "duplicate image_id " + records[i].image_id);
    }
    by_class[static_cast<std::size_t>(class_index(records[i].label))].push_back(i);
  }
  std::array<int, kNumClasses> counts{};
  for (int c = 0; c < kNumClasses; ++c) {
    counts[c] = static_cast<int>(by_class[c].size());
    if (counts[c] > 0 && counts[c] < 3) {
      fail(ErrorCode::kData, "class " + std::string(class_code(c)) + " has " + std::to_string(counts[c]) +
                                 " records, fewer than the 3 partitions");
    }
  }

  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(records.size());
  const int n_test = ceil_count(ratios.test * n);
  const auto test_alloc = allocate_largest_remainder(counts, n_test, rng);
  std::array<int, kNumClasses> rest{};
  for (int c = 0; c < kNumClasses; ++c) rest[c] = counts[c] - test_alloc[c];
  const int n_val = ceil_count(ratios.val * (n - n_test));
  const auto val_alloc = allocate_largest_remainder(rest, n_val, rng);

  SplitManifest m;
  m.seed = seed;
  m.ratios = ratios;
  for (int c = 0; c < kNumClasses; ++c) {
    auto ids = by_class[c];
    std::sort(ids.begin(), ids.end(),
              [&](std::size_t a, std::size_t b) { return records[a].image_id < records[b].image_id; });
    std::mt19937_64 class_rng(derive_seed(seed, 0x5eed, static_cast<std::uint64_t>(c)));
    seeded_shuffle(std::span<std::size_t>(ids), class_rng);
    const int n_train = counts[c] - test_alloc[c] - val_alloc[c];
    m.class_counts[c] = {n_train, val_alloc[c], test_alloc[c]};
    for (int k = 0; k < counts[c]; ++k) {
      const Partition p = k < n_train ? Partition::kTrain
                          : k < n_train + val_alloc[c] ? Partition::kVal
                                                       : Partition::kTest;
      const auto& id = records[ids[static_cast<std::size_t>(k)]].image_id;
      m.assignments[id] = p;
      m.order.push_back(id);
    }
  }
  return m;
}

nlohmann::json manifest_to_json(const SplitManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["ratios"] = {{"train", m.ratios.train}, {"val", m.ratios.val}, {"test", m.ratios.test}};
  nlohmann::json counts = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    counts[std::string(class_code(c))] = {{"train", m.class_counts[c][0]},
                                          {"val", m.class_counts[c][1]},
                                          {"test", m.class_counts[c][2]}};
  }
  j["class_counts"] = counts;
  nlohmann::json assignments = nlohmann::json::array();
  for (const auto& id : m.order) {
    assignments.push_back({{"image_id", id}, {"partition", partition_name(m.assignments.at(id))}});
  }
  j["assignments"] = assignments;
  return j;
}

SplitManifest manifest_from_json(const nlohmann::json& j) {
  SplitManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratios = {j.at("ratios").at("train").get<double>(), j.at("ratios").at("val").get<double>(),
                j.at("ratios").at("test").get<double>()};
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& row = j.at("class_counts").at(std::string(class_code(c)));
      m.class_counts[c] = {row.at("train").get<int>(), row.at("val").get<int>(), row.at("test").get<int>()};
    }
    for (const auto& a : j.at("assignments")) {
      const auto id = a.at("image_id").get<std::string>();
      m.assignments[id] = partition_from_name(a.at("partition").get<std::string>());
      m.order.push_back(id);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("split manifest: ") + e.what());
  }
  return m;
}

std::string split_report_csv(const SplitManifest& m) {
  std::ostringstream os;
  os << "Class,Train,Validation,Test\n";
  for (int c = 0; c < kNumClasses; ++c) {
    os << class_code(c) << ',' << m.class_counts[c][0] << ',' << m.class_counts[c][1] << ','
       << m.class_counts[c][2] << '\n';
  }
  return os.str();
}

}  // namespace dermxai
