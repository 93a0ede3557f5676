#include "dermxai/labels.hpp"

#include <cctype>

#include "dermxai/error.hpp"

namespace dermxai {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

std::string_view class_code(ClassLabel label) { return kClassCodes[static_cast<std::size_t>(label)]; }

std::string_view class_code(int index) { return class_code(class_from_index(index)); }

ClassLabel class_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    fail(ErrorCode::kInvalidArgument, "class index out of range: " + std::to_string(index));
  }
  return static_cast<ClassLabel>(index);
}

std::optional<ClassLabel> class_from_code(std::string_view code) {
  const std::string key = upper(code);
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassCodes[i] == key) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

ClassLabel class_from_dx(std::string_view dx) {
  static constexpr std::array<std::string_view, kNumClasses> kDx = {"akiec", "bcc", "bkl", "df",
                                                                    "mel",   "nv",  "vasc"};
  for (int i = 0; i < kNumClasses; ++i) {
    if (kDx[i] == dx) return static_cast<ClassLabel>(i);
  }
  fail(ErrorCode::kParse, "unknown diagnosis code " + std::string(dx));
}

}  // namespace dermxai
