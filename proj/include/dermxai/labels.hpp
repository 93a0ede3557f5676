#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace dermxai {

inline constexpr int kNumClasses = 7;

// Canonical (alphabetical) order; the index is the network output slot.
enum class ClassLabel : int { AKIEC = 0, BCC = 1, BKL = 2, DF = 3, MEL = 4, NV = 5, VASC = 6 };

inline constexpr std::array<std::string_view, kNumClasses> kClassCodes = {"AKIEC", "BCC", "BKL", "DF",
                                                                          "MEL",   "NV",  "VASC"};

constexpr int class_index(ClassLabel label) { return static_cast<int>(label); }
std::string_view class_code(ClassLabel label);
std::string_view class_code(int index);

/// Throws kInvalidArgument for indices outside [0, 7).
ClassLabel class_from_index(int index);

/// Accepts the upper-case code ("MEL") case-insensitively.
std::optional<ClassLabel> class_from_code(std::string_view code);

/// Maps the metadata `dx` column (akiec, bcc, ...). Throws kParse with
/// "unknown diagnosis code <dx>" otherwise.
ClassLabel class_from_dx(std::string_view dx);

}  // namespace dermxai
