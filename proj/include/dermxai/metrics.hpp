#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "dermxai/labels.hpp"

namespace dermxai {

/// counts[true][predicted] in canonical class order.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int c) const;
  std::int64_t column_sum(int c) const;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred);

struct PerClassCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

PerClassCounts per_class_counts(const ConfusionMatrix& cm, int c);

/// A ratio that may have had a zero denominator, in which case value is 0.
struct Metric {
  double value = 0.0;
  bool degenerate = false;
};

Metric precision(const PerClassCounts& k);
Metric recall(const PerClassCounts& k);
Metric f1(double precision, double recall);
/// Overall multiclass accuracy, trace / total. Throws kInvalidArgument when empty.
double accuracy(const ConfusionMatrix& cm);
/// One-vs-rest (TP + TN) / total for a single class.
Metric one_vs_rest_accuracy(const PerClassCounts& k);

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::int64_t support = 0;
  double one_vs_rest_accuracy = 0.0;
  bool degenerate = false;
};

struct WeightedMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ClassificationReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  WeightedMetrics weighted;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// Weighted metrics are support-weighted means over the classes.
ClassificationReport weighted_report(const ConfusionMatrix& cm);

nlohmann::json report_to_json(const ClassificationReport& report);
ClassificationReport report_from_json(const nlohmann::json& j);
/// Class,Precision,Recall,F1-Score,Support rows plus a "weighted avg" row.
std::string report_csv(const ClassificationReport& report);
/// Single Model,Accuracy,Precision,Recall,F1-Score row (weighted).
std::string summary_csv(const ClassificationReport& report, const std::string& model);
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace dermxai
