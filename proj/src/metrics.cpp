#include "dermxai/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "dermxai/error.hpp"

namespace dermxai {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (int c = 0; c < kNumClasses; ++c) n += counts[c][c];
  return n;
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
  std::int64_t n = 0;
  for (auto v : counts[static_cast<std::size_t>(c)]) n += v;
  return n;
}

std::int64_t ConfusionMatrix::column_sum(int c) const {
  std::int64_t n = 0;
  for (const auto& row : counts) n += row[static_cast<std::size_t>(c)];
  return n;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    fail(ErrorCode::kInvalidArgument, "confusion_matrix: length mismatch (" + std::to_string(y_true.size()) +
                                          " vs " + std::to_string(y_pred.size()) + ")");
  }
  ConfusionMatrix cm;
  for (std::size_t k = 0; k < y_true.size(); ++k) {
    const int t = y_true[k], p = y_pred[k];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) {
      fail(ErrorCode::kInvalidArgument, "confusion_matrix: class index out of range at position " +
                                            std::to_string(k));
    }
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

PerClassCounts per_class_counts(const ConfusionMatrix& cm, int c) {
  require(c >= 0 && c < kNumClasses, "class index out of range");
  PerClassCounts k;
  k.tp = cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  k.fp = cm.column_sum(c) - k.tp;
  k.fn = cm.row_sum(c) - k.tp;
  k.tn = cm.total() - k.tp - k.fp - k.fn;
  return k;
}

namespace {

Metric ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

Metric precision(const PerClassCounts& k) { return ratio(k.tp, k.tp + k.fp); }
Metric recall(const PerClassCounts& k) { return ratio(k.tp, k.tp + k.fn); }

Metric f1(double p, double r) {
  if (p + r == 0.0) return {0.0, true};
  return {2.0 * p * r / (p + r), false};
}

double accuracy(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

Metric one_vs_rest_accuracy(const PerClassCounts& k) { return ratio(k.tp + k.tn, k.tp + k.tn + k.fp + k.fn); }

ClassificationReport weighted_report(const ConfusionMatrix& cm) {
  ClassificationReport r;
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  const double n = static_cast<double>(cm.total());
  for (int c = 0; c < kNumClasses; ++c) {
    const auto k = per_class_counts(cm, c);
    const Metric p = precision(k), rc = recall(k), f = f1(p.value, rc.value);
    auto& m = r.per_class[static_cast<std::size_t>(c)];
    m.precision = p.value;
    m.recall = rc.value;
    m.f1 = f.value;
    m.support = cm.row_sum(c);
    m.one_vs_rest_accuracy = one_vs_rest_accuracy(k).value;
    m.degenerate = p.degenerate || rc.degenerate || f.degenerate;
    const double w = static_cast<double>(m.support);
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  r.weighted.precision /= n;
  r.weighted.recall /= n;
  r.weighted.f1 /= n;
  return r;
}

nlohmann::json report_to_json(const ClassificationReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[static_cast<std::size_t>(c)];
    per_class[std::string(class_code(c))] = {{"precision", m.precision},
                                             {"recall", m.recall},
                                             {"f1", m.f1},
                                             {"support", m.support},
                                             {"one_vs_rest_accuracy", m.one_vs_rest_accuracy},
                                             {"degenerate", m.degenerate}};
  }
  nlohmann::json cm = nlohmann::json::array();
  for (const auto& row : r.confusion.counts) cm.push_back(row);
  return {{"accuracy", r.accuracy},
          {"weighted", {{"precision", r.weighted.precision}, {"recall", r.weighted.recall}, {"f1", r.weighted.f1}}},
          {"per_class", per_class},
          {"confusion_matrix", cm},
          {"classes", kClassCodes}};
}

ClassificationReport report_from_json(const nlohmann::json& j) {
  ClassificationReport r;
  try {
    r.accuracy = j.at("accuracy").get<double>();
    r.weighted = {j.at("weighted").at("precision").get<double>(), j.at("weighted").at("recall").get<double>(),
                  j.at("weighted").at("f1").get<double>()};
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& m = j.at("per_class").at(std::string(class_code(c)));
      auto& out = r.per_class[static_cast<std::size_t>(c)];
      out.precision = m.at("precision").get<double>();
      out.recall = m.at("recall").get<double>();
      out.f1 = m.at("f1").get<double>();
      out.support = m.at("support").get<std::int64_t>();
      out.one_vs_rest_accuracy = m.value("one_vs_rest_accuracy", 0.0);
      out.degenerate = m.value("degenerate", false);
    }
    const auto& cm = j.at("confusion_matrix");
    for (int t = 0; t < kNumClasses; ++t)
      for (int p = 0; p < kNumClasses; ++p) r.confusion.counts[t][p] = cm.at(t).at(p).get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("classification report: ") + e.what());
  }
  return r;
}

std::string report_csv(const ClassificationReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "Class,Precision,Recall,F1-Score,Support\n";
  std::int64_t total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[static_cast<std::size_t>(c)];
    os << class_code(c) << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.support << '\n';
    total += m.support;
  }
  os << "weighted avg," << r.weighted.precision << ',' << r.weighted.recall << ',' << r.weighted.f1 << ',' << total
     << '\n';
  return os.str();
}

std::string summary_csv(const ClassificationReport& r, const std::string& model) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "Model,Accuracy,Precision,Recall,F1-Score\n";
  os << model << ',' << r.accuracy << ',' << r.weighted.precision << ',' << r.weighted.recall << ','
     << r.weighted.f1 << '\n';
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\predicted";
  for (auto code : kClassCodes) os << ',' << code;
  os << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    os << class_code(t);
    for (int p = 0; p < kNumClasses; ++p) os << ',' << cm.counts[t][p];
    os << '\n';
  }
  return os.str();
}

}  // namespace dermxai
