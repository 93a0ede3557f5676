// Acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "dermxai/augment.hpp"
#include "dermxai/dataset.hpp"
#include "dermxai/metrics.hpp"
#include "dermxai/pipeline.hpp"
#include "dermxai/tensor.hpp"
#include "dermxai/train.hpp"
#include "dermxai/xai.hpp"
#include "support/test_support.hpp"

using namespace dermxai;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kMetricsTol = 1e-12;
constexpr double kGradRelTol = 1e-3;
constexpr double kGradAbsFloor = 1e-8;  // denominators below this compare absolutely
constexpr double kFdStep = 1e-5;
constexpr double kXaiTol = 1e-6;
constexpr double kCheckpointTol = 1e-6;
constexpr double kChanceMargin = 0.05;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Outcome split_reproduction() {
  const auto dir = dxtest::temp_dir("acc_split");
  std::ofstream(dir / "HAM10000_metadata.csv") << dxtest::synthetic_metadata(dxtest::kHamTotals);
  fs::create_directories(dir / "images");
  PrepareOptions o;
  o.metadata_csv = dir / "HAM10000_metadata.csv";
  o.image_dir = dir / "images";
  o.out_dir = dir / "out";
  o.metadata_only = true;
  const auto m = cmd_prepare(o);
  const int table[7][3] = {{264, 30, 33},  {417, 46, 51},    {890, 99, 110}, {93, 10, 12},
                           {902, 100, 111}, {5430, 604, 671}, {115, 13, 14}};
  Outcome r;
  std::ifstream in(dir / "out" / "split_report.csv");
  std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  int mismatches = 0;
  for (int c = 0; c < 7; ++c) {
    const std::string row = std::string(class_code(c)) + "," + std::to_string(table[c][0]) + "," +
                            std::to_string(table[c][1]) + "," + std::to_string(table[c][2]);
    if (csv.find(row + "\n") == std::string::npos) ++mismatches;
    for (int p = 0; p < 3; ++p) mismatches += m.class_counts[c][p] != table[c][p];
  }
  r.pass = mismatches == 0;
  r.detail = "7 classes x 3 partitions, " + std::to_string(mismatches) + " mismatches";
  fs::remove_all(dir);
  return r;
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0;
  int identity_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 500;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng() % 7);
      p[i] = rng() % 2 ? t[i] : static_cast<int>(rng() % 7);
    }
    const auto r = weighted_report(confusion_matrix(t, p));
    const auto o = dxtest::oracle_metrics(t, p);
    if (r.confusion.counts != o.cm) worst = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 7; ++c) {
      const auto& m = r.per_class[static_cast<std::size_t>(c)];
      worst = std::max({worst, std::abs(m.precision - o.precision[c]), std::abs(m.recall - o.recall[c]),
                        std::abs(m.f1 - o.f1[c])});
      if (m.support != o.support[c]) worst = std::numeric_limits<double>::infinity();
    }
    worst = std::max({worst, std::abs(r.accuracy - o.accuracy), std::abs(r.weighted.precision - o.w_precision),
                      std::abs(r.weighted.recall - o.w_recall), std::abs(r.weighted.f1 - o.w_f1)});
    identity_failures += std::abs(r.weighted.recall - r.accuracy) > kMetricsTol;
  }
  return {worst <= kMetricsTol && identity_failures == 0,
          "1000 instances, max deviation " + fmt(worst) + ", recall==accuracy failures " +
              std::to_string(identity_failures)};
}

Outcome gradient_check() {
  auto model = build_classifier(dxtest::toy_config(64, 31));
  std::mt19937_64 rng(31);
  const Tensor x = to_planar(dxtest::random_image(64, 64, rng));
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const int cls = static_cast<int>(rng() % 7);
    const Tensor g = model->logit_gradient(x, cls);
    const std::size_t i = rng() % x.size();
    Tensor xp = x, xm = x;
    xp.data[i] += kFdStep;
    xm.data[i] -= kFdStep;
    const double fd = (model->logits(xp)[cls] - model->logits(xm)[cls]) / (2 * kFdStep);
    const double denom = std::max({std::abs(fd), std::abs(g.data[i]), kGradAbsFloor});
    worst = std::max(worst, std::abs(fd - g.data[i]) / denom);
  }
  return {worst <= kGradRelTol, "100 pixels, max relative error " + fmt(worst)};
}

Outcome xai_degeneracies() {
  auto model = build_classifier(dxtest::toy_config(64, 41));
  std::mt19937_64 rng(41);
  const auto img = dxtest::random_image(64, 64, rng);
  const auto v = vanilla_gradient(*model, img, 3);
  const double d_sg = max_abs_diff(smoothgrad(*model, img, 3, {25, 0.0, 7}).values, v.values);
  const double d_cam = max_abs_diff(faster_score_cam(*model, img, 3, {"", std::nullopt}).values,
                                    score_cam(*model, img, 3, {"", std::nullopt}).values);
  dxtest::ConstantModel constant;
  int degenerate = 0;
  for (const auto& m : {vanilla_gradient(constant, img, 0), smoothgrad(constant, img, 0, {5, 0.15, 1}),
                        score_cam(constant, img, 0, {}), faster_score_cam(constant, img, 0, {"", 16})}) {
    degenerate += m.degenerate && m.max() == 0.0;
  }
  return {d_sg <= kXaiTol && d_cam <= kXaiTol && degenerate == 4,
          "smoothgrad(sigma=0) diff " + fmt(d_sg) + ", faster(k=ALL) diff " + fmt(d_cam) + ", degenerate maps " +
              std::to_string(degenerate) + "/4"};
}

Outcome score_cam_oracle() {
  auto model = build_classifier(dxtest::toy_config(64, 51));
  std::mt19937_64 rng(51);
  double worst = 0;
  for (int i = 0; i < 5; ++i) {
    const auto img = dxtest::random_image(64, 64, rng);
    const int cls = static_cast<int>(rng() % 7);
    const auto map = score_cam(*model, img, cls, {});
    worst = std::max(worst, max_abs_diff(map.values, dxtest::ref_score_cam(*model, img, cls, "conv3")));
  }
  return {worst <= kXaiTol, "5 images, max deviation " + fmt(worst)};
}

Outcome training_contracts() {
  struct Case {
    std::vector<double> val;
    int patience;
    double lr, factor, min_lr;
    std::vector<double> expected;  // lr after each epoch
  };
  const std::vector<Case> cases = {
      {{.5, .6, .6, .6, .6, .6, .6}, 5, 1e-3, 0.1, 1e-6, {1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-4}},
      {{.1, .2, .3, .4, .5, .6, .7}, 5, 1e-3, 0.1, 1e-6, {1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3}},
      {{.5, .5, .5, .5, .5, .5}, 5, 1e-6, 0.1, 1e-6, {1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6}},
      {{.5, .4, .4, .4, .3, .6, .6, .6}, 2, 1.0, 0.5, 0.0, {1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.125}},
      {{.5, .5, .5}, 1, 1.0, 0.5, 0.0, {1.0, 0.5, 0.25}},
  };
  int lr_failures = 0;
  for (const auto& c : cases) {
    std::vector<EpochStat> h;
    double lr = c.lr;
    for (std::size_t i = 0; i < c.val.size(); ++i) {
      EpochStat e;
      e.epoch = static_cast<int>(i) + 1;
      e.val_accuracy = c.val[i];
      h.push_back(e);
      lr = plateau_lr_step(h, c.patience, c.factor, c.min_lr, lr);
      lr_failures += std::abs(lr - c.expected[i]) > 1e-15 * c.expected[i] + 1e-18;
    }
  }
  std::mt19937_64 rng(61);
  int best_failures = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<EpochStat> h(1 + rng() % 80);
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i].epoch = static_cast<int>(i) + 1;
      h[i].val_accuracy = static_cast<double>(rng() % 10) / 10.0;
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i].val_accuracy > h[best].val_accuracy) best = i;
    }
    best_failures += select_best(h) != h[best].epoch;
  }
  return {lr_failures == 0 && best_failures == 0,
          std::to_string(cases.size()) + " plateau histories (" + std::to_string(lr_failures) +
              " wrong steps), 1000 select_best histories (" + std::to_string(best_failures) + " wrong)"};
}

Outcome smoke_training() {
  const int side = 32;
  std::mt19937_64 rng(71);
  std::vector<LesionRecord> records;
  std::map<std::string, std::pair<ImageTensor, int>> images;
  for (int c = 0; c < 7; ++c) {
    for (int i = 0; i < 50; ++i) {
      LesionRecord r;
      r.image_id = "img_" + std::to_string(c) + "_" + std::to_string(i);
      r.lesion_id = r.image_id;
      r.label = class_from_index(c);
      records.push_back(r);
      images[r.image_id] = {dxtest::class_image(c, side, rng), c};
    }
  }
  const auto split = stratified_split(records, {}, 71);
  InMemoryImages train_set, val_set;
  for (const auto& id : split.ordered_ids(Partition::kTrain)) train_set.add(images[id].first, images[id].second);
  for (const auto& id : split.ordered_ids(Partition::kVal)) val_set.add(images[id].first, images[id].second);

  auto config = dxtest::toy_config(side, 71);
  config.epochs = 5;
  config.batch_size = 16;
  const auto dir = dxtest::temp_dir("acc_smoke");
  auto model = build_classifier(config);
  TrainOptions opt;
  opt.checkpoint_dir = dir / "checkpoint";
  const auto result = train(*model, train_set, val_set, config, opt);
  const double best = result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_accuracy;
  const double recomputed = evaluate(*load_checkpoint(dir / "checkpoint"), val_set).accuracy;
  fs::remove_all(dir);
  const double threshold = 1.0 / 7.0 + kChanceMargin;
  return {best > threshold && std::abs(recomputed - best) <= kCheckpointTol,
          std::to_string(train_set.size()) + " train / " + std::to_string(val_set.size()) +
              " val, best val accuracy " + fmt(best) + " (threshold " + fmt(threshold) + "), reloaded " +
              fmt(recomputed)};
}

Outcome headline_documented() {
  // Not reproducible at desk scale: only checks that the GPU recipe is
  // shipped with the published budgets and the reported figure is on file.
  const fs::path root = DERMXAI_SOURCE_DIR;
  TrainCommand c;
  c.config_file = root / "configs" / "xception.json";
  const auto cfg = resolve_train_config(c);
  const auto prior = read_prior_work(root / "docs" / "prior_work.csv");
  bool reported = false;
  for (const auto& r : prior) reported |= r.model == "XceptionNet" && std::abs(r.accuracy - 0.8872) < 1e-12;
  std::ifstream readme(root / "README.md");
  std::string text((std::istreambuf_iterator<char>(readme)), std::istreambuf_iterator<char>());
  const bool recipe = text.find("88.72") != std::string::npos;
  return {cfg.epochs == 55 && cfg.batch_size == 16 && reported && recipe,
          "not gated: GPU recipe config (55 epochs, batch 16) and reported 88.72% documented; not reproduced"};
}

Outcome augmentation_invariants() {
  std::mt19937_64 rng(91);
  const auto img = dxtest::random_image(16, 16, rng);
  const AugmentationPolicy policy;
  int shape_range = 0, identity = 0, double_flip = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_transform(policy, rng);
    const auto out = apply_transform(img, t, policy.fill_mode);
    const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
    shape_range += !(out.same_shape(img) && *lo >= 0.0f && *hi <= 1.0f);
    const auto id = apply_transform(out, sample_transform(AugmentationPolicy::none(), rng), policy.fill_mode);
    identity += id.values != out.values;
    double_flip += flip_horizontal(flip_horizontal(out)).values != out.values ||
                   flip_vertical(flip_vertical(out)).values != out.values;
  }
  return {shape_range == 0 && identity == 0 && double_flip == 0,
          "10000 transforms, violations: shape/range " + std::to_string(shape_range) + ", identity " +
              std::to_string(identity) + ", double flip " + std::to_string(double_flip)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"split reproduction", split_reproduction},
      {"metrics oracle equivalence", metrics_oracle},
      {"gradient correctness", gradient_check},
      {"xai degeneracies", xai_degeneracies},
      {"score-cam oracle", score_cam_oracle},
      {"training-loop contracts", training_contracts},
      {"smoke training", smoke_training},
      {"headline non-reproducibility", headline_documented},
      {"augmentation invariants", augmentation_invariants},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("criterion %zu %-30s %s  %s  [%.1fs]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
