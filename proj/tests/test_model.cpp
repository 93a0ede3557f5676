#include <doctest.h>

#include "dermxai/error.hpp"
#include "dermxai/model.hpp"
#include "dermxai/tensor.hpp"
#include "support/test_support.hpp"

using namespace dermxai;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

ModelConfig tiny_provider_config() {
  auto c = ModelConfig::reference(BackboneId::kXception);
  c.input_size = 32;
  c.backbone_weights = dxtest::fixture("tiny_backbone.onnx").string();
  return c;
}

}  // namespace

TEST_CASE("reference configurations carry the published hyperparameters") {
  const std::pair<BackboneId, int> rows[] = {{BackboneId::kXception, 55},
                                             {BackboneId::kEfficientNetV2S, 50},
                                             {BackboneId::kInceptionResNetV2, 75},
                                             {BackboneId::kEfficientNetV2M, 80}};
  for (auto [id, epochs] : rows) {
    const auto c = ModelConfig::reference(id);
    CHECK(c.epochs == epochs);
    CHECK(c.batch_size == 16);
    CHECK(c.dropout == 0.5);
    CHECK(c.learning_rate == 0.001);
    CHECK(c.lr_plateau.patience == 5);
    CHECK(c.num_classes == 7);
  }
}

TEST_CASE("backbone table lists the published CAM layers and feature shapes") {
  CHECK(backbone_spec(BackboneId::kXception).last_conv_layer == "block14_sepconv2_act");
  CHECK(backbone_spec(BackboneId::kXception).feature_channels == 2048);
  CHECK(backbone_spec(BackboneId::kInceptionResNetV2).feature_side == 5);
  CHECK(backbone_spec(BackboneId::kEfficientNetV2M).normalization == InputNormalization::kByte);
  CHECK(backbone_from_name("efficientnet_v2s") == BackboneId::kEfficientNetV2S);
  CHECK(code_of([] { backbone_from_name("resnet50"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config validation rejects degenerate settings") {
  auto c = dxtest::toy_config();
  c.epochs = 0;
  try {
    c.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no training epochs") != std::string::npos);
  }
  c = dxtest::toy_config();
  c.batch_size = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument);
  c = dxtest::toy_config();
  c.dropout = 1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config round-trips through JSON") {
  auto c = dxtest::toy_config(40, 99);
  c.freeze_backbone = true;
  c.lr_plateau.factor = 0.5;
  c.augmentation.rotation_max = 7;
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(code_of([] { config_from_json(nlohmann::json{{"backbone", "VGG"}}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("toy classifier outputs a probability vector and exposes conv3 as the CAM layer") {
  auto m = build_classifier(dxtest::toy_config());
  std::mt19937_64 rng(1);
  const auto p = m->predict(dxtest::random_image(32, 32, rng));
  REQUIRE(p.size() == 7);
  double sum = 0;
  for (double v : p) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  int flagged = 0;
  for (const auto& l : list_layers(*m, 32)) flagged += l.default_cam_target;
  CHECK(flagged == 1);
  CHECK(default_cam_layer(*m, 32) == "conv3");
  const auto acts = m->activations(dxtest::random_image(32, 32, rng), "conv3");
  CHECK(acts.channels == 16);
  CHECK(acts.height == 4);
}

TEST_CASE("input gradient matches central finite differences") {
  auto m = build_classifier(dxtest::toy_config(24, 8));
  std::mt19937_64 rng(2);
  const Tensor x = to_planar(dxtest::random_image(24, 24, rng));
  const int cls = 3;
  const Tensor g = m->logit_gradient(x, cls);
  const double h = 1e-5;
  int checked = 0;
  for (int k = 0; k < 30; ++k) {
    const std::size_t i = rng() % x.size();
    Tensor xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (m->logits(xp)[cls] - m->logits(xm)[cls]) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g.data[i]), 1e-6});
    CHECK(std::abs(fd - g.data[i]) / denom <= 1e-3);
    ++checked;
  }
  CHECK(checked == 30);
}

TEST_CASE("same seed builds identical models, different seeds differ") {
  std::mt19937_64 rng(3);
  const auto img = dxtest::random_image(32, 32, rng);
  const auto a = build_classifier(dxtest::toy_config(32, 5))->predict(img);
  const auto b = build_classifier(dxtest::toy_config(32, 5))->predict(img);
  const auto c = build_classifier(dxtest::toy_config(32, 6))->predict(img);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("checkpoints reload to identical predictions") {
  const auto dir = dxtest::temp_dir("ckpt");
  auto m = build_classifier(dxtest::toy_config());
  m->save(dir / "ck", {{"epoch", 3}});
  auto back = load_checkpoint(dir / "ck");
  std::mt19937_64 rng(4);
  const auto img = dxtest::random_image(32, 32, rng);
  CHECK(back->predict(img) == m->predict(img));
  CHECK(read_checkpoint_info(dir / "ck").at("epoch") == 3);
  CHECK(code_of([&] { load_checkpoint(dir / "missing"); }) == ErrorCode::kNotFound);
  std::filesystem::remove_all(dir);
}

TEST_CASE("provider backbone runs inference only and keeps its graph with the checkpoint") {
  auto m = build_classifier(tiny_provider_config());
  std::mt19937_64 rng(5);
  const auto img = dxtest::random_image(32, 32, rng);
  const auto p = m->predict(img);
  CHECK(p.size() == 7);
  CHECK_FALSE(m->supports_input_gradient());
  CHECK(code_of([&] { m->input_gradient(img, 0); }) == ErrorCode::kCapability);
  CHECK(default_cam_layer(*m, 32) == "block14_sepconv2_act");
  const auto acts = m->activations(img, "block14_sepconv2_act");
  CHECK(acts.channels == 8);
  CHECK(acts.height == 8);

  const auto dir = dxtest::temp_dir("provider");
  m->save(dir / "ck", nlohmann::json::object());
  CHECK(std::filesystem::exists(dir / "ck" / "backbone.onnx"));
  CHECK(load_checkpoint(dir / "ck")->predict(img) == p);
  std::filesystem::remove_all(dir);
}

TEST_CASE("provider backbone reports missing weights") {
  auto c = tiny_provider_config();
  c.backbone_weights = "/nonexistent/xception.onnx";
  CHECK(code_of([&] { build_classifier(c); }) == ErrorCode::kNotFound);
}
