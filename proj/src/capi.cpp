#include "dermxai/dermxai.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "dermxai/error.hpp"
#include "dermxai/pipeline.hpp"
#include "dermxai/version.hpp"

namespace {

thread_local std::string g_last_error;

template <typename F>
dx_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return DX_OK;
  } catch (const dermxai::Error& e) {
    g_last_error = e.what();
    return static_cast<dx_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DX_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DX_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DX_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DX_ERR_INTERNAL;
  }
}

std::string required(const char* s, const char* what) {
  if (s == nullptr || *s == '\0') dermxai::fail(dermxai::ErrorCode::kInvalidArgument, std::string(what) + " is required");
  return s;
}

nlohmann::json parse_object(const char* text, const char* what) {
  if (text == nullptr || *text == '\0') return nlohmann::json::object();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    dermxai::fail(dermxai::ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) dermxai::fail(dermxai::ErrorCode::kParse, std::string(what) + ": expected a JSON object");
  return j;
}

dermxai::TrainCommand train_command(const char* config_file, const char* overrides_json, const char* policy_file) {
  dermxai::TrainCommand c;
  c.config_file = required(config_file, "config file");
  c.overrides = parse_object(overrides_json, "overrides");
  if (policy_file != nullptr && *policy_file != '\0') c.policy_file = policy_file;
  return c;
}

}  // namespace

struct dx_model {
  std::unique_ptr<dermxai::Classifier> impl;
};

extern "C" {

const char* dx_version(void) { return dermxai::kVersion; }

const char* dx_last_error(void) { return g_last_error.c_str(); }

int dx_deterministic_mode(void) { return dermxai::deterministic_mode() ? 1 : 0; }

dx_status dx_prepare(const char* metadata_csv, const char* image_dir, const char* out_dir, uint64_t seed, int side,
                     int metadata_only, int workers) {
  return guarded([&] {
    dermxai::PrepareOptions o;
    o.metadata_csv = required(metadata_csv, "metadata file");
    o.image_dir = required(image_dir, "image directory");
    o.out_dir = required(out_dir, "output directory");
    o.seed = seed;
    o.side = side;
    o.metadata_only = metadata_only != 0;
    o.workers = workers;
    dermxai::cmd_prepare(o);
  });
}

dx_status dx_validate_config(const char* config_file, const char* overrides_json, const char* policy_file) {
  return guarded([&] { dermxai::resolve_train_config(train_command(config_file, overrides_json, policy_file)); });
}

dx_status dx_train(const char* config_file, const char* overrides_json, const char* policy_file, const char* data_dir,
                   const char* out_dir, dx_epoch_callback callback, void* user) {
  return guarded([&] {
    auto c = train_command(config_file, overrides_json, policy_file);
    c.data_dir = required(data_dir, "data directory");
    c.out_dir = required(out_dir, "output directory");
    if (callback != nullptr) {
      c.on_epoch = [callback, user](const dermxai::EpochStat& e) {
        callback(e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.learning_rate, user);
      };
    }
    dermxai::cmd_train(c);
  });
}

dx_status dx_evaluate(const char* checkpoint_dir, const char* data_dir, const char* partition, const char* out_dir,
                      double* accuracy_out) {
  return guarded([&] {
    const auto report = dermxai::cmd_evaluate(required(checkpoint_dir, "checkpoint directory"),
                                              required(data_dir, "data directory"),
                                              partition == nullptr ? std::string("test") : std::string(partition),
                                              required(out_dir, "output directory"));
    if (accuracy_out != nullptr) *accuracy_out = report.accuracy;
  });
}

dx_status dx_explain(const char* checkpoint_dir, const char* image, const char* method, const char* target,
                     const char* params_json, const char* out_png) {
  return guarded([&] {
    dermxai::ExplainCommand c;
    c.checkpoint_dir = required(checkpoint_dir, "checkpoint directory");
    c.image = required(image, "image");
    if (method != nullptr && *method != '\0') c.method = method;
    if (target != nullptr && *target != '\0') c.target = target;
    c.params = parse_object(params_json, "params");
    c.out_png = required(out_png, "output path");
    dermxai::cmd_explain(c);
  });
}

dx_status dx_report(const char* const* run_dirs, size_t n_run_dirs, const char* prior_work_csv, const char* out_prefix,
                    char* markdown_out, size_t capacity) {
  return guarded([&] {
    if (run_dirs == nullptr && n_run_dirs > 0) {
      dermxai::fail(dermxai::ErrorCode::kInvalidArgument, "run_dirs is NULL");
    }
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < n_run_dirs; ++i) dirs.emplace_back(required(run_dirs[i], "run directory"));
    std::optional<std::filesystem::path> prior;
    if (prior_work_csv != nullptr && *prior_work_csv != '\0') prior = prior_work_csv;
    const std::string md = dermxai::cmd_report(dirs, out_prefix == nullptr ? "" : out_prefix, prior);
    if (markdown_out != nullptr && capacity > 0) {
      const size_t n = std::min(capacity - 1, md.size());
      std::memcpy(markdown_out, md.data(), n);
      markdown_out[n] = '\0';
    }
  });
}

dx_status dx_model_load(const char* checkpoint_dir, dx_model** out) {
  return guarded([&] {
    if (out == nullptr) dermxai::fail(dermxai::ErrorCode::kInvalidArgument, "out is NULL");
    *out = nullptr;
    auto model = std::make_unique<dx_model>();
    model->impl = dermxai::load_checkpoint(required(checkpoint_dir, "checkpoint directory"));
    *out = model.release();
  });
}

void dx_model_free(dx_model* model) { delete model; }

int dx_model_num_classes(const dx_model* model) { return model == nullptr ? 0 : model->impl->num_classes(); }

int dx_model_input_size(const dx_model* model) { return model == nullptr ? 0 : model->impl->config().input_size; }

dx_status dx_model_predict(const dx_model* model, const float* image, int height, int width, int channels,
                           double* probs_out) {
  return guarded([&] {
    if (model == nullptr || image == nullptr || probs_out == nullptr) {
      dermxai::fail(dermxai::ErrorCode::kInvalidArgument, "NULL argument");
    }
    if (height <= 0 || width <= 0 || channels != 3) {
      dermxai::fail(dermxai::ErrorCode::kInvalidArgument, "expected a positive-size 3-channel image");
    }
    dermxai::ImageTensor t(height, width, channels);
    std::memcpy(t.values.data(), image, t.values.size() * sizeof(float));
    const auto p = model->impl->predict(t);
    std::copy(p.begin(), p.end(), probs_out);
  });
}

dx_status dx_weighted_metrics(const int* y_true, const int* y_pred, size_t n, double* accuracy, double* precision,
                              double* recall, double* f1) {
  return guarded([&] {
    if (n > 0 && (y_true == nullptr || y_pred == nullptr)) {
      dermxai::fail(dermxai::ErrorCode::kInvalidArgument, "NULL label array");
    }
    const auto cm = dermxai::confusion_matrix({y_true, n}, {y_pred, n});
    const auto r = dermxai::weighted_report(cm);
    if (accuracy != nullptr) *accuracy = r.accuracy;
    if (precision != nullptr) *precision = r.weighted.precision;
    if (recall != nullptr) *recall = r.weighted.recall;
    if (f1 != nullptr) *f1 = r.weighted.f1;
  });
}

}  // extern "C"
