#include "dermxai/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "dermxai/augment.hpp"
#include "dermxai/error.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

InMemoryImages::InMemoryImages(std::vector<ImageTensor> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  require(images_.size() == labels_.size(), "image and label counts differ");
}

void InMemoryImages::add(ImageTensor image, int label) {
  images_.push_back(std::move(image));
  labels_.push_back(label);
}

double plateau_lr_step(std::span<const EpochStat> history, int patience, double factor, double min_lr,
                       double current_lr) {
  require(patience >= 1, "patience must be at least 1");
  require(factor > 0.0 && factor < 1.0, "factor must lie in (0, 1)");
  if (history.empty()) return current_lr;
  double best = -std::numeric_limits<double>::infinity();
  int wait = 0;
  bool reduce_now = false;
  for (const auto& e : history) {
    reduce_now = false;
    if (e.val_accuracy > best) {
      best = e.val_accuracy;
      wait = 0;
    } else if (++wait >= patience) {
      reduce_now = true;
      wait = 0;
    }
  }
  return reduce_now ? std::max(current_lr * factor, min_lr) : current_lr;
}

int select_best(std::span<const EpochStat> history) {
  if (history.empty()) fail(ErrorCode::kInvalidArgument, "select_best: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].val_accuracy > history[best].val_accuracy) best = i;
  }
  return history[best].epoch;
}

Evaluation evaluate(const Classifier& model, const LabeledImages& data) {
  Evaluation ev;
  if (data.size() == 0) return ev;
  double loss = 0.0;
  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = model.logits(to_planar(data.image(i)));
    const int label = data.label(i);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    loss += -(logits[static_cast<std::size_t>(label)] - mx - std::log(lse));
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ev.predictions.push_back(pred);
    correct += pred == label ? 1 : 0;
  }
  ev.loss = loss / static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

void adam_update(std::vector<Param*>& params, AdamState& state, const AdamParams& adam, double lr,
                 double grad_scale) {
  if (state.m.empty()) {
    for (Param* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] * grad_scale;
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g;
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam.epsilon);
    }
  }
}

}  // namespace

TrainingResult train(Classifier& model, const LabeledImages& train_set, const LabeledImages& val_set,
                     const ModelConfig& config, const TrainOptions& options) {
  if (config.epochs <= 0) fail(ErrorCode::kInvalidArgument, "no training epochs");
  config.validate();
  if (train_set.size() == 0) fail(ErrorCode::kInvalidArgument, "training set is empty");
  if (val_set.size() == 0) fail(ErrorCode::kInvalidArgument, "validation set is empty");
  for (const LabeledImages* set : {&train_set, &val_set}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      const int l = set->label(i);
      if (l < 0 || l >= config.num_classes) {
        fail(ErrorCode::kData, "label " + std::to_string(l) + " cannot be one-hot encoded over " +
                                   std::to_string(config.num_classes) + " classes");
      }
    }
  }

  TrainingResult result;
  result.seed = config.seed;
  result.best_checkpoint = options.checkpoint_dir;
  auto params = model.trainable_params();
  AdamState adam;
  double lr = config.learning_rate;
  double best_val = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2, static_cast<std::uint64_t>(epoch)));
    seeded_shuffle(std::span<std::size_t>(order), shuffle_rng);
    std::mt19937_64 rng(derive_seed(config.seed, 3, static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      model.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        const TransformSpec spec = sample_transform(config.augmentation, rng);
        const ImageTensor augmented =
            apply_transform(train_set.image(idx), spec, config.augmentation.fill_mode, config.augmentation.fill_value);
        int predicted = -1;
        const int label = train_set.label(idx);
        const double loss = model.accumulate_gradients(to_planar(augmented), label, rng, &predicted);
        if (!std::isfinite(loss)) {
          fail(ErrorCode::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                        std::to_string(idx) + " (learning rate " + std::to_string(lr) + ")");
        }
        loss_sum += loss;
        correct += predicted == label ? 1 : 0;
      }
      adam_update(params, adam, options.adam, lr, 1.0 / static_cast<double>(end - begin));
    }

    const Evaluation val = evaluate(model, val_set);
    if (!std::isfinite(val.loss)) fail(ErrorCode::kNumeric, "non-finite validation loss at epoch " + std::to_string(epoch));
    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = loss_sum / static_cast<double>(order.size());
    stat.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    stat.val_loss = val.loss;
    stat.val_accuracy = val.accuracy;
    stat.learning_rate = lr;
    result.history.push_back(stat);

    if (stat.val_accuracy > best_val) {
      best_val = stat.val_accuracy;
      result.best_epoch = epoch;
      if (!options.checkpoint_dir.empty()) {
        model.save(options.checkpoint_dir,
                   {{"epoch", epoch}, {"val_accuracy", stat.val_accuracy}, {"seed", config.seed}});
      }
    }
    if (options.on_epoch) options.on_epoch(stat);
    lr = plateau_lr_step(result.history, config.lr_plateau.patience, config.lr_plateau.factor,
                         config.lr_plateau.min_lr, lr);
  }
  return result;
}

std::string history_csv(std::span<const EpochStat> history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n";
  os << std::setprecision(17);
  for (const auto& e : history) {
    os << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.val_loss << ',' << e.val_accuracy
       << ',' << e.learning_rate << '\n';
  }
  return os.str();
}

}  // namespace dermxai
