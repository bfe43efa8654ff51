#include "canonprobe/corrector.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "canonprobe/wire.hpp"

namespace canonprobe {

OrientationLogits::OrientationLogits(const Logits& z) : z_(z) {
  for (double v : z_)
    if (!std::isfinite(v)) throw std::invalid_argument("orientation logits must be finite");
}

OrientationLogits predict_logits(const ClassifierModel& model, const RasterImage& img) {
  const auto& arch = model.architecture();
  const Tensor input =
      preprocess_val(img, arch.normalize_mean, arch.normalize_std, arch.val_geometry());
  return OrientationLogits(model.logits(input));
}

RotationLabel predict_rotation(const OrientationLogits& logits) {
  int best = 0;
  for (int k = 1; k < kNumOrientations; ++k)
    if (logits[k] > logits[best]) best = k;
  return RotationLabel(best);
}

Canonicalized canonicalize(const ClassifierModel& model, const RasterImage& img) {
  const RotationLabel predicted = predict_rotation(predict_logits(model, img));
  return {rotate_image(img, inverse(predicted)), predicted};
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  architecture.validate();
}

void to_json(nlohmann::json& j, const TrainingLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  j = {{"optimizer", log.optimizer},
       {"epochs", epochs},
       {"best_epoch", log.best_epoch},
       {"best_val_accuracy", log.best_val_accuracy}};
}

namespace {

void require_balanced(const std::vector<LabeledSample>& set, const char* name) {
  if (set.empty()) throw std::invalid_argument(std::string(name) + " set is empty");
  std::array<std::size_t, 4> counts{};
  for (const auto& s : set) ++counts[s.label.k()];
  for (auto c : counts)
    if (c != counts[0]) throw std::invalid_argument(std::string(name) + " set labels are not balanced");
}

double accuracy_on(const ClassifierModel& model, const std::vector<Tensor>& inputs,
                   const std::vector<LabeledSample>& samples) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (predict_rotation(OrientationLogits(model.logits(inputs[i]))) == samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

}  // namespace

TrainResult train_classifier(const std::vector<LabeledSample>& train_set,
                             const std::vector<LabeledSample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  require_balanced(train_set, "training");
  require_balanced(val_set, "validation");

  const Architecture& arch = cfg.architecture;
  AugmentationConfig aug = cfg.augmentation;
  aug.output_size = arch.input_size;
  aug.normalize_mean = arch.normalize_mean;
  aug.normalize_std = arch.normalize_std;
  aug.seed = SeedSequence(cfg.seed).add("augment").value();
  aug.validate();

  ClassifierModel model = ClassifierModel::initialized(arch, cfg.seed);
  const std::string frozen_before = frozen_prefix_digest(model);

  std::vector<Tensor> val_inputs;
  val_inputs.reserve(val_set.size());
  for (const auto& s : val_set)
    val_inputs.push_back(preprocess_val(s.image, arch.normalize_mean, arch.normalize_std, arch.val_geometry()));

  auto& params = model.parameters();
  std::vector<std::vector<double>> velocity = model.zero_gradients();

  TrainingLog log;
  {
    std::ostringstream os;
    os << "sgd(momentum=" << cfg.momentum << ", lr=" << cfg.learning_rate
       << ", weight_decay=" << cfg.weight_decay << ", batch_size=" << cfg.batch_size << ")";
    log.optimizer = os.str();
  }
  ClassifierModel best = model;
  double best_acc = -1.0;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = SeedSequence(cfg.seed).add("shuffle").add(static_cast<std::uint64_t>(epoch)).rng();
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(uniform(shuffle_rng, 0.0, static_cast<double>(i + 1)));
      std::swap(order[i], order[std::min(j, i)]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      auto grads = model.zero_gradients();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const LabeledSample& s = train_set[order[b]];
        Rng aug_rng = sample_rng(aug, s, static_cast<std::uint64_t>(epoch));
        const Tensor input = augment_train(s, aug, aug_rng);
        Rng dropout_rng = SeedSequence(cfg.seed).add("dropout").add(static_cast<std::uint64_t>(epoch)).add(b).rng();
        batch_loss += model.accumulate_gradient(input, s.label.k(), &dropout_rng, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged(epoch, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (model.is_frozen(p)) continue;
        auto& w = params[p].values;
        auto& v = velocity[p];
        const auto& g = grads[p];
        for (std::size_t k = 0; k < w.size(); ++k) {
          v[k] = cfg.momentum * v[k] + g[k] * scale + cfg.weight_decay * w[k];
          w[k] -= cfg.learning_rate * v[k];
        }
      }
    }

    ClassifierModel snapshot = model;
    snapshot.round_to_float();
    const double acc = accuracy_on(snapshot, val_inputs, val_set);
    log.epochs.push_back({epoch, epoch_loss / static_cast<double>(train_set.size()), acc});
    if (acc > best_acc) {
      best_acc = acc;
      best = std::move(snapshot);
      log.best_epoch = epoch;
    }
  }
  log.best_val_accuracy = best_acc;

  if (frozen_prefix_digest(best) != frozen_before)
    throw std::logic_error("frozen prefix parameters changed during training");
  return {std::move(best), std::move(log)};
}

Evaluation evaluate_predictions(const std::vector<std::pair<RotationLabel, RotationLabel>>& truth_and_pred) {
  if (truth_and_pred.empty()) throw std::invalid_argument("cannot evaluate an empty sample set");
  Evaluation ev;
  std::int64_t correct = 0;
  for (const auto& [truth, pred] : truth_and_pred) {
    ++ev.confusion[truth.k()][pred.k()];
    if (truth == pred) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(truth_and_pred.size());
  return ev;
}

Evaluation evaluate_classifier(const ClassifierModel& model, const std::vector<LabeledSample>& samples) {
  std::vector<std::pair<RotationLabel, RotationLabel>> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) pairs.emplace_back(s.label, predict_rotation(predict_logits(model, s.image)));
  return evaluate_predictions(pairs);
}

std::string frozen_prefix_digest(const ClassifierModel& model) {
  std::vector<std::uint8_t> bytes;
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!model.is_frozen(i)) continue;
    for (char c : params[i].name) bytes.push_back(static_cast<std::uint8_t>(c));
    for (double v : params[i].values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return sha256_hex(bytes);
}

}  // namespace canonprobe
