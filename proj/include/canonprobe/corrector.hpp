#pragma once

// Orientation corrector: predict which quarter turn was applied to an image
// and undo it before generation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "canonprobe/augment.hpp"
#include "canonprobe/dataset.hpp"
#include "canonprobe/network.hpp"
#include "canonprobe/rotgroup.hpp"

namespace canonprobe {

/// Scores over the four rotation classes; index k <-> RotationLabel(k).
class OrientationLogits {
 public:
  /// Throws std::invalid_argument on non-finite entries.
  explicit OrientationLogits(const Logits& z);
  const Logits& values() const { return z_; }
  double operator[](int k) const { return z_[k]; }

 private:
  Logits z_;
};

OrientationLogits predict_logits(const ClassifierModel& model, const RasterImage& img);

/// Index of the largest score; ties go to the lowest index.
RotationLabel predict_rotation(const OrientationLogits& logits);

struct Canonicalized {
  RasterImage image;
  RotationLabel predicted;
};

/// Applies the inverse of the predicted rotation. A k=0 prediction returns the
/// input unchanged.
Canonicalized canonicalize(const ClassifierModel& model, const RasterImage& img);

/// Anything that can re-canonicalize an image before generation.
class OrientationCorrector {
 public:
  virtual ~OrientationCorrector() = default;
  virtual Canonicalized canonicalize(const RasterImage& img) const = 0;
};

class ModelCorrector final : public OrientationCorrector {
 public:
  explicit ModelCorrector(ClassifierModel model) : model_(std::move(model)) {}
  Canonicalized canonicalize(const RasterImage& img) const override {
    return canonprobe::canonicalize(model_, img);
  }
  const ClassifierModel& model() const { return model_; }

 private:
  ClassifierModel model_;
};

struct TrainConfig {
  int epochs = 14;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 0;
  Architecture architecture = Architecture::desk_reference();
  /// output_size is overridden by architecture.input_size.
  AugmentationConfig augmentation = {};

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingLog {
  std::string optimizer;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

void to_json(nlohmann::json& j, const TrainingLog& log);

struct TrainResult {
  ClassifierModel model;  // checkpoint with the best validation accuracy
  TrainingLog log;
};

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Minimizes 4-class cross-entropy with SGD + momentum over augmented training
/// samples; frozen-prefix parameters are never touched.
TrainResult train_classifier(const std::vector<LabeledSample>& train_set,
                             const std::vector<LabeledSample>& val_set, const TrainConfig& cfg);

struct Evaluation {
  double accuracy = 0.0;
  /// confusion[true][predicted]
  std::array<std::array<std::int64_t, 4>, 4> confusion{};
};

Evaluation evaluate_predictions(const std::vector<std::pair<RotationLabel, RotationLabel>>& truth_and_pred);
Evaluation evaluate_classifier(const ClassifierModel& model, const std::vector<LabeledSample>& samples);

/// Hex SHA-256 over the raw bytes of the frozen-prefix parameters.
std::string frozen_prefix_digest(const ClassifierModel& model);

// Checkpoint archive: "CANONCK1", u64 LE header length, JSON header
// (architecture + tensor table), then float32 LE parameter blobs.
void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const ClassifierModel& model);
ClassifierModel load_checkpoint(const std::filesystem::path& path);
ClassifierModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
nlohmann::json checkpoint_header(const ClassifierModel& model);

}  // namespace canonprobe
