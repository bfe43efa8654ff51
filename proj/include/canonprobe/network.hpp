#pragma once

// Small convolutional classifier used as the orientation corrector.
//
// Backbone: a sequence of stages, each either conv3x3(pad 1) -> ReLU ->
// maxpool2x2 or flatten -> dense -> ReLU. The last stage emits the feature
// vector of dimension D. Head: dropout (train mode only) -> affine D -> 4.
// The first `frozen_prefix_depth` backbone stages never receive updates.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "canonprobe/augment.hpp"
#include "canonprobe/seeding.hpp"

namespace canonprobe {

inline constexpr int kNumOrientations = 4;

enum class StageKind { Conv3x3ReluMaxPool, DenseRelu };

struct StageSpec {
  StageKind kind;
  int in;   // input channels (conv) or flattened input features (dense)
  int out;  // output channels or features

  bool operator==(const StageSpec&) const = default;
};

struct Architecture {
  int input_channels = 3;
  int input_size = 48;   // square side after center crop
  int resize_size = 52;  // validation resize before the crop
  std::vector<StageSpec> stages;
  double dropout_rate = 0.3;
  int frozen_prefix_depth = 1;
  Channel3 normalize_mean = kImageNetMean;
  Channel3 normalize_std = kImageNetStd;

  int feature_dim() const;
  ValGeometry val_geometry() const { return {resize_size, input_size}; }

  /// Throws std::invalid_argument when stage shapes do not chain.
  void validate() const;

  /// Five-stage CPU-sized backbone: four conv stages (8, 16, 32, 32 channels)
  /// on 48x48 inputs and a dense stage to D = 64, first stage frozen.
  static Architecture desk_reference();

  bool operator==(const Architecture&) const = default;
};

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

using Logits = std::array<double, kNumOrientations>;

enum class HeadInit { Zero, Random };

class ClassifierModel {
 public:
  /// All parameters zero.
  explicit ClassifierModel(Architecture arch);

  /// He-uniform backbone; head per `head`. Values are rounded to float32 so a
  /// checkpoint round trip is exact.
  static ClassifierModel initialized(Architecture arch, std::uint64_t seed,
                                     HeadInit head = HeadInit::Zero);

  const Architecture& architecture() const { return arch_; }
  std::vector<ParamTensor>& parameters() { return params_; }
  const std::vector<ParamTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Parameter tensor i belongs to a frozen backbone stage.
  bool is_frozen(std::size_t i) const;

  /// Inference-mode forward pass (no dropout). Throws std::invalid_argument on
  /// an input whose shape differs from the architecture.
  Logits logits(const Tensor& input) const;

  /// Cross-entropy of one sample. Adds d(loss)/d(param) into `grads`
  /// (same layout as parameters(); frozen entries are left untouched).
  /// Dropout is applied when `dropout_rng` is non-null.
  double accumulate_gradient(const Tensor& input, int label, Rng* dropout_rng,
                             std::vector<std::vector<double>>& grads) const;

  std::vector<std::vector<double>> zero_gradients() const;

  /// Rounds every parameter to the nearest float32.
  void round_to_float();

 private:
  struct Workspace;
  Logits forward(const Tensor& input, Workspace& ws, Rng* dropout_rng) const;
  void check_input(const Tensor& input) const;

  Architecture arch_;
  std::vector<ParamTensor> params_;
};

/// Numerically stable softmax cross-entropy.
double cross_entropy(const Logits& z, int label);

}  // namespace canonprobe
