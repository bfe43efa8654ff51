#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "canonprobe/rotgroup.hpp"

namespace canonprobe {

/// An un-rotated source image.
struct Origin {
  RasterImage image;
  std::string source_id;
  std::string category;
};

/// One rotated copy of an origin. `image == rotate_image(origin.image, label)`.
struct LabeledSample {
  RasterImage image;
  RotationLabel label;
  std::string source_id;
  std::string category;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Four rotated copies per origin, ordered by source_id then label.
/// Throws std::invalid_argument naming a duplicated source_id.
std::vector<LabeledSample> build_rotation_dataset(const std::vector<Origin>& origins);

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
};

/// Origin-level split: all rotations of one source land on the same side, and
/// the train side holds floor(train_fraction * #origins) origins. Both sides
/// keep the input's relative order.
DatasetSplit split(const std::vector<LabeledSample>& samples, const SplitSpec& spec);

}  // namespace canonprobe
