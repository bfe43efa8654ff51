#pragma once

// Image preprocessing for the orientation classifier: the stochastic training
// pipeline (random resized crop, color jitter, normalize, random erasing) and
// the deterministic validation pipeline (resize, center crop, normalize).

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "canonprobe/dataset.hpp"
#include "canonprobe/rotgroup.hpp"
#include "canonprobe/seeding.hpp"

namespace canonprobe {

/// Planar channels x height x width buffer. Unlike RasterImage, values are not
/// range-restricted (normalized tensors go negative).
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Tensor&) const = default;
};

using Channel3 = std::array<double, 3>;

inline constexpr Channel3 kImageNetMean = {0.485, 0.456, 0.406};
inline constexpr Channel3 kImageNetStd = {0.229, 0.224, 0.225};

struct AugmentationConfig {
  double crop_scale_min = 0.85;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  int output_size = 384;
  double jitter_brightness = 0.2;
  double jitter_contrast = 0.2;
  double jitter_saturation = 0.2;
  double jitter_hue = 0.1;
  Channel3 normalize_mean = kImageNetMean;
  Channel3 normalize_std = kImageNetStd;
  double erase_probability = 0.25;
  double erase_area_min = 0.02;
  double erase_area_max = 0.10;
  double erase_ratio_min = 1.0 / 3.0;
  double erase_ratio_max = 3.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Resize-then-center-crop geometry of the validation pipeline.
struct ValGeometry {
  int resize = 416;
  int crop = 384;
};

Tensor to_tensor(const RasterImage& img);

/// Bilinear resize with half-pixel centers, edge-clamped.
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);

/// Bilinear resize of the sub-rectangle [top, top+h) x [left, left+w).
Tensor resize_region_bilinear(const Tensor& src, int top, int left, int h, int w, int out_h,
                              int out_w);

Tensor center_crop(const Tensor& src, int size);

void normalize_in_place(Tensor& t, const Channel3& mean, const Channel3& std);

// Color jitter primitives on 3-channel tensors with values in [0,1].
void adjust_brightness(Tensor& t, double factor);
void adjust_contrast(Tensor& t, double factor);
void adjust_saturation(Tensor& t, double factor);
void adjust_hue(Tensor& t, double shift);

/// Training pipeline, in order: random resized crop, color jitter
/// (brightness, contrast, saturation, hue), normalize, random erasing.
/// Requires a 3-channel image.
Tensor augment_train(const RasterImage& img, const AugmentationConfig& cfg, Rng& rng);
Tensor augment_train(const LabeledSample& sample, const AugmentationConfig& cfg, Rng& rng);

/// Per-sample stream keyed by (cfg.seed, source_id, label, epoch).
Rng sample_rng(const AugmentationConfig& cfg, const LabeledSample& sample, std::uint64_t epoch);

/// Validation pipeline: resize to geometry.resize (both axes), center crop
/// geometry.crop, normalize. Requires a 3-channel image.
Tensor preprocess_val(const RasterImage& img, const Channel3& mean, const Channel3& std,
                      const ValGeometry& geometry = {});

}  // namespace canonprobe
