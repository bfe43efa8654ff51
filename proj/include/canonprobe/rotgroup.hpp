#pragma once

// C4 in-plane rotation group and its action on raster images.
//
// Convention: positive direction is counterclockwise. One 90 degree step maps
// the input pixel at (row y, col x) to the output pixel at (row W-1-x, col y),
// where W is the input width. Odd steps swap width and height.

#include <array>
#include <compare>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace canonprobe {

/// Element of C4: rotation by k * 90 degrees counterclockwise, k in {0,1,2,3}.
class RotationLabel {
 public:
  constexpr RotationLabel() = default;
  constexpr explicit RotationLabel(int k) : k_(k) {
    if (k < 0 || k > 3) throw std::out_of_range("rotation index must be in {0,1,2,3}");
  }

  /// Accepts 0, 90, 180 or 270.
  static RotationLabel from_degrees(int degrees);

  constexpr int k() const { return k_; }
  constexpr int degrees() const { return k_ * 90; }
  constexpr bool is_identity() const { return k_ == 0; }

  constexpr auto operator<=>(const RotationLabel&) const = default;

 private:
  int k_ = 0;
};

constexpr RotationLabel compose(RotationLabel a, RotationLabel b) {
  return RotationLabel((a.k() + b.k()) % 4);
}

constexpr RotationLabel inverse(RotationLabel r) { return RotationLabel((4 - r.k()) % 4); }

inline constexpr std::array<RotationLabel, 4> kAllRotations = {
    RotationLabel(0), RotationLabel(1), RotationLabel(2), RotationLabel(3)};

/// Row-major pixel grid with interleaved channels; values are normalized to
/// [0,1]. Immutable once constructed.
class RasterImage {
 public:
  /// Throws std::invalid_argument when dimensions, buffer length or pixel
  /// range are inconsistent.
  RasterImage(int width, int height, int channels, std::vector<float> pixels);

  static RasterImage filled(int width, int height, int channels, float value);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return pixels_.size(); }

  float at(int row, int col, int channel) const {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + channel];
  }
  std::span<const float> pixels() const { return pixels_; }

  /// Replicates a single channel to RGB; RGB images are returned unchanged.
  RasterImage to_rgb() const;

  bool operator==(const RasterImage& other) const = default;

 private:
  int width_;
  int height_;
  int channels_;
  std::vector<float> pixels_;
};

/// Exact pixel permutation; no interpolation.
RasterImage rotate_image(const RasterImage& img, RotationLabel r);

}  // namespace canonprobe
