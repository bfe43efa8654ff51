#include "canonprobe/rotgroup.hpp"

#include <cmath>

namespace canonprobe {

RotationLabel RotationLabel::from_degrees(int degrees) {
  switch (degrees) {
    case 0: return RotationLabel(0);
    case 90: return RotationLabel(1);
    case 180: return RotationLabel(2);
    case 270: return RotationLabel(3);
    default:
      throw std::invalid_argument("rotation angle must be one of 0, 90, 180, 270; got " +
                                  std::to_string(degrees));
  }
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<float> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
  const auto expected = static_cast<std::size_t>(width) * height * channels;
  if (pixels_.size() != expected) {
    throw std::invalid_argument("pixel buffer length " + std::to_string(pixels_.size()) +
                                " does not match " + std::to_string(expected));
  }
  for (float v : pixels_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw std::invalid_argument("pixel values must be finite and within [0,1]");
  }
}

RasterImage RasterImage::filled(int width, int height, int channels, float value) {
  return RasterImage(width, height, channels,
                     std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                            std::max(height, 0) * std::max(channels, 0),
                                        value));
}

RasterImage RasterImage::to_rgb() const {
  if (channels_ == 3) return *this;
  std::vector<float> out(pixels_.size() * 3);
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = pixels_[i];
  }
  return RasterImage(width_, height_, 3, std::move(out));
}

namespace {

// Output (row, col) of a source pixel under k CCW quarter turns.
struct IndexMap {
  int k, w, h;
  std::pair<int, int> operator()(int y, int x) const {
    switch (k) {
      case 1: return {w - 1 - x, y};
      case 2: return {h - 1 - y, w - 1 - x};
      case 3: return {x, h - 1 - y};
      default: return {y, x};
    }
  }
};

}  // namespace

RasterImage rotate_image(const RasterImage& img, RotationLabel r) {
  if (r.is_identity()) return img;
  const int w = img.width();
  const int h = img.height();
  const int c = img.channels();
  const bool odd = r.k() % 2 == 1;
  const int out_w = odd ? h : w;
  const int out_h = odd ? w : h;

  const IndexMap map{r.k(), w, h};
  const auto src = img.pixels();
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [oy, ox] = map(y, x);
      const auto from = (static_cast<std::size_t>(y) * w + x) * c;
      const auto to = (static_cast<std::size_t>(oy) * out_w + ox) * c;
      for (int ch = 0; ch < c; ++ch) out[to + ch] = src[from + ch];
    }
  }
  return RasterImage(out_w, out_h, c, std::move(out));
}

}  // namespace canonprobe
