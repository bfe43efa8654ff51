#include "canonprobe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canonprobe {

namespace {

void require_rgb(const RasterImage& img) {
  if (img.channels() != 3)
    throw std::invalid_argument("preprocessing requires a 3-channel image; got " +
                                std::to_string(img.channels()));
}

void require_rgb(const Tensor& t) {
  if (t.channels != 3) throw std::invalid_argument("color jitter requires a 3-channel tensor");
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

struct CropBox {
  int top, left, h, w;
};

CropBox sample_resized_crop(const AugmentationConfig& cfg, int height, int width, Rng& rng) {
  const double area = static_cast<double>(height) * width;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, cfg.crop_scale_min, cfg.crop_scale_max);
    const double ratio = uniform(rng, cfg.crop_ratio_min, cfg.crop_ratio_max);
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int top = static_cast<int>(uniform(rng, 0.0, height - h + 1.0));
      const int left = static_cast<int>(uniform(rng, 0.0, width - w + 1.0));
      return {top, left, h, w};
    }
  }
  // Fallback: largest centered crop whose aspect lies in the ratio range.
  const double in_ratio = static_cast<double>(width) / height;
  int w = width;
  int h = height;
  if (in_ratio < cfg.crop_ratio_min) {
    h = std::min(height, static_cast<int>(std::lround(w / cfg.crop_ratio_min)));
  } else if (in_ratio > cfg.crop_ratio_max) {
    w = std::min(width, static_cast<int>(std::lround(h * cfg.crop_ratio_max)));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

void random_erase(Tensor& t, const AugmentationConfig& cfg, Rng& rng) {
  if (uniform(rng, 0.0, 1.0) >= cfg.erase_probability) return;
  const double area = static_cast<double>(t.height) * t.width;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, cfg.erase_area_min, cfg.erase_area_max);
    const double ratio = uniform(rng, cfg.erase_ratio_min, cfg.erase_ratio_max);
    const int h = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int w = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (h < 1 || w < 1 || h > t.height || w > t.width) continue;
    const int top = static_cast<int>(uniform(rng, 0.0, t.height - h + 1.0));
    const int left = static_cast<int>(uniform(rng, 0.0, t.width - w + 1.0));
    for (int c = 0; c < t.channels; ++c)
      for (int y = top; y < top + h; ++y)
        for (int x = left; x < left + w; ++x) t.at(c, y, x) = 0.0f;
    return;
  }
}

}  // namespace

void AugmentationConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
    fail("crop scale must satisfy 0 < min <= max <= 1");
  if (!(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max)) fail("invalid crop aspect range");
  if (output_size < 1) fail("output_size must be positive");
  for (double j : {jitter_brightness, jitter_contrast, jitter_saturation})
    if (!(j >= 0.0 && j < 1.0)) fail("jitter factors must lie in [0,1)");
  if (!(jitter_hue >= 0.0 && jitter_hue <= 0.5)) fail("hue jitter must lie in [0,0.5]");
  for (double s : normalize_std)
    if (!(s > 0.0)) fail("normalization std components must be positive");
  if (!(erase_probability >= 0.0 && erase_probability <= 1.0)) fail("erase probability must lie in [0,1]");
  if (!(erase_area_min > 0.0 && erase_area_min <= erase_area_max && erase_area_max < 1.0))
    fail("erase area must satisfy 0 < min <= max < 1");
  if (!(erase_ratio_min > 0.0 && erase_ratio_min <= erase_ratio_max)) fail("invalid erase aspect range");
}

Tensor to_tensor(const RasterImage& img) {
  Tensor t(img.channels(), img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

Tensor resize_region_bilinear(const Tensor& src, int top, int left, int h, int w, int out_h,
                              int out_w) {
  if (h < 1 || w < 1 || top < 0 || left < 0 || top + h > src.height || left + w > src.width)
    throw std::invalid_argument("resize region out of bounds");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be positive");

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out, int offset) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {offset + i0, offset + i1, s - i0};
    }
    return t;
  };
  const auto ty = taps(h, out_h, top);
  const auto tx = taps(w, out_w, left);

  Tensor out(src.channels, out_h, out_w);
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top_row = src.at(c, a.i0, b.i0) * (1.0 - b.f) + src.at(c, a.i0, b.i1) * b.f;
        const double bot_row = src.at(c, a.i1, b.i0) * (1.0 - b.f) + src.at(c, a.i1, b.i1) * b.f;
        out.at(c, y, x) = static_cast<float>(top_row * (1.0 - a.f) + bot_row * a.f);
      }
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
  return resize_region_bilinear(src, 0, 0, src.height, src.width, out_h, out_w);
}

Tensor center_crop(const Tensor& src, int size) {
  if (size > src.height || size > src.width) throw std::invalid_argument("crop larger than input");
  const int top = (src.height - size) / 2;
  const int left = (src.width - size) / 2;
  Tensor out(src.channels, size, size);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = src.at(c, top + y, left + x);
  return out;
}

void normalize_in_place(Tensor& t, const Channel3& mean, const Channel3& std) {
  if (t.channels != 3) throw std::invalid_argument("normalization expects 3 channels");
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  for (int c = 0; c < 3; ++c) {
    float* p = t.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>((p[i] - mean[c]) / std[c]);
  }
}

void adjust_brightness(Tensor& t, double factor) {
  for (float& v : t.data) v = clamp01(v * factor);
}

void adjust_contrast(Tensor& t, double factor) {
  require_rgb(t);
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i)
    mean += gray(t.data[i], t.data[plane + i], t.data[2 * plane + i]);
  mean /= static_cast<double>(plane);
  for (float& v : t.data) v = clamp01(factor * v + (1.0 - factor) * mean);
}

void adjust_saturation(Tensor& t, double factor) {
  require_rgb(t);
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  for (std::size_t i = 0; i < plane; ++i) {
    const double g = gray(t.data[i], t.data[plane + i], t.data[2 * plane + i]);
    for (int c = 0; c < 3; ++c) {
      float& v = t.data[c * plane + i];
      v = clamp01(factor * v + (1.0 - factor) * g);
    }
  }
}

void adjust_hue(Tensor& t, double shift) {
  require_rgb(t);
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = t.data[i], g = t.data[plane + i], b = t.data[2 * plane + i];
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double v = maxc;
    const double chroma = maxc - minc;
    if (chroma <= 0.0) continue;  // gray pixels carry no hue
    const double s = chroma / maxc;
    double h;
    if (maxc == r) {
      h = (g - b) / chroma;
    } else if (maxc == g) {
      h = 2.0 + (b - r) / chroma;
    } else {
      h = 4.0 + (r - g) / chroma;
    }
    h = h / 6.0 + shift;
    h -= std::floor(h);

    const double h6 = h * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double u = v * (1.0 - s * (1.0 - f));
    double rgb[3];
    switch (sector) {
      case 0: rgb[0] = v, rgb[1] = u, rgb[2] = p; break;
      case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
      case 2: rgb[0] = p, rgb[1] = v, rgb[2] = u; break;
      case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
      case 4: rgb[0] = u, rgb[1] = p, rgb[2] = v; break;
      default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
    }
    for (int c = 0; c < 3; ++c) t.data[c * plane + i] = clamp01(rgb[c]);
  }
}

Tensor augment_train(const RasterImage& img, const AugmentationConfig& cfg, Rng& rng) {
  require_rgb(img);
  cfg.validate();

  const Tensor src = to_tensor(img);
  const CropBox box = sample_resized_crop(cfg, src.height, src.width, rng);
  Tensor t = resize_region_bilinear(src, box.top, box.left, box.h, box.w, cfg.output_size,
                                    cfg.output_size);

  // All four factors are drawn unconditionally so the stream layout does not
  // depend on which knobs are enabled.
  const double brightness = uniform(rng, 1.0 - cfg.jitter_brightness, 1.0 + cfg.jitter_brightness);
  const double contrast = uniform(rng, 1.0 - cfg.jitter_contrast, 1.0 + cfg.jitter_contrast);
  const double saturation = uniform(rng, 1.0 - cfg.jitter_saturation, 1.0 + cfg.jitter_saturation);
  const double hue = uniform(rng, -cfg.jitter_hue, cfg.jitter_hue);
  if (brightness != 1.0) adjust_brightness(t, brightness);
  if (contrast != 1.0) adjust_contrast(t, contrast);
  if (saturation != 1.0) adjust_saturation(t, saturation);
  if (hue != 0.0) adjust_hue(t, hue);

  normalize_in_place(t, cfg.normalize_mean, cfg.normalize_std);
  random_erase(t, cfg, rng);
  return t;
}

Tensor augment_train(const LabeledSample& sample, const AugmentationConfig& cfg, Rng& rng) {
  return augment_train(sample.image, cfg, rng);
}

Rng sample_rng(const AugmentationConfig& cfg, const LabeledSample& sample, std::uint64_t epoch) {
  return SeedSequence(cfg.seed)
      .add(sample.source_id)
      .add(static_cast<std::uint64_t>(sample.label.k()))
      .add(epoch)
      .rng();
}

Tensor preprocess_val(const RasterImage& img, const Channel3& mean, const Channel3& std,
                      const ValGeometry& geometry) {
  require_rgb(img);
  if (geometry.crop < 1 || geometry.crop > geometry.resize)
    throw std::invalid_argument("validation crop must lie in [1, resize]");
  for (double s : std)
    if (!(s > 0.0)) throw std::invalid_argument("normalization std components must be positive");
  Tensor t = center_crop(resize_bilinear(to_tensor(img), geometry.resize, geometry.resize),
                         geometry.crop);
  normalize_in_place(t, mean, std);
  return t;
}

}  // namespace canonprobe
