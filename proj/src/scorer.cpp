#include "canonprobe/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace canonprobe {

EmbeddingVector::EmbeddingVector(std::vector<double> v) : v_(std::move(v)) {
  if (v_.empty()) throw std::invalid_argument("embedding is empty");
  double norm2 = 0.0;
  for (double x : v_) {
    if (!std::isfinite(x)) throw std::invalid_argument("embedding has a non-finite entry");
    norm2 += x * x;
  }
  if (!(norm2 > 0.0)) throw std::invalid_argument("embedding has zero norm");
}

SimilarityScore::SimilarityScore(double s) : s_(s) {
  if (!(s >= -1.0 && s <= 1.0)) throw std::invalid_argument("similarity must lie in [-1,1]");
}

SimilarityScore cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("embedding dimensions differ: " + std::to_string(a.dimension()) +
                                " vs " + std::to_string(b.dimension()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    dot += a.values()[i] * b.values()[i];
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  return SimilarityScore(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0));
}

namespace {

struct WeightedPoint {
  double x, y, z, w;
};

std::vector<double> moment_descriptor(const std::vector<WeightedPoint>& pts, bool use_height) {
  std::vector<double> f(kReferenceEmbeddingDim, 0.0);
  double total = 0.0, cx = 0.0, cy = 0.0, cz = 0.0;
  for (const auto& p : pts) {
    total += p.w;
    cx += p.w * p.x;
    cy += p.w * p.y;
    cz += p.w * p.z;
  }
  if (!(total > 0.0)) return f;
  cx /= total, cy /= total, cz /= total;

  double r2 = 0.0;
  for (const auto& p : pts) r2 += p.w * ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy));
  r2 /= total;
  if (!(r2 > 0.0)) return f;
  const double inv = 1.0 / std::sqrt(r2);

  double exx = 0, eyy = 0, exy = 0, ex3 = 0, ey3 = 0, ex2y = 0, exy2 = 0, exay = 0, eyax = 0;
  double exz = 0, eyz = 0, ezz = 0;
  double sector[4] = {0, 0, 0, 0};
  for (const auto& p : pts) {
    const double x = (p.x - cx) * inv, y = (p.y - cy) * inv, z = (p.z - cz) * inv, w = p.w;
    exx += w * x * x;
    eyy += w * y * y;
    exy += w * x * y;
    ex3 += w * x * x * x;
    ey3 += w * y * y * y;
    ex2y += w * x * x * y;
    exy2 += w * x * y * y;
    exay += w * x * std::abs(y);
    eyax += w * y * std::abs(x);
    exz += w * x * z;
    eyz += w * y * z;
    ezz += w * z * z;
    if (x != 0.0 || y != 0.0) {
      const double a = std::atan2(y, x) + std::numbers::pi / 4.0;
      int s = static_cast<int>(std::floor(a / (std::numbers::pi / 2.0)));
      sector[((s % 4) + 4) % 4] += w;
    }
  }
  const double sx = std::sqrt(exx / total), sy = std::sqrt(eyy / total);
  f[0] = (exx - eyy) / total;
  f[1] = 2.0 * exy / total;
  f[2] = (sx - sy) / (sx + sy);
  f[3] = ex3 / total;
  f[4] = ey3 / total;
  f[5] = ex2y / total;
  f[6] = exy2 / total;
  for (int s = 0; s < 4; ++s) f[7 + s] = sector[s] / total - 0.25;
  f[11] = exay / total;
  f[12] = eyax / total;
  if (use_height) {
    f[13] = exz / total;
    f[14] = eyz / total;
    f[15] = ezz / total;
  }
  return f;
}

class ReferenceImageEmbedder final : public ImageEmbedder {
 public:
  std::size_t dimension() const override { return kReferenceEmbeddingDim; }
  EmbeddingVector embed(const RasterImage& img) const override {
    const auto mask = silhouette_mask(img);
    std::vector<WeightedPoint> pts;
    const int w = img.width(), h = img.height();
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const double m = mask[static_cast<std::size_t>(row) * w + col];
        if (m <= 0.0) continue;
        pts.push_back({(2.0 * col + 1.0) / w - 1.0, 1.0 - (2.0 * row + 1.0) / h, 0.0, m});
      }
    }
    return EmbeddingVector(moment_descriptor(pts, false));
  }
};

class ReferenceShapeEmbedder final : public ShapeEmbedder {
 public:
  std::size_t dimension() const override { return kReferenceEmbeddingDim; }
  EmbeddingVector embed(const PointCloud& cloud) const override {
    if (cloud.points.empty()) throw std::invalid_argument("cannot embed an empty point cloud");
    // Center and scale to the unit bounding sphere.
    Vec3 c{0, 0, 0};
    for (const auto& p : cloud.points)
      for (int d = 0; d < 3; ++d) c[d] += p[d];
    for (double& v : c) v /= static_cast<double>(cloud.points.size());
    double radius = 0.0;
    for (const auto& p : cloud.points)
      radius = std::max(radius, std::hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]));
    const double inv = radius > 0.0 ? 1.0 / radius : 1.0;

    std::vector<WeightedPoint> pts;
    pts.reserve(cloud.points.size());
    for (const auto& p : cloud.points)
      pts.push_back({(p[0] - c[0]) * inv, (p[1] - c[1]) * inv, (p[2] - c[2]) * inv, 1.0});
    return EmbeddingVector(moment_descriptor(pts, true));
  }
};

}  // namespace

std::vector<double> silhouette_mask(const RasterImage& img) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  // Background color: per-channel median of the border pixels.
  std::vector<double> bg(ch);
  for (int c = 0; c < ch; ++c) {
    std::vector<float> border;
    for (int x = 0; x < w; ++x) {
      border.push_back(img.at(0, x, c));
      border.push_back(img.at(h - 1, x, c));
    }
    for (int y = 1; y + 1 < h; ++y) {
      border.push_back(img.at(y, 0, c));
      border.push_back(img.at(y, w - 1, c));
    }
    auto mid = border.begin() + static_cast<std::ptrdiff_t>(border.size() / 2);
    std::nth_element(border.begin(), mid, border.end());
    bg[c] = *mid;
  }
  std::vector<double> dist(static_cast<std::size_t>(w) * h);
  double dmax = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d2 = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double d = img.at(y, x, c) - bg[c];
        d2 += d * d;
      }
      dist[static_cast<std::size_t>(y) * w + x] = std::sqrt(d2);
      dmax = std::max(dmax, std::sqrt(d2));
    }
  std::vector<double> mask(dist.size(), 0.0);
  if (dmax < 1e-6) return mask;
  for (std::size_t i = 0; i < dist.size(); ++i) mask[i] = dist[i] > 0.5 * dmax ? 1.0 : 0.0;
  return mask;
}

EmbedderPair reference_embedders() {
  return {std::make_shared<ReferenceImageEmbedder>(), std::make_shared<ReferenceShapeEmbedder>()};
}

SimilarityScore ulip_score(const ImageEmbedder& image_embedder, const ShapeEmbedder& shape_embedder,
                           const RasterImage& img, const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (image_embedder.dimension() != shape_embedder.dimension())
    throw std::invalid_argument("image and shape embedders disagree on dimension");
  const EmbeddingVector a = image_embedder.embed(img);
  const EmbeddingVector b = shape_embedder.embed(sample_point_cloud(mesh, n, seed));
  return cosine_similarity(a, b);
}

}  // namespace canonprobe
