#pragma once

// Cross-modal semantic fidelity: embed the input image and a point cloud
// sampled from the generated mesh into a shared space and take the cosine of
// the two embeddings.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "canonprobe/mesh.hpp"
#include "canonprobe/rotgroup.hpp"

namespace canonprobe {

/// Finite, nonzero-norm embedding.
class EmbeddingVector {
 public:
  /// Throws std::invalid_argument for an empty, non-finite or zero vector.
  explicit EmbeddingVector(std::vector<double> v);
  const std::vector<double>& values() const { return v_; }
  std::size_t dimension() const { return v_.size(); }

 private:
  std::vector<double> v_;
};

/// Cosine similarity in [-1, 1].
class SimilarityScore {
 public:
  explicit SimilarityScore(double s);
  double value() const { return s_; }

 private:
  double s_;
};

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws on dimension mismatch.
SimilarityScore cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(const RasterImage& img) const = 0;
};

class ShapeEmbedder {
 public:
  virtual ~ShapeEmbedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(const PointCloud& cloud) const = 0;
};

struct EmbedderPair {
  std::shared_ptr<const ImageEmbedder> image;
  std::shared_ptr<const ShapeEmbedder> shape;
};

inline constexpr std::size_t kReferenceEmbeddingDim = 16;

/// Analytic, deterministic pair over a shared 16-d silhouette descriptor.
///
/// Both sides reduce their input to a planar mass distribution in a y-up frame
/// (image: foreground pixels separated from the border color; cloud: XY
/// projection after centering and scaling to the unit bounding sphere), center
/// it and scale it to unit RMS radius, then report
///   [0]     E[x^2] - E[y^2]              second-moment axes
///   [1]     2 E[xy]
///   [2]     (sx - sy) / (sx + sy)        aspect signature
///   [3..6]  E[x^3], E[y^3], E[x^2 y], E[x y^2]
///   [7..10] 4-sector mass fractions (around +x, +y, -x, -y) minus 1/4
///   [11,12] E[x |y|], E[y |x|]
///   [13..15] height profile: E[xz], E[yz], E[z^2] (zero for images)
/// Odd moments and sectors make the descriptor orientation-sensitive.
EmbedderPair reference_embedders();

/// Per-pixel foreground weights (row-major) for the reference image embedder.
std::vector<double> silhouette_mask(const RasterImage& img);

/// cosine(image_embedder(img), shape_embedder(sample_point_cloud(mesh, n, seed))).
SimilarityScore ulip_score(const ImageEmbedder& image_embedder, const ShapeEmbedder& shape_embedder,
                           const RasterImage& img, const TriangleMesh& mesh,
                           int n = kDefaultPointCount, std::uint64_t seed = 0);

}  // namespace canonprobe
