#pragma once

// Synthetic oriented-object generator: flat silhouette glyphs (airplane,
// chair, car, arrow) rendered at their canonical pose. Each glyph carries a
// ground-truth descriptor from which the oracle backend builds a 3D shape.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "canonprobe/dataset.hpp"
#include "canonprobe/rotgroup.hpp"

namespace canonprobe {

using Vec2 = std::array<double, 2>;

/// Convex polygon, counterclockwise, in normalized glyph coordinates:
/// x right, y up, frame spanning [-1,1] on both axes.
struct ConvexPart {
  std::vector<Vec2> vertices;
};

struct GlyphDescriptor {
  std::string category;
  std::vector<ConvexPart> parts;
  /// Extrusion depth along the viewing axis, in glyph units.
  double depth = 0.1;

  bool operator==(const GlyphDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const GlyphDescriptor& d);
void from_json(const nlohmann::json& j, GlyphDescriptor& d);

struct SyntheticOrigin {
  RasterImage image;
  std::string source_id;
  std::string category;
  GlyphDescriptor descriptor;

  Origin origin() const { return {image, source_id, category}; }
};

const std::vector<std::string>& known_glyph_categories();

struct SyntheticOptions {
  int image_size = 64;
  /// Uniform per-vertex jitter, glyph units.
  double vertex_jitter = 0.02;
};

/// n_per_category glyphs per category at canonical pose with random fill and
/// background colors and mild shape jitter. Pixel values are quantized to
/// 8-bit levels so a PNG round trip is lossless. Throws std::invalid_argument
/// for an unknown category or n_per_category < 1.
std::vector<SyntheticOrigin> generate_synthetic_oriented_set(int n_per_category,
                                                             const std::vector<std::string>& categories,
                                                             std::uint64_t seed,
                                                             const SyntheticOptions& options = {});

struct Rgb {
  float r, g, b;
};

/// 4x4 supersampled coverage render of the glyph.
RasterImage render_glyph(const GlyphDescriptor& glyph, int size, Rgb fill, Rgb background);

/// True when some quarter-turn of the image differs from the image.
bool lacks_fourfold_symmetry(const RasterImage& img);

}  // namespace canonprobe
