#include "canonprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "canonprobe/image_io.hpp"
#include "canonprobe/seeding.hpp"

namespace canonprobe {

namespace {

ConvexPart rect(double x0, double x1, double y0, double y1) {
  return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

ConvexPart polygon(std::vector<Vec2> v) { return {std::move(v)}; }

ConvexPart regular(double cx, double cy, double r, int sides) {
  ConvexPart p;
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + 0.5) / sides;
    p.vertices.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return p;
}

// Side profiles, nose/front toward +x.
std::vector<ConvexPart> airplane_template() {
  return {
      rect(-0.75, 0.55, -0.09, 0.09),                                          // fuselage
      polygon({{0.55, -0.09}, {0.82, -0.03}, {0.55, 0.09}}),                   // nose
      polygon({{-0.75, 0.09}, {-0.55, 0.09}, {-0.68, 0.48}, {-0.80, 0.48}}),   // tail fin
      polygon({{-0.25, -0.45}, {-0.05, -0.45}, {0.25, -0.09}, {-0.05, -0.09}}) // wing
  };
}

std::vector<ConvexPart> chair_template() {
  return {
      rect(-0.45, -0.31, 0.06, 0.75),   // backrest
      rect(-0.45, 0.35, -0.06, 0.06),   // seat
      rect(-0.45, -0.33, -0.72, -0.06), // rear leg
      rect(0.23, 0.35, -0.72, -0.06),   // front leg
  };
}

std::vector<ConvexPart> car_template() {
  return {
      rect(-0.80, 0.80, -0.26, 0.06),                                           // body
      polygon({{-0.48, 0.06}, {0.38, 0.06}, {0.16, 0.40}, {-0.32, 0.40}}),      // cabin
      regular(-0.48, -0.36, 0.17, 8),                                           // rear wheel
      regular(0.48, -0.36, 0.17, 8),                                            // front wheel
  };
}

std::vector<ConvexPart> arrow_template() {
  return {
      rect(-0.11, 0.11, -0.78, 0.18),
      polygon({{-0.42, 0.18}, {0.42, 0.18}, {0.0, 0.78}}),
  };
}

const std::map<std::string, std::function<std::vector<ConvexPart>()>>& templates() {
  static const std::map<std::string, std::function<std::vector<ConvexPart>()>> t = {
      {"airplane", airplane_template},
      {"arrow", arrow_template},
      {"car", car_template},
      {"chair", chair_template},
  };
  return t;
}

Rgb hsv_to_rgb(double h, double s, double v) {
  const double h6 = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

double luminance(Rgb c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

bool inside(const ConvexPart& part, double x, double y) {
  const auto& v = part.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    if ((b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) < 0.0) return false;
  }
  return true;
}

GlyphDescriptor jittered_glyph(const std::string& category, double vertex_jitter, Rng& rng) {
  GlyphDescriptor g;
  g.category = category;
  g.parts = templates().at(category)();

  const double scale = uniform(rng, 0.85, 1.0);
  const double stretch = uniform(rng, 0.9, 1.1);
  const double tx = uniform(rng, -0.05, 0.05);
  const double ty = uniform(rng, -0.05, 0.05);
  for (auto& part : g.parts) {
    for (auto& v : part.vertices) {
      const double jx = uniform(rng, -vertex_jitter, vertex_jitter);
      const double jy = uniform(rng, -vertex_jitter, vertex_jitter);
      v = {(v[0] + jx) * scale * stretch + tx, (v[1] + jy) * scale / stretch + ty};
    }
  }
  return g;
}

}  // namespace

void to_json(nlohmann::json& j, const GlyphDescriptor& d) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : d.parts) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : p.vertices) verts.push_back({v[0], v[1]});
    parts.push_back(std::move(verts));
  }
  j = {{"category", d.category}, {"depth", d.depth}, {"parts", std::move(parts)}};
}

void from_json(const nlohmann::json& j, GlyphDescriptor& d) {
  d.category = j.at("category").get<std::string>();
  d.depth = j.at("depth").get<double>();
  d.parts.clear();
  for (const auto& p : j.at("parts")) {
    ConvexPart part;
    for (const auto& v : p) part.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    if (part.vertices.size() < 3) throw std::invalid_argument("glyph part needs at least 3 vertices");
    d.parts.push_back(std::move(part));
  }
}

const std::vector<std::string>& known_glyph_categories() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : templates()) n.push_back(k);
    return n;
  }();
  return names;
}

RasterImage render_glyph(const GlyphDescriptor& glyph, int size, Rgb fill, Rgb background) {
  constexpr int kSub = 4;
  std::vector<float> px(static_cast<std::size_t>(size) * size * 3);
  for (int row = 0; row < size; ++row) {
    for (int col = 0; col < size; ++col) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = 2.0 * (col + (sx + 0.5) / kSub) / size - 1.0;
          const double y = 1.0 - 2.0 * (row + (sy + 0.5) / kSub) / size;
          for (const auto& part : glyph.parts) {
            if (inside(part, x, y)) {
              ++hits;
              break;
            }
          }
        }
      }
      const float a = static_cast<float>(hits) / (kSub * kSub);
      const float rgb[3] = {a * fill.r + (1 - a) * background.r, a * fill.g + (1 - a) * background.g,
                            a * fill.b + (1 - a) * background.b};
      for (int c = 0; c < 3; ++c)
        px[(static_cast<std::size_t>(row) * size + col) * 3 + c] = to_byte(rgb[c]) / 255.0f;
    }
  }
  return RasterImage(size, size, 3, std::move(px));
}

bool lacks_fourfold_symmetry(const RasterImage& img) {
  for (int k = 1; k < 4; ++k) {
    if (rotate_image(img, RotationLabel(k)) != img) return true;
  }
  return false;
}

std::vector<SyntheticOrigin> generate_synthetic_oriented_set(int n_per_category,
                                                             const std::vector<std::string>& categories,
                                                             std::uint64_t seed,
                                                             const SyntheticOptions& options) {
  if (n_per_category < 1) throw std::invalid_argument("n_per_category must be at least 1");
  if (options.image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  for (const auto& c : categories) {
    if (!templates().contains(c)) throw std::invalid_argument("unknown glyph category: " + c);
  }

  std::vector<SyntheticOrigin> out;
  out.reserve(static_cast<std::size_t>(n_per_category) * categories.size());
  for (const auto& category : categories) {
    for (int i = 0; i < n_per_category; ++i) {
      auto rng = SeedSequence(seed).add(category).add(static_cast<std::uint64_t>(i)).rng();
      for (;;) {
        GlyphDescriptor glyph = jittered_glyph(category, options.vertex_jitter, rng);
        const Rgb background = hsv_to_rgb(uniform(rng, 0, 1), uniform(rng, 0, 0.5), uniform(rng, 0.65, 1.0));
        const Rgb fill = hsv_to_rgb(uniform(rng, 0, 1), uniform(rng, 0.2, 1.0), uniform(rng, 0.05, 0.4));
        if (luminance(background) - luminance(fill) < 0.25) continue;
        RasterImage img = render_glyph(glyph, options.image_size, fill, background);
        if (!lacks_fourfold_symmetry(img)) continue;

        char id[64];
        std::snprintf(id, sizeof id, "%s-%05d", category.c_str(), i);
        out.push_back({std::move(img), id, category, std::move(glyph)});
        break;
      }
    }
  }
  return out;
}

}  // namespace canonprobe
