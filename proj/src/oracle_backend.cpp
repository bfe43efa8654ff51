#include <bit>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "canonprobe/backends.hpp"
#include "canonprobe/seeding.hpp"
#include "canonprobe/wire.hpp"

namespace canonprobe {

BiasProfile BiasProfile::uniform_severity(double severity, double steps_relief) {
  BiasProfile p;
  p.severity_by_label = {0.0, severity, severity, severity};
  p.steps_relief = steps_relief;
  p.validate();
  return p;
}

void BiasProfile::validate() const {
  if (severity_by_label[0] != 0.0) throw std::invalid_argument("canonical severity must be 0");
  for (double s : severity_by_label)
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("severities must lie in [0,1]");
  if (!(steps_relief >= 0.0 && steps_relief <= 1.0))
    throw std::invalid_argument("steps_relief must lie in [0,1]");
}

double BiasProfile::effective_severity(RotationLabel detected, int inference_steps) const {
  if (inference_steps < 1) throw std::invalid_argument("inference_steps must be at least 1");
  const double base = severity_by_label[detected.k()];
  if (base == 0.0 || steps_relief == 1.0) return base;
  return base * std::pow(steps_relief, inference_steps - 1);
}

TriangleMesh glyph_mesh(const GlyphDescriptor& glyph) {
  TriangleMesh mesh;
  const double half = glyph.depth / 2.0;
  for (const auto& part : glyph.parts) {
    const auto n = static_cast<std::uint32_t>(part.vertices.size());
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (const auto& v : part.vertices) mesh.vertices.push_back({v[0], v[1], -half});
    for (const auto& v : part.vertices) mesh.vertices.push_back({v[0], v[1], half});
    for (std::uint32_t i = 1; i + 1 < n; ++i) {
      mesh.triangles.push_back({base, base + i + 1, base + i});              // bottom cap, facing -z
      mesh.triangles.push_back({base + n, base + n + i, base + n + i + 1});  // top cap, facing +z
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t j = (i + 1) % n;
      mesh.triangles.push_back({base + i, base + j, base + n + j});
      mesh.triangles.push_back({base + i, base + n + j, base + n + i});
    }
  }
  return mesh;
}

TriangleMesh rotate_mesh(const TriangleMesh& mesh, RotationLabel r) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) {
    for (int s = 0; s < r.k(); ++s) v = {-v[1], v[0], v[2]};
  }
  return out;
}

TriangleMesh corrupt_mesh(const TriangleMesh& mesh, double severity, std::uint64_t seed) {
  if (severity == 0.0) return mesh;
  const double sigma = 0.3 * severity * mesh.bbox_diagonal();
  TriangleMesh out = mesh;
  auto rng = SeedSequence(seed).add("oracle-noise").rng();
  for (auto& v : out.vertices) {
    v[0] += 0.5 * severity * v[1];
    for (double& c : v) c += sigma * standard_normal(rng);
  }
  return out;
}

std::string image_digest(const RasterImage& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + img.size() * 4);
  for (int d : {img.width(), img.height(), img.channels()})
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(static_cast<unsigned>(d) >> (8 * b)));
  for (float v : img.pixels()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return sha256_hex(bytes);
}

void GlyphLibrary::add(const RasterImage& canonical, GlyphDescriptor descriptor) {
  const std::size_t index = entries_.size();
  entries_.push_back({canonical, std::move(descriptor)});
  for (RotationLabel r : kAllRotations) {
    by_digest_.try_emplace(image_digest(rotate_image(canonical, r)), Match{index, r});
  }
}

std::optional<GlyphLibrary::Match> GlyphLibrary::match(const RasterImage& img, double tolerance) const {
  if (auto it = by_digest_.find(image_digest(img)); it != by_digest_.end()) return it->second;

  std::optional<Match> best;
  double best_rms = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (RotationLabel r : kAllRotations) {
      const RasterImage cand = rotate_image(entries_[i].canonical, r);
      if (cand.width() != img.width() || cand.height() != img.height() ||
          cand.channels() != img.channels())
        continue;
      double se = 0.0;
      const auto a = cand.pixels(), b = img.pixels();
      for (std::size_t k = 0; k < a.size(); ++k) se += (a[k] - b[k]) * (a[k] - b[k]);
      const double rms = std::sqrt(se / static_cast<double>(a.size()));
      if (rms < best_rms) {
        best_rms = rms;
        best = Match{i, r};
      }
    }
  }
  if (best && best_rms <= tolerance) return best;
  return std::nullopt;
}

OracleBackend::OracleBackend(BiasProfile profile, std::shared_ptr<const GlyphLibrary> library)
    : profile_(profile), library_(std::move(library)) {
  profile_.validate();
  if (!library_) throw std::invalid_argument("oracle backend needs a glyph library");
}

TriangleMesh OracleBackend::generate(const GenerationRequest& req) const {
  return oracle_generate(profile_, *library_, req);
}

TriangleMesh oracle_generate(const BiasProfile& profile, const GlyphLibrary& library,
                             const GenerationRequest& req) {
  if (req.inference_steps < 1) throw std::invalid_argument("inference_steps must be at least 1");
  const auto m = library.match(req.image);
  if (!m) throw UnknownGlyph("request image matches no known glyph (digest " + image_digest(req.image) + ")");
  const double severity = profile.effective_severity(m->rotation, req.inference_steps);
  const TriangleMesh truth = rotate_mesh(glyph_mesh(library.descriptor(m->index)), m->rotation);
  return corrupt_mesh(truth, severity, req.seed);
}

std::unique_ptr<GenerationBackend> make_backend(const std::string& spec, const BiasProfile& profile,
                                                std::shared_ptr<const GlyphLibrary> library,
                                                const RemoteOptions& remote) {
  if (spec == "oracle") return std::make_unique<OracleBackend>(profile, std::move(library));
  if (spec.rfind("remote:", 0) == 0) {
    std::string url = spec.substr(7);
    if (const char* env = std::getenv(kBackendUrlEnv); env && *env) url = env;
    if (url.empty()) throw std::invalid_argument("remote backend needs a URL");
    return std::make_unique<RemoteBackend>(url, remote);
  }
  throw std::invalid_argument("unknown backend '" + spec + "'; expected oracle or remote:<url>");
}

}  // namespace canonprobe
