#include "canonprobe/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "canonprobe/image_io.hpp"
#include "canonprobe/seeding.hpp"

namespace canonprobe {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  return 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
}

void TriangleMesh::validate() const {
  for (const auto& v : vertices)
    for (double c : v)
      if (!std::isfinite(c)) throw std::invalid_argument("mesh has a non-finite vertex coordinate");
  bool any_area = false;
  for (const auto& t : triangles) {
    for (auto i : t)
      if (i >= vertices.size()) throw std::invalid_argument("mesh triangle index out of range");
    if (triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > 0.0) any_area = true;
  }
  if (!any_area) throw std::invalid_argument("mesh has no triangle with positive area");
}

double TriangleMesh::surface_area() const {
  double a = 0.0;
  for (const auto& t : triangles) a += triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  return a;
}

double TriangleMesh::bbox_diagonal() const {
  if (vertices.empty()) return 0.0;
  Vec3 lo = vertices[0], hi = vertices[0];
  for (const auto& v : vertices)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], v[d]);
      hi[d] = std::max(hi[d], v[d]);
    }
  return std::hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
}

PointCloud sample_point_cloud(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("point count must be positive");
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= mesh.vertices.size()) throw std::invalid_argument("mesh triangle index out of range");

  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cumulative.push_back(total);
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::invalid_argument("cannot sample a mesh with zero total surface area");

  auto rng = SeedSequence(seed).add("surface-sample").rng();
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(n));
  cloud.source_triangle.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = uniform(rng, 0.0, total);
    // Zero-area triangles occupy empty intervals and are never selected.
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto tri = static_cast<std::uint32_t>(it - cumulative.begin());

    const double s = std::sqrt(uniform(rng, 0.0, 1.0));
    const double r2 = uniform(rng, 0.0, 1.0);
    const double u = 1.0 - s;
    const double v = r2 * s;
    const double w = 1.0 - u - v;
    const auto& t = mesh.triangles[tri];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    cloud.points.push_back({u * a[0] + v * b[0] + w * c[0], u * a[1] + v * b[1] + w * c[1],
                            u * a[2] + v * b[2] + w * c[2]});
    cloud.source_triangle.push_back(tri);
  }
  return cloud;
}

namespace {

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view s, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw MeshParseError(line, "invalid coordinate '" + std::string(s) + "'");
  return v;
}

std::uint32_t parse_index(std::string_view s, std::size_t vertex_count, int line) {
  const std::string_view head = s.substr(0, s.find('/'));
  long long idx = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0)
    throw MeshParseError(line, "invalid face index '" + std::string(s) + "'");
  const long long resolved = idx > 0 ? idx - 1 : static_cast<long long>(vertex_count) + idx;
  if (resolved < 0 || resolved >= static_cast<long long>(vertex_count))
    throw MeshParseError(line, "face index " + std::to_string(idx) + " out of range");
  return static_cast<std::uint32_t>(resolved);
}

}  // namespace

TriangleMesh parse_obj(std::string_view text) {
  TriangleMesh mesh;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    const auto tok = tokens(line);
    if (tok.empty() || tok[0].front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (tok[0] == "v") {
      if (tok.size() < 4) throw MeshParseError(lineno, "vertex needs 3 coordinates");
      mesh.vertices.push_back({parse_double(tok[1], lineno), parse_double(tok[2], lineno),
                               parse_double(tok[3], lineno)});
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw MeshParseError(lineno, "face needs at least 3 vertices");
      std::vector<std::uint32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k)
        idx.push_back(parse_index(tok[k], mesh.vertices.size(), lineno));
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    if (end == text.size()) break;
  }
  if (mesh.triangles.empty()) throw MeshParseError(lineno, "no faces in OBJ payload");
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw MeshParseError(lineno, e.what());
  }
  return mesh;
}

std::string to_obj(const TriangleMesh& mesh) {
  std::string out;
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_obj(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  const std::string text = to_obj(mesh);
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string to_xyz(const PointCloud& cloud) {
  std::string out;
  char buf[128];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out += buf;
  }
  return out;
}

}  // namespace canonprobe
