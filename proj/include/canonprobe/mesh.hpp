#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace canonprobe {

using Vec3 = std::array<double, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  /// Throws std::invalid_argument when an index is out of range, a coordinate
  /// is non-finite, or no triangle has positive area.
  void validate() const;
  double surface_area() const;
  double bbox_diagonal() const;

  bool operator==(const TriangleMesh&) const = default;
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

inline constexpr int kDefaultPointCount = 8192;

struct PointCloud {
  std::vector<Vec3> points;
  /// Index of the triangle each point was drawn from (empty for clouds not
  /// produced by sampling).
  std::vector<std::uint32_t> source_triangle;

  std::size_t size() const { return points.size(); }
};

/// Area-weighted triangle choice, then uniform barycentric placement
/// u = 1 - sqrt(r1), v = r2 * sqrt(r1), w = 1 - u - v.
/// Throws std::invalid_argument when the mesh has zero area or n < 1.
PointCloud sample_point_cloud(const TriangleMesh& mesh, int n = kDefaultPointCount,
                              std::uint64_t seed = 0);

/// Reported with the 1-based line number of the offending OBJ record.
class MeshParseError : public std::runtime_error {
 public:
  MeshParseError(int line, const std::string& what)
      : std::runtime_error("OBJ line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Wavefront OBJ subset: `v x y z` and `f` records (1-based or negative
/// indices, `i/t/n` forms accepted); polygons are fan-triangulated. Other
/// record types are ignored.
TriangleMesh parse_obj(std::string_view text);
std::string to_obj(const TriangleMesh& mesh);
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// "x y z" per line.
std::string to_xyz(const PointCloud& cloud);

}  // namespace canonprobe
