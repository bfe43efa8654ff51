#pragma once

// The image-to-3D generation boundary. Backends are opaque: an image, a
// number of inference steps and a seed go in; a triangle mesh comes out.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "canonprobe/mesh.hpp"
#include "canonprobe/rotgroup.hpp"
#include "canonprobe/synthetic.hpp"

namespace canonprobe {

struct GenerationRequest {
  RasterImage image;
  int inference_steps = 1;
  std::uint64_t seed = 0;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Remote host unreachable or connection refused.
class BackendUnavailable : public BackendError {
 public:
  using BackendError::BackendError;
};

class BackendTimeout : public BackendError {
 public:
  using BackendError::BackendError;
};

class BackendStatusError : public BackendError {
 public:
  BackendStatusError(int status, const std::string& what) : BackendError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Response body was not a well-formed mesh payload.
class BackendPayloadError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The oracle could not identify the request image.
class UnknownGlyph : public BackendError {
 public:
  using BackendError::BackendError;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual TriangleMesh generate(const GenerationRequest& req) const = 0;
  virtual std::string name() const = 0;
};

/// Canonical-view degradation per detected input rotation.
struct BiasProfile {
  std::array<double, 4> severity_by_label{0.0, 0.0, 0.0, 0.0};
  /// Per-step multiplicative attenuation of severity; 1.0 = steps have no effect.
  double steps_relief = 1.0;

  static BiasProfile uniform_severity(double severity, double steps_relief = 1.0);
  void validate() const;
  double effective_severity(RotationLabel detected, int inference_steps) const;
};

/// Thin extruded prism per convex glyph part, z in [-depth/2, depth/2].
TriangleMesh glyph_mesh(const GlyphDescriptor& glyph);

/// Quarter turns about the viewing (z) axis, matching rotate_image's
/// counterclockwise convention: (x, y) -> (-y, x) per step.
TriangleMesh rotate_mesh(const TriangleMesh& mesh, RotationLabel r);

/// Shear x += 0.5 * severity * y, then per-vertex Gaussian displacement with
/// standard deviation 0.3 * severity * bbox diagonal. severity 0 is a no-op.
TriangleMesh corrupt_mesh(const TriangleMesh& mesh, double severity, std::uint64_t seed);

std::string image_digest(const RasterImage& img);

/// Known canonical glyphs; identifies which glyph, and which quarter turn of
/// it, a request image shows.
class GlyphLibrary {
 public:
  struct Match {
    std::size_t index;
    RotationLabel rotation;
  };

  void add(const RasterImage& canonical, GlyphDescriptor descriptor);
  std::size_t size() const { return entries_.size(); }
  const GlyphDescriptor& descriptor(std::size_t i) const { return entries_[i].descriptor; }

  /// Exact digest match first; otherwise the nearest same-size rotation when
  /// its RMS pixel difference is within `tolerance`.
  std::optional<Match> match(const RasterImage& img, double tolerance = 1.0 / 255.0) const;

 private:
  struct Entry {
    RasterImage canonical;
    GlyphDescriptor descriptor;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, Match> by_digest_;
};

/// Deterministic stand-in generator reproducing canonical-view bias.
class OracleBackend final : public GenerationBackend {
 public:
  OracleBackend(BiasProfile profile, std::shared_ptr<const GlyphLibrary> library);
  TriangleMesh generate(const GenerationRequest& req) const override;
  std::string name() const override { return "oracle"; }
  const BiasProfile& profile() const { return profile_; }

 private:
  BiasProfile profile_;
  std::shared_ptr<const GlyphLibrary> library_;
};

TriangleMesh oracle_generate(const BiasProfile& profile, const GlyphLibrary& library,
                             const GenerationRequest& req);

/// Request body: {"image_png_base64": string, "inference_steps": integer, "seed": integer}.
std::string generation_request_payload(const GenerationRequest& req);
/// Parses {"mesh_obj_base64": string}; throws BackendPayloadError.
TriangleMesh parse_generation_response(const std::string& body);

struct RemoteOptions {
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{120000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  int max_in_flight = 4;
};

/// HTTP client for POST <endpoint>/generate with bounded retries and
/// exponential backoff on transient failures (connection errors, timeouts,
/// 429 and 5xx). Errors carry the SHA-256 digest of the request payload.
class RemoteBackend final : public GenerationBackend {
 public:
  explicit RemoteBackend(std::string endpoint, RemoteOptions options = {});
  ~RemoteBackend() override;
  TriangleMesh generate(const GenerationRequest& req) const override;
  std::string name() const override { return "remote:" + endpoint_; }
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::string host_;
  std::string path_;
  RemoteOptions options_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

TriangleMesh remote_generate(const std::string& endpoint, const GenerationRequest& req,
                             const RemoteOptions& options = {});

inline constexpr const char* kBackendUrlEnv = "CANONPROBE_BACKEND_URL";

/// "oracle" or "remote:<url>"; CANONPROBE_BACKEND_URL overrides the remote
/// endpoint when set. The oracle needs a glyph library.
std::unique_ptr<GenerationBackend> make_backend(const std::string& spec, const BiasProfile& profile,
                                                std::shared_ptr<const GlyphLibrary> library,
                                                const RemoteOptions& remote = {});

}  // namespace canonprobe
