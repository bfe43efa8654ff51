#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "canonprobe/backends.hpp"
#include "canonprobe/image_io.hpp"
#include "canonprobe/wire.hpp"

namespace canonprobe {

using nlohmann::json;

std::string generation_request_payload(const GenerationRequest& req) {
  if (req.inference_steps < 1) throw std::invalid_argument("inference_steps must be at least 1");
  json j;
  j["image_png_base64"] = base64_encode(encode_png(req.image));
  j["inference_steps"] = req.inference_steps;
  j["seed"] = req.seed;
  return j.dump();
}

TriangleMesh parse_generation_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendPayloadError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("mesh_obj_base64") || !j["mesh_obj_base64"].is_string())
    throw BackendPayloadError("response lacks a string mesh_obj_base64 field");
  std::vector<std::uint8_t> obj;
  try {
    obj = base64_decode(j["mesh_obj_base64"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw BackendPayloadError(std::string("mesh_obj_base64: ") + e.what());
  }
  try {
    return parse_obj(std::string_view(reinterpret_cast<const char*>(obj.data()), obj.size()));
  } catch (const MeshParseError& e) {
    throw BackendPayloadError(std::string("unparseable mesh: ") + e.what());
  }
}

namespace {

// "http://host:port/prefix" -> ("http://host:port", "/prefix/generate")
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: " + endpoint);
  const auto slash = endpoint.find('/', scheme + 3);
  std::string host = endpoint.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {host, prefix + "/generate"};
}

struct SemaphoreGuard {
  std::counting_semaphore<1024>& s;
  explicit SemaphoreGuard(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
  ~SemaphoreGuard() { s.release(); }
};

}  // namespace

RemoteBackend::RemoteBackend(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
  if (options_.max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024)
    throw std::invalid_argument("max_in_flight must lie in [1,1024]");
  std::tie(host_, path_) = split_endpoint(endpoint_);
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(options_.max_in_flight);
}

RemoteBackend::~RemoteBackend() = default;

TriangleMesh RemoteBackend::generate(const GenerationRequest& req) const {
  const std::string payload = generation_request_payload(req);
  const std::string tag = " [request " + sha256_hex(payload) + "]";

  SemaphoreGuard guard(*in_flight_);
  httplib::Client client(host_);
  client.set_connection_timeout(options_.connect_timeout);
  client.set_read_timeout(options_.read_timeout);
  client.set_write_timeout(options_.read_timeout);

  auto backoff = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    const bool last = attempt == options_.max_attempts;
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      const std::string why = httplib::to_string(err);
      if (last) {
        if (err == httplib::Error::Read || err == httplib::Error::Write ||
            err == httplib::Error::ConnectionTimeout)
          throw BackendTimeout("backend timed out after " + std::to_string(attempt) + " attempts: " + why + tag);
        throw BackendUnavailable("backend unavailable after " + std::to_string(attempt) + " attempts: " + why + tag);
      }
    } else if (res->status >= 200 && res->status < 300) {
      try {
        return parse_generation_response(res->body);
      } catch (const BackendPayloadError& e) {
        throw BackendPayloadError(e.what() + tag);
      }
    } else {
      const bool transient = res->status == 429 || res->status >= 500;
      if (!transient || last)
        throw BackendStatusError(res->status, "backend returned HTTP " + std::to_string(res->status) + ": " +
                                                  res->body.substr(0, 200) + tag);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

TriangleMesh remote_generate(const std::string& endpoint, const GenerationRequest& req,
                             const RemoteOptions& options) {
  return RemoteBackend(endpoint, options).generate(req);
}

}  // namespace canonprobe
