#pragma once

#include <httplib.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "canonprobe/network.hpp"
#include "canonprobe/rotgroup.hpp"
#include "canonprobe/seeding.hpp"

namespace testsupport {

using namespace canonprobe;

inline RasterImage random_image(Rng& rng, int w, int h, int c) {
  std::vector<float> px(static_cast<std::size_t>(w) * h * c);
  for (auto& v : px) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return RasterImage(w, h, c, std::move(px));
}

// Upper quantile of chi-square with one degree of freedom, from the normal
// tail: P(Z^2 > q) = erfc(sqrt(q/2)).
inline double chi2_df1_critical(double alpha) {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(std::sqrt(mid / 2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Two-sided normal quantile z with P(|Z| > z) = alpha.
inline double normal_two_sided(double alpha) { return std::sqrt(chi2_df1_critical(alpha)); }

// 3 -> conv(4) -> dense(8): D = 8 on 8x8 inputs.
inline Architecture tiny_architecture(int frozen = 0) {
  Architecture a;
  a.input_size = 8;
  a.resize_size = 8;
  a.stages = {{StageKind::Conv3x3ReluMaxPool, 3, 4}, {StageKind::DenseRelu, 4 * 4 * 4, 8}};
  a.frozen_prefix_depth = frozen;
  a.validate();
  return a;
}

inline Tensor random_tensor(Rng& rng, int c, int h, int w) {
  Tensor t(c, h, w);
  for (auto& v : t.data) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return t;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("canonprobe-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Local HTTP server for the remote client; the handler decides each reply.
class FixtureServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

  explicit FixtureServer(Handler h) : handler_(std::move(h)) {
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      int call;
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(req.body);
        call = static_cast<int>(bodies_.size());
      }
      handler_(req, res, call);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FixtureServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int calls() const {
    std::lock_guard lock(mu_);
    return static_cast<int>(bodies_.size());
  }
  std::vector<std::string> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<std::string> bodies_;
};

// A port with nothing listening on it.
inline int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace testsupport
