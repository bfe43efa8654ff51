#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <json.hpp>

#include "canonprobe/backends.hpp"
#include "canonprobe/image_io.hpp"
#include "canonprobe/scorer.hpp"
#include "canonprobe/wire.hpp"
#include "support.hpp"

using namespace canonprobe;
using testsupport::FixtureServer;

namespace {

struct Fixture {
  std::vector<SyntheticOrigin> set = generate_synthetic_oriented_set(3, known_glyph_categories(), 17);
  std::shared_ptr<GlyphLibrary> library = std::make_shared<GlyphLibrary>();
  Fixture() {
    for (const auto& g : set) library->add(g.image, g.descriptor);
  }
};

double shoelace(const std::vector<Vec2>& p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& q = p[i];
    const auto& r = p[(i + 1) % p.size()];
    a += q[0] * r[1] - r[0] * q[1];
  }
  return std::abs(a) / 2;
}

std::string obj_response(const TriangleMesh& m) {
  return nlohmann::json{{"mesh_obj_base64", base64_encode(to_obj(m))}}.dump();
}

TriangleMesh fixture_mesh() {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.1, 0.2, 0.30000000000000004}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

GenerationRequest small_request(std::uint64_t seed = 9) {
  Rng rng(seed);
  std::vector<float> px(4 * 4 * 3);
  for (auto& v : px) v = static_cast<float>(static_cast<int>(uniform(rng, 0, 256)) / 255.0);
  return {RasterImage(4, 4, 3, px), 25, seed};
}

RemoteOptions fast_options() {
  RemoteOptions o;
  o.connect_timeout = std::chrono::milliseconds(500);
  o.read_timeout = std::chrono::milliseconds(2000);
  o.initial_backoff = std::chrono::milliseconds(5);
  o.max_attempts = 3;
  return o;
}

}  // namespace

TEST_CASE("bias profile") {
  BiasProfile p;
  CHECK_NOTHROW(p.validate());
  p.severity_by_label[0] = 0.1;
  CHECK_THROWS(p.validate());
  p = BiasProfile::uniform_severity(0.8, 0.5);
  CHECK(p.effective_severity(RotationLabel(0), 50) == 0.0);
  CHECK(p.effective_severity(RotationLabel(1), 1) == 0.8);
  CHECK(p.effective_severity(RotationLabel(2), 3) == doctest::Approx(0.2));
  CHECK_THROWS(p.effective_severity(RotationLabel(1), 0));
  CHECK_THROWS(BiasProfile::uniform_severity(1.2));
}

TEST_CASE("glyph meshes are extruded prisms") {
  Fixture f;
  for (const auto& g : f.set) {
    const TriangleMesh m = glyph_mesh(g.descriptor);
    CHECK_NOTHROW(m.validate());
    double expected = 0;
    for (const auto& part : g.descriptor.parts) {
      double perimeter = 0;
      for (std::size_t i = 0; i < part.vertices.size(); ++i) {
        const auto& a = part.vertices[i];
        const auto& b = part.vertices[(i + 1) % part.vertices.size()];
        perimeter += std::hypot(b[0] - a[0], b[1] - a[1]);
      }
      expected += 2 * shoelace(part.vertices) + perimeter * g.descriptor.depth;
    }
    CHECK(m.surface_area() == doctest::Approx(expected).epsilon(1e-9));
    for (const auto& v : m.vertices) CHECK(std::abs(v[2]) == doctest::Approx(g.descriptor.depth / 2));

    const TriangleMesh r = rotate_mesh(m, RotationLabel(1));
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      CHECK(r.vertices[i][0] == -m.vertices[i][1]);
      CHECK(r.vertices[i][1] == m.vertices[i][0]);
    }
    CHECK(rotate_mesh(rotate_mesh(r, RotationLabel(1)), RotationLabel(2)) == m);
  }
}

TEST_CASE("oracle: canonical input gives the ground truth exactly") {
  Fixture f;
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), f.library);
  for (const auto& g : f.set)
    for (int steps : {1, 25, 50}) CHECK(oracle.generate({g.image, steps, 123}) == glyph_mesh(g.descriptor));
}

TEST_CASE("oracle: rotated input follows the corruption model") {
  Fixture f;
  const double sev = 0.8;
  OracleBackend oracle(BiasProfile::uniform_severity(sev), f.library);
  double sq = 0, sum = 0;
  std::size_t n = 0;
  for (const auto& g : f.set) {
    const TriangleMesh truth = rotate_mesh(glyph_mesh(g.descriptor), RotationLabel(1));
    const double diag = truth.bbox_diagonal();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GenerationRequest req{rotate_image(g.image, RotationLabel(1)), 50, seed};
      const TriangleMesh out = oracle.generate(req);
      CHECK(out == oracle.generate(req));
      REQUIRE(out.vertices.size() == truth.vertices.size());
      CHECK(out.triangles == truth.triangles);
      for (std::size_t i = 0; i < out.vertices.size(); ++i) {
        const Vec3& t = truth.vertices[i];
        const Vec3 sheared{t[0] + 0.5 * sev * t[1], t[1], t[2]};
        for (int d = 0; d < 3; ++d) {
          const double z = (out.vertices[i][d] - sheared[d]) / (0.3 * sev * diag);
          sum += z;
          sq += z * z;
          ++n;
        }
      }
    }
  }
  // Standardized residuals: mean 0, variance 1.
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("oracle: zero severity and unknown glyphs") {
  Fixture f;
  const auto& g = f.set[0];
  const TriangleMesh truth = glyph_mesh(g.descriptor);
  CHECK(corrupt_mesh(truth, 0.0, 3) == truth);
  OracleBackend neutral(BiasProfile{}, f.library);
  CHECK(neutral.generate({rotate_image(g.image, RotationLabel(3)), 5, 1}) == rotate_mesh(truth, RotationLabel(3)));

  OracleBackend oracle(BiasProfile::uniform_severity(0.5), f.library);
  CHECK_THROWS_AS(oracle.generate({RasterImage::filled(64, 64, 3, 0.5f), 5, 1}), UnknownGlyph);
  CHECK_THROWS(oracle.generate({g.image, 0, 1}));
  CHECK_THROWS(OracleBackend(BiasProfile{}, nullptr));
}

TEST_CASE("oracle: steps relief attenuates the corruption") {
  Fixture f;
  const auto& g = f.set[1];
  const RasterImage rotated = rotate_image(g.image, RotationLabel(2));
  const TriangleMesh truth = rotate_mesh(glyph_mesh(g.descriptor), RotationLabel(2));
  OracleBackend relieved(BiasProfile::uniform_severity(0.8, 0.9), f.library);
  CHECK(relieved.generate({rotated, 1, 4}) == corrupt_mesh(truth, 0.8, 4));
  CHECK(relieved.generate({rotated, 11, 4}) == corrupt_mesh(truth, 0.8 * std::pow(0.9, 10), 4));
}

TEST_CASE("oracle: mean score does not increase with severity") {
  Fixture f;
  const auto emb = reference_embedders();
  std::vector<double> means;
  for (double sev : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double total = 0;
    int n = 0;
    for (const auto& g : f.set) {
      const TriangleMesh truth = glyph_mesh(g.descriptor);
      for (std::uint64_t seed = 0; seed < 100; ++seed, ++n)
        total += ulip_score(*emb.image, *emb.shape, g.image, corrupt_mesh(truth, sev, seed), 2048, seed).value();
    }
    means.push_back(total / n);
  }
  for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] < means[i - 1]);
}

TEST_CASE("wire helpers") {
  CHECK(base64_encode(std::string_view("hello")) == "aGVsbG8=");
  const auto bytes = base64_decode("aGVsbG8=");
  CHECK(std::string(bytes.begin(), bytes.end()) == "hello");
  CHECK(base64_decode("").empty());
  CHECK_THROWS(base64_decode("a$b="));
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("request payloads are canonical") {
  const auto req = small_request();
  const std::string a = generation_request_payload(req);
  CHECK(a == generation_request_payload(small_request()));
  const auto j = nlohmann::json::parse(a);
  CHECK(j.size() == 3);
  CHECK(a.rfind("{\"image_png_base64\":", 0) == 0);
  CHECK(j["inference_steps"] == 25);
  CHECK(j["seed"] == 9);
  CHECK(decode_png(base64_decode(j["image_png_base64"].get<std::string>())) == req.image);
  CHECK_THROWS(generation_request_payload({req.image, 0, 1}));
}

TEST_CASE("remote: round trip and identical payloads") {
  const TriangleMesh mesh = fixture_mesh();
  FixtureServer server([&](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(obj_response(mesh), "application/json");
  });
  RemoteBackend remote(server.url(), fast_options());
  CHECK(remote.generate(small_request()) == mesh);
  CHECK(remote_generate(server.url(), small_request(), fast_options()) == mesh);
  const auto bodies = server.bodies();
  REQUIRE(bodies.size() == 2);
  CHECK(bodies[0] == bodies[1]);
  CHECK(bodies[0] == generation_request_payload(small_request()));
}

TEST_CASE("remote: malformed payloads are rejected") {
  std::string reply;
  FixtureServer server([&](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(reply, "application/json");
  });
  RemoteBackend remote(server.url(), fast_options());
  const std::string digest = sha256_hex(generation_request_payload(small_request()));

  reply = nlohmann::json{{"mesh_obj_base64", base64_encode(std::string_view("v 0 0 0\nv 1 0 0\nf 1 2 3\n"))}}.dump();
  try {
    remote.generate(small_request());
    FAIL("malformed OBJ accepted");
  } catch (const BackendPayloadError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 3") != std::string::npos);
    CHECK(what.find(digest) != std::string::npos);
  }
  reply = "not json";
  CHECK_THROWS_AS(remote.generate(small_request()), BackendPayloadError);
  reply = "{\"mesh\": 1}";
  CHECK_THROWS_AS(remote.generate(small_request()), BackendPayloadError);
  reply = "{\"mesh_obj_base64\": \"!!!\"}";
  CHECK_THROWS_AS(remote.generate(small_request()), BackendPayloadError);
  reply = nlohmann::json{{"mesh_obj_base64", base64_encode(std::string_view("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"))}}.dump();
  CHECK_THROWS_AS(remote.generate(small_request()), BackendPayloadError);
}

TEST_CASE("remote: retries transient failures, then gives up") {
  const TriangleMesh mesh = fixture_mesh();
  FixtureServer flaky([&](const httplib::Request&, httplib::Response& res, int call) {
    if (call < 3) {
      res.status = call == 1 ? 503 : 429;
      res.set_content("busy", "text/plain");
    } else {
      res.set_content(obj_response(mesh), "application/json");
    }
  });
  CHECK(RemoteBackend(flaky.url(), fast_options()).generate(small_request()) == mesh);
  CHECK(flaky.calls() == 3);

  FixtureServer down([](const httplib::Request&, httplib::Response& res, int) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  try {
    RemoteBackend(down.url(), fast_options()).generate(small_request());
    FAIL("persistent 500 accepted");
  } catch (const BackendStatusError& e) {
    CHECK(e.status() == 500);
    CHECK(std::string(e.what()).find(sha256_hex(generation_request_payload(small_request()))) != std::string::npos);
  }
  CHECK(down.calls() == 3);

  FixtureServer bad_request([](const httplib::Request&, httplib::Response& res, int) {
    res.status = 400;
    res.set_content("bad image", "text/plain");
  });
  CHECK_THROWS_AS(RemoteBackend(bad_request.url(), fast_options()).generate(small_request()), BackendStatusError);
  CHECK(bad_request.calls() == 1);
}

TEST_CASE("remote: unreachable host and timeouts") {
  const std::string url = "http://127.0.0.1:" + std::to_string(testsupport::closed_port());
  CHECK_THROWS_AS(RemoteBackend(url, fast_options()).generate(small_request()), BackendUnavailable);

  FixtureServer slow([](const httplib::Request&, httplib::Response& res, int) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content("{}", "application/json");
  });
  auto opts = fast_options();
  opts.read_timeout = std::chrono::milliseconds(100);
  opts.max_attempts = 2;
  CHECK_THROWS_AS(RemoteBackend(slow.url(), opts).generate(small_request()), BackendTimeout);
  CHECK_THROWS_AS(RemoteBackend("127.0.0.1:80"), std::invalid_argument);
}

TEST_CASE("remote: in-flight cap") {
  std::atomic<int> active{0}, peak{0};
  const TriangleMesh mesh = fixture_mesh();
  FixtureServer server([&](const httplib::Request&, httplib::Response& res, int) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --active;
    res.set_content(obj_response(mesh), "application/json");
  });
  auto opts = fast_options();
  opts.max_in_flight = 1;
  RemoteBackend remote(server.url(), opts);
  std::vector<std::thread> clients;
  for (int i = 0; i < 4; ++i) clients.emplace_back([&] { CHECK(remote.generate(small_request()) == mesh); });
  for (auto& t : clients) t.join();
  CHECK(peak.load() == 1);
  CHECK(server.calls() == 4);
}

TEST_CASE("backend specs and endpoint override") {
  Fixture f;
  CHECK(make_backend("oracle", BiasProfile{}, f.library)->name() == "oracle");
  ::unsetenv(kBackendUrlEnv);
  CHECK(make_backend("remote:http://a.example:1", BiasProfile{}, nullptr)->name() == "remote:http://a.example:1");
  ::setenv(kBackendUrlEnv, "http://b.example:2", 1);
  CHECK(make_backend("remote:http://a.example:1", BiasProfile{}, nullptr)->name() == "remote:http://b.example:2");
  ::unsetenv(kBackendUrlEnv);
  CHECK_THROWS(make_backend("magic", BiasProfile{}, nullptr));
  CHECK_THROWS(make_backend("oracle", BiasProfile{}, nullptr));
}
