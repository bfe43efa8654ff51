#include <doctest.h>

#include <fstream>
#include <sstream>

#include "canonprobe/probe.hpp"
#include "canonprobe/report.hpp"
#include "support.hpp"
#include "reference_stats.hpp"

using namespace canonprobe;

namespace {

struct Setup {
  std::vector<SyntheticOrigin> set;
  std::vector<Origin> origins;
  std::shared_ptr<GlyphLibrary> library = std::make_shared<GlyphLibrary>();

  explicit Setup(int per_category, std::uint64_t seed = 12) {
    set = generate_synthetic_oriented_set(per_category, {"airplane", "car"}, seed);
    for (const auto& g : set) {
      origins.push_back(g.origin());
      library->add(g.image, g.descriptor);
    }
  }
};

// Reads the applied rotation off the glyph library; optionally wrong for
// every origin whose index is a multiple of `miss_every`.
class LibraryCorrector : public OrientationCorrector {
 public:
  LibraryCorrector(std::shared_ptr<const GlyphLibrary> lib, std::size_t miss_every = 0)
      : lib_(std::move(lib)), miss_every_(miss_every) {}
  Canonicalized canonicalize(const RasterImage& img) const override {
    const auto m = lib_->match(img);
    RotationLabel pred = m->rotation;
    if (miss_every_ && m->index % miss_every_ == 0) pred = compose(pred, RotationLabel(1));
    return {rotate_image(img, inverse(pred)), pred};
  }

 private:
  std::shared_ptr<const GlyphLibrary> lib_;
  std::size_t miss_every_;
};

// Fails for one source id.
class FlakyBackend : public GenerationBackend {
 public:
  FlakyBackend(const GenerationBackend& inner, const GlyphLibrary& lib, std::size_t bad)
      : inner_(inner), lib_(lib), bad_(bad) {}
  TriangleMesh generate(const GenerationRequest& req) const override {
    if (lib_.match(req.image)->index == bad_) throw BackendTimeout("injected timeout");
    return inner_.generate(req);
  }
  std::string name() const override { return "flaky"; }

 private:
  const GenerationBackend& inner_;
  const GlyphLibrary& lib_;
  std::size_t bad_;
};

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const ProbeRecord& find(const std::vector<ProbeRecord>& rs, const std::string& id, Condition c, int k, int steps) {
  for (const auto& r : rs)
    if (r.source_id == id && r.condition == c && r.label_applied.k() == k && r.inference_steps == steps) return r;
  throw std::runtime_error("record not found");
}

}  // namespace

TEST_CASE("record counting and canonical slice") {
  Setup s(1);
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), s.library);
  ProbeOptions opts;
  opts.point_count = 1024;
  const auto recs = run_probe(s.origins, oracle, reference_embedders(), opts);
  REQUIRE(recs.size() == 8);
  int canonical = 0;
  for (const auto& r : recs) {
    if (r.condition == Condition::Canonical) {
      ++canonical;
      CHECK(r.label_applied.k() == 0);
    } else {
      CHECK(r.condition == Condition::Rotated);
      CHECK(r.label_applied.k() != 0);
    }
    CHECK_FALSE(r.label_predicted.has_value());
    CHECK_FALSE(r.failed());
  }
  CHECK(canonical == 2);

  opts.steps_list = {5, 25, 50};
  opts.angles = {RotationLabel(0), RotationLabel(2)};
  LibraryCorrector perfect(s.library);
  CHECK(run_probe(s.origins, oracle, reference_embedders(), opts, &perfect).size() == 2 * 2 * 3 * 2);

  CHECK_THROWS(run_probe({}, oracle, reference_embedders(), opts));
  opts.angles.clear();
  CHECK_THROWS(run_probe(s.origins, oracle, reference_embedders(), opts));
}

TEST_CASE("perfect corrector reproduces canonical scores") {
  Setup s(4);
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), s.library);
  LibraryCorrector perfect(s.library);
  ProbeOptions opts;
  opts.point_count = 1024;
  opts.steps_list = {5, 50};
  const auto recs = run_probe(s.origins, oracle, reference_embedders(), opts, &perfect);
  CHECK(recs.size() == s.origins.size() * 4 * 2 * 2);
  for (const auto& r : recs) {
    if (r.condition != Condition::Corrected) continue;
    REQUIRE(r.label_predicted.has_value());
    CHECK(*r.label_predicted == r.label_applied);
    const auto& canon = find(recs, r.source_id, Condition::Canonical, 0, r.inference_steps);
    CHECK(*r.score == *canon.score);
  }
}

TEST_CASE("probe is deterministic and independent of worker count") {
  Setup s(3);
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), s.library);
  LibraryCorrector corr(s.library, 2);
  ProbeOptions opts;
  opts.point_count = 512;
  opts.seed = 77;
  const auto a = run_probe(s.origins, oracle, reference_embedders(), opts, &corr);
  const auto b = run_probe(s.origins, oracle, reference_embedders(), opts, &corr);
  CHECK(a == b);
  opts.jobs = 3;
  CHECK(run_probe(s.origins, oracle, reference_embedders(), opts, &corr) == a);
  opts.seed = 78;
  CHECK_FALSE(run_probe(s.origins, oracle, reference_embedders(), opts, &corr) == a);
}

TEST_CASE("backend failures are recorded, not fatal") {
  Setup s(2);
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), s.library);
  FlakyBackend flaky(oracle, *s.library, 1);
  ProbeOptions opts;
  opts.point_count = 512;
  const auto recs = run_probe(s.origins, flaky, reference_embedders(), opts);
  REQUIRE(recs.size() == 16);
  std::size_t failed = 0;
  for (const auto& r : recs)
    if (r.failed()) {
      ++failed;
      CHECK(r.source_id == s.origins[1].source_id);
      CHECK(r.error.find("injected timeout") != std::string::npos);
    }
  CHECK(failed == 4);
  const auto agg = aggregate(recs);
  CHECK(agg.failures == 4);
  std::size_t counted = 0;
  for (const auto& st : agg.stats) counted += st.n;
  CHECK(counted == 12);
}

TEST_CASE("aggregation arithmetic and ordering") {
  const auto ms = mean_and_sample_std({0.1, 0.2, 0.3});
  CHECK(ms.mean == doctest::Approx(0.2));
  CHECK(ms.std == doctest::Approx(0.1));
  const auto one = mean_and_sample_std({0.42});
  CHECK(one.mean == 0.42);
  CHECK(one.std == 0.0);
  CHECK_THROWS(aggregate({}));

  auto recs = testsupport::reference_records();
  std::reverse(recs.begin(), recs.end());
  const auto agg = aggregate(recs);
  REQUIRE(agg.stats.size() == 9);
  CHECK(agg.failures == 0);
  CHECK(agg.stats[0].category == "airplanes");
  CHECK(agg.stats[0].condition == Condition::Canonical);
  CHECK(agg.stats[1].condition == Condition::Rotated);
  CHECK(agg.stats[2].condition == Condition::Corrected);
  CHECK(agg.stats[3].category == "cars");
  CHECK(agg.stats[6].category == "chairs");
  for (const auto& st : agg.stats) {
    CHECK(st.n == 3);
    const auto it = std::find_if(testsupport::reference_cells().begin(), testsupport::reference_cells().end(), [&](const auto& c) {
      return c.category == st.category && c.condition == st.condition;
    });
    REQUIRE(it != testsupport::reference_cells().end());
    CHECK(st.mean == doctest::Approx(it->mean).epsilon(1e-12));
    CHECK(st.std == doctest::Approx(it->std).epsilon(1e-12));
  }
}

TEST_CASE("imperfect corrector bounds") {
  Setup s(15, 3);
  OracleBackend oracle(BiasProfile::uniform_severity(0.8), s.library);
  LibraryCorrector corr(s.library, 4);
  ProbeOptions opts;
  opts.point_count = 1024;
  const auto recs = run_probe(s.origins, oracle, reference_embedders(), opts, &corr);
  std::vector<double> canon, rot, fixed;
  int right = 0, total = 0;
  for (const auto& r : recs) {
    if (r.condition == Condition::Canonical) canon.push_back(*r.score);
    if (r.condition == Condition::Rotated) rot.push_back(*r.score);
    if (r.condition == Condition::Corrected) {
      fixed.push_back(*r.score);
      ++total;
      right += *r.label_predicted == r.label_applied;
    }
  }
  const double a = static_cast<double>(right) / total;
  CHECK(a < 1.0);
  const double mc = mean_and_sample_std(canon).mean, mr = mean_and_sample_std(rot).mean,
               mf = mean_and_sample_std(fixed).mean;
  CHECK(mf >= mr);
  const double sf = mean_and_sample_std(fixed).std;
  const double tol = 2.0 * sf / std::sqrt(static_cast<double>(fixed.size()));
  CHECK(mc - mf <= (1 - a) * (mc - mr) + tol);
}

TEST_CASE("table csv formatting") {
  const auto agg = aggregate(testsupport::reference_records());
  const std::string csv = format_table_csv(agg.stats);
  CHECK(csv.rfind("category,condition,steps,mean,std,n\n", 0) == 0);
  CHECK(csv.find("airplanes,canonical,50,0.166,0.047,3\n") != std::string::npos);
  CHECK(csv.find("airplanes,rotated,50,0.126,0.048,3\n") != std::string::npos);
  CHECK(csv.find("airplanes,corrected,50,0.166,0.047,3\n") != std::string::npos);
  CHECK(csv.find("chairs,canonical,50,0.184,0.070,3\n") != std::string::npos);
  CHECK(csv.find("cars,corrected,50,0.170,0.070,3\n") != std::string::npos);
  CHECK(format_table_csv(agg.stats, ReportOptions{2}).find("airplanes,rotated,50,0.13,0.05,3\n") != std::string::npos);

  std::vector<AggregateStats> odd = {{"a,b", Condition::Rotated, 5, -0.0001, 0.0, 1}};
  CHECK(format_table_csv(odd) == "category,condition,steps,mean,std,n\n\"a,b\",rotated,5,0.000,0.000,1\n");
}

TEST_CASE("records jsonl round trip") {
  auto recs = testsupport::reference_records();
  recs[0].score.reset();
  recs[0].error = "backend unavailable";
  testsupport::TempDir dir("records");
  std::ofstream(dir.path / "r.jsonl") << format_records_jsonl(recs);
  CHECK(read_records_jsonl(dir.path / "r.jsonl") == recs);

  std::ofstream(dir.path / "bad.jsonl") << "{\"source_id\": 1}\n";
  CHECK_THROWS_AS(read_records_jsonl(dir.path / "bad.jsonl"), std::invalid_argument);
  auto j = record_to_json(recs[1]);
  j["condition"] = "canonical";
  j["label_applied"] = 90;
  CHECK_THROWS(record_from_json(j));
}

TEST_CASE("report emission is byte-deterministic") {
  const auto recs = testsupport::reference_records();
  const auto agg = aggregate(recs);
  testsupport::TempDir dir("report");
  const auto files = emit_report(agg.stats, recs, dir.path / "a");
  emit_report(agg.stats, recs, dir.path / "b");
  CHECK(files.size() == 2 + 3);
  for (const auto& f : files) {
    CHECK(std::filesystem::exists(f));
    CHECK(read_text(f) == read_text(dir.path / "b" / f.filename()));
  }
  CHECK(std::filesystem::exists(dir.path / "a" / "curves_airplanes.svg"));

  const std::string svg = read_text(dir.path / "a" / "curves_airplanes.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("<polyline") == std::string::npos);  // one steps value: markers only

  auto multi = recs;
  for (auto r : recs) {
    r.inference_steps = 5;
    multi.push_back(r);
  }
  CHECK(format_curves_svg("cars", aggregate(multi).stats, multi).find("<polyline") != std::string::npos);
  CHECK(curves_filename("a/b c") == "curves_a_b_c.svg");

  CHECK_THROWS(emit_report({}, recs, dir.path / "c"));
  std::ofstream(dir.path / "file") << "x";
  CHECK_THROWS(emit_report(agg.stats, recs, dir.path / "file" / "sub"));
}
