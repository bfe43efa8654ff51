#include <doctest.h>

#include <cmath>

#include "canonprobe/corrector.hpp"
#include "canonprobe/synthetic.hpp"
#include "support.hpp"

using namespace canonprobe;
using testsupport::random_tensor;
using testsupport::tiny_architecture;

namespace {

double loss_at(const ClassifierModel& m, const Tensor& x, int label) { return cross_entropy(m.logits(x), label); }

// Always predicts the rotation it was told the image carries.
class ScriptedModelCorrector : public OrientationCorrector {
 public:
  explicit ScriptedModelCorrector(RotationLabel r) : r_(r) {}
  Canonicalized canonicalize(const RasterImage& img) const override {
    return {rotate_image(img, inverse(r_)), r_};
  }

 private:
  RotationLabel r_;
};

}  // namespace

TEST_CASE("predict_rotation examples and tie-break") {
  CHECK(predict_rotation(OrientationLogits({0.1, 3.2, -1.0, 0.0})).k() == 1);
  CHECK(predict_rotation(OrientationLogits({2.0, 2.0, 0.0, 0.0})).k() == 0);
  CHECK(predict_rotation(OrientationLogits({-5, -4, -3, -2})).k() == 3);
  CHECK_THROWS_AS(OrientationLogits({0, NAN, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(OrientationLogits({0, INFINITY, 0, 0}), std::invalid_argument);
}

TEST_CASE("argmax is invariant under positive affine maps") {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    Logits z;
    for (double& v : z) v = uniform(rng, -5, 5);
    const double a = uniform(rng, 0.01, 10), b = uniform(rng, -100, 100);
    Logits w;
    for (int k = 0; k < 4; ++k) w[k] = a * z[k] + b;
    CHECK(predict_rotation(OrientationLogits(z)) == predict_rotation(OrientationLogits(w)));
  }
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy({0, 0, 0, 0}, 2) == doctest::Approx(std::log(4.0)));
  CHECK(cross_entropy({1000, 0, 0, 0}, 0) == doctest::Approx(0.0));
  CHECK(std::isfinite(cross_entropy({-1000, 1000, 0, 0}, 0)));
}

TEST_CASE("zero head gives uniform logits; inference is deterministic") {
  const auto model = ClassifierModel::initialized(Architecture::desk_reference(), 3, HeadInit::Zero);
  Rng rng(1);
  const RasterImage img = testsupport::random_image(rng, 64, 64, 3);
  const auto z = predict_logits(model, img);
  for (int k = 1; k < 4; ++k) CHECK(z[k] == z[0]);
  const auto z2 = predict_logits(model, img);
  CHECK(z.values() == z2.values());

  // k=0 prediction returns the input bit-identically.
  const auto c = canonicalize(model, img);
  CHECK(c.predicted.k() == 0);
  CHECK(c.image == img);

  CHECK_THROWS_AS(model.logits(Tensor(3, 10, 10)), std::invalid_argument);
}

TEST_CASE("desk reference architecture") {
  const auto a = Architecture::desk_reference();
  CHECK_NOTHROW(a.validate());
  CHECK(a.stages.size() == 5);
  CHECK(a.feature_dim() == 64);
  CHECK(a.frozen_prefix_depth == 1);
  CHECK(a.dropout_rate == 0.3);
  nlohmann::json j = a;
  CHECK(j.get<Architecture>() == a);

  auto bad = a;
  bad.stages[1].in = 7;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(42);
  auto model = ClassifierModel::initialized(tiny_architecture(0), 7, HeadInit::Random);
  const Tensor x = random_tensor(rng, 3, 8, 8);
  const int label = 2;
  auto grads = model.zero_gradients();
  model.accumulate_gradient(x, label, nullptr, grads);

  int checked = 0;
  auto& params = model.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].values.size(); i += 7) {
      const double orig = params[t].values[i];
      const double h = 1e-6;
      params[t].values[i] = orig + h;
      const double up = loss_at(model, x, label);
      params[t].values[i] = orig - h;
      const double down = loss_at(model, x, label);
      params[t].values[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[t][i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      CHECK(std::abs(numeric - analytic) / denom <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 50);
}

TEST_CASE("frozen stages receive no gradient") {
  Rng rng(3);
  const auto model = ClassifierModel::initialized(tiny_architecture(1), 2, HeadInit::Random);
  auto grads = model.zero_gradients();
  Rng drop(5);
  model.accumulate_gradient(random_tensor(rng, 3, 8, 8), 1, &drop, grads);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (!model.is_frozen(t)) continue;
    for (double g : grads[t]) CHECK(g == 0.0);
  }
  CHECK(model.is_frozen(0));
  CHECK_FALSE(model.is_frozen(model.parameters().size() - 1));
}

TEST_CASE("evaluation metrics") {
  std::vector<std::pair<RotationLabel, RotationLabel>> perfect, constant;
  for (int i = 0; i < 8; ++i) perfect.push_back({RotationLabel(i % 4), RotationLabel(i % 4)});
  for (int i = 0; i < 8; ++i) constant.push_back({RotationLabel(i % 4), RotationLabel(0)});
  const auto p = evaluate_predictions(perfect);
  CHECK(p.accuracy == 1.0);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK(p.confusion[a][b] == (a == b ? 2 : 0));
  CHECK(evaluate_predictions(constant).accuracy == 0.25);
  CHECK_THROWS(evaluate_predictions({}));
}

TEST_CASE("checkpoint round trip is exact") {
  testsupport::TempDir dir("ckpt");
  const auto model = ClassifierModel::initialized(Architecture::desk_reference(), 11, HeadInit::Random);
  save_checkpoint(model, dir.path / "m.ckpt");
  const auto back = load_checkpoint(dir.path / "m.ckpt");
  CHECK(back.architecture() == model.architecture());
  REQUIRE(back.parameters().size() == model.parameters().size());
  for (std::size_t t = 0; t < model.parameters().size(); ++t) {
    CHECK(back.parameters()[t].name == model.parameters()[t].name);
    CHECK(back.parameters()[t].values == model.parameters()[t].values);
  }
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(model));
  CHECK(frozen_prefix_digest(back) == frozen_prefix_digest(model));

  const auto header = checkpoint_header(model);
  CHECK(header["feature_dim"] == 64);
  CHECK(header["frozen_prefix_depth"] == 1);
  CHECK(header["normalize_mean"].size() == 3);

  auto bytes = serialize_checkpoint(model);
  bytes[0] = 'X';
  CHECK_THROWS(deserialize_checkpoint(bytes));
  bytes = serialize_checkpoint(model);
  bytes.resize(bytes.size() - 4);
  CHECK_THROWS(deserialize_checkpoint(bytes));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.learning_rate = 0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("short training run keeps the frozen prefix and learns") {
  const auto set = generate_synthetic_oriented_set(40, {"arrow", "chair"}, 5);
  std::vector<Origin> origins;
  for (const auto& g : set) origins.push_back(g.origin());
  const auto parts = split(build_rotation_dataset(origins), SplitSpec{0.8, 1});

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 2;
  const auto before = ClassifierModel::initialized(cfg.architecture, cfg.seed);
  const auto result = train_classifier(parts.train, parts.val, cfg);
  CHECK(frozen_prefix_digest(result.model) == frozen_prefix_digest(before));
  REQUIRE(result.log.epochs.size() == 3);
  CHECK(result.log.best_val_accuracy > 0.5);
  CHECK(evaluate_classifier(result.model, parts.val).accuracy == doctest::Approx(result.log.best_val_accuracy));
  nlohmann::json log = result.log;
  CHECK(log["optimizer"].get<std::string>().find("momentum") != std::string::npos);

  // Same config, same result.
  const auto again = train_classifier(parts.train, parts.val, cfg);
  CHECK(serialize_checkpoint(again.model) == serialize_checkpoint(result.model));

  std::vector<LabeledSample> unbalanced(parts.train.begin(), parts.train.end() - 1);
  CHECK_THROWS(train_classifier(unbalanced, parts.val, cfg));
}

TEST_CASE("canonicalization round trip with a correct prediction") {
  const auto g = generate_synthetic_oriented_set(1, {"car"}, 1).front();
  for (auto r : kAllRotations) {
    const ScriptedModelCorrector c(r);
    const auto out = c.canonicalize(rotate_image(g.image, r));
    CHECK(out.image == g.image);
    CHECK(out.predicted == r);
  }
}
