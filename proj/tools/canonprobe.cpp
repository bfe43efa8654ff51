// canonprobe: command-line front end for the rotation probe toolkit.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "canonprobe/backends.hpp"
#include "canonprobe/corrector.hpp"
#include "canonprobe/dataset.hpp"
#include "canonprobe/image_io.hpp"
#include "canonprobe/manifest.hpp"
#include "canonprobe/probe.hpp"
#include "canonprobe/report.hpp"
#include "canonprobe/scorer.hpp"
#include "canonprobe/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace canonprobe;

namespace {

int g_verbosity = 0;

void log_info(const std::string& msg) {
  if (g_verbosity >= 1) std::cerr << "[canonprobe] " << msg << "\n";
}

// JSON config: top-level scalars map to global options, objects to the
// subcommand of the same name, arrays to multi-value options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void walk(const json& obj, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_null()) continue;  // unset
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        walk(value, sub, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

json typed(const std::string& s) {
  if (!s.empty()) {
    try {
      json v = json::parse(s);
      if (v.is_number() || v.is_boolean()) return v;
    } catch (const json::parse_error&) {
    }
  }
  return s;
}

// Effective values of every named option of `app`, for provenance.
json resolved_options(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::vector<std::string> values = opt->results();
    if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
    const bool multi = opt->get_items_expected_max() > 1 || opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeAll;
    if (multi) {
      json arr = json::array();
      for (const auto& v : values) {
        // defaults of vector options are captured as "[a,b]"
        std::string s = v;
        if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
          std::stringstream ss(s.substr(1, s.size() - 2));
          for (std::string part; std::getline(ss, part, ',');) arr.push_back(typed(part));
        } else {
          arr.push_back(typed(s));
        }
      }
      out[name] = arr;
    } else if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0 ? json(opt->as<int>()) : json(0);
    } else {
      out[name] = values.empty() ? json(nullptr) : typed(values.front());
    }
  }
  return out;
}

void write_resolved_config(const fs::path& dir, const CLI::App& root, const CLI::App* sub) {
  json j = resolved_options(&root);
  j[sub->get_name()] = resolved_options(sub);
  fs::create_directories(dir);
  std::ofstream f(dir / "resolved_config.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + (dir / "resolved_config.json").string());
  f << j.dump(2) << "\n";
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

std::vector<RotationLabel> parse_angles(const std::vector<int>& degrees) {
  std::vector<RotationLabel> out;
  for (int d : degrees) out.push_back(RotationLabel::from_degrees(d));
  return out;
}

json evaluation_json(const Evaluation& e, std::size_t n) {
  json j;
  j["accuracy"] = e.accuracy;
  j["n"] = n;
  j["confusion"] = e.confusion;
  return j;
}

struct GenSyntheticArgs {
  int n = 100;
  std::vector<std::string> categories = known_glyph_categories();
  std::uint64_t seed = 0;
  int image_size = 64;
  std::string out;
};

struct BuildDatasetArgs {
  std::string manifest;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string dataset;
  std::string out;
  int epochs = 14;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
};

struct CorrectArgs {
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string out;
};

struct ProbeArgs {
  std::string manifest;
  std::string backend = "oracle";
  std::vector<int> angles{0, 90, 180, 270};
  std::vector<int> steps{50};
  std::string corrector;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<double> severity{0.8};
  double steps_relief = 1.0;
  int points = kDefaultPointCount;
  int precision = 3;
  int timeout_ms = 120000;
  int attempts = 3;
};

struct ReportArgs {
  std::string records;
  std::string out;
  int precision = 3;
};

BiasProfile profile_from(const std::vector<double>& severity, double relief) {
  BiasProfile p;
  if (severity.size() == 1) {
    p.severity_by_label = {0.0, severity[0], severity[0], severity[0]};
  } else if (severity.size() == 3) {
    p.severity_by_label = {0.0, severity[0], severity[1], severity[2]};
  } else {
    throw std::invalid_argument("--severity takes one value or three (for 90, 180, 270)");
  }
  p.steps_relief = relief;
  p.validate();
  return p;
}

void run_gen_synthetic(const GenSyntheticArgs& a) {
  SyntheticOptions opts;
  opts.image_size = a.image_size;
  const auto set = generate_synthetic_oriented_set(a.n, a.categories, a.seed, opts);
  const fs::path manifest = write_synthetic_set(a.out, set);
  std::cout << "wrote " << set.size() << " origins to " << manifest.string() << "\n";
}

void run_build_dataset(const BuildDatasetArgs& a) {
  const auto origins = load_origins(a.manifest);
  log_info("loaded " + std::to_string(origins.size()) + " origins");
  const auto samples = build_rotation_dataset(origins);
  const auto parts = split(samples, SplitSpec{a.train_fraction, a.seed});
  write_sample_set(fs::path(a.out) / "train", parts.train);
  write_sample_set(fs::path(a.out) / "val", parts.val);
  std::cout << "train " << parts.train.size() << " samples, val " << parts.val.size() << " samples\n";
}

void run_train(const TrainArgs& a) {
  const auto train = load_samples(fs::path(a.dataset) / "train" / "manifest.jsonl");
  const auto val = load_samples(fs::path(a.dataset) / "val" / "manifest.jsonl");
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.weight_decay = a.weight_decay;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  log_info("training on " + std::to_string(train.size()) + " samples");
  const auto result = train_classifier(train, val, cfg);
  save_checkpoint(result.model, fs::path(a.out) / "model.ckpt");
  json log = result.log;
  log["frozen_prefix_sha256"] = frozen_prefix_digest(result.model);
  write_json(fs::path(a.out) / "training_log.json", log);
  std::printf("best epoch %d, val accuracy %.4f\n", result.log.best_epoch, result.log.best_val_accuracy);
}

void run_eval(const EvalArgs& a) {
  const auto model = load_checkpoint(a.checkpoint);
  const auto samples = load_samples(a.manifest);
  const auto e = evaluate_classifier(model, samples);
  write_json(fs::path(a.out) / "eval.json", evaluation_json(e, samples.size()));
  std::printf("accuracy %.4f over %zu samples\n", e.accuracy, samples.size());
}

void run_correct(const CorrectArgs& a) {
  const auto model = load_checkpoint(a.checkpoint);
  const fs::path out_dir(a.out);
  std::set<std::string> names;
  for (const auto& in : a.inputs)
    if (!names.insert(fs::path(in).filename().string()).second)
      throw std::invalid_argument("two inputs share the file name " + fs::path(in).filename().string());
  fs::create_directories(out_dir);
  json predictions = json::array();
  for (const auto& in : a.inputs) {
    const auto bytes = read_file_bytes(in);
    const RasterImage img = decode_png(bytes, PngLoadOptions{true, true});
    const Canonicalized c = canonicalize(model, img);
    const fs::path out = out_dir / fs::path(in).filename();
    // k=0 keeps the original bytes.
    if (c.predicted.is_identity())
      write_file_bytes(out, bytes);
    else
      save_png(c.image, out);
    predictions.push_back({{"input", in},
                           {"output", out.string()},
                           {"predicted_k", c.predicted.k()},
                           {"predicted_degrees", c.predicted.degrees()}});
    log_info(in + ": predicted " + std::to_string(c.predicted.degrees()) + " deg");
  }
  write_json(out_dir / "predictions.json", predictions);
  std::cout << "corrected " << a.inputs.size() << " images into " << out_dir.string() << "\n";
}

void run_probe_cmd(const ProbeArgs& a, int jobs) {
  const fs::path manifest(a.manifest);
  const auto origins = load_origins(manifest);
  log_info("loaded " + std::to_string(origins.size()) + " origins");

  std::shared_ptr<GlyphLibrary> library;
  if (a.backend == "oracle") {
    const auto descriptors = read_descriptors(manifest.parent_path() / kDescriptorSidecar);
    library = std::make_shared<GlyphLibrary>();
    for (const auto& o : origins) {
      auto it = descriptors.find(o.source_id);
      if (it == descriptors.end()) throw std::invalid_argument("no glyph descriptor for " + o.source_id);
      library->add(o.image, it->second);
    }
  }
  RemoteOptions remote;
  remote.read_timeout = std::chrono::milliseconds(a.timeout_ms);
  remote.max_attempts = a.attempts;
  remote.max_in_flight = std::max(1, jobs);
  const auto backend = make_backend(a.backend, profile_from(a.severity, a.steps_relief), library, remote);

  std::unique_ptr<ModelCorrector> corrector;
  if (!a.corrector.empty()) corrector = std::make_unique<ModelCorrector>(load_checkpoint(a.corrector));

  ProbeOptions opts;
  opts.angles = parse_angles(a.angles);
  opts.steps_list = a.steps;
  opts.seed = a.seed;
  opts.point_count = a.points;
  opts.jobs = jobs;
  const auto records = run_probe(origins, *backend, reference_embedders(), opts, corrector.get());
  const auto agg = aggregate(records);
  emit_report(agg.stats, records, a.out, ReportOptions{a.precision});
  std::cout << records.size() << " records, " << agg.failures << " failed; report in " << a.out << "\n";
  if (agg.failures > 0) {
    for (const auto& r : records)
      if (r.failed()) log_info(r.source_id + " @" + std::to_string(r.label_applied.degrees()) + ": " + r.error);
  }
}

void run_report(const ReportArgs& a) {
  const auto records = read_records_jsonl(a.records);
  const auto agg = aggregate(records);
  emit_report(agg.stats, records, a.out, ReportOptions{a.precision});
  std::cout << agg.stats.size() << " groups, " << agg.failures << " failed records\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe image-to-3D pipelines for canonical-view bias under quarter-turn rotations"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.option_defaults()->always_capture_default();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  int jobs = 1;
  app.add_option("--jobs", jobs, "Concurrent probe workers / in-flight requests")->check(CLI::Range(1, 1024));
  app.add_flag("-v,--verbose", g_verbosity, "Log progress to stderr");

  GenSyntheticArgs gs;
  auto* gen = app.add_subcommand("gen-synthetic", "Render canonical glyph origins with a manifest");
  gen->add_option("--n", gs.n, "Origins per category")->check(CLI::PositiveNumber);
  gen->add_option("--categories", gs.categories, "Glyph categories")->delimiter(',');
  gen->add_option("--seed", gs.seed);
  gen->add_option("--image-size", gs.image_size)->check(CLI::Range(8, 4096));
  gen->add_option("--out", gs.out, "Output directory")->required();

  BuildDatasetArgs bd;
  auto* build = app.add_subcommand("build-dataset", "Expand origins into four rotations and split by origin");
  build->add_option("--manifest", bd.manifest, "Origin manifest")->required()->check(CLI::ExistingFile);
  build->add_option("--train-fraction", bd.train_fraction)->check(CLI::Range(0.0, 1.0));
  build->add_option("--seed", bd.seed);
  build->add_option("--out", bd.out)->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train-corrector", "Train the orientation classifier");
  train->add_option("--dataset", tr.dataset, "Directory written by build-dataset")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tr.out)->required();
  train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr);
  train->add_option("--momentum", tr.momentum);
  train->add_option("--weight-decay", tr.weight_decay);
  train->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.seed);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval-corrector", "Accuracy and confusion matrix on a sample manifest");
  eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", ev.out)->required();

  CorrectArgs co;
  auto* correct = app.add_subcommand("correct", "Undo the predicted rotation of PNG images");
  correct->add_option("inputs", co.inputs, "Input PNGs")->required()->check(CLI::ExistingFile);
  correct->add_option("--checkpoint", co.checkpoint)->required()->check(CLI::ExistingFile);
  correct->add_option("--out", co.out, "Output directory")->required();

  ProbeArgs pr;
  auto* probe = app.add_subcommand("probe", "Run the rotation sweep and write the report");
  probe->add_option("--manifest", pr.manifest, "Origin manifest")->required()->check(CLI::ExistingFile);
  probe->add_option("--backend", pr.backend, "oracle or remote:<url>");
  probe->add_option("--angles", pr.angles, "Rotation angles in degrees")->delimiter(',');
  probe->add_option("--steps", pr.steps, "Inference steps values")->delimiter(',');
  probe->add_option("--corrector", pr.corrector, "Checkpoint; enables the corrected condition");
  probe->add_option("--out", pr.out)->required();
  probe->add_option("--seed", pr.seed);
  probe->add_option("--severity", pr.severity, "Oracle severity: one value, or three for 90,180,270")->delimiter(',');
  probe->add_option("--steps-relief", pr.steps_relief)->check(CLI::Range(0.0, 1.0));
  probe->add_option("--points", pr.points, "Surface samples per mesh")->check(CLI::PositiveNumber);
  probe->add_option("--precision", pr.precision, "Decimals in table.csv")->check(CLI::Range(0, 17));
  probe->add_option("--timeout-ms", pr.timeout_ms, "Remote read timeout")->check(CLI::PositiveNumber);
  probe->add_option("--attempts", pr.attempts, "Remote attempts per request")->check(CLI::PositiveNumber);

  ReportArgs re;
  auto* report = app.add_subcommand("report", "Re-aggregate records.jsonl into a report");
  report->add_option("--records", re.records)->required()->check(CLI::ExistingFile);
  report->add_option("--out", re.out)->required();
  report->add_option("--precision", re.precision)->check(CLI::Range(0, 17));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      write_resolved_config(gs.out, app, gen);
      run_gen_synthetic(gs);
    } else if (build->parsed()) {
      write_resolved_config(bd.out, app, build);
      run_build_dataset(bd);
    } else if (train->parsed()) {
      write_resolved_config(tr.out, app, train);
      run_train(tr);
    } else if (eval->parsed()) {
      write_resolved_config(ev.out, app, eval);
      run_eval(ev);
    } else if (correct->parsed()) {
      write_resolved_config(co.out, app, correct);
      run_correct(co);
    } else if (probe->parsed()) {
      write_resolved_config(pr.out, app, probe);
      run_probe_cmd(pr, jobs);
    } else if (report->parsed()) {
      write_resolved_config(re.out, app, report);
      run_report(re);
    }
  } catch (const std::exception& e) {
    std::cerr << "canonprobe: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
