#include "canonprobe/probe.hpp"
#include "canonprobe/seeding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace canonprobe {

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::Canonical: return "canonical";
    case Condition::Rotated: return "rotated";
    case Condition::Corrected: return "corrected";
  }
  throw std::logic_error("bad condition");
}

Condition parse_condition(std::string_view name) {
  for (Condition c : {Condition::Canonical, Condition::Rotated, Condition::Corrected})
    if (condition_name(c) == name) return c;
  throw std::invalid_argument("unknown condition '" + std::string(name) + "'");
}

std::uint64_t record_seed(std::uint64_t seed, std::string_view source_id, RotationLabel angle, int steps) {
  return SeedSequence(seed)
      .add(source_id)
      .add(static_cast<std::uint64_t>(angle.k()))
      .add(static_cast<std::uint64_t>(steps))
      .value();
}

namespace {

struct Cell {
  std::size_t origin;
  RotationLabel angle;
  int steps;
  bool corrected;
};

ProbeRecord evaluate_cell(const Cell& cell, const std::vector<Origin>& origins, const GenerationBackend& backend,
                          const EmbedderPair& embedders, const ProbeOptions& options,
                          const OrientationCorrector* corrector) {
  const Origin& o = origins[cell.origin];
  ProbeRecord rec;
  rec.source_id = o.source_id;
  rec.category = o.category;
  rec.label_applied = cell.angle;
  rec.inference_steps = cell.steps;
  rec.seed = record_seed(options.seed, o.source_id, cell.angle, cell.steps);
  rec.condition = cell.corrected            ? Condition::Corrected
                  : cell.angle.is_identity() ? Condition::Canonical
                                             : Condition::Rotated;

  RasterImage input = rotate_image(o.image, cell.angle);
  try {
    if (cell.corrected) {
      Canonicalized c = corrector->canonicalize(input);
      rec.label_predicted = c.predicted;
      input = std::move(c.image);
    }
    const TriangleMesh mesh = backend.generate({input, cell.steps, rec.seed});
    // Surface sampling shares one stream per (origin, steps) across angles.
    const std::uint64_t sample_seed = SeedSequence(options.seed).add(o.source_id).add("sample")
                                          .add(static_cast<std::uint64_t>(cell.steps)).value();
    rec.score = ulip_score(*embedders.image, *embedders.shape, input, mesh, options.point_count, sample_seed)
                    .value();
  } catch (const std::exception& e) {
    rec.score.reset();
    rec.error = e.what();
    if (rec.error.empty()) rec.error = "unknown failure";
  }
  return rec;
}

}  // namespace

std::vector<ProbeRecord> run_probe(const std::vector<Origin>& origins, const GenerationBackend& backend,
                                   const EmbedderPair& embedders, const ProbeOptions& options,
                                   const OrientationCorrector* corrector) {
  if (origins.empty()) throw std::invalid_argument("probe needs at least one origin");
  if (options.angles.empty()) throw std::invalid_argument("probe needs at least one angle");
  if (options.steps_list.empty()) throw std::invalid_argument("probe needs at least one steps value");
  for (int s : options.steps_list)
    if (s < 1) throw std::invalid_argument("inference steps must be at least 1");
  if (!embedders.image || !embedders.shape) throw std::invalid_argument("probe needs both embedders");
  if (options.jobs < 1) throw std::invalid_argument("jobs must be at least 1");

  std::vector<Cell> cells;
  for (std::size_t i = 0; i < origins.size(); ++i)
    for (RotationLabel a : options.angles)
      for (int s : options.steps_list) {
        cells.push_back({i, a, s, false});
        if (corrector) cells.push_back({i, a, s, true});
      }

  std::vector<ProbeRecord> out(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();)
      out[i] = evaluate_cell(cells[i], origins, backend, embedders, options, corrector);
  };
  const int n_threads = std::min<int>(options.jobs, static_cast<int>(cells.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

MeanStd mean_and_sample_std(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("no values");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

Aggregation aggregate(const std::vector<ProbeRecord>& records) {
  if (records.empty()) throw std::invalid_argument("cannot aggregate an empty record set");
  std::map<std::tuple<std::string, Condition, int>, std::vector<double>> groups;
  Aggregation agg;
  for (const auto& r : records) {
    if (r.failed()) {
      ++agg.failures;
      continue;
    }
    groups[{r.category, r.condition, r.inference_steps}].push_back(*r.score);
  }
  for (auto& [key, scores] : groups) {
    const auto& [category, condition, steps] = key;
    const std::size_t n = scores.size();
    const MeanStd ms = mean_and_sample_std(std::move(scores));
    agg.stats.push_back({category, condition, steps, ms.mean, ms.std, n});
  }
  return agg;
}

}  // namespace canonprobe
