#pragma once

// Rotation sweep over origins: generate from each rotated (and optionally
// re-canonicalized) input, score the result against the input image, and
// aggregate per category / condition / inference steps.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canonprobe/backends.hpp"
#include "canonprobe/corrector.hpp"
#include "canonprobe/dataset.hpp"
#include "canonprobe/scorer.hpp"

namespace canonprobe {

// Declaration order is the report order.
enum class Condition { Canonical, Rotated, Corrected };

std::string_view condition_name(Condition c);
/// Throws std::invalid_argument for an unknown name.
Condition parse_condition(std::string_view name);

struct ProbeRecord {
  std::string source_id;
  std::string category;
  Condition condition = Condition::Rotated;
  RotationLabel label_applied;
  std::optional<RotationLabel> label_predicted;
  int inference_steps = 1;
  /// Absent when the backend or scorer failed; `error` then says why.
  std::optional<double> score;
  std::uint64_t seed = 0;
  std::string error;

  bool failed() const { return !score.has_value(); }
  bool operator==(const ProbeRecord&) const = default;
};

struct ProbeOptions {
  std::vector<RotationLabel> angles{kAllRotations.begin(), kAllRotations.end()};
  std::vector<int> steps_list{50};
  std::uint64_t seed = 0;
  int point_count = kDefaultPointCount;
  int jobs = 1;
};

/// Seed handed to the backend for one (origin, angle, steps) cell.
std::uint64_t record_seed(std::uint64_t seed, std::string_view source_id, RotationLabel angle, int steps);

/// One record per (origin, angle, steps); angle 0 records carry the canonical
/// condition, the rest rotated. With a corrector, one corrected record follows
/// each of those. Output order is fixed by the input order regardless of jobs.
std::vector<ProbeRecord> run_probe(const std::vector<Origin>& origins, const GenerationBackend& backend,
                                   const EmbedderPair& embedders, const ProbeOptions& options,
                                   const OrientationCorrector* corrector = nullptr);

struct AggregateStats {
  std::string category;
  Condition condition = Condition::Rotated;
  int inference_steps = 1;
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) estimator, 0 when n = 1
  std::size_t n = 0;

  bool operator==(const AggregateStats&) const = default;
};

struct Aggregation {
  std::vector<AggregateStats> stats;  // sorted by (category, condition, steps)
  std::size_t failures = 0;
};

/// Groups successful records by (category, condition, steps). Throws on empty input.
Aggregation aggregate(const std::vector<ProbeRecord>& records);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Order-independent mean and sample standard deviation.
MeanStd mean_and_sample_std(std::vector<double> values);

}  // namespace canonprobe
