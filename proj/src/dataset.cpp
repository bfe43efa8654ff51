#include "canonprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "canonprobe/seeding.hpp"

namespace canonprobe {

std::vector<LabeledSample> build_rotation_dataset(const std::vector<Origin>& origins) {
  std::vector<const Origin*> ordered;
  ordered.reserve(origins.size());
  std::set<std::string> seen;
  for (const auto& o : origins) {
    if (o.source_id.empty()) throw std::invalid_argument("origin with empty source_id");
    if (!seen.insert(o.source_id).second)
      throw std::invalid_argument("duplicate source_id: " + o.source_id);
    ordered.push_back(&o);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Origin* a, const Origin* b) { return a->source_id < b->source_id; });

  std::vector<LabeledSample> out;
  out.reserve(origins.size() * 4);
  for (const Origin* o : ordered) {
    for (RotationLabel r : kAllRotations) {
      out.push_back({rotate_image(o->image, r), r, o->source_id, o->category});
    }
  }
  return out;
}

DatasetSplit split(const std::vector<LabeledSample>& samples, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");

  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.source_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw std::invalid_argument("need at least 2 origins to split");

  auto rng = SeedSequence(spec.seed).add("split").rng();
  // Fisher-Yates with our own uniform draw so the permutation is stable
  // across standard library implementations.
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(i + 1)));
    std::swap(ids[i], ids[std::min(j, i)]);
  }

  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_fraction * static_cast<double>(ids.size())));
  if (n_train == 0 || n_train == ids.size())
    throw std::invalid_argument("train_fraction leaves one side of the split empty");
  std::set<std::string> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));

  DatasetSplit out;
  for (const auto& s : samples) {
    (train_ids.contains(s.source_id) ? out.train : out.val).push_back(s);
  }
  return out;
}

}  // namespace canonprobe
