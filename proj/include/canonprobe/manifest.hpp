#pragma once

// Dataset manifests: JSON-lines, one record per sample
//   {"category": ..., "image_path": ..., "label_k": ..., "source_id": ...}
// with image_path relative to the manifest's directory.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "canonprobe/dataset.hpp"
#include "canonprobe/synthetic.hpp"

namespace canonprobe {

struct ManifestRecord {
  std::string source_id;
  std::string category;
  int label_k = 0;
  std::string image_path;

  bool operator==(const ManifestRecord&) const = default;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Loads label-0 records as origins (images forced to RGB).
std::vector<Origin> load_origins(const std::filesystem::path& manifest_path);

/// Loads every record as a labeled sample, as stored on disk.
std::vector<LabeledSample> load_samples(const std::filesystem::path& manifest_path);

/// Sidecar with ground-truth glyph descriptors keyed by source_id, written
/// next to synthetic manifests as descriptors.jsonl.
inline constexpr const char* kDescriptorSidecar = "descriptors.jsonl";

void write_descriptors(const std::filesystem::path& path,
                       const std::map<std::string, GlyphDescriptor>& descriptors);
std::map<std::string, GlyphDescriptor> read_descriptors(const std::filesystem::path& path);

/// Writes origin PNGs under `dir/images`, the manifest and the descriptor
/// sidecar. Returns the manifest path.
std::filesystem::path write_synthetic_set(const std::filesystem::path& dir,
                                          const std::vector<SyntheticOrigin>& set);

/// Writes each sample as `images/<source_id>_k<k>.png` plus a manifest.
std::filesystem::path write_sample_set(const std::filesystem::path& dir,
                                       const std::vector<LabeledSample>& samples);

}  // namespace canonprobe
