#include "canonprobe/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "canonprobe/image_io.hpp"

namespace canonprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::vector<ManifestRecord> out;
  const fs::path base = path.parent_path();
  for (const auto& j : read_jsonl(path)) {
    ManifestRecord r;
    r.source_id = j.at("source_id").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.label_k = j.at("label_k").get<int>();
    if (r.label_k < 0 || r.label_k > 3)
      throw std::runtime_error("manifest label_k out of range for " + r.source_id);
    fs::path image = j.at("image_path").get<std::string>();
    r.image_path = (image.is_absolute() ? image : base / image).string();
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::vector<std::string> lines;
  for (const auto& r : records) {
    lines.push_back(json{{"source_id", r.source_id},
                         {"category", r.category},
                         {"label_k", r.label_k},
                         {"image_path", r.image_path}}
                        .dump());
  }
  write_lines(path, lines);
}

std::vector<Origin> load_origins(const fs::path& manifest_path) {
  std::vector<Origin> out;
  for (const auto& r : read_manifest(manifest_path)) {
    if (r.label_k != 0) continue;
    out.push_back({load_png(r.image_path, {.force_rgb = true}), r.source_id, r.category});
  }
  return out;
}

std::vector<LabeledSample> load_samples(const fs::path& manifest_path) {
  std::vector<LabeledSample> out;
  for (const auto& r : read_manifest(manifest_path)) {
    out.push_back({load_png(r.image_path, {.force_rgb = true}), RotationLabel(r.label_k), r.source_id,
                   r.category});
  }
  return out;
}

void write_descriptors(const fs::path& path, const std::map<std::string, GlyphDescriptor>& descriptors) {
  std::vector<std::string> lines;
  for (const auto& [id, d] : descriptors) lines.push_back(json{{"source_id", id}, {"descriptor", d}}.dump());
  write_lines(path, lines);
}

std::map<std::string, GlyphDescriptor> read_descriptors(const fs::path& path) {
  std::map<std::string, GlyphDescriptor> out;
  for (const auto& j : read_jsonl(path)) {
    out[j.at("source_id").get<std::string>()] = j.at("descriptor").get<GlyphDescriptor>();
  }
  return out;
}

fs::path write_synthetic_set(const fs::path& dir, const std::vector<SyntheticOrigin>& set) {
  std::vector<ManifestRecord> records;
  std::map<std::string, GlyphDescriptor> descriptors;
  for (const auto& o : set) {
    const std::string rel = "images/" + o.source_id + ".png";
    save_png(o.image, dir / rel);
    records.push_back({o.source_id, o.category, 0, rel});
    descriptors[o.source_id] = o.descriptor;
  }
  const fs::path manifest = dir / "manifest.jsonl";
  write_manifest(manifest, records);
  write_descriptors(dir / kDescriptorSidecar, descriptors);
  return manifest;
}

fs::path write_sample_set(const fs::path& dir, const std::vector<LabeledSample>& samples) {
  std::vector<ManifestRecord> records;
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.source_id + "_k" + std::to_string(s.label.k()) + ".png";
    save_png(s.image, dir / rel);
    records.push_back({s.source_id, s.category, s.label.k(), rel});
  }
  const fs::path manifest = dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace canonprobe
