#include <bit>
#include <cstring>
#include <stdexcept>

#include "canonprobe/corrector.hpp"
#include "canonprobe/image_io.hpp"

namespace canonprobe {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'O', 'N', 'C', 'K', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

json checkpoint_header(const ClassifierModel& model) {
  const auto& arch = model.architecture();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.values.size()}});
    offset += p.values.size() * sizeof(float);
  }
  return {{"format", "canonprobe-checkpoint"},
          {"version", 1},
          {"dtype", "float32-le"},
          {"architecture", arch},
          {"feature_dim", arch.feature_dim()},
          {"frozen_prefix_depth", arch.frozen_prefix_depth},
          {"normalize_mean", arch.normalize_mean},
          {"normalize_std", arch.normalize_std},
          {"tensors", tensors}};
}

std::vector<std::uint8_t> serialize_checkpoint(const ClassifierModel& model) {
  const std::string header = checkpoint_header(model).dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& p : model.parameters()) {
    for (double v : p.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(model));
}

ClassifierModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("not a canonprobe checkpoint");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw std::runtime_error("truncated checkpoint header");
  const json header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  if (header.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");

  ClassifierModel model(header.at("architecture").get<Architecture>());
  const std::size_t blob_start = 16 + header_len;
  const auto& tensors = header.at("tensors");
  auto& params = model.parameters();
  if (tensors.size() != params.size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i].name ||
        t.at("shape").get<std::vector<int>>() != params[i].shape ||
        t.at("count").get<std::size_t>() != params[i].values.size())
      throw std::runtime_error("checkpoint tensor " + t.at("name").get<std::string>() +
                               " does not match the architecture");
    const std::size_t off = blob_start + t.at("offset").get<std::size_t>();
    if (off + params[i].values.size() * 4 > bytes.size())
      throw std::runtime_error("truncated checkpoint blob " + params[i].name);
    for (std::size_t k = 0; k < params[i].values.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[off + 4 * k + b]) << (8 * b);
      params[i].values[k] = std::bit_cast<float>(bits);
    }
  }
  return model;
}

ClassifierModel load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file_bytes(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace canonprobe
