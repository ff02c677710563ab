#include "vidctl/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace vidctl::nn {

namespace {
constexpr char kMagic[8] = {'V', 'C', 'K', 'P', 'T', '0', '0', '1'};

nlohmann::json header_json(const CheckpointMeta& meta, const ParamStore<float>& params) {
  nlohmann::json h;
  h["version"] = meta.version;
  h["kind"] = meta.kind;
  h["config"] = meta.config;
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, v] : params.entries()) {
    nlohmann::json t;
    t["name"] = name;
    t["shape"] = v->value.shape();
    t["offset"] = offset;
    t["trainable"] = v->requires_grad;
    offset += static_cast<uint64_t>(v->value.numel());
    tensors.push_back(t);
  }
  h["tensors"] = tensors;
  return h;
}
}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore<float>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  const std::string header = header_json(meta, params).dump();
  const uint64_t hlen = header.size();
  f.write(kMagic, sizeof kMagic);
  f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  f.write(header.data(), static_cast<std::streamsize>(hlen));
  for (const auto& [name, v] : params.entries())
    f.write(reinterpret_cast<const char*>(v->value.data()),
            static_cast<std::streamsize>(sizeof(float) * v->value.numel()));
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

namespace {
nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a vidctl checkpoint: " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json h = nlohmann::json::parse(header);
  if (!h.contains("version")) throw std::runtime_error("checkpoint missing version field: " + path);
  return h;
}

CheckpointMeta meta_from(const nlohmann::json& h) {
  CheckpointMeta meta;
  meta.version = h["version"].get<int>();
  meta.kind = h.value("kind", std::string{});
  if (h.contains("config"))
    meta.config = h["config"].get<std::map<std::string, std::string>>();
  return meta;
}
}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  return meta_from(read_header(f, path));
}

std::map<std::string, core::Tensor<float>> load_checkpoint_tensors(const std::string& path,
                                                                   CheckpointMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json h = read_header(f, path);
  if (meta) *meta = meta_from(h);
  std::map<std::string, core::Tensor<float>> out;
  const std::streampos blob_start = f.tellg();
  for (const auto& t : h["tensors"]) {
    const std::string name = t["name"].get<std::string>();
    const core::Shape shape = t["shape"].get<core::Shape>();
    const uint64_t offset = t["offset"].get<uint64_t>();
    core::Tensor<float> tensor(shape);
    f.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(float)));
    f.read(reinterpret_cast<char*>(tensor.data()),
           static_cast<std::streamsize>(sizeof(float) * tensor.numel()));
    if (!f) throw std::runtime_error("truncated checkpoint blob for " + name + ": " + path);
    out.emplace(name, std::move(tensor));
  }
  return out;
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& params) {
  CheckpointMeta meta;
  auto tensors = load_checkpoint_tensors(path, &meta);
  for (const auto& [name, v] : params.entries()) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint missing tensor " + name + ": " + path);
    if (it->second.shape() != v->value.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": " + path);
    std::memcpy(v->value.data(), it->second.data(),
                sizeof(float) * static_cast<size_t>(v->value.numel()));
  }
  return meta;
}

}  // namespace vidctl::nn
