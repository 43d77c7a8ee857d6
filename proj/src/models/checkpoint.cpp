// Copyright 2026 The mvx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvx/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "mvx/error.hpp"

namespace mvx::models {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'V', 'T', 'X'};
constexpr const char* kConfigTensor = "meta.config";
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put(std::ofstream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open checkpoint " + path.string());
  }

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("checkpoint " + path_.string() + " is truncated (while reading " + what + ")");
    }
  }

  template <typename U>
  U get(const char* what) {
    U v;
    bytes(&v, sizeof(U), what);
    return v;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

std::vector<float> encode_config(const TwoStreamConfig& c) {
  const std::size_t v[] = {c.kind == ModelKind::kCnn ? 1u : 0u,
                           c.vit.image_h, c.vit.image_w, c.vit.patch, c.vit.dim, c.vit.blocks, c.vit.heads,
                           c.vit.ffn_dim, c.cnn.in_h, c.cnn.in_w, c.cnn.stages, c.cnn.base_channels,
                           c.cnn.kernel, c.cnn.embed_dim, c.proj_dim, c.fusion_dim, c.classes};
  return std::vector<float>(std::begin(v), std::end(v));
}

TwoStreamConfig decode_config(const std::vector<float>& v) {
  if (v.size() != 17) throw FormatError("checkpoint configuration record has " + std::to_string(v.size()) + " fields");
  auto at = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  TwoStreamConfig c;
  c.kind = at(0) == 1 ? ModelKind::kCnn : ModelKind::kTransformer;
  c.vit = {at(1), at(2), at(3), at(4), at(5), at(6), at(7)};
  c.cnn = {at(8), at(9), at(10), at(11), at(12), at(13)};
  c.proj_dim = at(14);
  c.fusion_dim = at(15);
  c.classes = at(16);
  return c;
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<RawTensor>& tensors) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
      std::uint64_t n = 1;
      for (auto d : t.dims) {
        put<std::uint64_t>(out, d);
        n *= d;
      }
      if (n != t.data.size()) throw ShapeError("tensor " + t.name + " dims do not match its data");
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!out.flush()) throw Error("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<RawTensor> read_tensors(const std::filesystem::path& path) {
  Reader in(path);
  char magic[4];
  in.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + " has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  const auto count = in.get<std::uint32_t>("tensor count");
  std::vector<RawTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    const auto len = in.get<std::uint32_t>("name length");
    if (len > kMaxNameLength) throw FormatError("checkpoint tensor name length " + std::to_string(len) + " is invalid");
    t.name.resize(len);
    in.bytes(t.name.data(), len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > kMaxRank) throw FormatError("checkpoint tensor " + t.name + " has rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims.push_back(in.get<std::uint64_t>("dims"));
      n *= t.dims.back();
    }
    if (n > (std::uint64_t{1} << 34)) throw FormatError("checkpoint tensor " + t.name + " is implausibly large");
    t.data.resize(n);
    in.bytes(t.data.data(), n * sizeof(float), "tensor data");
    out.push_back(std::move(t));
  }
  if (!in.at_end()) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const TwoStreamModel<float>& model) {
  std::vector<RawTensor> raw;
  auto cfg = encode_config(model.config());
  raw.push_back({kConfigTensor, {cfg.size()}, std::move(cfg)});
  for (const auto& p : model.params()) {
    RawTensor t;
    t.name = p.name;
    for (auto d : p.tensor.shape()) t.dims.push_back(d);
    t.data.assign(p.tensor.data().begin(), p.tensor.data().end());
    raw.push_back(std::move(t));
  }
  write_tensors(path, raw);
}

namespace {

void copy_into(const std::filesystem::path& path, std::vector<RawTensor>& raw, TwoStreamModel<float>& model) {
  std::unordered_map<std::string, RawTensor*> by_name;
  for (auto& t : raw) {
    if (t.name == kConfigTensor) continue;
    if (!by_name.emplace(t.name, &t).second) throw FormatError("checkpoint repeats tensor " + t.name);
  }
  std::size_t matched = 0;
  for (const auto& p : model.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint " + path.string() + " lacks tensor " + p.name);
    const RawTensor& t = *it->second;
    nn::Shape shape(t.dims.begin(), t.dims.end());
    if (shape != p.tensor.shape()) {
      throw FormatError("checkpoint tensor " + p.name + " has shape " + nn::shape_str(shape) + ", model expects " +
                        nn::shape_str(p.tensor.shape()));
    }
    nn::TensorF handle = p.tensor;
    std::copy(t.data.begin(), t.data.end(), handle.mutable_data().begin());
    ++matched;
  }
  if (matched != by_name.size()) {
    for (const auto& [name, t] : by_name) {
      bool known = false;
      for (const auto& p : model.params()) known = known || p.name == name;
      if (!known) throw FormatError("checkpoint " + path.string() + " has unknown tensor " + name);
    }
  }
}

}  // namespace

TwoStreamModel<float> load_checkpoint(const std::filesystem::path& path) {
  auto raw = read_tensors(path);
  const RawTensor* cfg = nullptr;
  for (const auto& t : raw) {
    if (t.name == kConfigTensor) cfg = &t;
  }
  if (!cfg) throw FormatError("checkpoint " + path.string() + " has no " + kConfigTensor + " record");
  TwoStreamModel<float> model(decode_config(cfg->data), 0);
  copy_into(path, raw, model);
  return model;
}

void load_checkpoint_into(const std::filesystem::path& path, TwoStreamModel<float>& model) {
  auto raw = read_tensors(path);
  copy_into(path, raw, model);
}

}  // namespace mvx::models
