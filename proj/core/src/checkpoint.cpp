#include "sspix/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "sspix/png_io.hpp"

namespace sspix {

namespace {

constexpr std::uint32_t kMagic = 0x58505353u;  // "SSPX"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int d = 0; d < t.ndim(); ++d) put_u32(os, static_cast<std::uint32_t>(t.dim(d)));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    std::uint64_t bits;
    const real v = t[i];
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(os, bits);
  }
}

std::pair<std::string, Tensor> get_tensor(std::istream& is) {
  const auto name_len = get_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), static_cast<std::streamsize>(name_len));
  const auto ndim = get_u32(is);
  std::vector<int> shape(ndim);
  for (auto& d : shape) d = static_cast<int>(get_u32(is));
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const std::uint64_t bits = get_u64(is);
    real v;
    std::memcpy(&v, &bits, sizeof(v));
    t[i] = v;
  }
  if (!is) throw IoError("truncated checkpoint while reading " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  put_u32(os, kMagic);
  put_u32(os, kVersion);
  put_u64(os, meta_json.size());
  os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  put_u64(os, store.params.size());
  for (const auto& [name, var] : store.params) put_tensor(os, name, var->value);
  put_u64(os, store.buffers.size());
  for (const auto& [name, t] : store.buffers) put_tensor(os, name, t);
  if (!os) throw IoError("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  if (get_u32(is) != kMagic) throw IoError("bad checkpoint magic: " + path);
  if (get_u32(is) != kVersion) throw IoError("unsupported checkpoint version: " + path);
  LoadedCheckpoint out;
  const auto meta_len = get_u64(is);
  out.meta_json.resize(meta_len);
  is.read(out.meta_json.data(), static_cast<std::streamsize>(meta_len));
  const auto n_params = get_u64(is);
  for (std::uint64_t i = 0; i < n_params; ++i) out.params.insert(get_tensor(is));
  const auto n_buffers = get_u64(is);
  for (std::uint64_t i = 0; i < n_buffers; ++i) out.buffers.insert(get_tensor(is));
  if (!is) throw IoError("truncated checkpoint: " + path);
  return out;
}

void restore_into(const LoadedCheckpoint& ckpt, ParamStore& store) {
  if (ckpt.params.size() != store.params.size())
    throw IoError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                  std::to_string(store.params.size()));
  if (ckpt.buffers.size() != store.buffers.size())
    throw IoError("checkpoint has " + std::to_string(ckpt.buffers.size()) + " buffers, model has " +
                  std::to_string(store.buffers.size()));
  for (auto& [name, var] : store.params) {
    const auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) throw IoError("checkpoint is missing parameter " + name);
    if (!it->second.same_shape(var->value))
      throw IoError("checkpoint shape mismatch for " + name);
    var->value.copy_from(it->second);
  }
  for (auto& [name, t] : store.buffers) {
    const auto it = ckpt.buffers.find(name);
    if (it == ckpt.buffers.end()) throw IoError("checkpoint is missing buffer " + name);
    if (!it->second.same_shape(t)) throw IoError("checkpoint shape mismatch for " + name);
    t.copy_from(it->second);
  }
}

}  // namespace sspix
