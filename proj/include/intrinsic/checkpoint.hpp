#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "intrinsic/errors.hpp"
#include "intrinsic/optim.hpp"

namespace intrinsic {

/// Checkpoint payload: named parameters with momentum buffers, named raw
/// buffers (batch-norm running statistics), an opaque RNG state string and
/// the global step counter. Tensor data is stored as little-endian 32-bit
/// floats regardless of the engine's scalar type.
struct Checkpoint {
  struct Entry {
    std::string name;
    TensorShape shape;
    std::vector<float> values;
    std::vector<float> momentum;
  };
  struct Buffer {
    std::string name;
    std::vector<float> values;
  };

  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<Entry> params;
  std::vector<Buffer> buffers;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'I', 'I', 'D', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
inline void write_str(std::ofstream& f, const std::string& s) {
  write_u32(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void write_floats(std::ofstream& f, const std::vector<float>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline std::string read_str(std::ifstream& f) {
  const std::uint32_t n = read_u32(f);
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}
inline std::vector<float> read_floats(std::ifstream& f, std::size_t n) {
  std::vector<float> v(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path.string());
  f.write(detail::kCheckpointMagic, 4);
  detail::write_u32(f, detail::kCheckpointVersion);
  detail::write_u64(f, ckpt.step);
  detail::write_str(f, ckpt.rng_state);
  detail::write_u32(f, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& e : ckpt.params) {
    detail::write_str(f, e.name);
    detail::write_u32(f, static_cast<std::uint32_t>(e.shape.n));
    detail::write_u32(f, static_cast<std::uint32_t>(e.shape.c));
    detail::write_u32(f, static_cast<std::uint32_t>(e.shape.h));
    detail::write_u32(f, static_cast<std::uint32_t>(e.shape.w));
    detail::write_floats(f, e.values);
    detail::write_floats(f, e.momentum);
  }
  detail::write_u32(f, static_cast<std::uint32_t>(ckpt.buffers.size()));
  for (const auto& b : ckpt.buffers) {
    detail::write_str(f, b.name);
    detail::write_u32(f, static_cast<std::uint32_t>(b.values.size()));
    detail::write_floats(f, b.values);
  }
  if (!f) throw IoError("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
    throw IoError("load_checkpoint: bad magic in " + path.string());
  if (detail::read_u32(f) != detail::kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version in " + path.string());
  Checkpoint ckpt;
  ckpt.step = detail::read_u64(f);
  ckpt.rng_state = detail::read_str(f);
  const std::uint32_t n_params = detail::read_u32(f);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Checkpoint::Entry e;
    e.name = detail::read_str(f);
    e.shape.n = static_cast<int>(detail::read_u32(f));
    e.shape.c = static_cast<int>(detail::read_u32(f));
    e.shape.h = static_cast<int>(detail::read_u32(f));
    e.shape.w = static_cast<int>(detail::read_u32(f));
    const std::size_t numel = static_cast<std::size_t>(e.shape.numel());
    e.values = detail::read_floats(f, numel);
    e.momentum = detail::read_floats(f, numel);
    ckpt.params.push_back(std::move(e));
  }
  const std::uint32_t n_buffers = detail::read_u32(f);
  for (std::uint32_t i = 0; i < n_buffers; ++i) {
    Checkpoint::Buffer b;
    b.name = detail::read_str(f);
    b.values = detail::read_floats(f, detail::read_u32(f));
    ckpt.buffers.push_back(std::move(b));
  }
  if (!f) throw IoError("load_checkpoint: truncated file " + path.string());
  return ckpt;
}

/// Snapshot helpers between live parameters/states and checkpoint entries.
template <typename T>
Checkpoint::Entry to_entry(const Parameter<T>& p) {
  Checkpoint::Entry e;
  e.name = p.name;
  e.shape = p.value.shape();
  e.values.assign(p.value.values().begin(), p.value.values().end());
  e.momentum.assign(p.momentum.begin(), p.momentum.end());
  return e;
}

template <typename T>
void restore_entry(Parameter<T>& p, const Checkpoint::Entry& e) {
  if (!(p.value.shape() == e.shape))
    throw IoError("checkpoint: shape mismatch for '" + p.name + "': stored " +
                  e.shape.str() + ", model " + p.value.shape().str());
  auto& v = p.value.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(e.values[i]);
  for (std::size_t i = 0; i < p.momentum.size(); ++i)
    p.momentum[i] = static_cast<T>(e.momentum[i]);
}

}  // namespace intrinsic
