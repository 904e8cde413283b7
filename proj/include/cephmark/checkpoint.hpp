#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cephmark/adam.hpp"
#include "cephmark/unet.hpp"

// Parameter checkpoint file, version 1. Explicitly little-endian:
//
//   magic "CMRKCKPT" | u32 version | u32 scalar_size (4|8)
//   u32 depth, base_channels, kernel_size, in_channels, out_channels
//   u32 param_count
//   per parameter: u32 name_len, name bytes, u32 ndim, u32 dims[], T values[]
//   u8 has_optimizer
//   if set: f64 lr, beta1, beta2, epsilon | u64 step_count
//           per parameter: T m[], T v[]

namespace cephmark {

namespace detail {

constexpr char kCkptMagic[8] = {'C', 'M', 'R', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

inline void write_bytes_le(std::ostream& out, const void* p, size_t size, size_t scalar) {
  // byte-swap on big-endian hosts; identity elsewhere
  if constexpr (std::endian::native == std::endian::little) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(size));
  } else {
    const char* src = static_cast<const char*>(p);
    std::vector<char> buf(size);
    for (size_t i = 0; i < size; i += scalar)
      for (size_t j = 0; j < scalar; ++j) buf[i + j] = src[i + scalar - 1 - j];
    out.write(buf.data(), static_cast<std::streamsize>(size));
  }
}

inline void read_bytes_le(std::istream& in, void* p, size_t size, size_t scalar) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(size));
  if (!in) throw ParseError("checkpoint: truncated file");
  if constexpr (std::endian::native != std::endian::little) {
    char* dst = static_cast<char*>(p);
    for (size_t i = 0; i < size; i += scalar)
      for (size_t j = 0; j < scalar / 2; ++j)
        std::swap(dst[i + j], dst[i + scalar - 1 - j]);
  }
}

template <typename V>
void write_scalar(std::ostream& out, V v) {
  write_bytes_le(out, &v, sizeof(V), sizeof(V));
}

template <typename V>
V read_scalar(std::istream& in) {
  V v;
  read_bytes_le(in, &v, sizeof(V), sizeof(V));
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const UNetModel<T>& model,
                     const ag::AdamState<T>* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("checkpoint: cannot write " + path);
  out.write(detail::kCkptMagic, 8);
  detail::write_scalar<uint32_t>(out, detail::kCkptVersion);
  detail::write_scalar<uint32_t>(out, sizeof(T));
  const UNetConfig& c = model.config;
  for (int v : {c.depth, c.base_channels, c.kernel_size, c.in_channels, c.out_channels})
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(v));

  auto named = model.named_parameters();
  detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(named.size()));
  for (auto& [name, tensor] : named) {
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(tensor.ndim()));
    for (int d : tensor.shape()) detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(d));
    detail::write_bytes_le(out, tensor.values().data(), tensor.numel() * sizeof(T), sizeof(T));
  }

  detail::write_scalar<uint8_t>(out, optimizer ? 1 : 0);
  if (optimizer) {
    if (optimizer->first_moment.size() != named.size())
      throw ShapeError("checkpoint: optimizer state does not match parameter list");
    detail::write_scalar<double>(out, optimizer->learning_rate);
    detail::write_scalar<double>(out, optimizer->beta1);
    detail::write_scalar<double>(out, optimizer->beta2);
    detail::write_scalar<double>(out, optimizer->epsilon);
    detail::write_scalar<uint64_t>(out, static_cast<uint64_t>(optimizer->step_count));
    for (size_t i = 0; i < named.size(); ++i) {
      detail::write_bytes_le(out, optimizer->first_moment[i].data(),
                             optimizer->first_moment[i].size() * sizeof(T), sizeof(T));
      detail::write_bytes_le(out, optimizer->second_moment[i].data(),
                             optimizer->second_moment[i].size() * sizeof(T), sizeof(T));
    }
  }
  if (!out) throw ParseError("checkpoint: short write to " + path);
}

template <typename T>
UNetModel<T> load_checkpoint(const std::string& path,
                             ag::AdamState<T>* optimizer = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  uint32_t version = detail::read_scalar<uint32_t>(in);
  if (version != detail::kCkptVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  uint32_t scalar = detail::read_scalar<uint32_t>(in);
  if (scalar != sizeof(T))
    throw ParseError("checkpoint: scalar width " + std::to_string(scalar) +
                     " does not match build (" + std::to_string(sizeof(T)) + ")");

  UNetConfig cfg;
  cfg.depth = static_cast<int>(detail::read_scalar<uint32_t>(in));
  cfg.base_channels = static_cast<int>(detail::read_scalar<uint32_t>(in));
  cfg.kernel_size = static_cast<int>(detail::read_scalar<uint32_t>(in));
  cfg.in_channels = static_cast<int>(detail::read_scalar<uint32_t>(in));
  cfg.out_channels = static_cast<int>(detail::read_scalar<uint32_t>(in));
  cfg.validate();

  UNetModel<T> model = build_unet<T>(cfg, 0);  // structure only; values overwritten below
  auto named = model.named_parameters();
  uint32_t count = detail::read_scalar<uint32_t>(in);
  if (count != named.size())
    throw ParseError("checkpoint: expected " + std::to_string(named.size()) +
                     " parameters, file has " + std::to_string(count));
  for (auto& [name, tensor] : named) {
    uint32_t name_len = detail::read_scalar<uint32_t>(in);
    std::string got(name_len, '\0');
    in.read(got.data(), name_len);
    if (got != name)
      throw ParseError("checkpoint: parameter order mismatch, expected " + name + ", got " + got);
    uint32_t ndim = detail::read_scalar<uint32_t>(in);
    std::vector<int> dims(ndim);
    for (auto& d : dims) d = static_cast<int>(detail::read_scalar<uint32_t>(in));
    if (dims != tensor.shape())
      throw ParseError("checkpoint: shape mismatch for " + name + ": file " + shape_str(dims) +
                       " vs model " + shape_str(tensor.shape()));
    detail::read_bytes_le(in, tensor.values().data(), tensor.numel() * sizeof(T), sizeof(T));
  }

  uint8_t has_opt = detail::read_scalar<uint8_t>(in);
  if (optimizer) {
    if (!has_opt) throw ParseError("checkpoint: optimizer state requested but absent in " + path);
    optimizer->learning_rate = detail::read_scalar<double>(in);
    optimizer->beta1 = detail::read_scalar<double>(in);
    optimizer->beta2 = detail::read_scalar<double>(in);
    optimizer->epsilon = detail::read_scalar<double>(in);
    optimizer->step_count = static_cast<int64_t>(detail::read_scalar<uint64_t>(in));
    optimizer->first_moment.clear();
    optimizer->second_moment.clear();
    for (auto& [name, tensor] : named) {
      std::vector<T> m(tensor.numel()), v(tensor.numel());
      detail::read_bytes_le(in, m.data(), m.size() * sizeof(T), sizeof(T));
      detail::read_bytes_le(in, v.data(), v.size() * sizeof(T), sizeof(T));
      optimizer->first_moment.push_back(std::move(m));
      optimizer->second_moment.push_back(std::move(v));
    }
  }
  return model;
}

}  // namespace cephmark
