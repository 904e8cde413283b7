#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "cephmark/checkpoint.hpp"
#include "cephmark/codec.hpp"

// Heatmap dump, for debugging and external inspection:
//   magic "CMRKHMAP" | u32 version | u32 channels, height, width, frame
//   f32 values[], channel-major then row-major, little-endian

namespace cephmark {

namespace detail {
constexpr char kHmapMagic[8] = {'C', 'M', 'R', 'K', 'H', 'M', 'A', 'P'};
constexpr uint32_t kHmapVersion = 1;
}  // namespace detail

template <typename T>
void save_heatmap_stack(const std::string& path, const HeatmapStack<T>& stack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("heatmap dump: cannot write " + path);
  out.write(detail::kHmapMagic, 8);
  detail::write_scalar<uint32_t>(out, detail::kHmapVersion);
  detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stack.num_channels()));
  detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stack.height()));
  detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stack.width()));
  detail::write_scalar<uint32_t>(out, static_cast<uint32_t>(stack.frame));
  for (T v : stack.channels.values()) detail::write_scalar<float>(out, static_cast<float>(v));
  if (!out) throw ParseError("heatmap dump: short write to " + path);
}

inline HeatmapStack<float> load_heatmap_stack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("heatmap dump: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kHmapMagic, 8) != 0)
    throw ParseError("heatmap dump: bad magic in " + path);
  uint32_t version = detail::read_scalar<uint32_t>(in);
  if (version != detail::kHmapVersion)
    throw ParseError("heatmap dump: unsupported version " + std::to_string(version));
  int channels = static_cast<int>(detail::read_scalar<uint32_t>(in));
  int height = static_cast<int>(detail::read_scalar<uint32_t>(in));
  int width = static_cast<int>(detail::read_scalar<uint32_t>(in));
  uint32_t frame = detail::read_scalar<uint32_t>(in);
  if (channels < 2 || height < 1 || width < 1 || frame > 4)
    throw ParseError("heatmap dump: bad header in " + path);
  HeatmapStack<float> stack;
  stack.frame = static_cast<Frame>(frame);
  stack.channels = ag::Tensor<float>::zeros({channels, height, width});
  detail::read_bytes_le(in, stack.channels.values().data(),
                        stack.channels.numel() * sizeof(float), sizeof(float));
  return stack;
}

}  // namespace cephmark
