#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sl/common.hpp"
#include "sl/media.hpp"

namespace sl::media {

/// Pre-decoded grayscale video container. Layout: magic "GV01", then u32
/// little-endian T, H, W, fps_numerator, fps_denominator, then T*H*W bytes of
/// row-major u8 intensities.
inline FrameStack read_gv01(const std::string& path) {
  auto bytes = read_binary_file(path);
  if (bytes.size() < 24 || bytes[0] != 'G' || bytes[1] != 'V' || bytes[2] != '0' || bytes[3] != '1')
    fail("MalformedFile", "gv01: bad magic in " + path);
  auto u32_at = [&](size_t off) {
    return static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
           (static_cast<uint32_t>(bytes[off + 2]) << 16) |
           (static_cast<uint32_t>(bytes[off + 3]) << 24);
  };
  uint32_t t = u32_at(4), h = u32_at(8), w = u32_at(12);
  uint32_t fps_num = u32_at(16), fps_den = u32_at(20);
  if (fps_num == 0 || fps_den == 0) fail("MalformedFile", "gv01: zero fps field in " + path);
  size_t need = 24 + static_cast<size_t>(t) * h * w;
  if (bytes.size() != need)
    fail("MalformedFile", format("gv01: expected %zu bytes, file has %zu", need, bytes.size()));
  FrameStack fs;
  fs.t = static_cast<long>(t);
  fs.h = static_cast<long>(h);
  fs.w = static_cast<long>(w);
  fs.fps = static_cast<double>(fps_num) / static_cast<double>(fps_den);
  fs.data.resize(static_cast<size_t>(t) * h * w);
  for (size_t i = 0; i < fs.data.size(); ++i)
    fs.data[i] = static_cast<float>(bytes[24 + i]) / 255.0f;
  return fs;
}

inline void write_gv01(const std::string& path, const FrameStack& fs, uint32_t fps_num = 25,
                       uint32_t fps_den = 1) {
  std::vector<uint8_t> out;
  out.reserve(24 + fs.data.size());
  out.insert(out.end(), {'G', 'V', '0', '1'});
  auto push_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  };
  push_u32(static_cast<uint32_t>(fs.t));
  push_u32(static_cast<uint32_t>(fs.h));
  push_u32(static_cast<uint32_t>(fs.w));
  push_u32(fps_num);
  push_u32(fps_den);
  for (float v : fs.data) {
    double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    out.push_back(static_cast<uint8_t>(std::lrint(c * 255.0)));
  }
  write_binary_file(path, out);
}

}  // namespace sl::media
