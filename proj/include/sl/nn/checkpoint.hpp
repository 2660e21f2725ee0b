#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "sl/nn/tensor.hpp"

namespace sl::nn {

// SLCK checkpoint container: magic "SLCK", u32 version = 1, u32 tensor count,
// then per tensor: u16 name length, name bytes, u8 ndim, u32 extents, raw
// little-endian f32 data. Tensors are matched by name on load.

inline void save_slck(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::vector<uint8_t> out;
  auto push_u16 = [&](uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
  };
  auto push_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  };
  out.insert(out.end(), {'S', 'L', 'C', 'K'});
  push_u32(1);
  push_u32(static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) fail("ConfigError", "slck: tensor name too long");
    push_u16(static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(t->shape.size()));
    for (long e : t->shape) push_u32(static_cast<uint32_t>(e));
    size_t at = out.size();
    out.resize(at + t->data.size() * 4);
    static_assert(sizeof(float) == 4);
    std::memcpy(out.data() + at, t->data.data(), t->data.size() * 4);
  }
  write_binary_file(path, out);
}

inline void save_slck(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::vector<std::pair<std::string, const Tensor*>> list;
  for (const auto& [name, t] : tensors) list.push_back({name, &t});
  save_slck(path, list);
}

inline std::map<std::string, Tensor> load_slck(const std::string& path) {
  auto bytes = read_binary_file(path);
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) fail("CheckpointMismatch", "slck: truncated file " + path);
  };
  auto u16 = [&]() {
    need(2);
    uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  };
  auto u32 = [&]() {
    need(4);
    uint32_t v = static_cast<uint32_t>(bytes[pos]) | (static_cast<uint32_t>(bytes[pos + 1]) << 8) |
                 (static_cast<uint32_t>(bytes[pos + 2]) << 16) |
                 (static_cast<uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  };
  need(4);
  if (std::memcmp(bytes.data(), "SLCK", 4) != 0)
    fail("CheckpointMismatch", "slck: bad magic in " + path);
  pos = 4;
  uint32_t version = u32();
  if (version != 1) fail("CheckpointMismatch", format("slck: unsupported version %u", version));
  uint32_t count = u32();
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = u16();
    need(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    need(1);
    uint8_t ndim = bytes[pos++];
    std::vector<long> shape;
    long numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      long e = static_cast<long>(u32());
      shape.push_back(e);
      numel *= e;
    }
    need(static_cast<size_t>(numel) * 4);
    Tensor t(shape);
    std::memcpy(t.data.data(), bytes.data() + pos, static_cast<size_t>(numel) * 4);
    pos += static_cast<size_t>(numel) * 4;
    if (!out.emplace(std::move(name), std::move(t)).second)
      fail("CheckpointMismatch", "slck: duplicate tensor name in " + path);
  }
  return out;
}

}  // namespace sl::nn
