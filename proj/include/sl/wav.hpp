#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sl/common.hpp"
#include "sl/media.hpp"

namespace sl::media {

namespace detail {

struct ByteCursor {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size()) fail("MalformedFile", std::string("wav: truncated ") + what);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = static_cast<uint32_t>(bytes[pos]) | (static_cast<uint32_t>(bytes[pos + 1]) << 8) |
                 (static_cast<uint32_t>(bytes[pos + 2]) << 16) |
                 (static_cast<uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::string tag() {
    need(4, "chunk tag");
    std::string t(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    pos += 4;
    return t;
  }
};

}  // namespace detail

/// Load a PCM 16-bit WAV. Multi-channel content is averaged to mono.
inline AudioBuffer read_wav(const std::string& path) {
  auto bytes = read_binary_file(path);
  detail::ByteCursor c{bytes};
  if (c.tag() != "RIFF") fail("MalformedFile", "wav: missing RIFF header in " + path);
  c.u32("riff size");
  if (c.tag() != "WAVE") fail("MalformedFile", "wav: not a WAVE file: " + path);

  int channels = 0;
  int rate = 0;
  bool got_fmt = false;
  std::vector<float> samples;
  bool got_data = false;
  while (c.pos + 8 <= bytes.size()) {
    std::string tag = c.tag();
    uint32_t size = c.u32("chunk size");
    if (tag == "fmt ") {
      if (size < 16) fail("MalformedFile", "wav: fmt chunk too small");
      size_t end = c.pos + size;
      uint16_t fmt_code = c.u16("format");
      channels = c.u16("channels");
      rate = static_cast<int>(c.u32("rate"));
      c.u32("byte rate");
      c.u16("block align");
      uint16_t bits = c.u16("bits");
      if (fmt_code != 1 || bits != 16)
        fail("MalformedFile", format("wav: need PCM16, got format %u / %u bits", fmt_code, bits));
      if (channels < 1) fail("MalformedFile", "wav: zero channels");
      c.pos = end;
      got_fmt = true;
    } else if (tag == "data") {
      if (!got_fmt) fail("MalformedFile", "wav: data chunk before fmt");
      c.need(size, "data chunk");
      size_t n_values = size / 2;
      size_t n_frames = n_values / static_cast<size_t>(channels);
      samples.resize(n_frames);
      const uint8_t* p = bytes.data() + c.pos;
      for (size_t f = 0; f < n_frames; ++f) {
        double acc = 0.0;
        for (int ch = 0; ch < channels; ++ch) {
          size_t off = (f * static_cast<size_t>(channels) + static_cast<size_t>(ch)) * 2;
          auto v = static_cast<int16_t>(static_cast<uint16_t>(p[off] | (p[off + 1] << 8)));
          acc += static_cast<double>(v) / 32768.0;
        }
        samples[f] = static_cast<float>(acc / channels);
      }
      c.pos += size + (size & 1);  // chunks are word-aligned
      got_data = true;
    } else {
      c.need(size, "chunk body");
      c.pos += size + (size & 1);
    }
  }
  if (!got_fmt || !got_data) fail("MalformedFile", "wav: missing fmt or data chunk in " + path);
  AudioBuffer buf;
  buf.samples = std::move(samples);
  buf.rate = rate;
  return buf;
}

/// Write mono PCM 16-bit. Samples are clamped to [-1, 1].
inline void write_wav(const std::string& path, const AudioBuffer& buf) {
  if (buf.rate <= 0) fail("ConfigError", "wav: rate must be positive");
  std::vector<uint8_t> out;
  auto push_u16 = [&](uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
  };
  auto push_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto push_tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };

  const uint32_t data_size = static_cast<uint32_t>(buf.samples.size() * 2);
  push_tag("RIFF");
  push_u32(36 + data_size);
  push_tag("WAVE");
  push_tag("fmt ");
  push_u32(16);
  push_u16(1);  // PCM
  push_u16(1);  // mono
  push_u32(static_cast<uint32_t>(buf.rate));
  push_u32(static_cast<uint32_t>(buf.rate) * 2);
  push_u16(2);
  push_u16(16);
  push_tag("data");
  push_u32(data_size);
  for (float s : buf.samples) {
    double v = std::min(1.0, std::max(-1.0, static_cast<double>(s)));
    auto q = static_cast<int16_t>(std::lrint(v * 32767.0));
    push_u16(static_cast<uint16_t>(q));
  }
  write_binary_file(path, out);
}

}  // namespace sl::media
