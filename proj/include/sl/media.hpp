#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sl/common.hpp"
#include "sl/corpus.hpp"
#include "sl/types.hpp"

namespace sl::media {

constexpr int kAudioRate = 16000;
constexpr double kFps = 25.0;
constexpr long kClipSamples = 19520;  // round(1.22 * 16000)
constexpr long kClipFrames = 30;      // floor(1.22 * 25)
constexpr long kRoiSide = 96;

struct AudioBuffer {
  std::vector<float> samples;
  int rate = 0;

  double duration_s() const {
    return rate > 0 ? static_cast<double>(samples.size()) / rate : 0.0;
  }
};

/// T grayscale frames of H x W intensities in [0, 1], row-major.
struct FrameStack {
  std::vector<float> data;
  long t = 0, h = 0, w = 0;
  double fps = 0.0;

  float at(long f, long y, long x) const { return data[static_cast<size_t>((f * h + y) * w + x)]; }
  float& at(long f, long y, long x) { return data[static_cast<size_t>((f * h + y) * w + x)]; }
  const float* frame(long f) const { return data.data() + static_cast<size_t>(f) * h * w; }
  double duration_s() const { return fps > 0 ? static_cast<double>(t) / fps : 0.0; }
};

/// One model-ready window: fixed-length audio plus fixed-size frame block.
struct ClipPair {
  std::vector<float> audio;  // kClipSamples @ 16 kHz
  std::vector<float> video;  // kClipFrames * kRoiSide * kRoiSide
  Expression label = Expression::None;
  std::optional<Intensity> intensity;
};

struct Roi {
  double center_x = 0.0;
  double center_y = 0.0;
  double side = 0.0;
};

// ---- resampling -------------------------------------------------------------

/// Linear-interpolation resampler. Output length floor((n-1)*target/rate) + 1
/// keeps the duration within one sample period of the input.
inline AudioBuffer resample_audio(const AudioBuffer& buf, int target_rate) {
  if (buf.samples.empty()) fail("EmptyBuffer", "resample_audio: no samples");
  if (buf.rate <= 0 || target_rate <= 0) fail("ConfigError", "resample_audio: rates must be positive");
  if (buf.rate == target_rate) return buf;
  const size_t n_in = buf.samples.size();
  const auto n_out = static_cast<size_t>((static_cast<int64_t>(n_in) - 1) * target_rate / buf.rate) + 1;
  AudioBuffer out;
  out.rate = target_rate;
  out.samples.resize(n_out);
  const double step = static_cast<double>(buf.rate) / target_rate;
  for (size_t k = 0; k < n_out; ++k) {
    double t = static_cast<double>(k) * step;
    auto i0 = static_cast<size_t>(t);
    if (i0 >= n_in - 1) {
      out.samples[k] = buf.samples[n_in - 1];
      continue;
    }
    double frac = t - static_cast<double>(i0);
    out.samples[k] = static_cast<float>((1.0 - frac) * buf.samples[i0] + frac * buf.samples[i0 + 1]);
  }
  return out;
}

// ---- grayscale --------------------------------------------------------------

/// BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B.
inline float to_grayscale(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

/// Planar RGB frame (3 * H * W, channel-major) to grayscale H * W.
inline std::vector<float> to_grayscale(const std::vector<float>& rgb, long h, long w) {
  const size_t plane = static_cast<size_t>(h) * w;
  if (rgb.size() != 3 * plane) fail("ConfigError", "to_grayscale: expected 3 channel planes");
  std::vector<float> out(plane);
  for (size_t i = 0; i < plane; ++i)
    out[i] = to_grayscale(rgb[i], rgb[plane + i], rgb[2 * plane + i]);
  return out;
}

// ---- roi crop ----------------------------------------------------------------

/// Crop the square ROI and resize to side x side with bilinear interpolation.
/// Sample points use the half-pixel convention; coordinates outside the frame
/// clamp to the edge (edge replication).
inline std::vector<float> crop_roi(const float* frame, long h, long w, const Roi& roi,
                                   long out_side = kRoiSide) {
  if (roi.side <= 0.0) fail("DegenerateRoi", format("roi side %.3f must be positive", roi.side));
  if (h < 1 || w < 1) fail("ConfigError", "crop_roi: empty frame");
  std::vector<float> out(static_cast<size_t>(out_side) * out_side);
  const double scale = roi.side / static_cast<double>(out_side);
  const double x0 = roi.center_x - roi.side / 2.0;
  const double y0 = roi.center_y - roi.side / 2.0;
  for (long i = 0; i < out_side; ++i) {
    double v = y0 + (static_cast<double>(i) + 0.5) * scale - 0.5;
    v = std::min(std::max(v, 0.0), static_cast<double>(h - 1));
    auto yi = static_cast<long>(v);
    if (yi >= h - 1) yi = h - 2 >= 0 ? h - 2 : 0;
    double fy = h > 1 ? v - static_cast<double>(yi) : 0.0;
    long yi1 = std::min(yi + 1, h - 1);
    for (long j = 0; j < out_side; ++j) {
      double u = x0 + (static_cast<double>(j) + 0.5) * scale - 0.5;
      u = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
      auto xi = static_cast<long>(u);
      if (xi >= w - 1) xi = w - 2 >= 0 ? w - 2 : 0;
      double fx = w > 1 ? u - static_cast<double>(xi) : 0.0;
      long xi1 = std::min(xi + 1, w - 1);
      double a = frame[yi * w + xi], b = frame[yi * w + xi1];
      double c = frame[yi1 * w + xi], d = frame[yi1 * w + xi1];
      double top = a + fx * (b - a);
      double bot = c + fx * (d - c);
      out[static_cast<size_t>(i * out_side + j)] = static_cast<float>(top + fy * (bot - top));
    }
  }
  return out;
}

/// Apply crop_roi to every frame of a stack.
inline FrameStack crop_roi(const FrameStack& fs, const Roi& roi, long out_side = kRoiSide) {
  FrameStack out;
  out.t = fs.t;
  out.h = out_side;
  out.w = out_side;
  out.fps = fs.fps;
  out.data.resize(static_cast<size_t>(fs.t) * out_side * out_side);
  for (long f = 0; f < fs.t; ++f) {
    auto cropped = crop_roi(fs.frame(f), fs.h, fs.w, roi, out_side);
    std::copy(cropped.begin(), cropped.end(),
              out.data.begin() + static_cast<size_t>(f) * out_side * out_side);
  }
  return out;
}

// ---- window cutting ----------------------------------------------------------

namespace detail {

/// Edge-inclusive symmetric index: fold p into [0, n) by mirroring at both
/// ends, repeating the edge element. Periodic in 2n, so any pad length works.
inline long reflect_index(long p, long n) {
  if (n == 1) return 0;
  const long period = 2 * n;
  long m = p % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// Copy src[first .. first+avail) steps into a dst of length target steps,
/// centering the available run and reflecting across both ends. Head pad =
/// floor(pad/2), tail takes the extra step. `step` elements move per index,
/// which lets the same routine walk samples (step 1) and frames (step H*W).
template <typename T>
void place_reflected(const T* src, long avail, long target, long step, T* dst) {
  const long pad = target - avail;
  const long head = pad > 0 ? pad / 2 : 0;
  for (long k = 0; k < target; ++k) {
    long p = pad > 0 ? reflect_index(k - head, avail) : k;
    std::copy(src + p * step, src + (p + 1) * step, dst + k * step);
  }
}

}  // namespace detail

/// Slice one window out of the source media. The window's span determines how
/// much real signal exists; anything short of the fixed clip extent is filled
/// by symmetric reflection on both ends (tail gets the odd element).
inline ClipPair cut_clip(const AudioBuffer& audio, const FrameStack& video,
                         const corpus::Window& window) {
  if (audio.samples.empty()) fail("MissingModality", window.id() + ": audio stream absent");
  if (video.t == 0 || video.data.empty()) fail("MissingModality", window.id() + ": video stream absent");
  if (audio.rate != kAudioRate)
    fail("ConfigError", format("cut_clip: audio must be %d Hz, got %d", kAudioRate, audio.rate));
  if (video.h != kRoiSide || video.w != kRoiSide)
    fail("ConfigError", format("cut_clip: video must be %ldx%ld, got %ldx%ld", kRoiSide, kRoiSide,
                               video.h, video.w));

  ClipPair clip;
  clip.label = window.label;
  clip.intensity = window.intensity;

  // audio: 16 samples per millisecond
  {
    const auto n = static_cast<long>(audio.samples.size());
    long first = window.start_ms * (kAudioRate / 1000);
    long avail = window.span_ms * (kAudioRate / 1000);
    if (first >= n) first = n - 1;
    avail = std::min(avail, n - first);
    if (avail < 1) avail = 1;
    avail = std::min(avail, static_cast<long>(kClipSamples));
    clip.audio.resize(kClipSamples);
    detail::place_reflected(audio.samples.data() + first, avail, kClipSamples, 1,
                            clip.audio.data());
  }

  // video: frame index floor(ms * fps / 1000)
  {
    long first = window.start_ms * 25 / 1000;
    long avail = std::max<long>(1, window.span_ms * 25 / 1000);
    if (first >= video.t) first = video.t - 1;
    avail = std::min(avail, video.t - first);
    if (avail < 1) avail = 1;
    avail = std::min(avail, kClipFrames);
    const long frame_elems = kRoiSide * kRoiSide;
    clip.video.resize(static_cast<size_t>(kClipFrames) * frame_elems);
    detail::place_reflected(video.data.data() + first * frame_elems, avail, kClipFrames,
                            frame_elems, clip.video.data());
  }
  return clip;
}

// ---- normalization -------------------------------------------------------------

namespace detail {
inline void znorm(std::vector<float>& v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  double std = std::max(std::sqrt(var), 1e-6);
  for (float& x : v) x = static_cast<float>((x - mean) / std);
}
}  // namespace detail

/// Per-clip z-normalization, audio and video independently; std floored at
/// 1e-6 so constant clips map to zeros.
inline ClipPair normalize_clip(ClipPair clip) {
  detail::znorm(clip.audio);
  detail::znorm(clip.video);
  return clip;
}

// ---- roi sidecar csv ------------------------------------------------------------

inline constexpr const char* kRoiHeader = "source,center_x,center_y,side";

inline std::map<std::string, Roi> parse_roi_csv(const std::string& text) {
  auto lines = split_on(text, '\n');
  std::map<std::string, Roi> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (i == 0) {
      if (line != kRoiHeader) fail("MalformedLine", "roi csv: bad header");
      continue;
    }
    if (line.empty()) continue;
    auto f = split_on(line, ',');
    if (f.size() != 4) fail("MalformedLine", format("roi csv line %zu: expected 4 fields", i + 1));
    Roi roi;
    try {
      roi.center_x = std::stod(f[1]);
      roi.center_y = std::stod(f[2]);
      roi.side = std::stod(f[3]);
    } catch (const std::exception&) {
      fail("MalformedLine", format("roi csv line %zu: bad number", i + 1));
    }
    out[f[0]] = roi;
  }
  return out;
}

inline std::string serialize_roi_csv(const std::map<std::string, Roi>& rois) {
  std::string out = kRoiHeader;
  out += '\n';
  for (const auto& [source, roi] : rois)
    out += format("%s,%.3f,%.3f,%.3f\n", source.c_str(), roi.center_x, roi.center_y, roi.side);
  return out;
}

}  // namespace sl::media
