#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sl/corpus.hpp"
#include "sl/eval.hpp"
#include "sl/gv01.hpp"
#include "sl/media.hpp"
#include "sl/nn/tensor.hpp"
#include "sl/rng.hpp"
#include "sl/types.hpp"
#include "sl/wav.hpp"

namespace sl::synth {

enum class Informativeness { Both, AudioOnly, VideoOnly, Complementary };

inline const char* to_string(Informativeness m) {
  switch (m) {
    case Informativeness::Both: return "both";
    case Informativeness::AudioOnly: return "audio_only";
    case Informativeness::VideoOnly: return "video_only";
    case Informativeness::Complementary: return "complementary";
  }
  return "?";
}

inline Informativeness informativeness_from_token(const std::string& tok) {
  if (tok == "both") return Informativeness::Both;
  if (tok == "audio_only") return Informativeness::AudioOnly;
  if (tok == "video_only") return Informativeness::VideoOnly;
  if (tok == "complementary") return Informativeness::Complementary;
  fail("SpecError", "unknown informativeness '" + tok + "'");
}

struct SynthSpec {
  uint64_t seed = 7;
  int n_sources = 4;
  long n_laugh = 10, n_smile = 10, n_none = 10;
  std::array<long, 2> laugh_dur_ms{400, 2500};
  std::array<long, 2> smile_dur_ms{600, 3500};
  std::array<long, 2> none_dur_ms{500, 3000};
  double audio_cue = 1.0;
  double video_cue = 1.0;
  double noise_floor = 0.05;
  Informativeness mode = Informativeness::Both;
  // draw weights over intensity ranks; laughs never draw subtle
  std::array<double, 4> smile_intensity_weights{1, 1, 1, 1};  // subtle, low, medium, high
  std::array<double, 3> laugh_intensity_weights{1, 1, 1};     // low, medium, high

  void validate() const {
    if (n_sources < 1) fail("SpecError", "n_sources must be >= 1");
    if (n_laugh < 0 || n_smile < 0 || n_none < 0) fail("SpecError", "segment counts must be >= 0");
    for (const auto& r : {laugh_dur_ms, smile_dur_ms, none_dur_ms}) {
      if (r[0] < 200 || r[1] < r[0]) fail("SpecError", "duration ranges must be [lo >= 200, hi >= lo]");
    }
    if (audio_cue < 0 || video_cue < 0) fail("SpecError", "cue strengths must be >= 0");
    if (noise_floor < 0) fail("SpecError", "noise floor must be >= 0");
  }
};

namespace detail {

constexpr int kWavRate = 32000;
constexpr long kFrameSide = 120;
constexpr double kEllipseCx = 60.0, kEllipseCy = 72.0, kEllipseW = 17.0;

/// One laid-out span on a source timeline, with its audio/video cue draws.
struct Item {
  Expression cls = Expression::None;
  std::optional<Intensity> intensity;
  int64_t start_ms = 0, end_ms = 0;
  double burst_hz = 5.0;   // laugh amplitude-burst rate
  double tone_hz = 220.0;  // smile carrier
  double tilt = 1.0;       // smile spectral tilt exponent
  Expression audio_mimic = Expression::None;  // complementary-mode none audio
};

inline int intensity_rank(const std::optional<Intensity>& i) {
  return i ? static_cast<int>(*i) : -1;
}

inline Intensity draw_intensity(Rng& rng, Expression cls, const SynthSpec& spec) {
  std::array<double, 4> w{};
  if (cls == Expression::Laugh) {
    w = {0.0, spec.laugh_intensity_weights[0], spec.laugh_intensity_weights[1],
         spec.laugh_intensity_weights[2]};
  } else {
    w = spec.smile_intensity_weights;
  }
  double total = w[0] + w[1] + w[2] + w[3];
  if (total <= 0) fail("SpecError", "intensity weights sum to zero");
  double u = rng.uniform() * total;
  for (int k = 0; k < 4; ++k) {
    if (u < w[static_cast<size_t>(k)]) return static_cast<Intensity>(k);
    u -= w[static_cast<size_t>(k)];
  }
  return Intensity::High;
}

inline std::vector<Item> layout_source(Rng& rng, const SynthSpec& spec, long nl, long ns,
                                       long nn) {
  std::vector<Expression> order;
  for (long i = 0; i < nl; ++i) order.push_back(Expression::Laugh);
  for (long i = 0; i < ns; ++i) order.push_back(Expression::Smile);
  for (long i = 0; i < nn; ++i) order.push_back(Expression::None);
  rng.shuffle(order);
  std::vector<Item> items;
  int64_t cursor = 0;
  for (Expression cls : order) {
    Item it;
    it.cls = cls;
    const auto& range = cls == Expression::Laugh
                            ? spec.laugh_dur_ms
                            : (cls == Expression::Smile ? spec.smile_dur_ms : spec.none_dur_ms);
    int64_t dur = rng.randint(range[0], range[1]);
    it.start_ms = cursor;
    it.end_ms = cursor + dur;
    cursor = it.end_ms;
    if (cls != Expression::None) it.intensity = draw_intensity(rng, cls, spec);
    it.burst_hz = rng.uniform(4.0, 6.0);
    it.tone_hz = rng.uniform(180.0, 260.0);
    it.tilt = 1.5 - 0.25 * std::max(0, intensity_rank(it.intensity));
    it.audio_mimic = rng.uniform() < 0.5 ? Expression::Laugh : Expression::Smile;
    items.push_back(it);
  }
  return items;
}

/// The audible class: what cue the audio track carries for this span.
inline Expression audio_class(const Item& it, Informativeness mode) {
  switch (mode) {
    case Informativeness::VideoOnly: return Expression::None;
    case Informativeness::Complementary:
      return it.cls == Expression::None ? it.audio_mimic : it.cls;
    default: return it.cls;
  }
}

inline void render_audio(Rng& rng, const std::vector<Item>& items, const SynthSpec& spec,
                         std::vector<float>& out) {
  const int64_t total_ms = items.empty() ? 1000 : items.back().end_ms;
  const size_t n = static_cast<size_t>(total_ms) * kWavRate / 1000;
  out.assign(n, 0.0f);
  // shared low-passed noise bed, identical process for every class
  double lp = 0.0;
  for (size_t s = 0; s < n; ++s) {
    lp = 0.92 * lp + 0.08 * rng.uniform(-1.0, 1.0);
    out[s] = static_cast<float>(spec.noise_floor * 3.0 * lp);
  }
  for (const auto& it : items) {
    Expression cls = audio_class(it, spec.mode);
    if (cls == Expression::None) continue;
    int rank = std::max(0, intensity_rank(it.intensity));
    size_t s0 = static_cast<size_t>(it.start_ms) * kWavRate / 1000;
    size_t s1 = std::min(n, static_cast<size_t>(it.end_ms) * kWavRate / 1000);
    if (cls == Expression::Laugh) {
      // periodic amplitude bursts over a noise carrier
      double amp = spec.audio_cue * (0.25 + 0.08 * rank);
      for (size_t s = s0; s < s1; ++s) {
        double t = static_cast<double>(s - s0) / kWavRate;
        double env = std::sin(M_PI * it.burst_hz * t);
        env = env * env;
        env = env * env;  // sharpen the bursts
        out[s] += static_cast<float>(amp * env * rng.uniform(-1.0, 1.0));
      }
    } else {
      // sustained tone: harmonic stack whose tilt shifts with intensity
      double amp = spec.audio_cue * (0.16 + 0.04 * rank);
      for (size_t s = s0; s < s1; ++s) {
        double t = static_cast<double>(s - s0) / kWavRate;
        double v = 0.0;
        for (int hh = 1; hh <= 4; ++hh)
          v += std::pow(static_cast<double>(hh), -it.tilt) *
               std::sin(2.0 * M_PI * it.tone_hz * hh * t);
        out[s] += static_cast<float>(amp * 0.5 * v);
      }
    }
  }
  for (auto& v : out) v = std::min(0.99f, std::max(-0.99f, v));
}

/// Mouth-opening proxy: ellipse height by intensity rank (strictly monotone),
/// scaled by the video cue. None has no opening.
inline double opening_height(double video_cue, int rank) {
  return video_cue * (6.0 + 3.0 * rank);
}

inline void render_video(Rng& rng, const std::vector<Item>& items, const SynthSpec& spec,
                         media::FrameStack& fs) {
  const int64_t total_ms = items.empty() ? 1000 : items.back().end_ms;
  fs.t = (total_ms * 25 + 999) / 1000;
  fs.h = kFrameSide;
  fs.w = kFrameSide;
  fs.fps = 25.0;
  fs.data.assign(static_cast<size_t>(fs.t) * kFrameSide * kFrameSide, 0.0f);
  // static face-ish background plus per-frame brightness jitter
  std::vector<float> bg(static_cast<size_t>(kFrameSide) * kFrameSide);
  for (long y = 0; y < kFrameSide; ++y)
    for (long x = 0; x < kFrameSide; ++x) {
      double r2 = (x - 60.0) * (x - 60.0) / (55.0 * 55.0) + (y - 58.0) * (y - 58.0) / (62.0 * 62.0);
      double base = r2 < 1.0 ? 0.55 : 0.25;
      bg[static_cast<size_t>(y * kFrameSide + x)] =
          static_cast<float>(base + spec.noise_floor * rng.uniform(-1.0, 1.0));
    }
  size_t item_at = 0;
  for (long f = 0; f < fs.t; ++f) {
    double jitter = spec.noise_floor * 0.2 * rng.uniform(-1.0, 1.0);
    float* frame = fs.data.data() + static_cast<size_t>(f) * kFrameSide * kFrameSide;
    for (size_t i = 0; i < bg.size(); ++i)
      frame[i] = std::min(1.0f, std::max(0.0f, bg[i] + static_cast<float>(jitter)));
    const int64_t ms = f * 40;
    while (item_at < items.size() && items[item_at].end_ms <= ms) ++item_at;
    if (item_at >= items.size()) continue;
    const Item& it = items[item_at];
    if (ms < it.start_ms) continue;

    Expression vis = it.cls;
    bool oscillate = vis == Expression::Laugh;
    if (spec.mode == Informativeness::AudioOnly) continue;  // video carries nothing
    if (spec.mode == Informativeness::Complementary) oscillate = false;  // same cue for L and S
    if (vis == Expression::None) continue;

    int rank = std::max(0, intensity_rank(it.intensity));
    double h = opening_height(spec.video_cue, rank);
    if (oscillate) {
      double t = static_cast<double>(ms - it.start_ms) / 1000.0;
      h *= 0.55 + 0.45 * std::abs(std::sin(M_PI * it.burst_hz * t));
    }
    if (h <= 0) continue;
    for (long y = 0; y < kFrameSide; ++y)
      for (long x = 0; x < kFrameSide; ++x) {
        double dx = (x - kEllipseCx) / kEllipseW;
        double dy = (y - kEllipseCy) / (h / 2.0);
        if (dx * dx + dy * dy <= 1.0)
          frame[y * kFrameSide + x] = 0.97f;
      }
  }
}

}  // namespace detail

struct CorpusFiles {
  std::string annotation_path;
  std::string roi_path;
  std::vector<std::string> sources;
  std::vector<std::string> wav_paths;
  std::vector<std::string> gv01_paths;
};

/// Write a deterministic audiovisual corpus under out_dir: annotations.tsv
/// (labeled segments only; None spans are the gaps), one WAV + GV01 per
/// source, and the ROI sidecar.
inline CorpusFiles gen_corpus(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  CorpusFiles files;
  files.annotation_path = out_dir + "/annotations.tsv";
  files.roi_path = out_dir + "/roi.csv";

  std::vector<corpus::Segment> annotation;
  std::map<std::string, media::Roi> rois;
  for (int src = 0; src < spec.n_sources; ++src) {
    // spread counts across sources; earlier sources absorb remainders
    auto share = [&](long total) {
      long base = total / spec.n_sources;
      return base + (src < total % spec.n_sources ? 1 : 0);
    };
    Rng rng(Rng::derive(spec.seed, 1000 + static_cast<uint64_t>(src)));
    auto items = detail::layout_source(rng, spec, share(spec.n_laugh), share(spec.n_smile),
                                       share(spec.n_none));
    std::string source = "src" + std::to_string(src);
    for (const auto& it : items) {
      if (it.cls == Expression::None) continue;
      corpus::Segment seg;
      seg.source_id = source;
      seg.start_ms = it.start_ms;
      seg.end_ms = it.end_ms;
      seg.expression = it.cls;
      seg.intensity = it.intensity;
      annotation.push_back(seg);
    }
    media::AudioBuffer buf;
    buf.rate = detail::kWavRate;
    detail::render_audio(rng, items, spec, buf.samples);
    media::FrameStack fs;
    detail::render_video(rng, items, spec, fs);
    std::string wav_path = out_dir + "/" + source + ".wav";
    std::string gv_path = out_dir + "/" + source + ".gv01";
    media::write_wav(wav_path, buf);
    media::write_gv01(gv_path, fs);
    rois[source] = media::Roi{60.0, 66.0, 112.0};
    files.sources.push_back(source);
    files.wav_paths.push_back(wav_path);
    files.gv01_paths.push_back(gv_path);
  }
  write_text_file(files.annotation_path, corpus::serialize_annotations(annotation));
  write_text_file(files.roi_path, media::serialize_roi_csv(rois));
  return files;
}

/// Labeled inputs for a stand-in recognition task: k distinct signal patterns
/// shaped like real model inputs, class-identifiable in either modality.
/// Audio rows are (1, 19520); video rows are (1, 30, 96, 96).
inline std::pair<nn::Tensor, std::vector<int>> proxy_examples(uint64_t seed, int k_classes,
                                                              int per_class, bool audio) {
  if (k_classes < 2 || per_class < 1) fail("SpecError", "proxy task needs >= 2 classes, >= 1 each");
  Rng rng(Rng::derive(seed, 0x9c0d));
  const long n = static_cast<long>(k_classes) * per_class;
  std::vector<int> labels;
  nn::Tensor x = audio ? nn::Tensor({n, 1, media::kClipSamples})
                       : nn::Tensor({n, 1, media::kClipFrames, media::kRoiSide, media::kRoiSide});
  long row = x.numel() / n;
  for (int c = 0; c < k_classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      float* dst = x.ptr() + static_cast<long>(labels.size()) * row;
      labels.push_back(c);
      if (audio) {
        double f = 300.0 + 137.0 * c + rng.uniform(-5.0, 5.0);
        double am = 3.0 + 2.0 * c;
        for (long i = 0; i < media::kClipSamples; ++i) {
          double t = static_cast<double>(i) / media::kAudioRate;
          dst[i] = static_cast<float>(std::sin(2 * M_PI * f * t) *
                                          (0.6 + 0.4 * std::sin(2 * M_PI * am * t)) +
                                      0.1 * rng.uniform(-1.0, 1.0));
        }
      } else {
        double cx = 20.0 + 18.0 * (c % 4) + rng.uniform(-2.0, 2.0);
        double cy = 24.0 + 24.0 * (c / 4) + rng.uniform(-2.0, 2.0);
        double r = 8.0 + 1.5 * c;
        for (long f = 0; f < media::kClipFrames; ++f)
          for (long y = 0; y < media::kRoiSide; ++y)
            for (long xx = 0; xx < media::kRoiSide; ++xx) {
              double d2 = (xx - cx) * (xx - cx) + (y - cy) * (y - cy);
              double v = d2 <= r * r ? 1.0 : 0.1;
              dst[(f * media::kRoiSide + y) * media::kRoiSide + xx] =
                  static_cast<float>(v + 0.05 * rng.uniform(-1.0, 1.0));
            }
      }
    }
  }
  return {std::move(x), std::move(labels)};
}

/// Deterministic heatmap fixture: per row, `correct` hits from rounding the
/// target accuracy; misses spill entirely into the cyclically next class
/// column (laugh -> smile -> none -> laugh). Unspecified supports draw from
/// the seed.
inline eval::IntensityHeatmap gen_heatmap_fixture(uint64_t seed,
                                                  const std::array<double, 8>& accuracies,
                                                  const std::array<long, 8>* supports = nullptr) {
  Rng rng(Rng::derive(seed, 0x4ea7));
  eval::IntensityHeatmap h;
  for (int r = 0; r < eval::kHeatmapRows; ++r) {
    double acc = accuracies[static_cast<size_t>(r)];
    if (acc < 0.0 || acc > 1.0) fail("SpecError", "heatmap fixture accuracy outside [0,1]");
    long n = supports ? (*supports)[static_cast<size_t>(r)] : rng.randint(8, 40);
    if (n < 0) fail("SpecError", "heatmap fixture support must be >= 0");
    int truth_col = r <= 2 ? 0 : (r <= 6 ? 1 : 2);
    int spill_col = (truth_col + 1) % 3;
    long correct = std::lround(acc * static_cast<double>(n));
    h.counts[static_cast<size_t>(r)][static_cast<size_t>(truth_col)] = correct;
    h.counts[static_cast<size_t>(r)][static_cast<size_t>(spill_col)] = n - correct;
  }
  h.normalize();
  return h;
}

}  // namespace sl::synth
