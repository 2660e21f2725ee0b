#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sl/corpus.hpp"
#include "sl/gv01.hpp"
#include "sl/media.hpp"
#include "sl/nn/tensor.hpp"
#include "sl/wav.hpp"

namespace sl::data {

struct PrepareConfig {
  corpus::WindowSpec window{};
  std::array<double, 3> ratios{0.7, 0.15, 0.15};  // train, val, test
  uint64_t seed = 7;
};

namespace detail {

inline int64_t media_duration_ms(const media::AudioBuffer& a, const media::FrameStack& v) {
  int64_t audio_ms = static_cast<int64_t>(a.samples.size()) * 1000 / a.rate;
  auto video_ms = static_cast<int64_t>(std::floor(v.t * 1000.0 / v.fps));
  return std::min(audio_ms, video_ms);
}

inline void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) fail("MissingModality", path + " not found");
}

}  // namespace detail

/// Rebuild the deterministic window layout for a corpus directory: labeled
/// segments from annotations.tsv, None spans from the gaps (bounded by the
/// shorter of the two media streams), fixed windows over everything.
inline std::vector<corpus::Window> layout_windows(const std::string& dir,
                                                  const corpus::WindowSpec& spec) {
  auto segments = corpus::parse_annotations(read_text_file(dir + "/annotations.tsv"));
  std::map<std::string, std::vector<corpus::Segment>> by_source;
  for (const auto& s : segments) by_source[s.source_id].push_back(s);

  std::vector<corpus::Window> windows;
  for (auto& [source, segs] : by_source) {
    std::string wav_path = dir + "/" + source + ".wav";
    std::string gv_path = dir + "/" + source + ".gv01";
    detail::require_file(wav_path);
    detail::require_file(gv_path);
    auto audio = media::read_wav(wav_path);
    auto video = media::read_gv01(gv_path);
    int64_t duration = detail::media_duration_ms(audio, video);
    auto nones = corpus::derive_none_segments(segs, duration);
    auto all = segs;
    all.insert(all.end(), nones.begin(), nones.end());
    std::sort(all.begin(), all.end(), [](const corpus::Segment& a, const corpus::Segment& b) {
      return a.start_ms < b.start_ms;
    });
    auto w = corpus::extract_windows(all, spec);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  return windows;
}

/// Lay out, split, and persist manifest.csv next to the corpus files.
inline std::vector<corpus::Window> prepare(const std::string& dir, const PrepareConfig& cfg) {
  auto windows = layout_windows(dir, cfg.window);
  corpus::split_dataset(windows, cfg.ratios, cfg.seed);
  write_text_file(dir + "/manifest.csv", corpus::serialize_manifest(windows));
  return windows;
}

/// A corpus directory decoded and ready for clip cutting: windows carry their
/// split assignment from manifest.csv; each source holds 16 kHz mono audio and
/// the 96x96 mouth-region frame track.
struct Dataset {
  std::string dir;
  corpus::WindowSpec window_spec{};
  std::vector<corpus::Window> windows;

  struct Source {
    media::AudioBuffer audio;
    media::FrameStack video;
  };
  std::map<std::string, Source> sources;

  std::vector<size_t> indices_of(corpus::Split s) const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < windows.size(); ++i)
      if (windows[i].split == s) idx.push_back(i);
    return idx;
  }

  corpus::ClassCounts counts_of(corpus::Split s) const {
    std::vector<corpus::Window> sub;
    for (const auto& w : windows)
      if (w.split == s) sub.push_back(w);
    return corpus::count_classes(sub);
  }

  media::ClipPair clip(size_t index) const {
    const auto& w = windows.at(index);
    auto it = sources.find(w.source_id);
    if (it == sources.end()) fail("MissingModality", "no media for source " + w.source_id);
    return media::normalize_clip(media::cut_clip(it->second.audio, it->second.video, w));
  }
};

/// Load manifest + media. The window layout is re-derived from annotations
/// (the manifest only records split assignments) and cross-checked by id.
inline Dataset load_dataset(const std::string& dir, const corpus::WindowSpec& spec = {},
                            bool with_media = true) {
  Dataset ds;
  ds.dir = dir;
  ds.window_spec = spec;
  ds.windows = layout_windows(dir, spec);

  auto rows = corpus::parse_manifest(read_text_file(dir + "/manifest.csv"));
  std::map<std::string, corpus::Split> split_of;
  for (const auto& r : rows) {
    if (!split_of.emplace(r.window_id, r.split).second)
      fail("ManifestMismatch", "duplicate window id " + r.window_id);
  }
  if (split_of.size() != ds.windows.size())
    fail("ManifestMismatch",
         format("manifest lists %zu windows, layout produced %zu", split_of.size(),
                ds.windows.size()));
  for (auto& w : ds.windows) {
    auto it = split_of.find(w.id());
    if (it == split_of.end()) fail("ManifestMismatch", "window " + w.id() + " missing from manifest");
    w.split = it->second;
  }

  if (with_media) {
    auto rois = media::parse_roi_csv(read_text_file(dir + "/roi.csv"));
    std::map<std::string, bool> seen;
    for (const auto& w : ds.windows) {
      if (seen.emplace(w.source_id, true).second == false) continue;
      auto roi_it = rois.find(w.source_id);
      if (roi_it == rois.end()) fail("ConfigError", "no roi entry for source " + w.source_id);
      Dataset::Source src;
      src.audio = media::resample_audio(media::read_wav(dir + "/" + w.source_id + ".wav"),
                                        media::kAudioRate);
      src.video = media::crop_roi(media::read_gv01(dir + "/" + w.source_id + ".gv01"),
                                  roi_it->second);
      ds.sources.emplace(w.source_id, std::move(src));
    }
  }
  return ds;
}

// ---- batch assembly ---------------------------------------------------------

inline nn::Tensor audio_batch(const std::vector<media::ClipPair>& clips) {
  if (clips.empty()) fail("ConfigError", "empty batch");
  const long b = static_cast<long>(clips.size());
  nn::Tensor t({b, 1, media::kClipSamples});
  for (long i = 0; i < b; ++i) {
    const auto& a = clips[static_cast<size_t>(i)].audio;
    if (static_cast<long>(a.size()) != media::kClipSamples)
      fail("ConfigError", "clip audio has wrong length");
    std::memcpy(t.data.data() + i * media::kClipSamples, a.data(),
                sizeof(float) * media::kClipSamples);
  }
  return t;
}

inline nn::Tensor video_batch(const std::vector<media::ClipPair>& clips) {
  if (clips.empty()) fail("ConfigError", "empty batch");
  const long b = static_cast<long>(clips.size());
  const long elems = media::kClipFrames * media::kRoiSide * media::kRoiSide;
  nn::Tensor t({b, 1, media::kClipFrames, media::kRoiSide, media::kRoiSide});
  for (long i = 0; i < b; ++i) {
    const auto& v = clips[static_cast<size_t>(i)].video;
    if (static_cast<long>(v.size()) != elems) fail("ConfigError", "clip video has wrong extent");
    std::memcpy(t.data.data() + i * elems, v.data(), sizeof(float) * static_cast<size_t>(elems));
  }
  return t;
}

inline std::vector<int> label_batch(const std::vector<media::ClipPair>& clips) {
  std::vector<int> y;
  y.reserve(clips.size());
  for (const auto& c : clips) y.push_back(static_cast<int>(c.label));
  return y;
}

}  // namespace sl::data
