#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sl/rng.hpp"
#include "sl/types.hpp"

namespace sl::corpus {

/// A labeled time span inside one recording.
struct Segment {
  std::string source_id;
  int64_t start_ms = 0;
  int64_t end_ms = 0;
  Expression expression = Expression::None;
  std::optional<Intensity> intensity;

  int64_t length_ms() const { return end_ms - start_ms; }
  bool operator==(const Segment&) const = default;
};

/// Fixed-length analysis window geometry.
struct WindowSpec {
  int64_t duration_ms = 1220;
  int64_t overlap_ms = 400;

  int64_t hop_ms() const { return duration_ms - overlap_ms; }
  void validate() const {
    if (overlap_ms < 0 || overlap_ms >= duration_ms)
      fail("ConfigError", "window spec requires 0 <= overlap < duration");
  }
};

enum class Split : int { Unassigned = 0, Train = 1, Val = 2, Test = 3 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "?";
}

inline Split split_from_token(const std::string& tok) {
  if (tok == "train") return Split::Train;
  if (tok == "val") return Split::Val;
  if (tok == "test") return Split::Test;
  if (tok == "unassigned") return Split::Unassigned;
  fail("UnknownLabel", "unknown split token '" + tok + "'");
}

/// One training window. span_ms is the usable extent inside the owning
/// segment: equal to the window duration normally, shorter for sub-window
/// segments that get reflection-padded at clip time.
struct Window {
  std::string source_id;
  int64_t start_ms = 0;
  int64_t span_ms = 0;
  Expression label = Expression::None;
  std::optional<Intensity> intensity;
  Split split = Split::Unassigned;

  bool padded(const WindowSpec& spec) const { return span_ms < spec.duration_ms; }
  std::string id() const { return source_id + ":" + std::to_string(start_ms); }
};

struct ClassCounts {
  int64_t laughs = 0;
  int64_t smiles = 0;
  int64_t none = 0;

  int64_t total() const { return laughs + smiles + none; }
  int64_t of(Expression e) const {
    switch (e) {
      case Expression::Laugh: return laughs;
      case Expression::Smile: return smiles;
      case Expression::None: return none;
    }
    return 0;
  }
};

inline ClassCounts count_classes(const std::vector<Window>& windows) {
  ClassCounts c;
  for (const auto& w : windows) {
    if (w.label == Expression::Laugh) ++c.laughs;
    else if (w.label == Expression::Smile) ++c.smiles;
    else ++c.none;
  }
  return c;
}

// ---- annotation TSV --------------------------------------------------------

inline constexpr const char* kAnnotationHeader = "source\tlabel\tstart_ms\tend_ms\tintensity";

namespace detail {
inline int64_t parse_ms(const std::string& tok, size_t line_no) {
  if (tok.empty()) fail("MalformedLine", format("line %zu: empty time field", line_no));
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    fail("MalformedLine", format("line %zu: bad integer '%s'", line_no, tok.c_str()));
  }
  if (pos != tok.size()) fail("MalformedLine", format("line %zu: bad integer '%s'", line_no, tok.c_str()));
  return v;
}
}  // namespace detail

/// Parse the tab-separated annotation export. First line must be the header.
/// Output is sorted by (source_id, start_ms).
inline std::vector<Segment> parse_annotations(const std::string& text) {
  std::vector<Segment> out;
  auto lines = split_on(text, '\n');
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t line_no = i + 1;
    if (i == 0) {
      if (line != kAnnotationHeader)
        fail("MalformedLine", format("line 1: expected header '%s'", kAnnotationHeader));
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 5)
      fail("MalformedLine", format("line %zu: expected 5 tab-separated fields, got %zu", line_no, fields.size()));
    Segment seg;
    seg.source_id = fields[0];
    if (seg.source_id.empty()) fail("MalformedLine", format("line %zu: empty source", line_no));
    seg.expression = expression_from_token(fields[1]);
    seg.start_ms = detail::parse_ms(fields[2], line_no);
    seg.end_ms = detail::parse_ms(fields[3], line_no);
    if (seg.end_ms <= seg.start_ms)
      fail("InvertedSpan", format("line %zu: end %lld <= start %lld", line_no,
                                  static_cast<long long>(seg.end_ms), static_cast<long long>(seg.start_ms)));
    seg.intensity = intensity_from_token(fields[4]);
    check_intensity_legal(seg.expression, seg.intensity, format("line %zu", line_no));
    out.push_back(std::move(seg));
  }
  std::stable_sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
    if (a.source_id != b.source_id) return a.source_id < b.source_id;
    return a.start_ms < b.start_ms;
  });
  return out;
}

inline std::string serialize_annotations(const std::vector<Segment>& segments) {
  std::string out = kAnnotationHeader;
  out += '\n';
  for (const auto& s : segments) {
    out += s.source_id;
    out += '\t';
    out += to_string(s.expression);
    out += '\t';
    out += std::to_string(s.start_ms);
    out += '\t';
    out += std::to_string(s.end_ms);
    out += '\t';
    out += intensity_to_string(s.intensity);
    out += '\n';
  }
  return out;
}

// ---- segment derivation and windowing --------------------------------------

/// Fill the gaps between annotated spans (and the recording edges) with None
/// segments. `segments` must all share one source and must not overlap.
inline std::vector<Segment> derive_none_segments(const std::vector<Segment>& segments,
                                                 int64_t recording_duration_ms) {
  std::vector<Segment> sorted = segments;
  std::sort(sorted.begin(), sorted.end(),
            [](const Segment& a, const Segment& b) { return a.start_ms < b.start_ms; });
  std::vector<Segment> out;
  int64_t cursor = 0;
  const std::string source = sorted.empty() ? "" : sorted.front().source_id;
  for (const auto& s : sorted) {
    if (s.source_id != source)
      fail("OverlappingAnnotations", "segments from multiple sources: " + source + " vs " + s.source_id);
    if (s.start_ms < cursor)
      fail("OverlappingAnnotations",
           format("%s: segment at %lld overlaps previous span ending %lld", s.source_id.c_str(),
                  static_cast<long long>(s.start_ms), static_cast<long long>(cursor)));
    if (s.end_ms > recording_duration_ms)
      fail("OverlappingAnnotations",
           format("%s: segment end %lld beyond recording duration %lld", s.source_id.c_str(),
                  static_cast<long long>(s.end_ms), static_cast<long long>(recording_duration_ms)));
    if (s.start_ms > cursor) {
      Segment gap;
      gap.source_id = s.source_id;
      gap.start_ms = cursor;
      gap.end_ms = s.start_ms;
      gap.expression = Expression::None;
      out.push_back(gap);
    }
    cursor = s.end_ms;
  }
  if (cursor < recording_duration_ms) {
    Segment gap;
    gap.source_id = source;
    gap.start_ms = cursor;
    gap.end_ms = recording_duration_ms;
    gap.expression = Expression::None;
    out.push_back(gap);
  }
  return out;
}

/// Slide fixed windows over each segment. Segments at least one window long
/// yield floor((L - duration)/hop) + 1 windows; shorter segments yield one
/// window marked for reflection padding via span_ms < duration.
inline std::vector<Window> extract_windows(const std::vector<Segment>& segments,
                                           const WindowSpec& spec) {
  spec.validate();
  std::vector<Window> out;
  for (const auto& seg : segments) {
    const int64_t len = seg.length_ms();
    if (len <= 0) continue;
    Window w;
    w.source_id = seg.source_id;
    w.label = seg.expression;
    w.intensity = seg.intensity;
    if (len < spec.duration_ms) {
      w.start_ms = seg.start_ms;
      w.span_ms = len;
      out.push_back(w);
      continue;
    }
    const int64_t count = (len - spec.duration_ms) / spec.hop_ms() + 1;
    for (int64_t k = 0; k < count; ++k) {
      w.start_ms = seg.start_ms + k * spec.hop_ms();
      w.span_ms = spec.duration_ms;
      out.push_back(w);
    }
  }
  return out;
}

// ---- splitting and sampling -------------------------------------------------

/// Stratified split: per class, floor(r_train*n) train then floor(r_val*n) val,
/// remainder test, over a seeded permutation of that class's windows.
inline void split_dataset(std::vector<Window>& windows, std::array<double, 3> ratios,
                          uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) fail("ConfigError", "split ratios must sum to 1");
  Rng rng(Rng::derive(seed, /*stream=*/0x5917));
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < windows.size(); ++i)
      if (static_cast<int>(windows[i].label) == c) idx.push_back(i);
    if (idx.empty()) fail("EmptyClass", std::string("no windows of class ") + to_string(static_cast<Expression>(c)));
    rng.shuffle(idx);
    const auto n = static_cast<int64_t>(idx.size());
    const int64_t n_train = static_cast<int64_t>(std::floor(ratios[0] * static_cast<double>(n)));
    const int64_t n_val = static_cast<int64_t>(std::floor(ratios[1] * static_cast<double>(n)));
    for (int64_t i = 0; i < n; ++i) {
      Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
      windows[idx[static_cast<size_t>(i)]].split = s;
    }
  }
}

/// Inverse-frequency class weights, normalized to sum to 1 across classes.
/// Drawing windows proportionally to their class weight makes the expected
/// class distribution uniform.
inline std::array<double, 3> sampler_weights(const ClassCounts& counts) {
  std::array<double, 3> w{};
  double total = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t n = counts.of(static_cast<Expression>(c));
    if (n <= 0) fail("EmptyClass", std::string("class ") + to_string(static_cast<Expression>(c)) + " has no windows");
    w[static_cast<size_t>(c)] = 1.0 / static_cast<double>(n);
    total += w[static_cast<size_t>(c)];
  }
  for (auto& v : w) v /= total;
  return w;
}

/// Draw `batch_size` indices with replacement, proportional to per-window
/// weights. Advancing `rng` is the only side effect.
inline std::vector<size_t> sample_batch(Rng& rng, const std::vector<double>& weights,
                                        size_t batch_size) {
  if (batch_size < 1) fail("ConfigError", "batch_size must be >= 1");
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) fail("ConfigError", "negative sampling weight");
    acc += weights[i];
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) fail("EmptyClass", "all sampling weights are zero");
  std::vector<size_t> out(batch_size);
  for (size_t b = 0; b < batch_size; ++b) {
    double u = rng.uniform() * acc;
    size_t lo = static_cast<size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    // guard against u == acc after rounding
    if (lo >= cdf.size()) lo = cdf.size() - 1;
    while (weights[lo] == 0.0 && lo + 1 < cdf.size()) ++lo;
    out[b] = lo;
  }
  return out;
}

// ---- split manifest CSV ------------------------------------------------------

inline constexpr const char* kManifestHeader = "window_id,source,start_ms,label,intensity,split";

inline std::string serialize_manifest(const std::vector<Window>& windows) {
  std::string out = kManifestHeader;
  out += '\n';
  for (const auto& w : windows) {
    out += w.id();
    out += ',';
    out += w.source_id;
    out += ',';
    out += std::to_string(w.start_ms);
    out += ',';
    out += to_string(w.label);
    out += ',';
    out += intensity_to_string(w.intensity);
    out += ',';
    out += to_string(w.split);
    out += '\n';
  }
  return out;
}

struct ManifestRow {
  std::string window_id;
  std::string source_id;
  int64_t start_ms = 0;
  Expression label = Expression::None;
  std::optional<Intensity> intensity;
  Split split = Split::Unassigned;
};

inline std::vector<ManifestRow> parse_manifest(const std::string& text) {
  auto lines = split_on(text, '\n');
  std::vector<ManifestRow> rows;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (i == 0) {
      if (line != kManifestHeader) fail("MalformedLine", "manifest: bad header");
      continue;
    }
    if (line.empty()) continue;
    auto f = split_on(line, ',');
    if (f.size() != 6) fail("MalformedLine", format("manifest line %zu: expected 6 fields", i + 1));
    ManifestRow r;
    r.window_id = f[0];
    r.source_id = f[1];
    r.start_ms = detail::parse_ms(f[2], i + 1);
    r.label = expression_from_token(f[3]);
    r.intensity = intensity_from_token(f[4]);
    r.split = split_from_token(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sl::corpus
