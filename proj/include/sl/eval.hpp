#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sl/common.hpp"
#include "sl/svg.hpp"
#include "sl/types.hpp"

namespace sl::eval {

// ---- confusion ---------------------------------------------------------------

/// 3x3 counts; rows = truth in class index order, columns = prediction.
struct ConfusionMatrix3 {
  std::array<std::array<long, 3>, 3> m{};

  long& at(Expression truth, Expression pred) {
    return m[static_cast<size_t>(truth)][static_cast<size_t>(pred)];
  }
  long at(Expression truth, Expression pred) const {
    return m[static_cast<size_t>(truth)][static_cast<size_t>(pred)];
  }
  long row_sum(int r) const { return m[static_cast<size_t>(r)][0] + m[static_cast<size_t>(r)][1] + m[static_cast<size_t>(r)][2]; }
  long col_sum(int c) const { return m[0][static_cast<size_t>(c)] + m[1][static_cast<size_t>(c)] + m[2][static_cast<size_t>(c)]; }
  long total() const { return row_sum(0) + row_sum(1) + row_sum(2); }
  bool operator==(const ConfusionMatrix3&) const = default;
};

inline ConfusionMatrix3 confusion(const std::vector<Expression>& predictions,
                                  const std::vector<Expression>& labels) {
  if (predictions.size() != labels.size())
    fail("LengthMismatch", format("confusion: %zu predictions vs %zu labels", predictions.size(),
                                  labels.size()));
  ConfusionMatrix3 cm;
  for (size_t i = 0; i < labels.size(); ++i) ++cm.at(labels[i], predictions[i]);
  return cm;
}

// ---- metrics -----------------------------------------------------------------

struct MetricsReport {
  std::array<double, 3> precision{}, recall{}, f1{};
  std::array<long, 3> support{};
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double micro_precision = 0, micro_recall = 0, micro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double uar = 0;  // mean recall over classes with support
};

/// Zero-denominator conventions: precision of a never-predicted class is 0,
/// F1 is 0 when precision + recall is 0, and classes without support are
/// excluded from UAR and the macro averages.
inline MetricsReport metrics(const ConfusionMatrix3& cm) {
  if (cm.total() == 0) fail("EmptyMatrix", "metrics: all confusion entries are zero");
  MetricsReport r;
  long correct = 0;
  long supported = 0;
  double sum_p = 0, sum_rec = 0, sum_f1 = 0;
  for (int c = 0; c < 3; ++c) {
    const long col = cm.col_sum(c), row = cm.row_sum(c);
    const long tp = cm.m[static_cast<size_t>(c)][static_cast<size_t>(c)];
    correct += tp;
    r.support[static_cast<size_t>(c)] = row;
    double p = col > 0 ? static_cast<double>(tp) / col : 0.0;
    double rec = row > 0 ? static_cast<double>(tp) / row : 0.0;
    double f = (p + rec) > 0 ? 2 * p * rec / (p + rec) : 0.0;
    r.precision[static_cast<size_t>(c)] = p;
    r.recall[static_cast<size_t>(c)] = rec;
    r.f1[static_cast<size_t>(c)] = f;
    if (row > 0) {
      ++supported;
      sum_p += p;
      sum_rec += rec;
      sum_f1 += f;
    }
    r.weighted_precision += p * row;
    r.weighted_recall += rec * row;
    r.weighted_f1 += f * row;
  }
  r.macro_precision = sum_p / supported;
  r.macro_recall = sum_rec / supported;
  r.macro_f1 = sum_f1 / supported;
  r.uar = r.macro_recall;
  const long total = cm.total();
  r.micro_precision = r.micro_recall = r.micro_f1 = static_cast<double>(correct) / total;
  r.weighted_precision /= total;
  r.weighted_recall /= total;
  r.weighted_f1 /= total;
  return r;
}

// ---- intensity heatmap ----------------------------------------------------------

constexpr int kHeatmapRows = 8;

/// Fixed row order: laugh intensities descending, then smile intensities
/// descending, then None.
inline int heatmap_row(Expression label, const std::optional<Intensity>& intensity) {
  if (label == Expression::None) return 7;
  if (!intensity) return -1;
  if (label == Expression::Laugh) {
    switch (*intensity) {
      case Intensity::High: return 0;
      case Intensity::Medium: return 1;
      case Intensity::Low: return 2;
      case Intensity::Subtle: return -1;
    }
  }
  switch (*intensity) {
    case Intensity::High: return 3;
    case Intensity::Medium: return 4;
    case Intensity::Low: return 5;
    case Intensity::Subtle: return 6;
  }
  return -1;
}

inline const char* heatmap_row_name(int row) {
  static const char* names[kHeatmapRows] = {"laugh-high", "laugh-medium", "laugh-low",
                                            "smile-high", "smile-medium", "smile-low",
                                            "smile-subtle", "none"};
  return row >= 0 && row < kHeatmapRows ? names[row] : "?";
}

struct IntensityHeatmap {
  std::array<std::array<long, 3>, kHeatmapRows> counts{};
  std::array<std::array<double, 3>, kHeatmapRows> percent{};
  std::array<bool, kHeatmapRows> supported{};
  bool has_counts = true;

  long row_support(int r) const {
    return counts[static_cast<size_t>(r)][0] + counts[static_cast<size_t>(r)][1] +
           counts[static_cast<size_t>(r)][2];
  }

  /// Recompute percentages from counts; zero-support rows stay flagged and
  /// all-zero instead of dividing.
  void normalize() {
    for (int r = 0; r < kHeatmapRows; ++r) {
      long n = row_support(r);
      supported[static_cast<size_t>(r)] = n > 0;
      for (int c = 0; c < 3; ++c)
        percent[static_cast<size_t>(r)][static_cast<size_t>(c)] =
            n > 0 ? 100.0 * counts[static_cast<size_t>(r)][static_cast<size_t>(c)] / n : 0.0;
    }
  }
};

struct LabeledPrediction {
  std::string id;
  Expression truth = Expression::None;
  std::optional<Intensity> intensity;
  Expression pred = Expression::None;
};

inline IntensityHeatmap intensity_heatmap(const std::vector<LabeledPrediction>& samples) {
  IntensityHeatmap h;
  for (const auto& s : samples) {
    int row = heatmap_row(s.truth, s.intensity);
    if (row < 0) fail("MissingIntensity", s.id + ": " + to_string(s.truth) + " sample lacks a legal intensity");
    ++h.counts[static_cast<size_t>(row)][static_cast<size_t>(s.pred)];
  }
  h.normalize();
  return h;
}

/// Sum the intensity rows back into the 3-class confusion matrix.
inline ConfusionMatrix3 collapse(const IntensityHeatmap& h) {
  if (!h.has_counts) fail("MissingRawCounts", "collapse: heatmap carries no raw counts");
  ConfusionMatrix3 cm;
  for (int r = 0; r < kHeatmapRows; ++r) {
    int truth = r <= 2 ? 0 : (r <= 6 ? 1 : 2);
    for (int c = 0; c < 3; ++c)
      cm.m[static_cast<size_t>(truth)][static_cast<size_t>(c)] +=
          h.counts[static_cast<size_t>(r)][static_cast<size_t>(c)];
  }
  return cm;
}

// ---- two-class remap -------------------------------------------------------------

/// Laugh-accuracy statistics before and after re-reading the smile-laugh
/// border: truth relabeled so medium/high smiles join Laugh and subtle/low
/// smiles join None; on the relabeled laugh rows that came from smiles, a
/// Smile prediction counts as Laugh. Percentages in [0, 100]; std is the
/// population standard deviation across heatmaps.
struct RemapReport {
  std::vector<double> remapped;  // per heatmap
  std::vector<double> baseline;
  double remap_mean = 0, remap_std = 0;
  double base_mean = 0, base_std = 0;
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}
}  // namespace detail

inline RemapReport remap_two_class(const std::vector<IntensityHeatmap>& heatmaps) {
  if (heatmaps.empty()) fail("EmptyMatrix", "remap: no heatmaps");
  RemapReport rep;
  for (const auto& h : heatmaps) {
    if (!h.has_counts) fail("MissingRawCounts", "remap: heatmap carries no raw counts");
    // baseline: plain laugh recall over the three laugh rows
    long laugh_n = 0, laugh_hit = 0;
    for (int r = 0; r <= 2; ++r) {
      laugh_n += h.row_support(r);
      laugh_hit += h.counts[static_cast<size_t>(r)][0];
    }
    // remap: smile-high and smile-medium rows become laugh truth, and on
    // those rows a Smile column prediction is re-read as Laugh
    long re_n = laugh_n, re_hit = laugh_hit;
    for (int r = 3; r <= 4; ++r) {
      re_n += h.row_support(r);
      re_hit += h.counts[static_cast<size_t>(r)][0] + h.counts[static_cast<size_t>(r)][1];
    }
    if (laugh_n == 0 || re_n == 0)
      fail("EmptyMatrix", "remap: heatmap has no laugh-truth support");
    rep.baseline.push_back(100.0 * laugh_hit / laugh_n);
    rep.remapped.push_back(100.0 * re_hit / re_n);
  }
  std::tie(rep.base_mean, rep.base_std) = detail::mean_std(rep.baseline);
  std::tie(rep.remap_mean, rep.remap_std) = detail::mean_std(rep.remapped);
  return rep;
}

// ---- csv shapes --------------------------------------------------------------------

inline std::string metrics_csv(const MetricsReport& r) {
  std::string out = "metric,laugh,smile,none,macro,micro,weighted\n";
  auto line = [&](const char* name, const std::array<double, 3>& per, double mac, double mic,
                  double wt) {
    out += format("%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", name, per[0], per[1], per[2], mac, mic, wt);
  };
  line("precision", r.precision, r.macro_precision, r.micro_precision, r.weighted_precision);
  line("recall", r.recall, r.macro_recall, r.micro_recall, r.weighted_recall);
  line("f1", r.f1, r.macro_f1, r.micro_f1, r.weighted_f1);
  out += format("uar,,,,%.6f,,\n", r.uar);
  return out;
}

inline constexpr const char* kHeatmapCsvHeader =
    "row,n_laugh,n_smile,n_none,pct_laugh,pct_smile,pct_none,supported";

inline std::string heatmap_csv(const IntensityHeatmap& h) {
  std::string out = kHeatmapCsvHeader;
  out += '\n';
  for (int r = 0; r < kHeatmapRows; ++r) {
    const auto& n = h.counts[static_cast<size_t>(r)];
    const auto& p = h.percent[static_cast<size_t>(r)];
    out += format("%s,%ld,%ld,%ld,%.4f,%.4f,%.4f,%d\n", heatmap_row_name(r), n[0], n[1], n[2],
                  p[0], p[1], p[2], h.supported[static_cast<size_t>(r)] ? 1 : 0);
  }
  return out;
}

/// Grid rendering: one cell per (intensity row, predicted class), white through
/// the class color by row percentage, annotated with the percentage.
inline std::string heatmap_svg(const IntensityHeatmap& h) {
  const double cell = 64, left = 120, top = 36;
  const char* col_color[3] = {"#d84315", "#1e88e5", "#757575"};
  const char* col_name[3] = {"Laugh", "Smile", "None"};
  svg::Doc doc(left + 3 * cell + 16, top + kHeatmapRows * cell + 16);
  for (int c = 0; c < 3; ++c)
    doc.text(left + c * cell + cell / 2, top - 10, col_name[c], 13, "middle");
  for (int r = 0; r < kHeatmapRows; ++r) {
    double y = top + r * cell;
    doc.text(left - 8, y + cell / 2 + 4, heatmap_row_name(r), 12, "end");
    for (int c = 0; c < 3; ++c) {
      double x = left + c * cell;
      double pct = h.percent[static_cast<size_t>(r)][static_cast<size_t>(c)];
      std::string fill = h.supported[static_cast<size_t>(r)]
                             ? svg::Doc::blend("#ffffff", col_color[c], pct / 100.0)
                             : std::string("#eeeeee");
      doc.rect(x, y, cell, cell, fill, "#cccccc");
      std::string label = h.supported[static_cast<size_t>(r)] ? format("%.1f", pct) : "-";
      doc.text(x + cell / 2, y + cell / 2 + 4, label, 12, "middle",
               pct > 60.0 ? "#ffffff" : "#222222");
    }
  }
  return doc.finish();
}

inline IntensityHeatmap parse_heatmap_csv(const std::string& text) {
  auto lines = split_on(text, '\n');
  IntensityHeatmap h;
  int row = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (i == 0) {
      if (line != kHeatmapCsvHeader) fail("MalformedLine", "heatmap csv: bad header");
      continue;
    }
    if (line.empty()) continue;
    auto f = split_on(line, ',');
    if (f.size() != 8) fail("MalformedLine", format("heatmap csv line %zu: expected 8 fields", i + 1));
    if (row >= kHeatmapRows) fail("MalformedLine", "heatmap csv: too many rows");
    if (f[0] != heatmap_row_name(row))
      fail("MalformedLine", format("heatmap csv line %zu: expected row %s", i + 1, heatmap_row_name(row)));
    for (int c = 0; c < 3; ++c)
      h.counts[static_cast<size_t>(row)][static_cast<size_t>(c)] = std::stol(f[static_cast<size_t>(c) + 1]);
    ++row;
  }
  if (row != kHeatmapRows) fail("MalformedLine", "heatmap csv: missing rows");
  h.normalize();
  return h;
}

}  // namespace sl::eval
