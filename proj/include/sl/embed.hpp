#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sl/common.hpp"
#include "sl/rng.hpp"
#include "sl/svg.hpp"
#include "sl/types.hpp"

namespace sl::embed {

struct EmbeddingSet {
  std::vector<std::vector<double>> vectors;  // N x D
  std::vector<Expression> labels;
  std::vector<std::optional<Intensity>> intensities;
  std::vector<std::string> ids;

  size_t size() const { return vectors.size(); }
  void validate() const {
    if (vectors.size() < 2) fail("ConfigError", "embedding set needs at least 2 points");
    for (const auto& v : vectors)
      for (double x : v)
        if (!std::isfinite(x)) fail("ConfigError", "embedding set has non-finite entries");
  }
};

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_late = 0.8;
  int momentum_switch = 250;
  uint64_t seed = 0;

  void validate(size_t n) const {
    if (!(perplexity > 1.0) || perplexity >= static_cast<double>(n))
      fail("ConfigError", format("perplexity %.1f must lie in (1, N=%zu)", perplexity, n));
    if (iterations < 250) fail("ConfigError", "tsne needs at least 250 iterations");
  }
};

struct Projection {
  std::vector<std::array<double, 2>> points;
  double kl_initial = 0.0;
  double kl_final = 0.0;
};

/// KL(P||Q) = sum p log(p/q) over p > 0 with q floored at 1e-12.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) fail("ShapeMismatch", "kl_divergence: length mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0 || q[i] < 0) fail("ConfigError", "kl_divergence: negative entries");
    if (p[i] > 0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  }
  return kl;
}

/// Row-stochastic Gaussian affinities. Each row's bandwidth is found by
/// binary search so the conditional distribution's base-2 entropy matches
/// log2(perplexity) within 1e-5.
inline std::vector<double> conditional_affinities(const std::vector<std::vector<double>>& x,
                                                  double perplexity) {
  const size_t n = x.size();
  if (perplexity >= static_cast<double>(n)) fail("ConfigError", "perplexity must be < N");
  std::vector<double> d2(n * n, 0.0);
  double d2_max = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < x[i].size(); ++k) {
        double diff = x[i][k] - x[j][k];
        acc += diff * diff;
      }
      d2[i * n + j] = d2[j * n + i] = acc;
      d2_max = std::max(d2_max, acc);
    }
  if (d2_max == 0.0) fail("DegenerateDistances", "all pairwise distances are zero");

  const double target_h = std::log2(perplexity);
  std::vector<double> cond(n * n, 0.0);
  std::vector<double> row(n);
  for (size_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (int iter = 0; iter < 50; ++iter) {
      // conditional row at this beta, in base-2 entropy
      double zsum = 0.0;
      for (size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * d2[i * n + j]);
        zsum += row[j];
      }
      if (zsum <= 0.0) {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
        continue;
      }
      double hsum = 0.0;
      for (size_t j = 0; j < n; ++j) {
        if (row[j] <= 0.0) continue;
        double p = row[j] / zsum;
        hsum -= p * std::log2(p);
      }
      h = hsum;
      double diff = h - target_h;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta_lo + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = beta_lo == 0.0 ? beta / 2.0 : (beta_lo + beta_hi) / 2.0;
      }
    }
    double zsum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0 : std::exp(-beta * d2[i * n + j]);
      zsum += row[j];
    }
    for (size_t j = 0; j < n; ++j) cond[i * n + j] = zsum > 0 ? row[j] / zsum : 0.0;
  }
  return cond;
}

/// Joint affinities P = (P_cond + P_cond^T) / 2N; sums to 1.
inline std::vector<double> pairwise_affinities(const std::vector<std::vector<double>>& x,
                                               double perplexity) {
  const size_t n = x.size();
  auto cond = conditional_affinities(x, perplexity);
  std::vector<double> p(n * n, 0.0);
  const double norm = 1.0 / (2.0 * static_cast<double>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * norm;
  return p;
}

namespace detail {

/// Student-t joint Q and its unnormalized weights; returns the normalizer.
inline double q_matrix(const std::vector<std::array<double, 2>>& y, std::vector<double>& w,
                       std::vector<double>& q) {
  const size_t n = y.size();
  double z = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (i == j) {
        w[i * n + j] = 0.0;
        continue;
      }
      double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      double v = 1.0 / (1.0 + dx * dx + dy * dy);
      w[i * n + j] = v;
      z += v;
    }
  for (size_t i = 0; i < n * n; ++i) q[i] = w[i] / z;
  return z;
}

inline void recenter(std::vector<std::array<double, 2>>& y) {
  double mx = 0, my = 0;
  for (const auto& p : y) {
    mx += p[0];
    my += p[1];
  }
  mx /= static_cast<double>(y.size());
  my /= static_cast<double>(y.size());
  for (auto& p : y) {
    p[0] -= mx;
    p[1] -= my;
  }
}

}  // namespace detail

/// Exact O(N^2) t-SNE with early exaggeration and momentum descent.
inline Projection tsne(const EmbeddingSet& set, const TsneConfig& cfg) {
  set.validate();
  cfg.validate(set.size());
  const size_t n = set.size();
  std::vector<double> p = pairwise_affinities(set.vectors, cfg.perplexity);

  Rng rng(Rng::derive(cfg.seed, 0x75e));
  std::vector<std::array<double, 2>> y(n);
  for (auto& pt : y) {
    pt[0] = rng.normal() * 1e-4;
    pt[1] = rng.normal() * 1e-4;
  }
  std::vector<std::array<double, 2>> vel(n, {0.0, 0.0});
  std::vector<double> w(n * n), q(n * n);

  Projection proj;
  std::vector<double> p_used(n * n);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double ex = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    for (size_t i = 0; i < n * n; ++i) p_used[i] = p[i] * ex;
    detail::q_matrix(y, w, q);
    if (it == 0) proj.kl_initial = kl_divergence(p, q);
    const double momentum = it < cfg.momentum_switch ? cfg.momentum_start : cfg.momentum_late;
    for (size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double coeff = 4.0 * (p_used[i * n + j] - q[i * n + j]) * w[i * n + j];
        gx += coeff * (y[i][0] - y[j][0]);
        gy += coeff * (y[i][1] - y[j][1]);
      }
      if (!std::isfinite(gx) || !std::isfinite(gy))
        fail("NonFiniteUpdate", format("tsne: non-finite gradient at iteration %d", it));
      vel[i][0] = momentum * vel[i][0] - cfg.learning_rate * gx;
      vel[i][1] = momentum * vel[i][1] - cfg.learning_rate * gy;
    }
    for (size_t i = 0; i < n; ++i) {
      y[i][0] += vel[i][0];
      y[i][1] += vel[i][1];
      if (!std::isfinite(y[i][0]) || !std::isfinite(y[i][1]))
        fail("NonFiniteUpdate", format("tsne: non-finite position at iteration %d", it));
    }
    detail::recenter(y);
  }
  detail::q_matrix(y, w, q);
  proj.kl_final = kl_divergence(p, q);
  proj.points = std::move(y);
  return proj;
}

// ---- export -----------------------------------------------------------------------

/// Marker color is a pure function of (label, intensity): warm oranges for
/// laughs, blues for smiles (lighter = weaker), gray for None.
inline std::string marker_color(Expression label, const std::optional<Intensity>& intensity) {
  if (label == Expression::None) return "#9e9e9e";
  Intensity level = intensity.value_or(Intensity::Medium);
  if (label == Expression::Laugh) {
    switch (level) {
      case Intensity::High: return "#d84315";
      case Intensity::Medium: return "#f57c00";
      default: return "#ffb74d";
    }
  }
  switch (level) {
    case Intensity::High: return "#0d47a1";
    case Intensity::Medium: return "#1e88e5";
    case Intensity::Low: return "#64b5f6";
    case Intensity::Subtle: return "#b3d7f2";
  }
  return "#9e9e9e";
}

inline std::string projection_csv(const Projection& proj, const EmbeddingSet& set) {
  std::string out = "x,y,label,intensity\n";
  for (size_t i = 0; i < proj.points.size(); ++i)
    out += format("%.6f,%.6f,%s,%s\n", proj.points[i][0], proj.points[i][1],
                  to_string(set.labels[i]), intensity_to_string(set.intensities[i]).c_str());
  return out;
}

inline std::string projection_svg(const Projection& proj, const EmbeddingSet& set,
                                  double size = 640.0) {
  svg::Doc doc(size, size);
  if (!proj.points.empty()) {
    double lo = proj.points[0][0], hi = lo;
    for (const auto& p : proj.points) {
      lo = std::min({lo, p[0], p[1]});
      hi = std::max({hi, p[0], p[1]});
    }
    double span = hi - lo;
    if (span <= 0) span = 1.0;
    const double pad = 0.07 * size;
    auto sx = [&](double v) { return pad + (v - lo) / span * (size - 2 * pad); };
    for (size_t i = 0; i < proj.points.size(); ++i)
      doc.circle(sx(proj.points[i][0]), size - sx(proj.points[i][1]), 4.0,
                 marker_color(set.labels[i], set.intensities[i]));
  }
  return doc.finish();
}

inline std::string embeddings_csv(const EmbeddingSet& set) {
  if (set.vectors.empty()) return "id,label,intensity\n";
  const size_t d = set.vectors[0].size();
  std::string out = "id,label,intensity";
  for (size_t k = 0; k < d; ++k) out += format(",d%zu", k);
  out += '\n';
  for (size_t i = 0; i < set.vectors.size(); ++i) {
    out += set.ids.size() == set.vectors.size() ? set.ids[i] : std::to_string(i);
    out += ',';
    out += to_string(set.labels[i]);
    out += ',';
    out += intensity_to_string(set.intensities[i]);
    for (size_t k = 0; k < d; ++k) out += format(",%.6g", set.vectors[i][k]);
    out += '\n';
  }
  return out;
}

}  // namespace sl::embed
