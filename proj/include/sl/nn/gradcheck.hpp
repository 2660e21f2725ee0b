#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sl/nn/graph.hpp"
#include "sl/nn/layers.hpp"
#include "sl/nn/loss.hpp"

namespace sl::nn {

// Central finite-difference verification harness. Always double precision:
// truncation error ~ eps^2 and roundoff ~ DBL_EPSILON/eps are both far below
// the tolerances when eps = 1e-5.

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  long checked = 0;
};

namespace detail {
inline void track(GradCheckResult& r, double analytic, double numeric) {
  double abs_err = std::abs(analytic - numeric);
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  r.max_rel_err = std::max(r.max_rel_err, abs_err / denom);
  r.max_abs_err = std::max(r.max_abs_err, abs_err);
  ++r.checked;
}
}  // namespace detail

/// Check one layer: loss = sum(w .* layer(x)) with fixed random weights w so
/// every output contributes. `prepare` runs before each forward; use it to
/// reseed stochastic layers so repeated forwards see identical draws.
inline GradCheckResult gradcheck_layer(LayerT<double>& layer, const TensorT<double>& x0,
                                       Rng& rng, double eps = 1e-5,
                                       const std::function<void()>& prepare = {}) {
  auto oshape = layer.out_shape(x0.shape);
  TensorT<double> w(oshape);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);

  auto loss_of = [&](const TensorT<double>& x) {
    if (prepare) prepare();
    TensorT<double> y = layer.forward(x, false);
    double acc = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) acc += w.data[i] * y.data[i];
    return acc;
  };

  // analytic pass
  std::vector<std::pair<std::string, ParamT<double>*>> params;
  layer.visit_params("", [&](const std::string& name, ParamT<double>& p) {
    p.zero_grad();
    params.push_back({name, &p});
  });
  if (prepare) prepare();
  layer.forward(x0, true);
  TensorT<double> dx = layer.backward(w);

  GradCheckResult res;
  TensorT<double> x = x0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double keep = x.data[i];
    x.data[i] = keep + eps;
    double up = loss_of(x);
    x.data[i] = keep - eps;
    double dn = loss_of(x);
    x.data[i] = keep;
    detail::track(res, dx.data[i], (up - dn) / (2 * eps));
  }
  for (auto& [name, p] : params) {
    if (!p->trainable) continue;
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      double keep = p->value.data[i];
      p->value.data[i] = keep + eps;
      double up = loss_of(x0);
      p->value.data[i] = keep - eps;
      double dn = loss_of(x0);
      p->value.data[i] = keep;
      detail::track(res, p->grad.data[i], (up - dn) / (2 * eps));
    }
  }
  return res;
}

/// Check a whole graph under the real training loss (mean cross-entropy).
inline GradCheckResult gradcheck_graph(GraphT<double>& graph, const TensorT<double>& x,
                                       const std::vector<int>& labels, double eps = 1e-5) {
  auto loss_of = [&]() {
    TensorT<double> logits = graph.forward(x, false);
    return cross_entropy_with_logits(logits, labels).loss;
  };
  graph.zero_grad();
  TensorT<double> logits = graph.forward(x, true);
  auto ce = cross_entropy_with_logits(logits, labels);
  graph.backward(ce.dlogits);

  GradCheckResult res;
  for (auto& [name, p] : graph.params()) {
    if (!p->trainable) continue;
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      double keep = p->value.data[i];
      p->value.data[i] = keep + eps;
      double up = loss_of();
      p->value.data[i] = keep - eps;
      double dn = loss_of();
      p->value.data[i] = keep;
      detail::track(res, p->grad.data[i], (up - dn) / (2 * eps));
    }
  }
  return res;
}

}  // namespace sl::nn
