#pragma once

#include <cmath>
#include <vector>

#include "sl/nn/tensor.hpp"

namespace sl::nn {

/// Row-wise stable softmax over (B, C) logits.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  if (logits.ndim() != 2) fail("ShapeMismatch", "softmax: expected (batch, classes)");
  const long b = logits.shape[0], c = logits.shape[1];
  TensorT<T> out(logits.shape);
  for (long i = 0; i < b; ++i) {
    const T* row = logits.ptr() + i * c;
    T* po = out.ptr() + i * c;
    double m = row[0];
    for (long j = 1; j < c; ++j) m = std::max(m, static_cast<double>(row[j]));
    double z = 0.0;
    for (long j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    for (long j = 0; j < c; ++j)
      po[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - m) / z);
  }
  return out;
}

/// Mean cross-entropy over a batch, computed from logits in log-sum-exp form.
/// Also returns the logits gradient (softmax - onehot) / B for backprop.
template <typename T>
struct CeResult {
  double loss = 0.0;
  TensorT<T> dlogits;
};

template <typename T>
CeResult<T> cross_entropy_with_logits(const TensorT<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) fail("ShapeMismatch", "cross_entropy: expected (batch, classes)");
  const long b = logits.shape[0], c = logits.shape[1];
  if (static_cast<long>(labels.size()) != b)
    fail("LengthMismatch", format("cross_entropy: %ld rows vs %zu labels", b, labels.size()));
  CeResult<T> res;
  res.dlogits = TensorT<T>(logits.shape);
  double total = 0.0;
  for (long i = 0; i < b; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) fail("InvalidLabel", format("label %d outside [0, %ld)", y, c));
    const T* row = logits.ptr() + i * c;
    double m = row[0];
    for (long j = 1; j < c; ++j) m = std::max(m, static_cast<double>(row[j]));
    double z = 0.0;
    for (long j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    double lse = m + std::log(z);
    total += lse - static_cast<double>(row[y]);
    T* pd = res.dlogits.ptr() + i * c;
    for (long j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(row[j]) - m) / z;
      pd[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(b));
    }
  }
  res.loss = total / static_cast<double>(b);
  return res;
}

}  // namespace sl::nn
