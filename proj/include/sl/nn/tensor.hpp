#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sl/common.hpp"

namespace sl::nn {

/// Dense row-major N-d array. T is float for training, double for gradient
/// verification.
template <typename T>
struct TensorT {
  std::vector<long> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<long> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  TensorT(std::vector<long> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(numel_of(shape)))
      fail("ShapeMismatch", "tensor data length does not match shape");
  }

  static long numel_of(const std::vector<long>& s) {
    long n = 1;
    for (long e : s) {
      if (e <= 0) fail("ShapeMismatch", "tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  long numel() const { return static_cast<long>(data.size()); }
  long dim(size_t i) const { return shape.at(i); }
  size_t ndim() const { return shape.size(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  TensorT<T> reshaped(std::vector<long> s) const {
    TensorT<T> out;
    out.shape = std::move(s);
    if (numel_of(out.shape) != numel()) fail("ShapeMismatch", "reshape changes element count");
    out.data = data;
    return out;
  }

  bool same_shape(const TensorT<T>& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<long>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

using Tensor = TensorT<float>;

/// Named value/gradient pair. Full dotted names are assigned by the graph.
template <typename T>
struct ParamT {
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  void init_shape(std::vector<long> s) {
    value = TensorT<T>(s);
    grad = TensorT<T>(std::move(s));
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

}  // namespace sl::nn
