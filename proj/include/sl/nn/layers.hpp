#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sl/nn/gemm.hpp"
#include "sl/nn/tensor.hpp"
#include "sl/rng.hpp"

namespace sl::nn {

template <typename T>
using ParamFn = std::function<void(const std::string&, ParamT<T>&)>;
template <typename T>
using BufferFn = std::function<void(const std::string&, TensorT<T>&)>;

/// Base of every differentiable layer. forward(x, want_grad=true) caches what
/// backward needs; backward without a prior forward throws NoForwardState.
/// Parameter gradients accumulate across backward calls until zero_grad.
template <typename T>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual std::string kind() const = 0;
  virtual std::vector<long> out_shape(const std::vector<long>& in) const = 0;
  virtual TensorT<T> forward(const TensorT<T>& x, bool want_grad) = 0;
  virtual TensorT<T> backward(const TensorT<T>& dy) = 0;
  virtual void visit_params(const std::string&, const ParamFn<T>&) {}
  virtual void visit_buffers(const std::string&, const BufferFn<T>&) {}
  virtual void set_train(bool) {}
  /// Draw initial parameter values. Called once, in graph order.
  virtual void init_params(Rng&) {}
  /// Give stochastic layers their own stream; counter advances per consumer.
  virtual void seed_streams(uint64_t, uint64_t&) {}

 protected:
  [[noreturn]] void no_state() const {
    fail("NoForwardState", kind() + ": backward without cached forward");
  }
};

namespace detail {

template <typename T>
void he_uniform(TensorT<T>& w, long fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

inline void check_channels(const char* kind, long got, long want) {
  if (got != want)
    fail("ShapeMismatch", format("%s: input channels %ld, layer expects %ld", kind, got, want));
}

}  // namespace detail

// ---- convolution -------------------------------------------------------------

/// N-d cross-correlation (rank 1..3) via im2col + GEMM, one sample at a time.
/// Output extents follow floor((in + 2p - d(k-1) - 1)/s) + 1.
template <typename T>
class ConvNdT : public LayerT<T> {
 public:
  ConvNdT(int rank, long in_c, long out_c, std::array<long, 3> k, std::array<long, 3> s,
          std::array<long, 3> p, std::array<long, 3> d)
      : rank_(rank), in_c_(in_c), out_c_(out_c), k_(k), s_(s), p_(p), d_(d) {
    if (rank < 1 || rank > 3) fail("ConfigError", "conv rank must be 1..3");
    for (int i = 0; i < rank; ++i)
      if (k_[i] < 1 || s_[i] < 1 || d_[i] < 1 || p_[i] < 0)
        fail("ConfigError", "conv geometry must satisfy k,s,d >= 1 and p >= 0");
    std::vector<long> wshape{out_c_, in_c_};
    for (int i = 0; i < rank; ++i) wshape.push_back(k_[i]);
    weight.init_shape(wshape);
    bias.init_shape({out_c_});
    kernel_elems_ = k_[0] * (rank > 1 ? k_[1] : 1) * (rank > 2 ? k_[2] : 1);
  }

  std::string kind() const override { return "conv" + std::to_string(rank_) + "d"; }

  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != static_cast<size_t>(rank_) + 2)
      fail("ShapeMismatch", format("%s: expected %d-d input, got %s", kind().c_str(), rank_ + 2,
                                   shape_str(in).c_str()));
    detail::check_channels(kind().c_str(), in[1], in_c_);
    std::vector<long> out{in[0], out_c_};
    static const char* axis_names[3] = {"time", "height", "width"};
    for (int i = 0; i < rank_; ++i) {
      long e = (in[static_cast<size_t>(i) + 2] + 2 * p_[i] - d_[i] * (k_[i] - 1) - 1) / s_[i] + 1;
      if (e < 1)
        fail("ShapeMismatch", format("%s: %s extent %ld collapses to %ld", kind().c_str(),
                                     axis_names[rank_ == 1 ? 0 : i + 3 - rank_],
                                     in[static_cast<size_t>(i) + 2], e));
      out.push_back(e);
    }
    return out;
  }

  void init_params(Rng& rng) override {
    detail::he_uniform(weight.value, in_c_ * kernel_elems_, rng);
    // biases start at zero
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    auto oshape = out_shape(x.shape);
    fill_dims(x.shape, oshape);
    TensorT<T> y(oshape);
    const long rows = in_c_ * kernel_elems_;
    col_.assign(static_cast<size_t>(rows) * cols_, T(0));
    const long in_sample = in_c_ * in_elems_;
    const long out_sample = out_c_ * cols_;
    for (long b = 0; b < x.shape[0]; ++b) {
      im2col(x.ptr() + b * in_sample, col_.data());
      gemm_nn<T>(out_c_, cols_, rows, weight.value.ptr(), col_.data(), y.ptr() + b * out_sample);
      T* ys = y.ptr() + b * out_sample;
      for (long c = 0; c < out_c_; ++c) {
        T bv = bias.value.data[static_cast<size_t>(c)];
        for (long j = 0; j < cols_; ++j) ys[c * cols_ + j] += bv;
      }
    }
    if (want_grad)
      x_ = x;
    else
      x_.data.clear();
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (x_.data.empty()) this->no_state();
    const long rows = in_c_ * kernel_elems_;
    const long in_sample = in_c_ * in_elems_;
    const long out_sample = out_c_ * cols_;
    TensorT<T> dx(x_.shape);
    col_.assign(static_cast<size_t>(rows) * cols_, T(0));
    std::vector<T> dcol(static_cast<size_t>(rows) * cols_);
    for (long b = 0; b < x_.shape[0]; ++b) {
      const T* dys = dy.ptr() + b * out_sample;
      if (weight.trainable) {
        im2col(x_.ptr() + b * in_sample, col_.data());
        gemm_nt<T>(out_c_, rows, cols_, dys, col_.data(), weight.grad.ptr(), true);
      }
      if (bias.trainable) {
        for (long c = 0; c < out_c_; ++c) {
          T acc = 0;
          for (long j = 0; j < cols_; ++j) acc += dys[c * cols_ + j];
          bias.grad.data[static_cast<size_t>(c)] += acc;
        }
      }
      gemm_tn<T>(rows, cols_, out_c_, weight.value.ptr(), dys, dcol.data());
      col2im_add(dcol.data(), dx.ptr() + b * in_sample);
    }
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    fn(prefix + "weight", weight);
    fn(prefix + "bias", bias);
  }

  ParamT<T> weight, bias;

 private:
  // dims normalized to rank 3 with leading singleton axes
  void fill_dims(const std::vector<long>& in, const std::vector<long>& out) {
    I_ = {1, 1, 1};
    O_ = {1, 1, 1};
    K_ = {1, 1, 1};
    S_ = {1, 1, 1};
    P_ = {0, 0, 0};
    D_ = {1, 1, 1};
    for (int i = 0; i < rank_; ++i) {
      int a = 3 - rank_ + i;
      I_[a] = in[static_cast<size_t>(i) + 2];
      O_[a] = out[static_cast<size_t>(i) + 2];
      K_[a] = k_[i];
      S_[a] = s_[i];
      P_[a] = p_[i];
      D_[a] = d_[i];
    }
    in_elems_ = I_[0] * I_[1] * I_[2];
    cols_ = O_[0] * O_[1] * O_[2];
  }

  void im2col(const T* x, T* col) const {
    long row = 0;
    for (long c = 0; c < in_c_; ++c) {
      const T* xc = x + c * in_elems_;
      for (long k0 = 0; k0 < K_[0]; ++k0)
        for (long k1 = 0; k1 < K_[1]; ++k1)
          for (long k2 = 0; k2 < K_[2]; ++k2) {
            T* crow = col + (row++) * cols_;
            const long off2 = k2 * D_[2] - P_[2];
            long lo = off2 < 0 ? (-off2 + S_[2] - 1) / S_[2] : 0;
            long hi_num = I_[2] - 1 - off2;
            long hi = hi_num < 0 ? -1 : std::min(O_[2] - 1, hi_num / S_[2]);
            for (long o0 = 0; o0 < O_[0]; ++o0) {
              long i0 = o0 * S_[0] - P_[0] + k0 * D_[0];
              if (i0 < 0 || i0 >= I_[0]) {
                std::fill(crow + o0 * O_[1] * O_[2], crow + (o0 + 1) * O_[1] * O_[2], T(0));
                continue;
              }
              for (long o1 = 0; o1 < O_[1]; ++o1) {
                long i1 = o1 * S_[1] - P_[1] + k1 * D_[1];
                T* dst = crow + (o0 * O_[1] + o1) * O_[2];
                if (i1 < 0 || i1 >= I_[1]) {
                  std::fill(dst, dst + O_[2], T(0));
                  continue;
                }
                const T* src = xc + (i0 * I_[1] + i1) * I_[2] + off2;
                std::fill(dst, dst + std::min(lo, O_[2]), T(0));
                for (long o2 = lo; o2 <= hi; ++o2) dst[o2] = src[o2 * S_[2]];
                if (hi + 1 < O_[2]) std::fill(dst + hi + 1, dst + O_[2], T(0));
              }
            }
          }
    }
  }

  void col2im_add(const T* col, T* dx) const {
    long row = 0;
    for (long c = 0; c < in_c_; ++c) {
      T* xc = dx + c * in_elems_;
      for (long k0 = 0; k0 < K_[0]; ++k0)
        for (long k1 = 0; k1 < K_[1]; ++k1)
          for (long k2 = 0; k2 < K_[2]; ++k2) {
            const T* crow = col + (row++) * cols_;
            const long off2 = k2 * D_[2] - P_[2];
            long lo = off2 < 0 ? (-off2 + S_[2] - 1) / S_[2] : 0;
            long hi_num = I_[2] - 1 - off2;
            long hi = hi_num < 0 ? -1 : std::min(O_[2] - 1, hi_num / S_[2]);
            for (long o0 = 0; o0 < O_[0]; ++o0) {
              long i0 = o0 * S_[0] - P_[0] + k0 * D_[0];
              if (i0 < 0 || i0 >= I_[0]) continue;
              for (long o1 = 0; o1 < O_[1]; ++o1) {
                long i1 = o1 * S_[1] - P_[1] + k1 * D_[1];
                if (i1 < 0 || i1 >= I_[1]) continue;
                const T* src = crow + (o0 * O_[1] + o1) * O_[2];
                T* dst = xc + (i0 * I_[1] + i1) * I_[2] + off2;
                for (long o2 = lo; o2 <= hi; ++o2) dst[o2 * S_[2]] += src[o2];
              }
            }
          }
    }
  }

  int rank_;
  long in_c_, out_c_, kernel_elems_ = 0;
  std::array<long, 3> k_, s_, p_, d_;
  std::array<long, 3> I_{}, O_{}, K_{}, S_{}, P_{}, D_{};
  long in_elems_ = 0, cols_ = 0;
  TensorT<T> x_;
  std::vector<T> col_;
};

template <typename T>
std::unique_ptr<ConvNdT<T>> conv1d(long in_c, long out_c, long k, long s = 1, long p = 0,
                                   long d = 1) {
  return std::make_unique<ConvNdT<T>>(1, in_c, out_c, std::array<long, 3>{k, 1, 1},
                                      std::array<long, 3>{s, 1, 1}, std::array<long, 3>{p, 0, 0},
                                      std::array<long, 3>{d, 1, 1});
}

template <typename T>
std::unique_ptr<ConvNdT<T>> conv2d(long in_c, long out_c, long k, long s = 1, long p = 0) {
  return std::make_unique<ConvNdT<T>>(2, in_c, out_c, std::array<long, 3>{k, k, 1},
                                      std::array<long, 3>{s, s, 1}, std::array<long, 3>{p, p, 0},
                                      std::array<long, 3>{1, 1, 1});
}

template <typename T>
std::unique_ptr<ConvNdT<T>> conv3d(long in_c, long out_c, std::array<long, 3> k,
                                   std::array<long, 3> s, std::array<long, 3> p) {
  return std::make_unique<ConvNdT<T>>(3, in_c, out_c, k, s, p, std::array<long, 3>{1, 1, 1});
}

// ---- batch normalization -------------------------------------------------------

/// Channel-axis-1 batch norm for any input rank >= 2. Train mode normalizes by
/// biased batch statistics and updates running stats (momentum 0.1, unbiased
/// variance); eval mode applies the running affine.
template <typename T>
class BatchNormT : public LayerT<T> {
 public:
  explicit BatchNormT(long channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma.init_shape({c_});
    beta.init_shape({c_});
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), T(1));
    running_mean = TensorT<T>({c_});
    running_var = TensorT<T>({c_});
    std::fill(running_var.data.begin(), running_var.data.end(), T(1));
  }

  std::string kind() const override { return "batch_norm"; }

  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() < 2) fail("ShapeMismatch", "batch_norm: input needs a channel axis");
    detail::check_channels("batch_norm", in[1], c_);
    return in;
  }

  void set_train(bool train) override { train_ = train; }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long b = x.shape[0];
    long sp = 1;
    for (size_t i = 2; i < x.shape.size(); ++i) sp *= x.shape[i];
    const long n = b * sp;
    TensorT<T> y(x.shape);
    mean_.assign(static_cast<size_t>(c_), 0.0);
    istd_.assign(static_cast<size_t>(c_), 0.0);
    if (train_) {
      for (long c = 0; c < c_; ++c) {
        double m = 0.0;
        for (long i = 0; i < b; ++i) {
          const T* p = x.ptr() + (i * c_ + c) * sp;
          for (long s = 0; s < sp; ++s) m += p[s];
        }
        m /= n;
        double v = 0.0;
        for (long i = 0; i < b; ++i) {
          const T* p = x.ptr() + (i * c_ + c) * sp;
          for (long s = 0; s < sp; ++s) v += (p[s] - m) * (p[s] - m);
        }
        v /= n;
        mean_[static_cast<size_t>(c)] = m;
        istd_[static_cast<size_t>(c)] = 1.0 / std::sqrt(v + eps_);
        double unbiased = n > 1 ? v * n / (n - 1) : v;
        auto& rm = running_mean.data[static_cast<size_t>(c)];
        auto& rv = running_var.data[static_cast<size_t>(c)];
        rm = static_cast<T>((1.0 - momentum_) * rm + momentum_ * m);
        rv = static_cast<T>((1.0 - momentum_) * rv + momentum_ * unbiased);
      }
    } else {
      for (long c = 0; c < c_; ++c) {
        mean_[static_cast<size_t>(c)] = running_mean.data[static_cast<size_t>(c)];
        istd_[static_cast<size_t>(c)] =
            1.0 / std::sqrt(static_cast<double>(running_var.data[static_cast<size_t>(c)]) + eps_);
      }
    }
    if (want_grad) {
      xhat_ = TensorT<T>(x.shape);
      have_state_ = true;
    } else {
      have_state_ = false;
    }
    for (long i = 0; i < b; ++i)
      for (long c = 0; c < c_; ++c) {
        const T* px = x.ptr() + (i * c_ + c) * sp;
        T* py = y.ptr() + (i * c_ + c) * sp;
        T* ph = have_state_ ? xhat_.ptr() + (i * c_ + c) * sp : nullptr;
        const double m = mean_[static_cast<size_t>(c)];
        const double is = istd_[static_cast<size_t>(c)];
        const double g = gamma.value.data[static_cast<size_t>(c)];
        const double bt = beta.value.data[static_cast<size_t>(c)];
        for (long s = 0; s < sp; ++s) {
          double h = (px[s] - m) * is;
          if (ph) ph[s] = static_cast<T>(h);
          py[s] = static_cast<T>(g * h + bt);
        }
      }
    was_train_ = train_;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    const long b = dy.shape[0];
    long sp = 1;
    for (size_t i = 2; i < dy.shape.size(); ++i) sp *= dy.shape[i];
    const long n = b * sp;
    TensorT<T> dx(dy.shape);
    for (long c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dyh = 0.0;
      for (long i = 0; i < b; ++i) {
        const T* pd = dy.ptr() + (i * c_ + c) * sp;
        const T* ph = xhat_.ptr() + (i * c_ + c) * sp;
        for (long s = 0; s < sp; ++s) {
          sum_dy += pd[s];
          sum_dyh += pd[s] * ph[s];
        }
      }
      if (gamma.trainable) gamma.grad.data[static_cast<size_t>(c)] += static_cast<T>(sum_dyh);
      if (beta.trainable) beta.grad.data[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
      const double g = gamma.value.data[static_cast<size_t>(c)];
      const double is = istd_[static_cast<size_t>(c)];
      for (long i = 0; i < b; ++i) {
        const T* pd = dy.ptr() + (i * c_ + c) * sp;
        const T* ph = xhat_.ptr() + (i * c_ + c) * sp;
        T* px = dx.ptr() + (i * c_ + c) * sp;
        if (was_train_) {
          for (long s = 0; s < sp; ++s)
            px[s] = static_cast<T>(g * is * (pd[s] - sum_dy / n - ph[s] * sum_dyh / n));
        } else {
          for (long s = 0; s < sp; ++s) px[s] = static_cast<T>(g * is * pd[s]);
        }
      }
    }
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    fn(prefix + "gamma", gamma);
    fn(prefix + "beta", beta);
  }
  void visit_buffers(const std::string& prefix, const BufferFn<T>& fn) override {
    fn(prefix + "running_mean", running_mean);
    fn(prefix + "running_var", running_var);
  }

  ParamT<T> gamma, beta;
  TensorT<T> running_mean, running_var;

 private:
  long c_;
  double momentum_, eps_;
  bool train_ = true, was_train_ = true, have_state_ = false;
  std::vector<double> mean_, istd_;
  TensorT<T> xhat_;
};

// ---- activations ----------------------------------------------------------------

/// Per-channel learnable slope on the negative side, channel axis 1.
template <typename T>
class PReLUT : public LayerT<T> {
 public:
  explicit PReLUT(long channels, double init_slope = 0.25) : c_(channels) {
    slope.init_shape({c_});
    std::fill(slope.value.data.begin(), slope.value.data.end(), static_cast<T>(init_slope));
  }

  std::string kind() const override { return "prelu"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() < 2) fail("ShapeMismatch", "prelu: input needs a channel axis");
    detail::check_channels("prelu", in[1], c_);
    return in;
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    TensorT<T> y(x.shape);
    apply(x, y);
    if (want_grad)
      x_ = x;
    else
      x_.data.clear();
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (x_.data.empty()) this->no_state();
    TensorT<T> dx(dy.shape);
    const long b = dy.shape[0];
    long sp = 1;
    for (size_t i = 2; i < dy.shape.size(); ++i) sp *= dy.shape[i];
    for (long i = 0; i < b; ++i)
      for (long c = 0; c < c_; ++c) {
        const T* px = x_.ptr() + (i * c_ + c) * sp;
        const T* pd = dy.ptr() + (i * c_ + c) * sp;
        T* out = dx.ptr() + (i * c_ + c) * sp;
        const T a = slope.value.data[static_cast<size_t>(c)];
        double da = 0.0;
        for (long s = 0; s < sp; ++s) {
          if (px[s] >= 0) {
            out[s] = pd[s];
          } else {
            out[s] = a * pd[s];
            da += static_cast<double>(pd[s]) * px[s];
          }
        }
        if (slope.trainable) slope.grad.data[static_cast<size_t>(c)] += static_cast<T>(da);
      }
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    fn(prefix + "slope", slope);
  }

  ParamT<T> slope;

 private:
  void apply(const TensorT<T>& x, TensorT<T>& y) const {
    const long b = x.shape[0];
    long sp = 1;
    for (size_t i = 2; i < x.shape.size(); ++i) sp *= x.shape[i];
    for (long i = 0; i < b; ++i)
      for (long c = 0; c < c_; ++c) {
        const T* px = x.ptr() + (i * c_ + c) * sp;
        T* py = y.ptr() + (i * c_ + c) * sp;
        const T a = slope.value.data[static_cast<size_t>(c)];
        for (long s = 0; s < sp; ++s) py[s] = px[s] >= 0 ? px[s] : a * px[s];
      }
  }

  long c_;
  TensorT<T> x_;
};

/// Fixed-slope variant; carries no parameters so surrounding layers fully
/// determine a head's parameter count.
template <typename T>
class LeakyReLUT : public LayerT<T> {
 public:
  explicit LeakyReLUT(double slope) : a_(static_cast<T>(slope)) {}
  std::string kind() const override { return "leaky_relu"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override { return in; }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    TensorT<T> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
      y.data[i] = x.data[i] >= 0 ? x.data[i] : a_ * x.data[i];
    if (want_grad)
      x_ = x;
    else
      x_.data.clear();
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (x_.data.empty()) this->no_state();
    TensorT<T> dx(dy.shape);
    for (size_t i = 0; i < dy.data.size(); ++i)
      dx.data[i] = x_.data[i] >= 0 ? dy.data[i] : a_ * dy.data[i];
    return dx;
  }

 private:
  T a_;
  TensorT<T> x_;
};

// ---- dropout ----------------------------------------------------------------------

/// Inverted dropout with a private seeded stream; identity in eval mode.
template <typename T>
class DropoutT : public LayerT<T> {
 public:
  explicit DropoutT(double p) : p_(p), rng_(0) {
    if (p < 0.0 || p >= 1.0) fail("ConfigError", "dropout probability must be in [0, 1)");
  }

  std::string kind() const override { return "dropout"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override { return in; }
  void set_train(bool train) override { train_ = train; }
  void seed_streams(uint64_t base, uint64_t& counter) override {
    rng_ = Rng(Rng::derive(base, counter++));
  }
  void reseed(uint64_t seed) { rng_ = Rng(seed); }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    if (!train_ || p_ == 0.0) {
      mask_.clear();
      identity_ = true;
      have_state_ = want_grad;
      return x;
    }
    identity_ = false;
    have_state_ = want_grad;
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    TensorT<T> y(x.shape);
    mask_.resize(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) {
      bool keep = rng_.uniform() >= p_;
      mask_[i] = keep;
      y.data[i] = keep ? x.data[i] * scale : T(0);
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    if (identity_) return dy;
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    TensorT<T> dx(dy.shape);
    for (size_t i = 0; i < dy.data.size(); ++i)
      dx.data[i] = mask_[i] ? dy.data[i] * scale : T(0);
    return dx;
  }

 private:
  double p_;
  Rng rng_;
  bool train_ = true, identity_ = true, have_state_ = false;
  std::vector<char> mask_;
};

// ---- linear ------------------------------------------------------------------------

template <typename T>
class LinearT : public LayerT<T> {
 public:
  LinearT(long in_f, long out_f) : in_(in_f), out_(out_f) {
    weight.init_shape({out_, in_});
    bias.init_shape({out_});
  }

  std::string kind() const override { return "linear"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 2) fail("ShapeMismatch", "linear: expected (batch, features) input");
    detail::check_channels("linear", in[1], in_);
    return {in[0], out_};
  }

  void init_params(Rng& rng) override { detail::he_uniform(weight.value, in_, rng); }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long b = x.shape[0];
    TensorT<T> y({b, out_});
    gemm_nt<T>(b, out_, in_, x.ptr(), weight.value.ptr(), y.ptr());
    for (long i = 0; i < b; ++i)
      for (long o = 0; o < out_; ++o) y.ptr()[i * out_ + o] += bias.value.data[static_cast<size_t>(o)];
    if (want_grad)
      x_ = x;
    else
      x_.data.clear();
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (x_.data.empty()) this->no_state();
    const long b = dy.shape[0];
    if (weight.trainable) gemm_tn<T>(out_, in_, b, dy.ptr(), x_.ptr(), weight.grad.ptr(), true);
    if (bias.trainable)
      for (long i = 0; i < b; ++i)
        for (long o = 0; o < out_; ++o) bias.grad.data[static_cast<size_t>(o)] += dy.ptr()[i * out_ + o];
    TensorT<T> dx(x_.shape);
    gemm_nn<T>(b, in_, out_, dy.ptr(), weight.value.ptr(), dx.ptr());
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    fn(prefix + "weight", weight);
    fn(prefix + "bias", bias);
  }

  ParamT<T> weight, bias;

 private:
  long in_, out_;
  TensorT<T> x_;
};

// ---- pooling ------------------------------------------------------------------------

/// Max pooling over (T, H, W) with -inf padding and argmax caching.
template <typename T>
class MaxPool3dT : public LayerT<T> {
 public:
  MaxPool3dT(std::array<long, 3> k, std::array<long, 3> s, std::array<long, 3> p)
      : k_(k), s_(s), p_(p) {}

  std::string kind() const override { return "max_pool3d"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 5) fail("ShapeMismatch", "max_pool3d: expected (B, C, T, H, W)");
    std::vector<long> out{in[0], in[1]};
    for (int i = 0; i < 3; ++i) {
      long e = (in[static_cast<size_t>(i) + 2] + 2 * p_[i] - k_[i]) / s_[i] + 1;
      if (e < 1) fail("ShapeMismatch", format("max_pool3d: axis %d collapses", i));
      out.push_back(e);
    }
    return out;
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    auto os = out_shape(x.shape);
    TensorT<T> y(os);
    const long bc = x.shape[0] * x.shape[1];
    const long it = x.shape[2], ih = x.shape[3], iw = x.shape[4];
    const long ot = os[2], oh = os[3], ow = os[4];
    const long in_chan = it * ih * iw, out_chan = ot * oh * ow;
    argmax_.assign(static_cast<size_t>(bc) * out_chan, 0);
    for (long m = 0; m < bc; ++m) {
      const T* px = x.ptr() + m * in_chan;
      T* py = y.ptr() + m * out_chan;
      long* pa = argmax_.data() + m * out_chan;
      long o = 0;
      for (long t = 0; t < ot; ++t)
        for (long i = 0; i < oh; ++i)
          for (long j = 0; j < ow; ++j, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            long arg = -1;
            for (long dt = 0; dt < k_[0]; ++dt) {
              long src_t = t * s_[0] - p_[0] + dt;
              if (src_t < 0 || src_t >= it) continue;
              for (long di = 0; di < k_[1]; ++di) {
                long src_i = i * s_[1] - p_[1] + di;
                if (src_i < 0 || src_i >= ih) continue;
                for (long dj = 0; dj < k_[2]; ++dj) {
                  long src_j = j * s_[2] - p_[2] + dj;
                  if (src_j < 0 || src_j >= iw) continue;
                  long idx = (src_t * ih + src_i) * iw + src_j;
                  if (px[idx] > best) {
                    best = px[idx];
                    arg = idx;
                  }
                }
              }
            }
            if (arg < 0) fail("ShapeMismatch", "max_pool3d: window with no valid element");
            py[o] = best;
            pa[o] = arg;
          }
    }
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    TensorT<T> dx(in_shape_);
    const long bc = in_shape_[0] * in_shape_[1];
    const long in_chan = in_shape_[2] * in_shape_[3] * in_shape_[4];
    const long out_chan = dy.numel() / bc;
    for (long m = 0; m < bc; ++m) {
      const T* pd = dy.ptr() + m * out_chan;
      T* px = dx.ptr() + m * in_chan;
      const long* pa = argmax_.data() + m * out_chan;
      for (long o = 0; o < out_chan; ++o) px[pa[o]] += pd[o];
    }
    return dx;
  }

 private:
  std::array<long, 3> k_, s_, p_;
  std::vector<long> argmax_;
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

/// (B, C, L) -> (B, C, out_len); bin i averages [floor(iL/out), ceil((i+1)L/out)).
template <typename T>
class AdaptiveAvgPool1dT : public LayerT<T> {
 public:
  explicit AdaptiveAvgPool1dT(long out_len) : out_(out_len) {
    if (out_ < 1) fail("ConfigError", "adaptive pool length must be >= 1");
  }

  std::string kind() const override { return "adaptive_avg_pool1d"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 3) fail("ShapeMismatch", "adaptive_avg_pool1d: expected (B, C, L)");
    return {in[0], in[1], out_};
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long bc = x.shape[0] * x.shape[1];
    const long l = x.shape[2];
    TensorT<T> y({x.shape[0], x.shape[1], out_});
    for (long m = 0; m < bc; ++m) {
      const T* px = x.ptr() + m * l;
      T* py = y.ptr() + m * out_;
      for (long i = 0; i < out_; ++i) {
        long lo = i * l / out_;
        long hi = ((i + 1) * l + out_ - 1) / out_;
        double acc = 0.0;
        for (long s = lo; s < hi; ++s) acc += px[s];
        py[i] = static_cast<T>(acc / (hi - lo));
      }
    }
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    TensorT<T> dx(in_shape_);
    const long bc = in_shape_[0] * in_shape_[1];
    const long l = in_shape_[2];
    for (long m = 0; m < bc; ++m) {
      const T* pd = dy.ptr() + m * out_;
      T* px = dx.ptr() + m * l;
      for (long i = 0; i < out_; ++i) {
        long lo = i * l / out_;
        long hi = ((i + 1) * l + out_ - 1) / out_;
        T share = pd[i] / static_cast<T>(hi - lo);
        for (long s = lo; s < hi; ++s) px[s] += share;
      }
    }
    return dx;
  }

 private:
  long out_;
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

/// (B, C, H, W) -> (B, C) spatial mean.
template <typename T>
class GlobalAvgPool2dT : public LayerT<T> {
 public:
  std::string kind() const override { return "global_avg_pool2d"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 4) fail("ShapeMismatch", "global_avg_pool2d: expected (B, C, H, W)");
    return {in[0], in[1]};
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long bc = x.shape[0] * x.shape[1];
    const long sp = x.shape[2] * x.shape[3];
    TensorT<T> y({x.shape[0], x.shape[1]});
    for (long m = 0; m < bc; ++m) {
      double acc = 0.0;
      const T* px = x.ptr() + m * sp;
      for (long s = 0; s < sp; ++s) acc += px[s];
      y.data[static_cast<size_t>(m)] = static_cast<T>(acc / sp);
    }
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    TensorT<T> dx(in_shape_);
    const long bc = in_shape_[0] * in_shape_[1];
    const long sp = in_shape_[2] * in_shape_[3];
    for (long m = 0; m < bc; ++m) {
      T share = dy.data[static_cast<size_t>(m)] / static_cast<T>(sp);
      T* px = dx.ptr() + m * sp;
      for (long s = 0; s < sp; ++s) px[s] = share;
    }
    return dx;
  }

 private:
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

/// (B, C, T) -> (B, C) temporal mean.
template <typename T>
class TemporalAvgPoolT : public LayerT<T> {
 public:
  std::string kind() const override { return "temporal_avg_pool"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 3) fail("ShapeMismatch", "temporal_avg_pool: expected (B, C, T)");
    return {in[0], in[1]};
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long bc = x.shape[0] * x.shape[1];
    const long t = x.shape[2];
    TensorT<T> y({x.shape[0], x.shape[1]});
    for (long m = 0; m < bc; ++m) {
      double acc = 0.0;
      const T* px = x.ptr() + m * t;
      for (long s = 0; s < t; ++s) acc += px[s];
      y.data[static_cast<size_t>(m)] = static_cast<T>(acc / t);
    }
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    TensorT<T> dx(in_shape_);
    const long bc = in_shape_[0] * in_shape_[1];
    const long t = in_shape_[2];
    for (long m = 0; m < bc; ++m) {
      T share = dy.data[static_cast<size_t>(m)] / static_cast<T>(t);
      T* px = dx.ptr() + m * t;
      for (long s = 0; s < t; ++s) px[s] = share;
    }
    return dx;
  }

 private:
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

// ---- time axis reshuffles --------------------------------------------------------

/// (B, C, T, H, W) -> (B*T, C, H, W): hand frames to 2-d layers one by one.
template <typename T>
class FoldTimeT : public LayerT<T> {
 public:
  std::string kind() const override { return "fold_time"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 5) fail("ShapeMismatch", "fold_time: expected (B, C, T, H, W)");
    return {in[0] * in[2], in[1], in[3], in[4]};
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long b = x.shape[0], c = x.shape[1], t = x.shape[2];
    const long sp = x.shape[3] * x.shape[4];
    TensorT<T> y({b * t, c, x.shape[3], x.shape[4]});
    for (long i = 0; i < b; ++i)
      for (long ch = 0; ch < c; ++ch)
        for (long f = 0; f < t; ++f)
          std::copy(x.ptr() + ((i * c + ch) * t + f) * sp,
                    x.ptr() + ((i * c + ch) * t + f + 1) * sp,
                    y.ptr() + ((i * t + f) * c + ch) * sp);
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    const long b = in_shape_[0], c = in_shape_[1], t = in_shape_[2];
    const long sp = in_shape_[3] * in_shape_[4];
    TensorT<T> dx(in_shape_);
    for (long i = 0; i < b; ++i)
      for (long ch = 0; ch < c; ++ch)
        for (long f = 0; f < t; ++f)
          std::copy(dy.ptr() + ((i * t + f) * c + ch) * sp,
                    dy.ptr() + ((i * t + f) * c + ch + 1) * sp,
                    dx.ptr() + ((i * c + ch) * t + f) * sp);
    return dx;
  }

 private:
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

/// (B*T, C) -> (B, C, T): regroup per-frame features into sequences.
template <typename T>
class UnfoldTimeT : public LayerT<T> {
 public:
  explicit UnfoldTimeT(long t) : t_(t) {
    if (t_ < 1) fail("ConfigError", "unfold_time: T must be >= 1");
  }

  std::string kind() const override { return "unfold_time"; }
  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (in.size() != 2 || in[0] % t_ != 0)
      fail("ShapeMismatch", format("unfold_time: rows %ld not divisible by T=%ld",
                                   in.empty() ? 0L : in[0], t_));
    return {in[0] / t_, in[1], t_};
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    out_shape(x.shape);
    const long b = x.shape[0] / t_, c = x.shape[1];
    TensorT<T> y({b, c, t_});
    for (long i = 0; i < b; ++i)
      for (long f = 0; f < t_; ++f)
        for (long ch = 0; ch < c; ++ch)
          y.ptr()[(i * c + ch) * t_ + f] = x.ptr()[(i * t_ + f) * c + ch];
    in_shape_ = x.shape;
    have_state_ = want_grad;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!have_state_) this->no_state();
    const long b = in_shape_[0] / t_, c = in_shape_[1];
    TensorT<T> dx(in_shape_);
    for (long i = 0; i < b; ++i)
      for (long f = 0; f < t_; ++f)
        for (long ch = 0; ch < c; ++ch)
          dx.ptr()[(i * t_ + f) * c + ch] = dy.ptr()[(i * c + ch) * t_ + f];
    return dx;
  }

 private:
  long t_;
  std::vector<long> in_shape_;
  bool have_state_ = false;
};

// ---- containers -------------------------------------------------------------------

template <typename T>
class SequentialT : public LayerT<T> {
 public:
  SequentialT() = default;

  SequentialT* add(const std::string& name, std::unique_ptr<LayerT<T>> layer) {
    for (const auto& it : items_)
      if (it.name == name) fail("ConfigError", "sequential: duplicate child name " + name);
    items_.push_back({name, std::move(layer)});
    return this;
  }

  std::string kind() const override { return "sequential"; }
  bool empty() const { return items_.empty(); }

  std::vector<long> out_shape(const std::vector<long>& in) const override {
    std::vector<long> s = in;
    for (const auto& it : items_) s = it.layer->out_shape(s);
    return s;
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    TensorT<T> h = x;
    for (auto& it : items_) h = it.layer->forward(h, want_grad);
    ran_ = true;
    return h;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!ran_) this->no_state();
    TensorT<T> g = dy;
    for (auto it = items_.rbegin(); it != items_.rend(); ++it) g = it->layer->backward(g);
    return g;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    for (auto& it : items_) it.layer->visit_params(prefix + it.name + ".", fn);
  }
  void visit_buffers(const std::string& prefix, const BufferFn<T>& fn) override {
    for (auto& it : items_) it.layer->visit_buffers(prefix + it.name + ".", fn);
  }
  void set_train(bool train) override {
    for (auto& it : items_) it.layer->set_train(train);
  }
  void init_params(Rng& rng) override {
    for (auto& it : items_) it.layer->init_params(rng);
  }
  void seed_streams(uint64_t base, uint64_t& counter) override {
    for (auto& it : items_) it.layer->seed_streams(base, counter);
  }

 private:
  struct Named {
    std::string name;
    std::unique_ptr<LayerT<T>> layer;
  };
  std::vector<Named> items_;
  bool ran_ = false;
};

/// y = body(x) + shortcut(x); an empty shortcut is the identity.
template <typename T>
class ResidualT : public LayerT<T> {
 public:
  ResidualT(std::unique_ptr<SequentialT<T>> body, std::unique_ptr<SequentialT<T>> shortcut)
      : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

  std::string kind() const override { return "residual"; }

  std::vector<long> out_shape(const std::vector<long>& in) const override {
    auto a = body_->out_shape(in);
    auto b = shortcut_ && !shortcut_->empty() ? shortcut_->out_shape(in) : in;
    if (a != b)
      fail("ShapeMismatch", "residual: body " + shape_str(a) + " vs shortcut " + shape_str(b));
    return a;
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    TensorT<T> y = body_->forward(x, want_grad);
    if (shortcut_ && !shortcut_->empty()) {
      TensorT<T> s = shortcut_->forward(x, want_grad);
      for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += s.data[i];
    } else {
      for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    }
    ran_ = true;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!ran_) this->no_state();
    TensorT<T> dx = body_->backward(dy);
    if (shortcut_ && !shortcut_->empty()) {
      TensorT<T> ds = shortcut_->backward(dy);
      for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += ds.data[i];
    } else {
      for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
    }
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    body_->visit_params(prefix, fn);
    if (shortcut_) shortcut_->visit_params(prefix, fn);
  }
  void visit_buffers(const std::string& prefix, const BufferFn<T>& fn) override {
    body_->visit_buffers(prefix, fn);
    if (shortcut_) shortcut_->visit_buffers(prefix, fn);
  }
  void set_train(bool train) override {
    body_->set_train(train);
    if (shortcut_) shortcut_->set_train(train);
  }
  void init_params(Rng& rng) override {
    body_->init_params(rng);
    if (shortcut_) shortcut_->init_params(rng);
  }
  void seed_streams(uint64_t base, uint64_t& counter) override {
    body_->seed_streams(base, counter);
    if (shortcut_) shortcut_->seed_streams(base, counter);
  }

 private:
  std::unique_ptr<SequentialT<T>> body_, shortcut_;
  bool ran_ = false;
};

/// Parallel branches over the same input, outputs concatenated on channel
/// axis 1. Backward splits the gradient and sums branch input gradients.
template <typename T>
class MultibranchT : public LayerT<T> {
 public:
  MultibranchT* add(const std::string& name, std::unique_ptr<SequentialT<T>> branch) {
    branches_.push_back({name, std::move(branch)});
    return this;
  }

  std::string kind() const override { return "multibranch"; }

  std::vector<long> out_shape(const std::vector<long>& in) const override {
    if (branches_.empty()) fail("ConfigError", "multibranch: no branches");
    std::vector<long> first = branches_[0].layer->out_shape(in);
    long channels = first[1];
    for (size_t i = 1; i < branches_.size(); ++i) {
      auto s = branches_[i].layer->out_shape(in);
      auto rest = s;
      auto rest0 = first;
      rest[1] = rest0[1] = 0;
      if (rest != rest0)
        fail("ShapeMismatch", "multibranch: branch shapes differ beyond channels");
      channels += s[1];
    }
    first[1] = channels;
    return first;
  }

  TensorT<T> forward(const TensorT<T>& x, bool want_grad) override {
    std::vector<TensorT<T>> outs;
    outs.reserve(branches_.size());
    long channels = 0;
    for (auto& b : branches_) {
      outs.push_back(b.layer->forward(x, want_grad));
      channels += outs.back().shape[1];
    }
    std::vector<long> oshape = outs[0].shape;
    oshape[1] = channels;
    TensorT<T> y(oshape);
    const long batch = oshape[0];
    long sp = 1;
    for (size_t i = 2; i < oshape.size(); ++i) sp *= oshape[i];
    split_channels_.clear();
    long at = 0;
    for (const auto& o : outs) {
      const long c = o.shape[1];
      split_channels_.push_back(c);
      for (long i = 0; i < batch; ++i)
        std::copy(o.ptr() + i * c * sp, o.ptr() + (i + 1) * c * sp,
                  y.ptr() + (i * channels + at) * sp);
      at += c;
    }
    out_channels_ = channels;
    ran_ = true;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) override {
    if (!ran_) this->no_state();
    const long batch = dy.shape[0];
    long sp = 1;
    for (size_t i = 2; i < dy.shape.size(); ++i) sp *= dy.shape[i];
    TensorT<T> dx;
    long at = 0;
    for (size_t bi = 0; bi < branches_.size(); ++bi) {
      const long c = split_channels_[bi];
      std::vector<long> bshape = dy.shape;
      bshape[1] = c;
      TensorT<T> slice(bshape);
      for (long i = 0; i < batch; ++i)
        std::copy(dy.ptr() + (i * out_channels_ + at) * sp,
                  dy.ptr() + (i * out_channels_ + at + c) * sp, slice.ptr() + i * c * sp);
      TensorT<T> g = branches_[bi].layer->backward(slice);
      if (bi == 0) {
        dx = std::move(g);
      } else {
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += g.data[i];
      }
      at += c;
    }
    return dx;
  }

  void visit_params(const std::string& prefix, const ParamFn<T>& fn) override {
    for (auto& b : branches_) b.layer->visit_params(prefix + b.name + ".", fn);
  }
  void visit_buffers(const std::string& prefix, const BufferFn<T>& fn) override {
    for (auto& b : branches_) b.layer->visit_buffers(prefix + b.name + ".", fn);
  }
  void set_train(bool train) override {
    for (auto& b : branches_) b.layer->set_train(train);
  }
  void init_params(Rng& rng) override {
    for (auto& b : branches_) b.layer->init_params(rng);
  }
  void seed_streams(uint64_t base, uint64_t& counter) override {
    for (auto& b : branches_) b.layer->seed_streams(base, counter);
  }

 private:
  struct Named {
    std::string name;
    std::unique_ptr<SequentialT<T>> layer;
  };
  std::vector<Named> branches_;
  std::vector<long> split_channels_;
  long out_channels_ = 0;
  bool ran_ = false;
};

}  // namespace sl::nn
