#pragma once

#include <Eigen/Core>

namespace sl::nn {

// Thin wrappers over Eigen for the three GEMM forms the conv/linear layers
// need. All matrices are row-major dense buffers.

template <typename T>
using EigenMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using EigenCMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// C = A(M,K) * B(K,N), or += when accumulate.
template <typename T>
void gemm_nn(long m, long n, long k, const T* a, const T* b, T* c, bool accumulate = false) {
  EigenCMap<T> ma(a, m, k), mb(b, k, n);
  EigenMap<T> mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb;
  else
    mc.noalias() = ma * mb;
}

/// C = A(M,K) * B(N,K)^T.
template <typename T>
void gemm_nt(long m, long n, long k, const T* a, const T* b, T* c, bool accumulate = false) {
  EigenCMap<T> ma(a, m, k), mb(b, n, k);
  EigenMap<T> mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb.transpose();
  else
    mc.noalias() = ma * mb.transpose();
}

/// C = A(K,M)^T * B(K,N).
template <typename T>
void gemm_tn(long m, long n, long k, const T* a, const T* b, T* c, bool accumulate = false) {
  EigenCMap<T> ma(a, k, m), mb(b, k, n);
  EigenMap<T> mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma.transpose() * mb;
  else
    mc.noalias() = ma.transpose() * mb;
}

}  // namespace sl::nn
