#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <type_traits>

namespace ssnet::nn::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// c[m][n] += sum_k a[m][k] * b[k][n], all row-major. When the accumulator A
// is wider than T, operands are widened first so the whole product runs in A.
template <typename T, typename A>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, A* c) {
  const auto rows = static_cast<Eigen::Index>(m);
  const auto cols = static_cast<Eigen::Index>(n);
  const auto inner = static_cast<Eigen::Index>(k);
  Eigen::Map<const RowMatrix<T>> am(a, rows, inner);
  Eigen::Map<const RowMatrix<T>> bm(b, inner, cols);
  Eigen::Map<RowMatrix<A>> cm(c, rows, cols);
  if constexpr (std::is_same_v<T, A>) {
    cm.noalias() += am * bm;
  } else {
    cm.noalias() += am.template cast<A>() * bm.template cast<A>();
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

}  // namespace ssnet::nn::detail
