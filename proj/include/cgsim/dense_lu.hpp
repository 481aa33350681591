#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cgsim {

// Row-major square matrix with contiguous storage.
template <typename T>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t n) : n_(n), data_(n * n, T{}) {}

  std::size_t size() const noexcept { return n_; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * n_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * n_ + c]; }
  T* row(std::size_t r) noexcept { return data_.data() + r * n_; }
  const T* row(std::size_t r) const noexcept { return data_.data() + r * n_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

// In-place LU factorization with partial (row) pivoting, PA = LU.
// Rows whose multiplier is exactly zero are skipped, which makes the
// elimination cheap on the very sparse matrices nodal analysis produces.
template <typename T>
class DenseLU {
 public:
  // Factorizes `a` (consumed). Returns the column (unknown) index of the
  // first pivot judged singular, or nullopt on success.
  std::optional<std::size_t> factor(DenseMatrix<T> a) {
    lu_ = std::move(a);
    const std::size_t n = lu_.size();
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

    T scale{};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) scale = std::max(scale, std::abs(lu_(r, c)));
    const T tiny = scale * T(1e-24);

    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      T best = std::abs(lu_(k, k));
      for (std::size_t r = k + 1; r < n; ++r) {
        const T v = std::abs(lu_(r, k));
        if (v > best) {
          best = v;
          p = r;
        }
      }
      // A zero pivot in column k means unknown k has no independent equation.
      if (!(best > tiny)) return k;
      if (p != k) {
        std::swap_ranges(lu_.row(k), lu_.row(k) + n, lu_.row(p));
        std::swap(perm_[k], perm_[p]);
      }
      const T* pivot_row = lu_.row(k);
      const T inv = T(1) / pivot_row[k];
      for (std::size_t r = k + 1; r < n; ++r) {
        T* row = lu_.row(r);
        if (row[k] == T{}) continue;
        const T f = row[k] * inv;
        row[k] = f;
        for (std::size_t c = k + 1; c < n; ++c) {
          if (pivot_row[c] != T{}) row[c] -= f * pivot_row[c];
        }
      }
    }
    return std::nullopt;
  }

  // Solves A x = b for the last factorized A.
  std::vector<T> solve(std::span<const T> b) const {
    const std::size_t n = lu_.size();
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = lu_.row(i);
      T s = x[i];
      for (std::size_t c = 0; c < i; ++c)
        if (row[c] != T{}) s -= row[c] * x[c];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      const T* row = lu_.row(i);
      T s = x[i];
      for (std::size_t c = i + 1; c < n; ++c)
        if (row[c] != T{}) s -= row[c] * x[c];
      x[i] = s / row[i];
    }
    return x;
  }

 private:
  DenseMatrix<T> lu_;
  std::vector<std::size_t> perm_;
};

}  // namespace cgsim
