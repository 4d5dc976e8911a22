#pragma once

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2gnn {

// Dense row-major matrix. Everything in this project is small (N <= 64 nodes,
// widest weight is 256 x 960), so a flat vector<T> with tight loops is all we
// need. Column vectors are R x 1 matrices, row vectors 1 x C.
template <typename T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, T(0)) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Mat: negative dimension");
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }
  static Mat filled(int rows, int cols, T v) {
    Mat m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  T operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

  T& at(int i, int j) {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw std::out_of_range("Mat::at: index out of range");
    return (*this)(i, j);
  }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }
  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (T x : data_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> m(rows_, cols_);
    for (size_t i = 0; i < data_.size(); ++i) m.data()[i] = static_cast<U>(data_[i]);
    return m;
  }

  bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

namespace detail {
template <typename T>
[[noreturn]] inline void shape_error(const char* op, const Mat<T>& a, const Mat<T>& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace detail

// C = A * B, ikj order so the inner loop runs over contiguous rows. The
// matrix-vector case gets unrolled accumulators: a plain serial dot chains its
// additions and defeats vectorization, and the LSTM lives on these products.
template <typename T>
void matmul_into(Mat<T>& c, const Mat<T>& a, const Mat<T>& b, bool accumulate) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (!accumulate) {
    c = Mat<T>(m, n);
  } else if (c.rows() != m || c.cols() != n) {
    detail::shape_error("matmul accumulate", c, a);
  }
  if (n == 1) {
    const T* bv = b.data();
    for (int i = 0; i < m; ++i) {
      const T* arow = a.data() + static_cast<size_t>(i) * k;
      T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
      int p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += arow[p] * bv[p];
        s1 += arow[p + 1] * bv[p + 1];
        s2 += arow[p + 2] * bv[p + 2];
        s3 += arow[p + 3] * bv[p + 3];
      }
      for (; p < k; ++p) s0 += arow[p] * bv[p];
      c.data()[i] += (s0 + s1) + (s2 + s3);
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* arow = a.data() + static_cast<size_t>(i) * k;
    T* crow = c.data() + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T apv = arow[p];
      const T* brow = b.data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
}

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c;
  matmul_into(c, a, b, false);
  return c;
}

// C += A * B^T. Rows of both operands are contiguous, so this is a dot-product
// sweep; the k==1 case (outer products, the bulk of weight gradients) runs as
// scaled row updates instead.
template <typename T>
void matmul_bt_add(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.cols() != b.cols()) detail::shape_error("matmul_bt", a, b);
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (c.rows() != m || c.cols() != n) detail::shape_error("matmul_bt out", c, a);
  if (k == 1) {
    const T* bv = b.data();
    for (int i = 0; i < m; ++i) {
      const T av = a.data()[i];
      T* crow = c.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * bv[j];
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* arow = a.data() + static_cast<size_t>(i) * k;
    T* crow = c.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b.data() + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A^T * B, streamed as rank-1 row updates to stay sequential.
template <typename T>
void matmul_at_add(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.rows() != b.rows()) detail::shape_error("matmul_at", a, b);
  const int m = a.cols(), k = a.rows(), n = b.cols();
  if (c.rows() != m || c.cols() != n) detail::shape_error("matmul_at out", c, a);
  if (n == 1) {
    T* cv = c.data();
    for (int i = 0; i < k; ++i) {
      const T* arow = a.data() + static_cast<size_t>(i) * m;
      const T bv = b.data()[i];
      for (int p = 0; p < m; ++p) cv[p] += arow[p] * bv;
    }
    return;
  }
  for (int i = 0; i < k; ++i) {
    const T* arow = a.data() + static_cast<size_t>(i) * m;
    const T* brow = b.data() + static_cast<size_t>(i) * n;
    for (int p = 0; p < m; ++p) {
      const T apv = arow[p];
      T* crow = c.data() + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
}

template <typename T>
Mat<T> transpose(const Mat<T>& a) {
  Mat<T> t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
Mat<T> add(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) detail::shape_error("add", a, b);
  Mat<T> c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

template <typename T>
Mat<T> sub(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) detail::shape_error("sub", a, b);
  Mat<T> c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

template <typename T>
Mat<T> hadamard(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) detail::shape_error("hadamard", a, b);
  Mat<T> c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

template <typename T>
Mat<T> scale(const Mat<T>& a, T s) {
  Mat<T> c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}

template <typename T>
void axpy(Mat<T>& y, T alpha, const Mat<T>& x) {
  if (!y.same_shape(x)) detail::shape_error("axpy", y, x);
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += alpha * x.data()[i];
}

template <typename T>
T max_abs(const Mat<T>& a) {
  T m = T(0);
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i]));
  return m;
}

template <typename T>
T max_abs_diff(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) detail::shape_error("max_abs_diff", a, b);
  T m = T(0);
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

template <typename T>
T frobenius_norm(const Mat<T>& a) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data()[i]) * a.data()[i];
  return static_cast<T>(std::sqrt(s));
}

template <typename T>
T dot_all(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) detail::shape_error("dot_all", a, b);
  T s = T(0);
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

template <typename T>
bool is_symmetric(const Mat<T>& a, T tol) {
  if (a.rows() != a.cols()) return false;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

template <typename T>
Mat<T> random_uniform(std::mt19937_64& rng, int rows, int cols, T lo, T hi) {
  Mat<T> m(rows, cols);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

// Uniform in +-sqrt(6/(fan_in+fan_out)), the usual variance-preserving range.
template <typename T>
Mat<T> glorot_uniform(std::mt19937_64& rng, int rows, int cols, int fan_in, int fan_out) {
  const double lim = std::sqrt(6.0 / (fan_in + fan_out));
  return random_uniform<T>(rng, rows, cols, static_cast<T>(-lim), static_cast<T>(lim));
}

using dmat = Mat<double>;
using fmat = Mat<float>;

}  // namespace a2gnn
