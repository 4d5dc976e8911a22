#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "a2gnn/matrix.hpp"

// Reference implementations used by tests and the gradcheck harness.
// They are deliberately independent of the fast paths they are used to verify:
// spectral filtering goes through a full eigendecomposition here, while the
// library path only ever multiplies matrices.

namespace a2gnn::oracle {

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // ascending
  dmat eigenvectors;                // columns, orthonormal
};

// Cyclic Jacobi rotations. Fine for the N <= 64 matrices tests use.
inline EigenDecomposition eig_symmetric(const dmat& m, int max_sweeps = 100, double tol = 1e-13) {
  const int n = m.rows();
  if (n != m.cols()) throw std::invalid_argument("eig_symmetric: matrix not square (" + m.shape_str() + ")");
  if (!is_symmetric(m, 1e-10)) throw std::invalid_argument("eig_symmetric: matrix not symmetric within 1e-10");

  dmat a = m;
  dmat v = dmat::identity(n);

  auto off_norm = [&]() {
    double s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  const double scale = std::max(1.0, max_abs(m));
  int sweep = 0;
  while (off_norm() > tol * scale) {
    if (++sweep > max_sweeps) throw std::runtime_error("eig_symmetric: no convergence after max sweeps");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) < a(y, y); });

  EigenDecomposition d;
  d.eigenvalues.resize(n);
  d.eigenvectors = dmat(n, n);
  for (int j = 0; j < n; ++j) {
    d.eigenvalues[j] = a(order[j], order[j]);
    for (int i = 0; i < n; ++i) d.eigenvectors(i, j) = v(i, order[j]);
  }
  return d;
}

inline double chebyshev_scalar(int k, double x) {
  // Recurrence, not cos(k acos x): matches what the matrix path does term by term.
  double tm2 = 1.0, tm1 = x;
  if (k == 0) return tm2;
  if (k == 1) return tm1;
  double t = 0;
  for (int i = 2; i <= k; ++i) {
    t = 2 * x * tm1 - tm2;
    tm2 = tm1;
    tm1 = t;
  }
  return t;
}

// Exact spectral filtering: per output channel evaluate the filter polynomial
// on each eigenvalue and transform back, g(L) X = U diag(g(lambda)) U^T X.
// theta is (d_in*K) x d_z, row-blocked by polynomial order: rows [k*d_in, (k+1)*d_in)
// hold the order-k coefficients for each input channel.
inline dmat spectral_filter_oracle(const dmat& l_norm, const dmat& x, const dmat& theta, int order,
                                   double lambda_max) {
  const int n = l_norm.rows();
  const int d_in = x.cols();
  if (theta.rows() != d_in * order)
    throw std::invalid_argument("spectral_filter_oracle: theta rows " + std::to_string(theta.rows()) +
                                " != d_in*K " + std::to_string(d_in * order));
  if (lambda_max <= 0) throw std::invalid_argument("spectral_filter_oracle: lambda_max must be positive");

  const EigenDecomposition d = eig_symmetric(l_norm);
  const dmat xhat = matmul(transpose(d.eigenvectors), x);  // N x d_in frequency signal

  const int d_z = theta.cols();
  dmat zhat(n, d_z);
  for (int l = 0; l < n; ++l) {
    const double lam_scaled = (2.0 / lambda_max) * d.eigenvalues[l] - 1.0;
    for (int k = 0; k < order; ++k) {
      const double tk = chebyshev_scalar(k, lam_scaled);
      for (int c = 0; c < d_in; ++c) {
        const double coef = tk * xhat(l, c);
        const double* th = theta.data() + static_cast<size_t>(k * d_in + c) * d_z;
        for (int j = 0; j < d_z; ++j) zhat(l, j) += coef * th[j];
      }
    }
  }
  return matmul(d.eigenvectors, zhat);
}

// Central differences, one coordinate of one parameter at a time.
// mutate/restore through the reference so the loss closure sees the change.
inline dmat finite_diff_grad(const std::function<double()>& loss, dmat& param, double step) {
  if (step <= 0) throw std::invalid_argument("finite_diff_grad: degenerate step");
  dmat g(param.rows(), param.cols());
  for (size_t i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + step;
    const double up = loss();
    param.data()[i] = saved - step;
    const double down = loss();
    param.data()[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("finite_diff_grad: non-finite loss during probe");
    g.data()[i] = (up - down) / (2 * step);
  }
  return g;
}

}  // namespace a2gnn::oracle
