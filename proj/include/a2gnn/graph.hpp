#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "a2gnn/matrix.hpp"

// Graph construction and the non-learnable spectral machinery: normalized and
// scaled Laplacians, dominant-eigenvalue estimation, Chebyshev basis terms.
// All pure functions on immutable inputs.

namespace a2gnn {

using EdgeList = std::vector<std::pair<int, int>>;

// Undirected attribute graph: joints as nodes, bones as unit-weight edges,
// 3D coordinates as per-node signals.
struct SkeletonGraph {
  int num_nodes = 0;
  dmat adjacency;  // N x N symmetric, zero diagonal
  dmat signals;    // N x d (3 for raw joints)

  SkeletonGraph() = default;
  SkeletonGraph(dmat a, dmat x) : num_nodes(a.rows()), adjacency(std::move(a)), signals(std::move(x)) {
    validate();
  }

  void validate() const {
    if (adjacency.rows() != adjacency.cols()) throw std::invalid_argument("SkeletonGraph: adjacency not square");
    if (signals.rows() != adjacency.rows())
      throw std::invalid_argument("SkeletonGraph: signal rows " + std::to_string(signals.rows()) +
                                  " != node count " + std::to_string(adjacency.rows()));
    for (int i = 0; i < num_nodes; ++i) {
      if (adjacency(i, i) != 0.0) throw std::invalid_argument("SkeletonGraph: self-loop at node " + std::to_string(i));
      double deg = 0;
      for (int j = 0; j < num_nodes; ++j) {
        const double w = adjacency(i, j);
        if (w < 0) throw std::invalid_argument("SkeletonGraph: negative edge weight");
        if (w != adjacency(j, i)) throw std::invalid_argument("SkeletonGraph: adjacency not symmetric");
        deg += w;
      }
      if (deg <= 0) throw std::invalid_argument("SkeletonGraph: isolated node " + std::to_string(i));
    }
  }
};

inline dmat adjacency_from_edges(int num_nodes, const EdgeList& edges) {
  dmat a(num_nodes, num_nodes);
  for (const auto& [i, j] : edges) {
    if (i < 0 || i >= num_nodes || j < 0 || j >= num_nodes)
      throw std::invalid_argument("adjacency_from_edges: edge (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") out of range for N=" + std::to_string(num_nodes));
    if (i == j) throw std::invalid_argument("adjacency_from_edges: self-loop edge");
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

inline bool is_connected(int num_nodes, const EdgeList& edges) {
  if (num_nodes <= 0) return false;
  std::vector<std::vector<int>> adj(num_nodes);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(num_nodes, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == num_nodes;
}

// I - D^{-1/2} A D^{-1/2}. Entries (i,j) and (j,i) are computed with the same
// rounded products, so the result is symmetric exactly, not just within tolerance.
template <typename T>
Mat<T> normalized_laplacian(const Mat<T>& adjacency) {
  const int n = adjacency.rows();
  if (n != adjacency.cols()) throw std::invalid_argument("normalized_laplacian: adjacency not square");
  std::vector<T> rs(n, T(0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const T w = adjacency(i, j);
      if (w < 0) throw std::invalid_argument("normalized_laplacian: negative weight");
      if (w != adjacency(j, i)) throw std::invalid_argument("normalized_laplacian: adjacency not symmetric");
      rs[i] += w;
    }
    if (rs[i] <= 0) throw std::invalid_argument("normalized_laplacian: isolated node " + std::to_string(i));
  }
  std::vector<T> r(n);
  for (int i = 0; i < n; ++i) r[i] = T(1) / std::sqrt(rs[i]);
  Mat<T> l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) l(i, j) = (i == j ? T(1) : T(0)) - (r[i] * r[j]) * adjacency(i, j);
  }
  return l;
}

// (2/lambda_max) L - I, mapping the spectrum into [-1, 1].
template <typename T>
Mat<T> scaled_laplacian(const Mat<T>& l_norm, double lambda_max) {
  if (lambda_max <= 0) throw std::invalid_argument("scaled_laplacian: lambda_max must be positive");
  const int n = l_norm.rows();
  Mat<T> out = scale(l_norm, static_cast<T>(2.0 / lambda_max));
  for (int i = 0; i < n; ++i) out(i, i) -= T(1);
  return out;
}

struct LaplacianPair {
  dmat l_norm;
  dmat l_scaled;
  double lambda_max = 0;
};

struct PowerIterationResult {
  double lambda = 0;
  dmat eigenvector;  // N x 1, unit norm
  int iterations = 0;
  bool converged = false;
};

class LambdaMaxError : public std::runtime_error {
 public:
  LambdaMaxError(const std::string& msg, double last) : std::runtime_error(msg), last_estimate(last) {}
  double last_estimate;
};

// Power iteration with Rayleigh-quotient estimates and a residual stopping
// rule: |lambda - lambda_true| <= ||Mv - lambda v|| for symmetric M.
// The start vector mixes all-ones with a fixed pseudo-random perturbation so
// it cannot be orthogonal to the dominant eigenspace of the graphs we meet
// (all-ones alone is orthogonal to it on the 2-node graph).
//
// best_effort: return the last estimate instead of throwing when max_iters is
// exhausted. Pooled graphs with near-uniform attention have a clustered top
// eigenvalue; the Rayleigh estimate is still within cluster width of the true
// lambda_max there, which is all the scaling in the layer needs.
inline PowerIterationResult power_iteration(const dmat& m, double tol, int max_iters, bool best_effort = false) {
  const int n = m.rows();
  if (n != m.cols()) throw std::invalid_argument("power_iteration: matrix not square");
  if (max_abs(m) == 0.0) throw LambdaMaxError("power_iteration: degenerate all-zero matrix", 0.0);
  PowerIterationResult res;
  dmat v(n, 1);
  {
    std::mt19937_64 rng(0x5eedu);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < n; ++i) v(i, 0) = 1.0 + 0.25 * d(rng);
  }
  double norm = frobenius_norm(v);
  for (int i = 0; i < n; ++i) v(i, 0) /= norm;

  double lambda = 0;
  for (int it = 1; it <= max_iters; ++it) {
    dmat w = matmul(m, v);
    lambda = dot_all(v, w);  // Rayleigh quotient
    double resid = 0;
    for (int i = 0; i < n; ++i) {
      const double r = w(i, 0) - lambda * v(i, 0);
      resid += r * r;
    }
    resid = std::sqrt(resid);
    const double wn = frobenius_norm(w);
    if (resid <= tol * std::max(std::abs(lambda), 1e-30)) {
      res.lambda = lambda;
      res.eigenvector = v;
      res.iterations = it;
      res.converged = true;
      return res;
    }
    if (wn <= 1e-300) throw LambdaMaxError("power_iteration: iterate vanished (zero matrix or unlucky start)", lambda);
    for (int i = 0; i < n; ++i) v(i, 0) = w(i, 0) / wn;
  }
  if (best_effort) {
    res.lambda = lambda;
    res.eigenvector = v;
    res.iterations = max_iters;
    res.converged = false;
    return res;
  }
  throw LambdaMaxError("power_iteration: no convergence after " + std::to_string(max_iters) + " iterations", lambda);
}

inline double estimate_lambda_max(const dmat& l_norm, double tol = 1e-6, int max_iters = 10000) {
  if (tol <= 0) throw std::invalid_argument("estimate_lambda_max: tol must be positive");
  return power_iteration(l_norm, tol, max_iters).lambda;
}

// Dominant eigenpair by full Lanczos tridiagonalization (n steps, full
// reorthogonalization), Sturm-sequence bisection for the largest eigenvalue
// and safeguarded inverse iteration for its vector. Exact to roundoff for the
// small matrices this project meets, at ~n matrix-vector products; power
// iteration needs thousands when the top of the spectrum is clustered, which
// pooled graphs under near-uniform attention produce routinely.
inline PowerIterationResult lanczos_lambda_max(const dmat& m) {
  const int n = m.rows();
  if (n != m.cols()) throw std::invalid_argument("lanczos_lambda_max: matrix not square");
  if (n == 1) return {m(0, 0), dmat::filled(1, 1, 1.0), 1, true};

  std::vector<double> alpha(n, 0.0), beta(n, 0.0);  // beta[j] couples step j-1 to j
  dmat basis(n, n);                                 // Lanczos vectors as columns

  auto col = [&](int j, int i) -> double& { return basis(i, j); };
  auto reorthogonalize = [&](std::vector<double>& w, int upto) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j <= upto; ++j) {
        double d = 0;
        for (int i = 0; i < n; ++i) d += w[i] * col(j, i);
        for (int i = 0; i < n; ++i) w[i] -= d * col(j, i);
      }
    }
  };

  {
    std::mt19937_64 rng(0x5eedu);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double norm = 0;
    std::vector<double> v0(n);
    for (int i = 0; i < n; ++i) {
      v0[i] = 1.0 + 0.25 * d(rng);
      norm += v0[i] * v0[i];
    }
    norm = std::sqrt(norm);
    for (int i = 0; i < n; ++i) col(0, i) = v0[i] / norm;
  }

  const double scale = std::max(1.0, max_abs(m));
  for (int j = 0; j < n; ++j) {
    std::vector<double> w(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += m(i, k) * col(j, k);
      w[i] = acc;
    }
    double a = 0;
    for (int i = 0; i < n; ++i) a += w[i] * col(j, i);
    alpha[j] = a;
    if (j + 1 == n) break;
    reorthogonalize(w, j);
    double b = 0;
    for (int i = 0; i < n; ++i) b += w[i] * w[i];
    b = std::sqrt(b);
    if (b > 1e-14 * scale) {
      beta[j + 1] = b;
      for (int i = 0; i < n; ++i) col(j + 1, i) = w[i] / b;
    } else {
      // invariant subspace found; restart with a canonical direction
      beta[j + 1] = 0.0;
      bool placed = false;
      for (int e = 0; e < n && !placed; ++e) {
        std::vector<double> cand(n, 0.0);
        cand[e] = 1.0;
        reorthogonalize(cand, j);
        double cn = 0;
        for (int i = 0; i < n; ++i) cn += cand[i] * cand[i];
        cn = std::sqrt(cn);
        if (cn > 1e-8) {
          for (int i = 0; i < n; ++i) col(j + 1, i) = cand[i] / cn;
          placed = true;
        }
      }
      if (!placed) throw std::runtime_error("lanczos_lambda_max: could not restart basis");
    }
  }

  // Sturm count: eigenvalues of the tridiagonal strictly below x.
  auto count_below = [&](double x) {
    int count = 0;
    double q = alpha[0] - x;
    if (q < 0) ++count;
    for (int j = 1; j < n; ++j) {
      const double denom = std::abs(q) < 1e-300 ? (q < 0 ? -1e-300 : 1e-300) : q;
      q = alpha[j] - x - beta[j] * beta[j] / denom;
      if (q < 0) ++count;
    }
    return count;
  };

  double lo = alpha[0], hi = alpha[0];
  for (int j = 0; j < n; ++j) {
    const double radius = (j > 0 ? std::abs(beta[j]) : 0.0) + (j + 1 < n ? std::abs(beta[j + 1]) : 0.0);
    lo = std::min(lo, alpha[j] - radius);
    hi = std::max(hi, alpha[j] + radius);
  }
  double a = lo, b = hi + 1e-12 * scale;
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
    const double mid = 0.5 * (a + b);
    if (count_below(mid) >= n) b = mid;  // all eigenvalues below mid
    else a = mid;
  }
  const double lambda = 0.5 * (a + b);

  // Inverse iteration on the tridiagonal (Wilkinson-safeguarded pivots).
  std::vector<double> y(n, 1.0 / std::sqrt(static_cast<double>(n)));
  const double shift = lambda + 1e-12 * scale;
  for (int iter = 0; iter < 3; ++iter) {
    std::vector<double> diag(n), rhs = y;
    std::vector<double> lower(n, 0.0), upper(n, 0.0);
    for (int j = 0; j < n; ++j) {
      diag[j] = alpha[j] - shift;
      if (j > 0) lower[j] = beta[j];
      if (j + 1 < n) upper[j] = beta[j + 1];
    }
    for (int j = 0; j < n - 1; ++j) {  // forward elimination without pivoting, safeguarded
      if (std::abs(diag[j]) < 1e-14 * scale) diag[j] = (diag[j] < 0 ? -1e-14 : 1e-14) * scale;
      const double factor = lower[j + 1] / diag[j];
      diag[j + 1] -= factor * upper[j];
      rhs[j + 1] -= factor * rhs[j];
    }
    if (std::abs(diag[n - 1]) < 1e-14 * scale) diag[n - 1] = (diag[n - 1] < 0 ? -1e-14 : 1e-14) * scale;
    y[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int j = n - 2; j >= 0; --j) y[j] = (rhs[j] - upper[j] * y[j + 1]) / diag[j];
    double norm = 0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : y) v /= norm;
  }

  PowerIterationResult res;
  res.lambda = lambda;
  res.eigenvector = dmat(n, 1);
  for (int i = 0; i < n; ++i) {
    double acc = 0;
    for (int j = 0; j < n; ++j) acc += col(j, i) * y[j];
    res.eigenvector(i, 0) = acc;
  }
  double vn = frobenius_norm(res.eigenvector);
  for (int i = 0; i < n; ++i) res.eigenvector(i, 0) /= vn;
  res.iterations = n;
  res.converged = true;
  return res;
}

// Skeleton graphs are trees, hence bipartite, hence lambda_max = 2 exactly.
constexpr double kTreeLambdaMax = 2.0;

inline LaplacianPair build_laplacian_pair(const dmat& adjacency, double lambda_max) {
  LaplacianPair p;
  p.l_norm = normalized_laplacian(adjacency);
  p.lambda_max = lambda_max;
  p.l_scaled = scaled_laplacian(p.l_norm, lambda_max);
  return p;
}

// The K Chebyshev basis terms [T_0(L~)X, ..., T_{K-1}(L~)X] via the
// three-term recurrence. Matrix products only; no eigendecomposition.
template <typename T>
std::vector<Mat<T>> chebyshev_apply(const Mat<T>& l_scaled, const Mat<T>& x, int order) {
  if (order < 1) throw std::invalid_argument("chebyshev_apply: K must be >= 1, got " + std::to_string(order));
  if (l_scaled.cols() != x.rows()) detail::shape_error("chebyshev_apply", l_scaled, x);
  std::vector<Mat<T>> terms;
  terms.reserve(order);
  terms.push_back(x);
  if (order == 1) return terms;
  terms.push_back(matmul(l_scaled, x));
  for (int k = 2; k < order; ++k) {
    Mat<T> t = matmul(l_scaled, terms[k - 1]);
    for (size_t i = 0; i < t.size(); ++i) t.data()[i] = T(2) * t.data()[i] - terms[k - 2].data()[i];
    terms.push_back(std::move(t));
  }
  return terms;
}

template <typename T>
Mat<T> concat_cols(const std::vector<Mat<T>>& mats) {
  if (mats.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int rows = mats[0].rows();
  int total = 0;
  for (const auto& m : mats) {
    if (m.rows() != rows) detail::shape_error("concat_cols", mats[0], m);
    total += m.cols();
  }
  Mat<T> out(rows, total);
  int off = 0;
  for (const auto& m : mats) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < m.cols(); ++j) out(i, off + j) = m(i, j);
    off += m.cols();
  }
  return out;
}

}  // namespace a2gnn
