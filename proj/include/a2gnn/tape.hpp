#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"

// Reverse-mode taped autodiff over dense matrices. Exactly the primitive set
// the model needs, nothing more: no broadcasting rules, no fusion, no higher
// order derivatives. Forward values are computed eagerly; each op registers a
// closure that pushes its upstream gradient into the parents.

namespace a2gnn {

template <typename T>
struct DiffNode {
  Mat<T> owned;                    // value storage for computed nodes
  const Mat<T>* external = nullptr;  // leaves may alias caller-owned storage
  Mat<T> grad;
  bool requires_grad = false;
  bool grad_live = false;
  std::function<void()> backfn;  // empty for leaves

  const Mat<T>& val() const { return external ? *external : owned; }
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }
};

template <typename T>
class Tape {
 public:
  using Node = DiffNode<T>;

  Node* constant(Mat<T> v) {
    Node* n = fresh();
    n->owned = std::move(v);
    return n;
  }

  // Leaf aliasing caller-owned storage; the caller keeps it alive and unchanged
  // for the life of the tape.
  Node* leaf(const Mat<T>* v, bool requires_grad) {
    Node* n = fresh();
    n->external = v;
    n->requires_grad = requires_grad;
    return n;
  }

  Node* param(const Mat<T>* v) { return leaf(v, true); }

  Node* matmul(Node* a, Node* b) {
    Node* n = fresh(a, b);
    matmul_into(n->owned, a->val(), b->val(), false);
    if (n->requires_grad) {
      n->backfn = [n, a, b] {
        if (a->requires_grad) matmul_bt_add(ensure_grad(a), n->grad, b->val());
        if (b->requires_grad) matmul_at_add(ensure_grad(b), a->val(), n->grad);
      };
    }
    return n;
  }

  Node* add(Node* a, Node* b) {
    Node* n = fresh(a, b);
    n->owned = a2gnn::add(a->val(), b->val());
    if (n->requires_grad) {
      n->backfn = [n, a, b] {
        if (a->requires_grad) accumulate(a, n->grad);
        if (b->requires_grad) accumulate(b, n->grad);
      };
    }
    return n;
  }

  Node* sub(Node* a, Node* b) {
    Node* n = fresh(a, b);
    n->owned = a2gnn::sub(a->val(), b->val());
    if (n->requires_grad) {
      n->backfn = [n, a, b] {
        if (a->requires_grad) accumulate(a, n->grad);
        if (b->requires_grad) axpy(ensure_grad(b), T(-1), n->grad);
      };
    }
    return n;
  }

  // A + 1 b: row vector b added to every row of A.
  Node* add_broadcast_row(Node* a, Node* b) {
    if (b->rows() != 1 || b->cols() != a->cols())
      throw std::invalid_argument("add_broadcast_row: shape mismatch " + a->val().shape_str() + " vs " +
                                  b->val().shape_str());
    Node* n = fresh(a, b);
    n->owned = a->val();
    for (int i = 0; i < n->rows(); ++i)
      for (int j = 0; j < n->cols(); ++j) n->owned(i, j) += b->val()(0, j);
    if (n->requires_grad) {
      n->backfn = [n, a, b] {
        if (a->requires_grad) accumulate(a, n->grad);
        if (b->requires_grad) {
          Mat<T>& gb = ensure_grad(b);
          for (int i = 0; i < n->grad.rows(); ++i)
            for (int j = 0; j < n->grad.cols(); ++j) gb(0, j) += n->grad(i, j);
        }
      };
    }
    return n;
  }

  Node* hadamard(Node* a, Node* b) {
    Node* n = fresh(a, b);
    n->owned = a2gnn::hadamard(a->val(), b->val());
    if (n->requires_grad) {
      n->backfn = [n, a, b] {
        if (a->requires_grad) {
          Mat<T>& ga = ensure_grad(a);
          for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += n->grad.data()[i] * b->val().data()[i];
        }
        if (b->requires_grad) {
          Mat<T>& gb = ensure_grad(b);
          for (size_t i = 0; i < gb.size(); ++i) gb.data()[i] += n->grad.data()[i] * a->val().data()[i];
        }
      };
    }
    return n;
  }

  Node* tanh(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.size(); ++i) n->owned.data()[i] = std::tanh(n->owned.data()[i]);
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) {
          const T y = n->owned.data()[i];
          ga.data()[i] += n->grad.data()[i] * (T(1) - y * y);
        }
      };
    }
    return n;
  }

  Node* sigmoid(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.size(); ++i) {
      const T x = n->owned.data()[i];
      n->owned.data()[i] = T(1) / (T(1) + std::exp(-x));
    }
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) {
          const T y = n->owned.data()[i];
          ga.data()[i] += n->grad.data()[i] * y * (T(1) - y);
        }
      };
    }
    return n;
  }

  Node* log(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.size(); ++i) {
      const T x = n->owned.data()[i];
      if (x <= T(0)) throw std::domain_error("log: nonpositive input");
      n->owned.data()[i] = std::log(x);
    }
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += n->grad.data()[i] / a->val().data()[i];
      };
    }
    return n;
  }

  Node* rsqrt(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.size(); ++i) {
      const T x = n->owned.data()[i];
      if (x <= T(0)) throw std::domain_error("rsqrt: nonpositive input");
      n->owned.data()[i] = T(1) / std::sqrt(x);
    }
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) {
          const T y = n->owned.data()[i];
          ga.data()[i] += n->grad.data()[i] * T(-0.5) * y * y * y;
        }
      };
    }
    return n;
  }

  Node* reciprocal(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.size(); ++i) {
      const T x = n->owned.data()[i];
      if (x == T(0)) throw std::domain_error("reciprocal: zero input");
      n->owned.data()[i] = T(1) / x;
    }
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) {
          const T y = n->owned.data()[i];
          ga.data()[i] += n->grad.data()[i] * (-y * y);
        }
      };
    }
    return n;
  }

  // Row-wise softmax with max subtraction before exponentiation.
  Node* softmax_rows(Node* a) {
    Node* n = fresh(a);
    n->owned = a->val();
    for (int i = 0; i < n->rows(); ++i) {
      T* row = n->owned.data() + static_cast<size_t>(i) * n->cols();
      T mx = row[0];
      for (int j = 1; j < n->cols(); ++j) mx = std::max(mx, row[j]);
      T sum = T(0);
      for (int j = 0; j < n->cols(); ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (int j = 0; j < n->cols(); ++j) row[j] /= sum;
    }
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (int i = 0; i < n->rows(); ++i) {
          const T* y = n->owned.data() + static_cast<size_t>(i) * n->cols();
          const T* g = n->grad.data() + static_cast<size_t>(i) * n->cols();
          T dot = T(0);
          for (int j = 0; j < n->cols(); ++j) dot += y[j] * g[j];
          T* out = ga.data() + static_cast<size_t>(i) * ga.cols();
          for (int j = 0; j < n->cols(); ++j) out[j] += y[j] * (g[j] - dot);
        }
      };
    }
    return n;
  }

  Node* transpose(Node* a) {
    Node* n = fresh(a);
    n->owned = a2gnn::transpose(a->val());
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (int i = 0; i < n->grad.rows(); ++i)
          for (int j = 0; j < n->grad.cols(); ++j) ga(j, i) += n->grad(i, j);
      };
    }
    return n;
  }

  Node* scale(Node* a, T s) {
    Node* n = fresh(a);
    n->owned = a2gnn::scale(a->val(), s);
    if (n->requires_grad) {
      n->backfn = [n, a, s] {
        if (a->requires_grad) axpy(ensure_grad(a), s, n->grad);
      };
    }
    return n;
  }

  // Matrix times a 1x1 scalar node.
  Node* mul_scalar(Node* a, Node* s) {
    if (s->rows() != 1 || s->cols() != 1) throw std::invalid_argument("mul_scalar: scalar operand must be 1x1");
    Node* n = fresh(a, s);
    n->owned = a2gnn::scale(a->val(), s->val()(0, 0));
    if (n->requires_grad) {
      n->backfn = [n, a, s] {
        if (a->requires_grad) axpy(ensure_grad(a), s->val()(0, 0), n->grad);
        if (s->requires_grad) ensure_grad(s)(0, 0) += dot_all(n->grad, a->val());
      };
    }
    return n;
  }

  Node* concat_cols(const std::vector<Node*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const int rows = parts[0]->rows();
    int total = 0;
    bool req = false;
    for (Node* p : parts) {
      if (p->rows() != rows)
        throw std::invalid_argument("concat_cols: shape mismatch " + parts[0]->val().shape_str() + " vs " +
                                    p->val().shape_str());
      total += p->cols();
      req = req || p->requires_grad;
    }
    Node* n = fresh();
    n->requires_grad = req;
    n->owned = Mat<T>(rows, total);
    int off = 0;
    for (Node* p : parts) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < p->cols(); ++j) n->owned(i, off + j) = p->val()(i, j);
      off += p->cols();
    }
    if (n->requires_grad) {
      std::vector<Node*> ps = parts;
      n->backfn = [n, ps] {
        int off2 = 0;
        for (Node* p : ps) {
          if (p->requires_grad) {
            Mat<T>& gp = ensure_grad(p);
            for (int i = 0; i < gp.rows(); ++i)
              for (int j = 0; j < gp.cols(); ++j) gp(i, j) += n->grad(i, off2 + j);
          }
          off2 += p->cols();
        }
      };
    }
    return n;
  }

  // Row-major reinterpretation; element count must match.
  Node* reshape(Node* a, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != a->val().size())
      throw std::invalid_argument("reshape: cannot view " + a->val().shape_str() + " as " + std::to_string(rows) +
                                  "x" + std::to_string(cols));
    Node* n = fresh(a);
    n->owned = Mat<T>(rows, cols);
    std::copy(a->val().data(), a->val().data() + a->val().size(), n->owned.data());
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += n->grad.data()[i];
      };
    }
    return n;
  }

  // Column means: returns 1 x cols.
  Node* mean_rows(Node* a) {
    Node* n = fresh(a);
    const int r = a->rows(), c = a->cols();
    n->owned = Mat<T>(1, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) n->owned(0, j) += a->val()(i, j);
    for (int j = 0; j < c; ++j) n->owned(0, j) /= static_cast<T>(r);
    if (n->requires_grad) {
      n->backfn = [n, a, r] {
        Mat<T>& ga = ensure_grad(a);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < ga.cols(); ++j) ga(i, j) += n->grad(0, j) / static_cast<T>(r);
      };
    }
    return n;
  }

  Node* select_row(Node* a, int row) {
    if (row < 0 || row >= a->rows()) throw std::out_of_range("select_row: row " + std::to_string(row));
    Node* n = fresh(a);
    n->owned = Mat<T>(1, a->cols());
    for (int j = 0; j < a->cols(); ++j) n->owned(0, j) = a->val()(row, j);
    if (n->requires_grad) {
      n->backfn = [n, a, row] {
        Mat<T>& ga = ensure_grad(a);
        for (int j = 0; j < ga.cols(); ++j) ga(row, j) += n->grad(0, j);
      };
    }
    return n;
  }

  Node* select_element(Node* a, int row, int col) {
    if (row < 0 || row >= a->rows() || col < 0 || col >= a->cols())
      throw std::out_of_range("select_element: (" + std::to_string(row) + "," + std::to_string(col) + ") of " +
                              a->val().shape_str());
    Node* n = fresh(a);
    n->owned = Mat<T>(1, 1);
    n->owned(0, 0) = a->val()(row, col);
    if (n->requires_grad) {
      n->backfn = [n, a, row, col] { ensure_grad(a)(row, col) += n->grad(0, 0); };
    }
    return n;
  }

  Node* sum_all(Node* a) {
    Node* n = fresh(a);
    n->owned = Mat<T>(1, 1);
    for (size_t i = 0; i < a->val().size(); ++i) n->owned(0, 0) += a->val().data()[i];
    if (n->requires_grad) {
      n->backfn = [n, a] {
        Mat<T>& ga = ensure_grad(a);
        for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += n->grad(0, 0);
      };
    }
    return n;
  }

  // Dominant eigenvalue of a symmetric matrix as a 1x1 node, computed by full
  // Lanczos (exact at these sizes). Backward is the first-order perturbation
  // rule d(lambda)/dM = v v^T with v the dominant eigenvector.
  Node* lambda_max(Node* a) {
    if (a->rows() != a->cols()) throw std::invalid_argument("lambda_max: matrix not square " + a->val().shape_str());
    const dmat md = to_double(a->val());
    const PowerIterationResult pir = lanczos_lambda_max(md);
    Node* n = fresh(a);
    n->owned = Mat<T>(1, 1);
    n->owned(0, 0) = static_cast<T>(pir.lambda);
    if (n->requires_grad) {
      const dmat v = pir.eigenvector;
      n->backfn = [n, a, v] {
        Mat<T>& ga = ensure_grad(a);
        const T g = n->grad(0, 0);
        for (int i = 0; i < ga.rows(); ++i)
          for (int j = 0; j < ga.cols(); ++j) ga(i, j) += g * static_cast<T>(v(i, 0) * v(j, 0));
      };
    }
    return n;
  }

  // Gradients of interior nodes are scratch recomputed per backward call;
  // leaf gradients accumulate across calls until the caller clears them.
  void backward(Node* loss) {
    if (loss->rows() != 1 || loss->cols() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + loss->val().shape_str());
    if (!loss->requires_grad)
      throw std::invalid_argument("backward: loss does not depend on any differentiable parameter");
    for (Node& n : nodes_) {
      if (n.backfn && n.grad_live) {
        n.grad.zero();
        n.grad_live = false;
      }
    }
    ensure_grad(loss)(0, 0) += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->grad_live && it->backfn) it->backfn();
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;

  Node* fresh() { return &nodes_.emplace_back(); }
  Node* fresh(Node* a) {
    Node* n = fresh();
    n->requires_grad = a->requires_grad;
    return n;
  }
  Node* fresh(Node* a, Node* b) {
    Node* n = fresh();
    n->requires_grad = a->requires_grad || b->requires_grad;
    return n;
  }

  static Mat<T>& ensure_grad(Node* n) {
    if (!n->grad_live) {
      if (n->grad.empty() || !n->grad.same_shape(n->val())) n->grad = Mat<T>(n->rows(), n->cols());
      n->grad_live = true;
    }
    return n->grad;
  }

  static void accumulate(Node* n, const Mat<T>& g) { axpy(ensure_grad(n), T(1), g); }

  static dmat to_double(const Mat<T>& m) {
    if constexpr (std::is_same_v<T, double>) {
      return m;
    } else {
      return m.template cast<double>();
    }
  }
};

using dtape = Tape<double>;

}  // namespace a2gnn
