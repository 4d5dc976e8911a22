#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"
#include "a2gnn/tape.hpp"

// The three learnable layer types plus the classifier head. Each comes in two
// flavors with identical arithmetic: a plain-matrix version for inference and
// oracle comparisons, and a tape version for training. lambda_max of pooled
// graphs is recomputed per call via Lanczos (pooled graphs are generally
// non-bipartite); the input skeleton keeps the fixed tree value 2.

namespace a2gnn {


// ---------------------------------------------------------------------------
// spectral graph filtering: Z = [T_0(L~)X | ... | T_{K-1}(L~)X] Theta
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> spectral_filter_forward(const Mat<T>& l_scaled, const Mat<T>& x, const Mat<T>& theta, int order) {
  if (theta.rows() != x.cols() * order)
    throw std::invalid_argument("spectral_filter_forward: theta rows " + std::to_string(theta.rows()) +
                                " != d_in*K = " + std::to_string(x.cols() * order));
  return matmul(concat_cols(chebyshev_apply(l_scaled, x, order)), theta);
}

template <typename T>
DiffNode<T>* spectral_filter_tape(Tape<T>& tape, DiffNode<T>* l_scaled, DiffNode<T>* x, DiffNode<T>* theta,
                                  int order) {
  if (order < 1) throw std::invalid_argument("spectral_filter_tape: K must be >= 1");
  if (theta->rows() != x->cols() * order)
    throw std::invalid_argument("spectral_filter_tape: theta rows " + std::to_string(theta->rows()) +
                                " != d_in*K = " + std::to_string(x->cols() * order));
  std::vector<DiffNode<T>*> terms;
  terms.reserve(order);
  terms.push_back(x);
  if (order >= 2) terms.push_back(tape.matmul(l_scaled, x));
  for (int k = 2; k < order; ++k)
    terms.push_back(tape.sub(tape.scale(tape.matmul(l_scaled, terms[k - 1]), T(2)), terms[k - 2]));
  return tape.matmul(tape.concat_cols(terms), theta);
}

// ---------------------------------------------------------------------------
// action-attending: W(Z) = row-softmax((tanh(Z Q + 1 b) V)^T), Z~ = W Z,
// pooled graph A' = W A W^T with its recomputed scaled Laplacian.
// ---------------------------------------------------------------------------

template <typename T>
dmat to_dmat(const Mat<T>& m) {
  if constexpr (std::is_same_v<T, double>) {
    return m;
  } else {
    return m.template cast<double>();
  }
}

template <typename T>
struct AttendResult {
  Mat<T> w;                // N' x N row-stochastic
  Mat<T> z_tilde;          // N' x d_z
  Mat<T> a_pooled;         // N' x N'
  Mat<T> l_scaled_pooled;  // N' x N'
  double lambda_max = 0;
};

template <typename T>
Mat<T> pooled_normalized_laplacian(const Mat<T>& a_pooled) {
  const int n = a_pooled.rows();
  for (int i = 0; i < n; ++i) {
    T s = T(0);
    for (int j = 0; j < n; ++j) s += a_pooled(i, j);
    if (!(s > T(0))) throw std::runtime_error("pooled isolated node: row " + std::to_string(i) + " of A_pooled sums to 0");
  }
  return normalized_laplacian(a_pooled);
}

inline double pooled_lambda_max(const dmat& l_norm_pooled) {
  return std::min(lanczos_lambda_max(l_norm_pooled).lambda, 2.0);
}

template <typename T>
AttendResult<T> attend_forward(const Mat<T>& z, const Mat<T>& a, const Mat<T>& q, const Mat<T>& v, const Mat<T>& b,
                               bool need_pooled_laplacian = true) {
  if (b.rows() != 1 || b.cols() != q.cols())
    throw std::invalid_argument("attend_forward: b must be 1x d', got " + b.shape_str());
  Mat<T> h = matmul(z, q);  // N x d'
  for (int i = 0; i < h.rows(); ++i)
    for (int j = 0; j < h.cols(); ++j) h(i, j) = std::tanh(h(i, j) + b(0, j));
  Mat<T> raw = transpose(matmul(h, v));  // N' x N

  AttendResult<T> out;
  out.w = raw;
  for (int i = 0; i < out.w.rows(); ++i) {
    T* row = out.w.data() + static_cast<size_t>(i) * out.w.cols();
    T mx = row[0];
    for (int j = 1; j < out.w.cols(); ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < out.w.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < out.w.cols(); ++j) row[j] /= sum;
  }
  out.z_tilde = matmul(out.w, z);
  // W A W^T is symmetric in exact arithmetic; the two summation orders differ
  // by ulps, so pin it down before deriving degrees from it.
  Mat<T> pooled = matmul(out.w, matmul(a, transpose(out.w)));
  out.a_pooled = scale(add(pooled, transpose(pooled)), T(0.5));
  if (need_pooled_laplacian) {
    const Mat<T> l_norm = pooled_normalized_laplacian(out.a_pooled);
    out.lambda_max = pooled_lambda_max(to_dmat(l_norm));
    out.l_scaled_pooled = scaled_laplacian(l_norm, out.lambda_max);
  }
  return out;
}

template <typename T>
struct TapeAttendOut {
  DiffNode<T>* w = nullptr;
  DiffNode<T>* z_tilde = nullptr;
  DiffNode<T>* a_pooled = nullptr;
  DiffNode<T>* l_scaled_pooled = nullptr;
};

template <typename T>
TapeAttendOut<T> attend_tape(Tape<T>& tape, DiffNode<T>* z, DiffNode<T>* a, DiffNode<T>* q, DiffNode<T>* v,
                             DiffNode<T>* b, bool need_pooled_laplacian = true) {
  TapeAttendOut<T> out;
  DiffNode<T>* h = tape.tanh(tape.add_broadcast_row(tape.matmul(z, q), b));
  DiffNode<T>* raw = tape.transpose(tape.matmul(h, v));
  out.w = tape.softmax_rows(raw);
  out.z_tilde = tape.matmul(out.w, z);
  DiffNode<T>* pooled = tape.matmul(out.w, tape.matmul(a, tape.transpose(out.w)));
  out.a_pooled = tape.scale(tape.add(pooled, tape.transpose(pooled)), T(0.5));
  if (!need_pooled_laplacian) return out;

  const int n = out.a_pooled->rows();
  DiffNode<T>* ones = tape.constant(Mat<T>::filled(n, 1, T(1)));
  DiffNode<T>* degrees = tape.matmul(out.a_pooled, ones);
  for (int i = 0; i < n; ++i)
    if (!(degrees->val()(i, 0) > T(0)))
      throw std::runtime_error("pooled isolated node: row " + std::to_string(i) + " of A_pooled sums to 0");
  DiffNode<T>* r = tape.rsqrt(degrees);
  DiffNode<T>* eye = tape.constant(Mat<T>::identity(n));
  DiffNode<T>* l_norm = tape.sub(eye, tape.hadamard(tape.matmul(r, tape.transpose(r)), out.a_pooled));

  DiffNode<T>* lam = tape.lambda_max(l_norm);
  if (lam->val()(0, 0) > T(2)) lam = tape.constant(Mat<T>::filled(1, 1, T(2)));  // cap; spectrum bound of L_norm
  DiffNode<T>* two_over = tape.scale(tape.reciprocal(lam), T(2));
  out.l_scaled_pooled = tape.sub(tape.mul_scalar(l_norm, two_over), eye);
  return out;
}

// ---------------------------------------------------------------------------
// peephole LSTM step, column-vector convention (d x 1)
// ---------------------------------------------------------------------------

template <typename T>
struct LstmWeights {
  const Mat<T>*w_zi, *w_zf, *w_zc, *w_zo;  // d_h x in
  const Mat<T>*w_hi, *w_hf, *w_hc, *w_ho;  // d_h x d_h
  const Mat<T>*w_ci, *w_cf, *w_co;         // d_h x 1 peepholes
  const Mat<T>*b_i, *b_f, *b_c, *b_o;      // d_h x 1
};

template <typename T>
struct LstmStepResult {
  Mat<T> h, c, o;
};

template <typename T>
LstmStepResult<T> lstm_step(const Mat<T>& z, const Mat<T>& h_prev, const Mat<T>& c_prev, const LstmWeights<T>& w) {
  auto gate = [](Mat<T> pre) {
    for (size_t i = 0; i < pre.size(); ++i) pre.data()[i] = T(1) / (T(1) + std::exp(-pre.data()[i]));
    return pre;
  };
  const Mat<T> ig = gate(add(add(matmul(*w.w_zi, z), matmul(*w.w_hi, h_prev)), add(hadamard(*w.w_ci, c_prev), *w.b_i)));
  const Mat<T> fg = gate(add(add(matmul(*w.w_zf, z), matmul(*w.w_hf, h_prev)), add(hadamard(*w.w_cf, c_prev), *w.b_f)));
  Mat<T> cand = add(add(matmul(*w.w_zc, z), matmul(*w.w_hc, h_prev)), *w.b_c);
  for (size_t i = 0; i < cand.size(); ++i) cand.data()[i] = std::tanh(cand.data()[i]);
  LstmStepResult<T> out;
  out.c = add(hadamard(fg, c_prev), hadamard(ig, cand));
  out.o = gate(add(add(matmul(*w.w_zo, z), matmul(*w.w_ho, h_prev)), add(hadamard(*w.w_co, out.c), *w.b_o)));
  out.h = out.c;
  for (size_t i = 0; i < out.h.size(); ++i) out.h.data()[i] = out.o.data()[i] * std::tanh(out.h.data()[i]);
  return out;
}

template <typename T>
struct LstmNodeWeights {
  DiffNode<T>*w_zi, *w_zf, *w_zc, *w_zo;
  DiffNode<T>*w_hi, *w_hf, *w_hc, *w_ho;
  DiffNode<T>*w_ci, *w_cf, *w_co;
  DiffNode<T>*b_i, *b_f, *b_c, *b_o;
};

template <typename T>
struct LstmTapeState {
  DiffNode<T>*h, *c, *o;
};

template <typename T>
LstmTapeState<T> lstm_step_tape(Tape<T>& tape, DiffNode<T>* z, DiffNode<T>* h_prev, DiffNode<T>* c_prev,
                                const LstmNodeWeights<T>& w) {
  auto* ig = tape.sigmoid(tape.add(tape.add(tape.matmul(w.w_zi, z), tape.matmul(w.w_hi, h_prev)),
                                   tape.add(tape.hadamard(w.w_ci, c_prev), w.b_i)));
  auto* fg = tape.sigmoid(tape.add(tape.add(tape.matmul(w.w_zf, z), tape.matmul(w.w_hf, h_prev)),
                                   tape.add(tape.hadamard(w.w_cf, c_prev), w.b_f)));
  auto* cand = tape.tanh(tape.add(tape.add(tape.matmul(w.w_zc, z), tape.matmul(w.w_hc, h_prev)), w.b_c));
  LstmTapeState<T> out;
  out.c = tape.add(tape.hadamard(fg, c_prev), tape.hadamard(ig, cand));
  out.o = tape.sigmoid(tape.add(tape.add(tape.matmul(w.w_zo, z), tape.matmul(w.w_ho, h_prev)),
                                tape.add(tape.hadamard(w.w_co, out.c), w.b_o)));
  out.h = tape.hadamard(out.o, tape.tanh(out.c));
  return out;
}

// ---------------------------------------------------------------------------
// classifier head: tanh(FC1 f + b1) -> FC2 -> softmax
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> classify(const Mat<T>& features, const Mat<T>& fc1, const Mat<T>& b1, const Mat<T>& fc2, const Mat<T>& b2) {
  Mat<T> hidden = add(matmul(fc1, features), b1);
  for (size_t i = 0; i < hidden.size(); ++i) hidden.data()[i] = std::tanh(hidden.data()[i]);
  Mat<T> logits = add(matmul(fc2, hidden), b2);  // C x 1
  T mx = logits(0, 0);
  for (size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits.data()[i]);
  T sum = T(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    logits.data()[i] = std::exp(logits.data()[i] - mx);
    sum += logits.data()[i];
  }
  for (size_t i = 0; i < logits.size(); ++i) logits.data()[i] /= sum;
  return logits;  // C x 1 probabilities
}

template <typename T>
DiffNode<T>* classify_tape(Tape<T>& tape, DiffNode<T>* features, DiffNode<T>* fc1, DiffNode<T>* b1, DiffNode<T>* fc2,
                           DiffNode<T>* b2) {
  auto* hidden = tape.tanh(tape.add(tape.matmul(fc1, features), b1));
  auto* logits = tape.add(tape.matmul(fc2, hidden), b2);
  return tape.softmax_rows(tape.transpose(logits));  // 1 x C
}

}  // namespace a2gnn
