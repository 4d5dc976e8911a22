#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2gnn/config.hpp"
#include "a2gnn/dataio.hpp"
#include "a2gnn/model.hpp"

// SGD-with-momentum training and evaluation. Heavy-ball convention:
//   v <- momentum * v + g,   p <- p - lr * v
// so the first step from rest is plain gradient descent and two steps under a
// constant gradient displace by lr*g*(2 + momentum).

namespace a2gnn {

template <typename T>
void sgd_momentum_step(Mat<T>& param, const Mat<T>& grad, Mat<T>& velocity, double lr, double momentum) {
  if (!param.same_shape(grad)) detail::shape_error("sgd_momentum_step grad", param, grad);
  if (!param.same_shape(velocity)) detail::shape_error("sgd_momentum_step velocity", param, velocity);
  const T m = static_cast<T>(momentum), step = static_cast<T>(lr);
  for (size_t i = 0; i < param.size(); ++i) {
    velocity.data()[i] = m * velocity.data()[i] + grad.data()[i];
    param.data()[i] -= step * velocity.data()[i];
  }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct Metrics {
  double accuracy = 0;
  std::vector<double> precision;                // per class, 0 when the class was never predicted
  std::vector<double> recall;                   // per class, 0 when the class has no samples
  std::vector<std::vector<long long>> confusion;  // [true][predicted]
  long long total = 0;
};

inline Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("compute_metrics: label count mismatch");
  Metrics m;
  m.confusion.assign(num_classes, std::vector<long long>(num_classes, 0));
  for (size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 || y_pred[i] >= num_classes)
      throw std::invalid_argument("compute_metrics: label outside [0,C)");
    ++m.confusion[y_true[i]][y_pred[i]];
  }
  m.total = static_cast<long long>(y_true.size());
  long long correct = 0;
  m.precision.assign(num_classes, 0.0);
  m.recall.assign(num_classes, 0.0);
  for (int c = 0; c < num_classes; ++c) {
    correct += m.confusion[c][c];
    long long row = 0, col = 0;
    for (int k = 0; k < num_classes; ++k) {
      row += m.confusion[c][k];
      col += m.confusion[k][c];
    }
    if (row > 0) m.recall[c] = static_cast<double>(m.confusion[c][c]) / row;
    if (col > 0) m.precision[c] = static_cast<double>(m.confusion[c][c]) / col;
  }
  m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(correct) / m.total;
  return m;
}

// ---------------------------------------------------------------------------
// preprocessing shared by training and evaluation
// ---------------------------------------------------------------------------

// Center every frame; rotation-align only when the manifest names the four
// reference joints (the NTU-style protocol).
inline SkeletonSequence normalize_sequence(SkeletonSequence seq, const DatasetManifest& manifest) {
  seq = center_frames(std::move(seq));
  if (const auto align = find_alignment_joints(manifest))
    seq = rotate_align(std::move(seq), align->right_shoulder, align->left_shoulder, align->spine_base, align->spine);
  return seq;
}

template <typename T>
int predict(const A2gnnModel<T>& model, const std::vector<Mat<T>>& frames) {
  const auto res = model.forward(frames);
  int argmax = 0;
  for (int c = 1; c < res.probabilities.rows(); ++c)
    if (res.probabilities(c, 0) > res.probabilities(argmax, 0)) argmax = c;
  return argmax;
}

// Evaluation inputs are deterministic: centered (and aligned), then reduced to
// the middle frame of each of the `segments` splits, no scale jitter.
template <typename T>
std::vector<Mat<T>> eval_frames(const A2gnnModel<T>& model, const SkeletonSequence& seq,
                                const DatasetManifest& manifest) {
  const auto prepped = segment_middle_frames(normalize_sequence(seq, manifest), model.config().segments);
  return model.cast_frames(prepped.frames);
}

template <typename T>
Metrics evaluate(const A2gnnModel<T>& model, const Dataset& dataset, const std::string& split) {
  const auto members = dataset.split(split);
  if (members.empty()) throw std::invalid_argument("evaluate: split \"" + split + "\" is empty");
  std::vector<int> y_true, y_pred;
  for (const SkeletonSequence* seq : members) {
    y_true.push_back(seq->label);
    y_pred.push_back(predict(model, eval_frames(model, *seq, dataset.manifest)));
  }
  return compute_metrics(y_true, y_pred, model.num_classes());
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double test_acc = 0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  int last_epoch = 0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<bool(const EpochLog&)> should_stop;  // checked after each epoch
};

template <typename T>
class Velocities {
 public:
  explicit Velocities(ParamStore<T>& store) {
    for (auto& e : store.entries()) slots_.push_back(Mat<T>(e.value.rows(), e.value.cols()));
  }
  Mat<T>& of(size_t i) { return slots_[i]; }

 private:
  std::vector<Mat<T>> slots_;
};

// One pass over the train split per epoch: fresh augmentation draw, sequence
// order reshuffled, per-sequence (or averaged mini-batch) heavy-ball updates.
// Writes checkpoint_latest.ckpt and train_log.jsonl under out_dir when given.
template <typename T>
TrainResult train(A2gnnModel<T>& model, const Dataset& dataset, const std::string& out_dir = {},
                  const TrainHooks& hooks = {}, int start_epoch = 0) {
  const TrainConfig& cfg = model.config();
  auto train_seqs = dataset.split("train");
  if (train_seqs.empty()) throw std::invalid_argument("train: no sequences assigned to the train split");
  const bool have_test = !dataset.split("test").empty();

  // normalize once; augmentation resamples every epoch
  std::vector<SkeletonSequence> normalized;
  normalized.reserve(train_seqs.size());
  for (const auto* s : train_seqs) normalized.push_back(normalize_sequence(*s, dataset.manifest));

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Velocities<T> velocity(model.store());
  const size_t num_params = model.store().entries().size();
  std::vector<Mat<T>> batch_grad;
  for (auto& e : model.store().entries()) batch_grad.push_back(Mat<T>(e.value.rows(), e.value.cols()));

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir + "/train_log.jsonl", start_epoch == 0 ? std::ios::trunc : std::ios::app);
  }

  TrainResult result;
  result.last_epoch = start_epoch;
  std::vector<size_t> order(normalized.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto apply_batch = [&](int count, double lr) {
    if (count == 0) return;
    double norm_sq = 0;
    for (size_t pi = 0; pi < num_params; ++pi) {
      Mat<T>& g = batch_grad[pi];
      if (count > 1)
        for (size_t i = 0; i < g.size(); ++i) g.data()[i] /= static_cast<T>(count);
      if (cfg.grad_clip > 0) norm_sq += static_cast<double>(dot_all(g, g));
    }
    double clip_scale = 1.0;
    if (cfg.grad_clip > 0 && std::sqrt(norm_sq) > cfg.grad_clip) clip_scale = cfg.grad_clip / std::sqrt(norm_sq);
    size_t pi = 0;
    for (auto& e : model.store().entries()) {
      Mat<T>& g = batch_grad[pi];
      if (clip_scale != 1.0)
        for (size_t i = 0; i < g.size(); ++i) g.data()[i] *= static_cast<T>(clip_scale);
      sgd_momentum_step(e.value, g, velocity.of(pi), lr, cfg.momentum);
      g.zero();
      ++pi;
    }
  };

  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = start_epoch + e + 1;
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, e);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    int correct = 0, in_batch = 0;
    for (size_t oi : order) {
      const SkeletonSequence& src = normalized[oi];
      const auto augmented = augment(src, cfg.segments, cfg.scale_lo, cfg.scale_hi, rng);
      const auto frames = model.cast_frames(augmented.frames);

      Tape<T> tape;
      Bindings<T> bindings;
      const auto fwd = model.build_tape(tape, bindings, frames, src.label);
      const double loss = static_cast<double>(fwd.loss->val()(0, 0));
      if (!std::isfinite(loss)) {
        const std::string bad = model.store().first_non_finite();
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + " on sequence " +
                                 src.id +
                                 (bad.empty() ? std::string(" (parameters still finite)")
                                              : "; first non-finite parameter: " + bad));
      }
      loss_sum += loss;
      int argmax = 0;
      for (int c = 1; c < model.num_classes(); ++c)
        if (fwd.probabilities->val()(0, c) > fwd.probabilities->val()(0, argmax)) argmax = c;
      if (argmax == src.label) ++correct;

      tape.backward(fwd.loss);
      for (auto& [entry, node] : bindings.items) {
        if (node->grad_live) axpy(batch_grad[model.store().index_of(entry->name)], T(1), node->grad);
      }
      if (++in_batch == cfg.batch_size) {
        apply_batch(in_batch, lr);
        in_batch = 0;
      }
    }
    apply_batch(in_batch, lr);

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(normalized.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(normalized.size());
    row.test_acc = have_test ? evaluate(model, dataset, "test").accuracy : 0.0;
    result.history.push_back(row);
    result.last_epoch = epoch;

    if (!out_dir.empty()) {
      nlohmann::ordered_json j;
      j["epoch"] = row.epoch;
      j["train_loss"] = row.train_loss;
      j["train_acc"] = row.train_acc;
      j["test_acc"] = row.test_acc;
      log_file << j.dump() << "\n";
      log_file.flush();
      model.save(out_dir + "/checkpoint_latest.ckpt", {{"epoch", std::to_string(epoch)}});
    }
    if (hooks.on_epoch) hooks.on_epoch(row);
    if (hooks.should_stop && hooks.should_stop(row)) break;
  }
  return result;
}

}  // namespace a2gnn
