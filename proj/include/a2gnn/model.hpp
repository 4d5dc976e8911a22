#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "a2gnn/config.hpp"
#include "a2gnn/dataio.hpp"
#include "a2gnn/gradcheck.hpp"
#include "a2gnn/graph.hpp"
#include "a2gnn/layers.hpp"
#include "a2gnn/params.hpp"
#include "a2gnn/tape.hpp"

// The assembled network: spectral(3 -> c1) -> attend -> spectral(c1 -> c2, on
// the pooled graph) -> attend -> flatten -> peephole LSTM -> tanh FC -> softmax.
// The per-slice response is the LSTM output gate o_t, aggregated over time by
// mean (default) or last step. Without attending layers both spectral layers
// run on the input graph (the ablation configuration).

namespace a2gnn {

template <typename T>
struct ForwardResult {
  Mat<T> probabilities;            // C x 1
  std::vector<Mat<T>> frame_attn;  // first attending layer W per frame (empty when attending is off)
};

template <typename T>
struct TapeForward {
  DiffNode<T>* probabilities = nullptr;  // 1 x C
  DiffNode<T>* loss = nullptr;           // 1 x 1, only when a label was given
};

template <typename T>
class A2gnnModel {
 public:
  // Template graph from the manifest; class count always comes from the
  // manifest, never the config, so the head cannot go out of sync.
  A2gnnModel(TrainConfig cfg, const DatasetManifest& manifest)
      : cfg_(std::move(cfg)), num_nodes_(manifest.num_joints()), num_classes_(manifest.num_classes()),
        edges_(manifest.edges), store_(cfg_.seed) {
    cfg_.validate();
    if (num_nodes_ < 2) throw std::invalid_argument("model: need at least 2 joints");
    if (num_classes_ < 2) throw std::invalid_argument("model: need at least 2 classes");
    if (!is_connected(num_nodes_, edges_)) throw std::invalid_argument("model: template graph is disconnected");

    const dmat adjacency = adjacency_from_edges(num_nodes_, edges_);
    const dmat l_norm = normalized_laplacian(adjacency);
    template_lambda_ = cfg_.lambda_mode == "power" ? estimate_lambda_max(l_norm, 1e-10) : kTreeLambdaMax;
    adjacency_ = to_mat(adjacency);
    l_scaled_ = to_mat(scaled_laplacian(l_norm, template_lambda_));

    init_params();
  }

  const TrainConfig& config() const { return cfg_; }
  int num_nodes() const { return num_nodes_; }
  int num_classes() const { return num_classes_; }
  int lstm_input_width() const { return num_nodes_ * cfg_.channels2; }
  double template_lambda() const { return template_lambda_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  // ------------------------------------------------------------------ inference

  ForwardResult<T> forward(const std::vector<Mat<T>>& frames) const {
    check_frames(frames);
    ForwardResult<T> out;
    const LstmWeights<T> lstm = lstm_weights();
    Mat<T> h(cfg_.hidden_size, 1), c(cfg_.hidden_size, 1);
    Mat<T> o_sum(cfg_.hidden_size, 1), o_last;
    for (const Mat<T>& x : frames) {
      Mat<T> z1 = spectral_filter_forward(l_scaled_, x, p("filter1.theta"), cfg_.order);
      Mat<T> features;
      if (cfg_.use_attend) {
        auto at1 = attend_forward(z1, adjacency_, p("attend1.q"), p("attend1.v"), p("attend1.b"));
        out.frame_attn.push_back(at1.w);
        Mat<T> z2 = spectral_filter_forward(at1.l_scaled_pooled, at1.z_tilde, p("filter2.theta"), cfg_.order);
        auto at2 = attend_forward(z2, at1.a_pooled, p("attend2.q"), p("attend2.v"), p("attend2.b"),
                                  /*need_pooled_laplacian=*/false);
        features = std::move(at2.z_tilde);
      } else {
        features = spectral_filter_forward(l_scaled_, z1, p("filter2.theta"), cfg_.order);
      }
      Mat<T> z(lstm_input_width(), 1);
      std::copy(features.data(), features.data() + features.size(), z.data());  // row-major flatten
      auto step = lstm_step(z, h, c, lstm);
      h = std::move(step.h);
      c = std::move(step.c);
      axpy(o_sum, T(1), step.o);
      o_last = std::move(step.o);
    }
    Mat<T> agg = cfg_.temporal_agg == TemporalAgg::kMean
                     ? scale(o_sum, T(1) / static_cast<T>(frames.size()))
                     : o_last;
    out.probabilities = classify(agg, p("head.fc1"), p("head.b1"), p("head.fc2"), p("head.b2"));
    return out;
  }

  double loss(const std::vector<Mat<T>>& frames, int label) const {
    check_label(label);
    const auto res = forward(frames);
    return -std::log(static_cast<double>(res.probabilities(label, 0)));
  }

  // Joint saliency from the first attending layer: column means of each
  // frame's row-stochastic W. Rows sum to 1.
  dmat extract_au_weights(const std::vector<Mat<T>>& frames) const {
    if (!cfg_.use_attend) throw std::logic_error("extract_au_weights: model built without attending layers");
    const auto res = forward(frames);
    dmat saliency(static_cast<int>(res.frame_attn.size()), num_nodes_);
    for (size_t t = 0; t < res.frame_attn.size(); ++t) {
      const Mat<T>& w = res.frame_attn[t];
      for (int j = 0; j < w.cols(); ++j) {
        double colmean = 0;
        for (int i = 0; i < w.rows(); ++i) colmean += static_cast<double>(w(i, j));
        saliency(static_cast<int>(t), j) = colmean / w.rows();
      }
    }
    return saliency;
  }

  // ------------------------------------------------------------------ training graph

  TapeForward<T> build_tape(Tape<T>& tape, Bindings<T>& bindings, const std::vector<Mat<T>>& frames,
                            int label = -1) {
    check_frames(frames);
    if (label >= 0) check_label(label);

    auto* theta1 = bind(tape, bindings, "filter1.theta");
    auto* theta2 = bind(tape, bindings, "filter2.theta");
    DiffNode<T>*q1{}, *v1{}, *b1{}, *q2{}, *v2{}, *b2{};
    if (cfg_.use_attend) {
      q1 = bind(tape, bindings, "attend1.q");
      v1 = bind(tape, bindings, "attend1.v");
      b1 = bind(tape, bindings, "attend1.b");
      q2 = bind(tape, bindings, "attend2.q");
      v2 = bind(tape, bindings, "attend2.v");
      b2 = bind(tape, bindings, "attend2.b");
    }
    LstmNodeWeights<T> lstm{};
    const char* lstm_names[] = {"lstm.w_zi", "lstm.w_zf", "lstm.w_zc", "lstm.w_zo", "lstm.w_hi",
                                "lstm.w_hf", "lstm.w_hc", "lstm.w_ho", "lstm.w_ci", "lstm.w_cf",
                                "lstm.w_co", "lstm.b_i",  "lstm.b_f",  "lstm.b_c",  "lstm.b_o"};
    DiffNode<T>** lstm_slots[] = {&lstm.w_zi, &lstm.w_zf, &lstm.w_zc, &lstm.w_zo, &lstm.w_hi,
                                  &lstm.w_hf, &lstm.w_hc, &lstm.w_ho, &lstm.w_ci, &lstm.w_cf,
                                  &lstm.w_co, &lstm.b_i,  &lstm.b_f,  &lstm.b_c,  &lstm.b_o};
    for (int g = 0; g < 15; ++g) *lstm_slots[g] = bind(tape, bindings, lstm_names[g]);
    auto* fc1 = bind(tape, bindings, "head.fc1");
    auto* hb1 = bind(tape, bindings, "head.b1");
    auto* fc2 = bind(tape, bindings, "head.fc2");
    auto* hb2 = bind(tape, bindings, "head.b2");

    DiffNode<T>* adjacency = tape.leaf(&adjacency_, false);
    DiffNode<T>* l0 = tape.leaf(&l_scaled_, false);

    DiffNode<T>* h = tape.constant(Mat<T>(cfg_.hidden_size, 1));
    DiffNode<T>* c = tape.constant(Mat<T>(cfg_.hidden_size, 1));
    std::vector<DiffNode<T>*> responses;
    responses.reserve(frames.size());

    for (const Mat<T>& x : frames) {
      // Layer-1 basis terms involve only constants; keep them off the tape.
      DiffNode<T>* basis1 =
          tape.constant(concat_cols(chebyshev_apply(l_scaled_, x, cfg_.order)));
      DiffNode<T>* z1 = tape.matmul(basis1, theta1);
      DiffNode<T>* features;
      if (cfg_.use_attend) {
        auto at1 = attend_tape(tape, z1, adjacency, q1, v1, b1);
        DiffNode<T>* z2 = spectral_filter_tape(tape, at1.l_scaled_pooled, at1.z_tilde, theta2, cfg_.order);
        auto at2 = attend_tape(tape, z2, at1.a_pooled, q2, v2, b2, /*need_pooled_laplacian=*/false);
        features = at2.z_tilde;
      } else {
        features = spectral_filter_tape(tape, l0, z1, theta2, cfg_.order);
      }
      DiffNode<T>* z = tape.reshape(features, lstm_input_width(), 1);
      auto step = lstm_step_tape(tape, z, h, c, lstm);
      h = step.h;
      c = step.c;
      responses.push_back(step.o);
    }

    DiffNode<T>* agg;
    if (cfg_.temporal_agg == TemporalAgg::kMean) {
      DiffNode<T>* stacked = tape.concat_cols(responses);  // d_h x T
      agg = tape.matmul(stacked, tape.constant(Mat<T>::filled(static_cast<int>(frames.size()), 1,
                                                              T(1) / static_cast<T>(frames.size()))));
    } else {
      agg = responses.back();
    }

    TapeForward<T> out;
    out.probabilities = classify_tape(tape, agg, fc1, hb1, fc2, hb2);
    if (label >= 0)
      out.loss = tape.scale(tape.log(tape.select_element(out.probabilities, 0, label)), T(-1));
    return out;
  }

  // ------------------------------------------------------------------ checkpoints

  void save(const std::string& path, std::vector<std::pair<std::string, std::string>> extra_meta = {}) const {
    std::vector<std::pair<std::string, std::string>> meta = {
        {"K", std::to_string(cfg_.order)},
        {"channels1", std::to_string(cfg_.channels1)},
        {"channels2", std::to_string(cfg_.channels2)},
        {"hidden", std::to_string(cfg_.hidden_size)},
        {"temporal_agg", to_string(cfg_.temporal_agg)},
        {"use_attend", cfg_.use_attend ? "true" : "false"},
        {"lambda_mode", cfg_.lambda_mode},
        {"num_joints", std::to_string(num_nodes_)},
        {"num_classes", std::to_string(num_classes_)},
        {"seed", std::to_string(cfg_.seed)},
    };
    meta.insert(meta.end(), extra_meta.begin(), extra_meta.end());
    save_checkpoint(path, store_, meta);
  }

  // Rebuild a model from a checkpoint plus the dataset manifest it will run on.
  static A2gnnModel load(const std::string& path, const DatasetManifest& manifest, CheckpointMeta* meta_out = nullptr) {
    ParamStore<T> loaded(0);
    const CheckpointMeta meta = load_checkpoint(path, loaded);
    TrainConfig cfg;
    auto geti = [&](const char* key, int fallback) {
      auto it = meta.meta.find(key);
      return it == meta.meta.end() ? fallback : std::stoi(it->second);
    };
    auto gets = [&](const char* key, const std::string& fallback) {
      auto it = meta.meta.find(key);
      return it == meta.meta.end() ? fallback : it->second;
    };
    cfg.order = geti("K", cfg.order);
    cfg.channels1 = geti("channels1", cfg.channels1);
    cfg.channels2 = geti("channels2", cfg.channels2);
    cfg.hidden_size = geti("hidden", cfg.hidden_size);
    cfg.temporal_agg = temporal_agg_from_string(gets("temporal_agg", "mean"));
    cfg.use_attend = gets("use_attend", "true") == "true";
    cfg.lambda_mode = gets("lambda_mode", "fixed2");
    cfg.seed = std::stoull(gets("seed", "0"));
    if (geti("num_joints", manifest.num_joints()) != manifest.num_joints())
      throw std::runtime_error("checkpoint joint count does not match the dataset manifest");
    if (geti("num_classes", manifest.num_classes()) != manifest.num_classes())
      throw std::runtime_error("checkpoint class count does not match the dataset manifest");

    A2gnnModel model(cfg, manifest);
    for (auto& entry : model.store_.entries()) {
      if (!loaded.has(entry.name)) throw std::runtime_error("checkpoint missing parameter " + entry.name);
      Mat<T>& src = loaded.get(entry.name);
      if (!src.same_shape(entry.value))
        throw std::runtime_error("checkpoint shape mismatch for " + entry.name + ": " + src.shape_str() + " vs " +
                                 entry.value.shape_str());
      entry.value = std::move(src);
    }
    if (meta_out) *meta_out = meta;
    return model;
  }

  std::vector<Mat<T>> cast_frames(const std::vector<dmat>& frames) const {
    std::vector<Mat<T>> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(to_mat(f));
    return out;
  }

 private:
  TrainConfig cfg_;
  int num_nodes_;
  int num_classes_;
  EdgeList edges_;
  double template_lambda_ = kTreeLambdaMax;
  Mat<T> adjacency_;
  Mat<T> l_scaled_;
  ParamStore<T> store_;

  static Mat<T> to_mat(const dmat& m) {
    if constexpr (std::is_same_v<T, double>) {
      return m;
    } else {
      return m.template cast<T>();
    }
  }

  const Mat<T>& p(const std::string& name) const { return store_.get(name); }

  DiffNode<T>* bind(Tape<T>& tape, Bindings<T>& bindings, const std::string& name) {
    for (auto& entry : store_.entries())
      if (entry.name == name) return bindings.bind(tape, entry);
    throw std::out_of_range("model: unknown parameter " + name);
  }

  void check_frames(const std::vector<Mat<T>>& frames) const {
    if (frames.empty()) throw std::invalid_argument("model: empty frame sequence");
    for (const auto& f : frames)
      if (f.rows() != num_nodes_ || f.cols() != 3)
        throw std::invalid_argument("model: frame shape " + f.shape_str() + " does not match template " +
                                    std::to_string(num_nodes_) + "x3");
  }
  void check_label(int label) const {
    if (label < 0 || label >= num_classes_)
      throw std::invalid_argument("model: label " + std::to_string(label) + " outside [0," +
                                  std::to_string(num_classes_) + ")");
  }

  LstmWeights<T> lstm_weights() const {
    return LstmWeights<T>{&p("lstm.w_zi"), &p("lstm.w_zf"), &p("lstm.w_zc"), &p("lstm.w_zo"), &p("lstm.w_hi"),
                          &p("lstm.w_hf"), &p("lstm.w_hc"), &p("lstm.w_ho"), &p("lstm.w_ci"), &p("lstm.w_cf"),
                          &p("lstm.w_co"), &p("lstm.b_i"),  &p("lstm.b_f"),  &p("lstm.b_c"),  &p("lstm.b_o")};
  }

  void init_params() {
    std::mt19937_64 rng(cfg_.seed);
    auto weight = [&](const std::string& name, int rows, int cols, int fan_in, int fan_out) {
      store_.create(name, glorot_uniform<T>(rng, rows, cols, fan_in, fan_out));
    };
    auto zeros = [&](const std::string& name, int rows, int cols) { store_.create(name, Mat<T>(rows, cols)); };

    const int k = cfg_.order, c1 = cfg_.channels1, c2 = cfg_.channels2, dh = cfg_.hidden_size, n = num_nodes_;
    weight("filter1.theta", 3 * k, c1, 3 * k, c1);
    if (cfg_.use_attend) {
      weight("attend1.q", c1, c1, c1, c1);
      weight("attend1.v", c1, n, c1, n);
      zeros("attend1.b", 1, c1);
    }
    weight("filter2.theta", c1 * k, c2, c1 * k, c2);
    if (cfg_.use_attend) {
      weight("attend2.q", c2, c2, c2, c2);
      weight("attend2.v", c2, n, c2, n);
      zeros("attend2.b", 1, c2);
    }
    const int in = n * c2;
    for (const char* g : {"i", "f", "c", "o"}) {
      weight("lstm.w_z" + std::string(g), dh, in, in, dh);
      weight("lstm.w_h" + std::string(g), dh, dh, dh, dh);
      zeros("lstm.b_" + std::string(g), dh, 1);
    }
    for (const char* g : {"i", "f", "o"}) zeros("lstm.w_c" + std::string(g), dh, 1);
    weight("head.fc1", dh, dh, dh, dh);
    zeros("head.b1", dh, 1);
    weight("head.fc2", num_classes_, dh, dh, num_classes_);
    zeros("head.b2", num_classes_, 1);
  }
};

}  // namespace a2gnn
