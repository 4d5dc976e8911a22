#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "a2gnn/config.hpp"
#include "a2gnn/dataio.hpp"
#include "a2gnn/gradcheck.hpp"
#include "a2gnn/model.hpp"
#include "a2gnn/svg.hpp"
#include "a2gnn/trainer.hpp"

// Subcommand implementations behind the `a2gnn` binary. Everything here is a
// thin shell over the library; outputs carry no timestamps so reruns with the
// same seed produce identical files.

namespace a2gnn::cli {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  long long seed = -1;                 // -1: keep config/default
  std::string temporal_agg;
};

inline TrainConfig resolve_config(const CommonOpts& opts) {
  TrainConfig cfg;
  if (!opts.config_path.empty()) load_config_file(cfg, opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got \"" + kv + "\"");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
  if (!opts.temporal_agg.empty()) cfg.temporal_agg = temporal_agg_from_string(opts.temporal_agg);
  cfg.validate();
  return cfg;
}

inline void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "flat key=value config file ('#' comments)");
  cmd->add_option("--set", opts.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--temporal-agg", opts.temporal_agg, "temporal aggregation: mean|last");
}

// ---------------------------------------------------------------------------

inline int cmd_synth(const std::string& out_path, const std::vector<std::string>& classes, int per_class,
                     uint64_t seed, double train_frac) {
  Dataset ds;
  ds.manifest.joints = synth::joint_names();
  ds.manifest.edges = synth::edges();
  ds.manifest.classes = classes.empty() ? synth::class_names() : classes;

  std::mt19937_64 rng(seed);
  for (size_t c = 0; c < ds.manifest.classes.size(); ++c) {
    auto seqs = synth_generate(ds.manifest.classes[c], per_class, rng);
    const int train_count = static_cast<int>(std::lround(train_frac * per_class));
    for (int i = 0; i < static_cast<int>(seqs.size()); ++i) {
      seqs[i].label = static_cast<int>(c);  // dense in the requested class order
      ds.manifest.split[seqs[i].id] = i < train_count ? "train" : "test";
      ds.sequences.push_back(std::move(seqs[i]));
    }
  }
  save_jsonl(out_path, ds);
  std::printf("wrote %zu sequences (%zu classes) to %s\n", ds.sequences.size(), ds.manifest.classes.size(),
              out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

template <typename T>
int run_training(const Dataset& ds, TrainConfig cfg, const std::string& out_dir, const std::string& resume_path) {
  int start_epoch = 0;
  std::unique_ptr<A2gnnModel<T>> model;
  if (!resume_path.empty()) {
    CheckpointMeta meta;
    const auto loaded = A2gnnModel<T>::load(resume_path, ds.manifest, &meta);
    auto it = meta.meta.find("epoch");
    if (it != meta.meta.end()) start_epoch = std::stoi(it->second);
    // architecture comes from the checkpoint, optimization knobs from this invocation
    TrainConfig merged = loaded.config();
    merged.epochs = cfg.epochs;
    merged.learning_rate = cfg.learning_rate;
    merged.momentum = cfg.momentum;
    merged.batch_size = cfg.batch_size;
    merged.lr_decay = cfg.lr_decay;
    merged.grad_clip = cfg.grad_clip;
    merged.segments = cfg.segments;
    merged.scale_lo = cfg.scale_lo;
    merged.scale_hi = cfg.scale_hi;
    cfg = merged;
    model = std::make_unique<A2gnnModel<T>>(merged, ds.manifest);
    for (auto& entry : model->store().entries()) entry.value = loaded.store().get(entry.name);
    std::printf("resumed from %s at epoch %d\n", resume_path.c_str(), start_epoch);
  }
  if (!model) model = std::make_unique<A2gnnModel<T>>(cfg, ds.manifest);

  const TrainConfig& mc = model->config();
  std::printf("run: K=%d channels=(%d,%d) hidden=%d lr=%g momentum=%g epochs=%d batch=%d seed=%llu agg=%s "
              "precision=%s attend=%s\n",
              mc.order, mc.channels1, mc.channels2, mc.hidden_size, mc.learning_rate, mc.momentum, cfg.epochs,
              mc.batch_size, static_cast<unsigned long long>(mc.seed), to_string(mc.temporal_agg),
              mc.precision.c_str(), mc.use_attend ? "on" : "off");

  TrainHooks hooks;
  hooks.on_epoch = [](const EpochLog& r) {
    std::printf("epoch %4d  train_loss %.4f  train_acc %.4f  test_acc %.4f\n", r.epoch, r.train_loss, r.train_acc,
                r.test_acc);
    std::fflush(stdout);
  };
  const auto result = train(*model, ds, out_dir, hooks, start_epoch);

  if (!out_dir.empty()) {
    model->save(out_dir + "/checkpoint_final.ckpt", {{"epoch", std::to_string(result.last_epoch)}});
    std::printf("checkpoint: %s/checkpoint_final.ckpt\n", out_dir.c_str());
  }
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::printf("final: epoch %d train_loss %.4f train_acc %.4f test_acc %.4f\n", last.epoch, last.train_loss,
                last.train_acc, last.test_acc);
  }
  return 0;
}

inline int cmd_train(const std::string& dataset_path, const CommonOpts& opts, const std::string& out_dir,
                     const std::string& resume_path) {
  const Dataset ds = load_jsonl(dataset_path);
  const TrainConfig cfg = resolve_config(opts);
  if (cfg.precision == "float") return run_training<float>(ds, cfg, out_dir, resume_path);
  return run_training<double>(ds, cfg, out_dir, resume_path);
}

// ---------------------------------------------------------------------------

inline void print_metrics(const Metrics& m, const std::vector<std::string>& classes) {
  std::printf("accuracy %.4f  (%lld samples)\n", m.accuracy, m.total);
  std::printf("%-16s %9s %9s\n", "class", "precision", "recall");
  for (size_t c = 0; c < classes.size(); ++c)
    std::printf("%-16s %9.4f %9.4f\n", classes[c].c_str(), m.precision[c], m.recall[c]);
}

inline void write_confusion_csv(const std::string& path, const Metrics& m, const std::vector<std::string>& classes) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "true\\predicted";
  for (const auto& c : classes) f << "," << c;
  f << "\n";
  for (size_t t = 0; t < classes.size(); ++t) {
    f << classes[t];
    for (size_t p = 0; p < classes.size(); ++p) f << "," << m.confusion[t][p];
    f << "\n";
  }
}

template <typename T>
int run_eval(const std::string& checkpoint, const Dataset& ds, const std::string& split, const std::string& out_dir) {
  const auto model = A2gnnModel<T>::load(checkpoint, ds.manifest);
  const Metrics m = evaluate(model, ds, split);
  print_metrics(m, ds.manifest.classes);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_confusion_csv(out_dir + "/confusion.csv", m, ds.manifest.classes);
    std::printf("confusion matrix: %s/confusion.csv\n", out_dir.c_str());
  }
  return 0;
}

inline std::string checkpoint_precision(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic, line;
  std::getline(f, magic);
  std::getline(f, line);
  return line.rfind("precision ", 0) == 0 ? line.substr(10) : "double";
}

inline int cmd_eval(const std::string& checkpoint, const std::string& dataset_path, const std::string& split,
                    const std::string& out_dir) {
  const Dataset ds = load_jsonl(dataset_path);
  if (checkpoint_precision(checkpoint) == "float") return run_eval<float>(checkpoint, ds, split, out_dir);
  return run_eval<double>(checkpoint, ds, split, out_dir);
}

// ---------------------------------------------------------------------------

inline int cmd_inspect_au(const std::string& checkpoint, const std::string& dataset_path, const std::string& seq_id,
                          const std::string& out_dir) {
  const Dataset ds = load_jsonl(dataset_path);
  const SkeletonSequence* target = nullptr;
  if (seq_id.empty()) {
    auto test = ds.split("test");
    if (test.empty()) throw std::runtime_error("inspect-au: dataset has no test split; pass --id");
    target = test.front();
  } else {
    for (const auto& s : ds.sequences)
      if (s.id == seq_id) target = &s;
    if (!target) throw std::runtime_error("inspect-au: no sequence with id \"" + seq_id + "\"");
  }

  const auto model = A2gnnModel<double>::load(checkpoint, ds.manifest);
  const auto frames = eval_frames(model, *target, ds.manifest);
  const dmat saliency = model.extract_au_weights(frames);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/saliency.csv");
    if (!csv) throw std::runtime_error("cannot open " + out_dir + "/saliency.csv");
    csv << "frame";
    for (const auto& j : ds.manifest.joints) csv << "," << j;
    csv << "\n";
    char buf[32];
    for (int t = 0; t < saliency.rows(); ++t) {
      csv << t;
      for (int j = 0; j < saliency.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.10g", saliency(t, j));
        csv << "," << buf;
      }
      csv << "\n";
    }
  }
  std::vector<double> mean_saliency(saliency.cols(), 0.0);
  for (int t = 0; t < saliency.rows(); ++t)
    for (int j = 0; j < saliency.cols(); ++j) mean_saliency[j] += saliency(t, j) / saliency.rows();
  svg::write_skeleton_heatmap(out_dir + "/skeleton.svg", to_dmat(frames[0]), ds.manifest.edges, mean_saliency,
                              ds.manifest.joints);
  std::printf("sequence %s (label %s): wrote %s/saliency.csv and %s/skeleton.svg\n", target->id.c_str(),
              ds.manifest.classes[target->label].c_str(), out_dir.c_str(), out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_ksweep(const std::string& dataset_path, const CommonOpts& opts, const std::string& k_list,
                      const std::string& out_dir) {
  const Dataset ds = load_jsonl(dataset_path);
  const TrainConfig base = resolve_config(opts);

  std::vector<int> orders;
  std::stringstream ss(k_list);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) orders.push_back(std::stoi(tok));
  if (orders.empty()) throw std::invalid_argument("ksweep: empty K list");

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  std::ofstream csv;
  if (!out_dir.empty()) {
    csv.open(out_dir + "/ksweep.csv");
    csv << "K,train_acc,test_acc,final_train_loss\n";
  }
  std::printf("%4s %10s %10s %16s\n", "K", "train_acc", "test_acc", "final_train_loss");
  for (int k : orders) {
    TrainConfig cfg = base;
    cfg.order = k;
    cfg.validate();
    A2gnnModel<double> model(cfg, ds.manifest);
    const auto result = train(model, ds);
    const double train_acc = result.history.empty() ? 0.0 : result.history.back().train_acc;
    const double train_loss = result.history.empty() ? 0.0 : result.history.back().train_loss;
    const double test_acc = evaluate(model, ds, "test").accuracy;
    std::printf("%4d %10.4f %10.4f %16.4f\n", k, train_acc, test_acc, train_loss);
    std::fflush(stdout);
    if (csv.is_open()) {
      csv << k << "," << train_acc << "," << test_acc << "," << train_loss << "\n";
      csv.flush();
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const CommonOpts& opts, double step, double tol) {
  TrainConfig cfg;
  // criterion geometry: default architecture scaled to 6 nodes, 16 hidden units
  cfg.hidden_size = 16;
  if (!opts.config_path.empty()) load_config_file(cfg, opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got \"" + kv + "\"");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
  cfg.validate();
  if (step <= 0) throw std::invalid_argument("gradcheck: degenerate step");

  DatasetManifest manifest;
  manifest.classes = {"a", "b", "c"};
  for (int j = 0; j < 6; ++j) manifest.joints.push_back("joint" + std::to_string(j));
  manifest.edges = {{0, 1}, {1, 2}, {2, 3}, {1, 4}, {4, 5}};

  A2gnnModel<double> model(cfg, manifest);
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<dmat> frames;
  for (int t = 0; t < 2; ++t) frames.push_back(random_uniform<double>(rng, 6, 3, -1, 1));

  auto builder = [&](Tape<double>& t, Bindings<double>& b) { return model.build_tape(t, b, frames, 1).loss; };
  const auto report = gradcheck<double>(model.store(), builder, step, tol, 1e-4 * tol);

  std::printf("gradcheck: step=%g rtol=%g atol=%g (N=6, d_h=%d, K=%d)\n", step, tol, 1e-4 * tol, cfg.hidden_size,
              cfg.order);
  std::printf("%-18s %8s/%-8s %12s %12s  %s\n", "parameter", "checked", "total", "max_abs_diff", "max_rel", "status");
  for (const auto& row : report.rows)
    std::printf("%-18s %8zu/%-8zu %12.3e %12.3e  %s\n", row.name.c_str(), row.coords_checked, row.coords_total,
                row.max_abs_diff, row.max_rel, row.pass ? "pass" : "FAIL");
  std::printf("%s\n", report.all_pass ? "PASS" : "FAIL");
  return report.all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"A2GNN: action-attending graph neural network for skeleton sequences"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic JSONL skeleton dataset");
  std::string synth_out = "dataset.jsonl";
  std::vector<std::string> synth_classes;
  int per_class = 15;
  long long synth_seed = 0;
  double train_frac = 2.0 / 3.0;
  synth_cmd->add_option("--out", synth_out, "output JSONL path")->required();
  synth_cmd->add_option("--classes", synth_classes, "class subset (default: all four)");
  synth_cmd->add_option("--per-class", per_class, "sequences per class");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--train-frac", train_frac, "fraction of each class assigned to train");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a JSONL dataset");
  CommonOpts train_opts;
  std::string train_dataset, train_out = "run", resume_path;
  train_cmd->add_option("--dataset", train_dataset, "JSONL dataset path")->required();
  train_cmd->add_option("--out", train_out, "output directory (checkpoints, logs)");
  train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");
  add_common(train_cmd, train_opts);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_dataset, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "JSONL dataset path")->required();
  eval_cmd->add_option("--split", eval_split, "split name: train|test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--out", eval_out, "output directory for confusion.csv");

  // inspect-au
  auto* au_cmd = app.add_subcommand("inspect-au", "export per-frame joint saliency (CSV + SVG heatmap)");
  std::string au_ckpt, au_dataset, au_id, au_out = "au";
  au_cmd->add_option("--checkpoint", au_ckpt, "checkpoint path")->required();
  au_cmd->add_option("--dataset", au_dataset, "JSONL dataset path")->required();
  au_cmd->add_option("--id", au_id, "sequence id (default: first test sequence)");
  au_cmd->add_option("--out", au_out, "output directory");

  // ksweep
  auto* ksweep_cmd = app.add_subcommand("ksweep", "train and evaluate across receptive-field sizes K");
  CommonOpts ksweep_opts;
  std::string ksweep_dataset, ksweep_out, k_list = "2,4,6,8,10,12,14";
  ksweep_cmd->add_option("--dataset", ksweep_dataset, "JSONL dataset path")->required();
  ksweep_cmd->add_option("--K", k_list, "comma-separated K list");
  ksweep_cmd->add_option("--out", ksweep_out, "output directory for ksweep.csv");
  add_common(ksweep_cmd, ksweep_opts);

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  CommonOpts gc_opts;
  double gc_step = 1e-5, gc_tol = 1e-4;
  gc_cmd->add_option("--step", gc_step, "finite-difference step");
  gc_cmd->add_option("--tol", gc_tol, "relative tolerance");
  add_common(gc_cmd, gc_opts);

  try {
    app.parse(argc, argv);
    if (synth_cmd->parsed())
      return cmd_synth(synth_out, synth_classes, per_class, static_cast<uint64_t>(synth_seed), train_frac);
    if (train_cmd->parsed()) return cmd_train(train_dataset, train_opts, train_out, resume_path);
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_dataset, eval_split, eval_out);
    if (au_cmd->parsed()) return cmd_inspect_au(au_ckpt, au_dataset, au_id, au_out);
    if (ksweep_cmd->parsed()) return cmd_ksweep(ksweep_dataset, ksweep_opts, k_list, ksweep_out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_opts, gc_step, gc_tol);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace a2gnn::cli
