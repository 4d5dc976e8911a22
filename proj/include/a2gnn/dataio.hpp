#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"

// Skeleton sequence ingestion, normalization, augmentation, the synthetic
// motion generator, and the JSONL interchange format:
//   line 1: manifest {classes, joints, edges, split}
//   lines 2..: one sequence each {id, label, subject?, frames, meta?}

namespace a2gnn {

struct SkeletonSequence {
  std::string id;
  int label = -1;
  std::string subject;
  std::vector<dmat> frames;  // T matrices of N x 3
  std::map<std::string, std::string> metadata;

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_joints() const { return frames.empty() ? 0 : frames[0].rows(); }
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<std::string> joints;
  EdgeList edges;
  std::map<std::string, std::string> split;  // sequence id (or subject id) -> train|test

  int num_joints() const { return static_cast<int>(joints.size()); }
  int num_classes() const { return static_cast<int>(classes.size()); }

  int class_index(const std::string& name) const {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    return -1;
  }
  int joint_index(const std::string& name) const {
    for (size_t i = 0; i < joints.size(); ++i)
      if (joints[i] == name) return static_cast<int>(i);
    return -1;
  }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SkeletonSequence> sequences;

  std::string split_of(const SkeletonSequence& seq) const {
    auto it = manifest.split.find(seq.id);
    if (it != manifest.split.end()) return it->second;
    it = manifest.split.find(seq.subject);
    return it == manifest.split.end() ? std::string{} : it->second;
  }
  std::vector<const SkeletonSequence*> split(const std::string& which) const {
    std::vector<const SkeletonSequence*> out;
    for (const auto& s : sequences)
      if (split_of(s) == which) out.push_back(&s);
    return out;
  }
};

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

inline void validate_edges(int num_joints, const EdgeList& edges) {
  std::set<std::pair<int, int>> seen;
  for (const auto& [i, j] : edges) {
    if (i < 0 || i >= num_joints || j < 0 || j >= num_joints)
      throw std::invalid_argument("edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for N=" +
                                  std::to_string(num_joints));
    if (i == j) throw std::invalid_argument("self-loop edge at joint " + std::to_string(i));
    auto key = std::minmax(i, j);
    if (!seen.insert(key).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                                  ")");
  }
}

inline void validate_sequence(const SkeletonSequence& seq, const DatasetManifest& manifest) {
  if (seq.frames.empty()) throw std::invalid_argument("sequence " + seq.id + ": no frames");
  const int n = manifest.num_joints();
  for (const auto& f : seq.frames) {
    if (f.rows() != n || f.cols() != 3)
      throw std::invalid_argument("sequence " + seq.id + ": frame shape " + f.shape_str() + ", expected " +
                                  std::to_string(n) + "x3");
    if (!f.all_finite()) throw std::invalid_argument("sequence " + seq.id + ": non-finite coordinate");
  }
  if (seq.label < 0 || seq.label >= manifest.num_classes())
    throw std::invalid_argument("sequence " + seq.id + ": label " + std::to_string(seq.label) + " outside [0," +
                                std::to_string(manifest.num_classes()) + ")");
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Translate every frame so the joint mean (the orthocenter) is the origin.
inline SkeletonSequence center_frames(SkeletonSequence seq) {
  for (auto& f : seq.frames) {
    double mean[3] = {0, 0, 0};
    for (int i = 0; i < f.rows(); ++i)
      for (int d = 0; d < 3; ++d) mean[d] += f(i, d);
    for (double& m : mean) m /= f.rows();
    for (int i = 0; i < f.rows(); ++i)
      for (int d = 0; d < 3; ++d) f(i, d) -= mean[d];
  }
  return seq;
}

// Per-frame rotation: x axis along right->left shoulder, y axis along spine
// base->spine orthogonalized against x, z = x cross y.
inline SkeletonSequence rotate_align(SkeletonSequence seq, int right_shoulder, int left_shoulder, int spine_base,
                                     int spine) {
  const int n = seq.num_joints();
  for (int idx : {right_shoulder, left_shoulder, spine_base, spine})
    if (idx < 0 || idx >= n) throw std::invalid_argument("rotate_align: joint index " + std::to_string(idx) +
                                                         " out of range for N=" + std::to_string(n));
  for (auto& f : seq.frames) {
    double ex[3], ey[3], ez[3];
    for (int d = 0; d < 3; ++d) ex[d] = f(left_shoulder, d) - f(right_shoulder, d);
    const double xn = std::sqrt(ex[0] * ex[0] + ex[1] * ex[1] + ex[2] * ex[2]);
    if (xn < 1e-9) throw std::invalid_argument("degenerate pose: shoulders coincide");
    for (double& v : ex) v /= xn;

    double sp[3];
    for (int d = 0; d < 3; ++d) sp[d] = f(spine, d) - f(spine_base, d);
    const double dot = sp[0] * ex[0] + sp[1] * ex[1] + sp[2] * ex[2];
    for (int d = 0; d < 3; ++d) ey[d] = sp[d] - dot * ex[d];
    const double yn = std::sqrt(ey[0] * ey[0] + ey[1] * ey[1] + ey[2] * ey[2]);
    const double spn = std::sqrt(sp[0] * sp[0] + sp[1] * sp[1] + sp[2] * sp[2]);
    if (spn < 1e-9 || yn < 1e-9 * std::max(1.0, spn))
      throw std::invalid_argument("degenerate pose: spine parallel to shoulder axis");
    for (double& v : ey) v /= yn;

    ez[0] = ex[1] * ey[2] - ex[2] * ey[1];
    ez[1] = ex[2] * ey[0] - ex[0] * ey[2];
    ez[2] = ex[0] * ey[1] - ex[1] * ey[0];

    dmat rotated(n, 3);
    for (int i = 0; i < n; ++i) {
      const double p[3] = {f(i, 0), f(i, 1), f(i, 2)};
      rotated(i, 0) = ex[0] * p[0] + ex[1] * p[1] + ex[2] * p[2];
      rotated(i, 1) = ey[0] * p[0] + ey[1] * p[1] + ey[2] * p[2];
      rotated(i, 2) = ez[0] * p[0] + ez[1] * p[1] + ez[2] * p[2];
    }
    f = std::move(rotated);
  }
  return seq;
}

// Alignment is applied only when the manifest names all four reference joints.
struct AlignmentJoints {
  int right_shoulder, left_shoulder, spine_base, spine;
};

inline std::optional<AlignmentJoints> find_alignment_joints(const DatasetManifest& m) {
  AlignmentJoints a{m.joint_index("right_shoulder"), m.joint_index("left_shoulder"), m.joint_index("spine_base"),
                    m.joint_index("spine")};
  if (a.right_shoulder < 0 || a.left_shoulder < 0 || a.spine_base < 0 || a.spine < 0) return std::nullopt;
  return a;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

// Split into `segments` equal subsequences, pick one frame per segment, and
// scale all coordinates by one factor drawn from [scale_lo, scale_hi].
// Sequences shorter than `segments` are first stretched by nearest-index
// resampling so the motion shape survives.
inline SkeletonSequence augment(const SkeletonSequence& seq, int segments, double scale_lo, double scale_hi,
                                std::mt19937_64& rng) {
  if (segments < 1) throw std::invalid_argument("augment: segments must be >= 1");
  if (scale_lo > scale_hi) throw std::invalid_argument("augment: scale_lo > scale_hi");
  if (seq.frames.empty()) throw std::invalid_argument("augment: empty sequence");

  std::vector<int> source;
  const int t = seq.num_frames();
  if (t >= segments) {
    for (int k = 0; k < segments; ++k) {
      const int lo = static_cast<int>(static_cast<long long>(k) * t / segments);
      const int hi = static_cast<int>(static_cast<long long>(k + 1) * t / segments);  // exclusive, > lo
      std::uniform_int_distribution<int> pick(lo, hi - 1);
      source.push_back(pick(rng));
    }
  } else {
    for (int k = 0; k < segments; ++k) {
      const int idx = segments == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(k) * (t - 1) / (segments - 1)));
      source.push_back(idx);
    }
  }

  std::uniform_real_distribution<double> sdist(scale_lo, scale_hi);
  const double factor = sdist(rng);

  SkeletonSequence out = seq;
  out.frames.clear();
  out.frames.reserve(segments);
  for (int idx : source) out.frames.push_back(scale(seq.frames[idx], factor));
  return out;
}

// Deterministic variant used at evaluation time: middle frame of each segment,
// no rescaling.
inline SkeletonSequence segment_middle_frames(const SkeletonSequence& seq, int segments) {
  std::mt19937_64 unused(0);
  SkeletonSequence out = seq;
  out.frames.clear();
  const int t = seq.num_frames();
  if (t >= segments) {
    for (int k = 0; k < segments; ++k) {
      const int lo = static_cast<int>(static_cast<long long>(k) * t / segments);
      const int hi = static_cast<int>(static_cast<long long>(k + 1) * t / segments);
      out.frames.push_back(seq.frames[(lo + hi - 1) / 2]);
    }
  } else {
    for (int k = 0; k < segments; ++k) {
      const int idx = segments == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(k) * (t - 1) / (segments - 1)));
      out.frames.push_back(seq.frames[idx]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic stick-figure generator (15 joints, 14 bones)
// ---------------------------------------------------------------------------

namespace synth {

inline const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names = {
      "head",       "neck",       "right_shoulder", "right_elbow", "right_wrist",
      "left_shoulder", "left_elbow", "left_wrist",  "spine",       "right_hip",
      "right_knee", "right_ankle", "left_hip",      "left_knee",   "left_ankle"};
  return names;
}

inline const EdgeList& edges() {
  static const EdgeList e = {{0, 1}, {1, 2}, {2, 3}, {3, 4},  {1, 5},  {5, 6},  {6, 7},
                             {1, 8}, {8, 9}, {9, 10}, {10, 11}, {8, 12}, {12, 13}, {13, 14}};
  return e;
}

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"wave_left", "wave_right", "squat", "still"};
  return names;
}

inline std::vector<int> right_arm_joints() { return {2, 3, 4}; }
inline std::vector<int> leg_joints() { return {10, 11, 13, 14}; }

// Decimeter-style sensor units, the magnitude regime optical capture systems
// actually emit; the network never rescales inputs beyond the +-2% jitter.
inline dmat base_pose() {
  const double coords[15][3] = {{0.0, 17.0, 0},  {0.0, 15.0, 0},  {2.0, 14.5, 0},  {4.5, 12.0, 0},
                                {6.5, 9.5, 0},   {-2.0, 14.5, 0}, {-4.5, 12.0, 0}, {-6.5, 9.5, 0},
                                {0.0, 10.0, 0},  {1.5, 9.0, 0},   {1.8, 5.0, 0},   {1.8, 0.5, 0},
                                {-1.5, 9.0, 0},  {-1.8, 5.0, 0},  {-1.8, 0.5, 0}};
  dmat pose(15, 3);
  for (int i = 0; i < 15; ++i)
    for (int d = 0; d < 3; ++d) pose(i, d) = coords[i][d];
  return pose;
}

constexpr double kNoiseAmplitude = 0.1;
constexpr double kTau = 6.283185307179586476925286766559;  // 2*pi

}  // namespace synth

// Sinusoidal limb trajectories with per-sequence phase/amplitude/frequency
// jitter and bounded uniform noise on every coordinate.
inline std::vector<SkeletonSequence> synth_generate(const std::string& class_spec, int num_sequences,
                                                    std::mt19937_64& rng) {
  const auto& classes = synth::class_names();
  const int label = [&] {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == class_spec) return static_cast<int>(i);
    std::string valid;
    for (const auto& c : classes) valid += (valid.empty() ? "" : ", ") + c;
    throw std::invalid_argument("synth_generate: unknown class \"" + class_spec + "\" (valid: " + valid + ")");
  }();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SkeletonSequence> out;
  out.reserve(num_sequences);
  const dmat base = synth::base_pose();

  for (int s = 0; s < num_sequences; ++s) {
    const int frames = 24 + static_cast<int>(rng() % 17);  // 24..40
    const double phase = synth::kTau * unit(rng);
    const double amp = 0.8 + 0.4 * unit(rng);
    const double cycles = 1.5 + 1.0 * unit(rng);

    SkeletonSequence seq;
    char idbuf[64];
    std::snprintf(idbuf, sizeof idbuf, "%s_%03d", class_spec.c_str(), s);
    seq.id = idbuf;
    seq.label = label;

    for (int t = 0; t < frames; ++t) {
      dmat f = base;
      const double ph = synth::kTau * cycles * t / frames + phase;
      if (class_spec == "wave_right" || class_spec == "wave_left") {
        const int wrist = class_spec == "wave_right" ? 4 : 7;
        const int elbow = class_spec == "wave_right" ? 3 : 6;
        const double sway = std::sin(ph);
        const double lift = 0.5 + 0.5 * std::cos(ph);
        f(wrist, 0) += 3.5 * amp * sway;
        f(wrist, 1) += 4.5 * amp * lift;
        f(elbow, 0) += 1.4 * amp * sway;
        f(elbow, 1) += 1.8 * amp * lift;
      } else if (class_spec == "squat") {
        const double dip = 0.5 - 0.5 * std::cos(ph);  // in [0,1]
        for (int j : {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12}) f(j, 1) -= 2.8 * amp * dip;
        for (int j : {10, 13}) {
          f(j, 2) += 2.0 * amp * dip;  // knees forward
          f(j, 1) -= 1.0 * amp * dip;
        }
      }
      for (int i = 0; i < f.rows(); ++i)
        for (int d = 0; d < 3; ++d) f(i, d) += synth::kNoiseAmplitude * (2 * unit(rng) - 1);
      seq.frames.push_back(std::move(f));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// Balanced dataset over all four classes with a per-class train/test split.
inline Dataset make_synthetic_dataset(int per_class, uint64_t seed, double train_fraction = 2.0 / 3.0) {
  Dataset ds;
  ds.manifest.classes = synth::class_names();
  ds.manifest.joints = synth::joint_names();
  ds.manifest.edges = synth::edges();
  std::mt19937_64 rng(seed);
  for (const auto& cls : synth::class_names()) {
    auto seqs = synth_generate(cls, per_class, rng);
    const int train_count = static_cast<int>(std::lround(train_fraction * per_class));
    for (int i = 0; i < static_cast<int>(seqs.size()); ++i) {
      ds.manifest.split[seqs[i].id] = i < train_count ? "train" : "test";
      ds.sequences.push_back(std::move(seqs[i]));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

namespace detail {
using ordered_json = nlohmann::ordered_json;

inline ordered_json manifest_to_json(const DatasetManifest& m) {
  ordered_json j;
  j["classes"] = m.classes;
  j["joints"] = m.joints;
  auto edges = ordered_json::array();
  for (const auto& [a, b] : m.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  j["split"] = m.split;
  return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
  DatasetManifest m;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.joints = j.at("joints").get<std::vector<std::string>>();
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("manifest edge must be a pair");
    m.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  if (j.contains("split")) m.split = j.at("split").get<std::map<std::string, std::string>>();
  validate_edges(m.num_joints(), m.edges);
  return m;
}

inline ordered_json sequence_to_json(const SkeletonSequence& s) {
  ordered_json j;
  j["id"] = s.id;
  j["label"] = s.label;
  if (!s.subject.empty()) j["subject"] = s.subject;
  auto frames = ordered_json::array();
  for (const auto& f : s.frames) {
    auto frame = ordered_json::array();
    for (int i = 0; i < f.rows(); ++i) frame.push_back({f(i, 0), f(i, 1), f(i, 2)});
    frames.push_back(std::move(frame));
  }
  j["frames"] = std::move(frames);
  if (!s.metadata.empty()) j["meta"] = s.metadata;
  return j;
}

inline SkeletonSequence sequence_from_json(const ordered_json& j) {
  SkeletonSequence s;
  s.id = j.at("id").get<std::string>();
  s.label = j.at("label").get<int>();
  if (j.contains("subject")) s.subject = j.at("subject").get<std::string>();
  for (const auto& frame : j.at("frames")) {
    dmat f(static_cast<int>(frame.size()), 3);
    int i = 0;
    for (const auto& joint : frame) {
      if (!joint.is_array() || joint.size() != 3) throw std::invalid_argument("joint must be [x,y,z]");
      for (int d = 0; d < 3; ++d) f(i, d) = joint[d].get<double>();
      ++i;
    }
    s.frames.push_back(std::move(f));
  }
  if (j.contains("meta")) s.metadata = j.at("meta").get<std::map<std::string, std::string>>();
  return s;
}
}  // namespace detail

inline void save_jsonl(std::ostream& os, const Dataset& ds) {
  os << detail::manifest_to_json(ds.manifest).dump() << "\n";
  for (const auto& s : ds.sequences) os << detail::sequence_to_json(s).dump() << "\n";
}

inline void save_jsonl(const std::string& path, const Dataset& ds) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_jsonl: cannot open " + path);
  save_jsonl(f, ds);
  if (!f.good()) throw std::runtime_error("save_jsonl: write failed for " + path);
}

// An empty file loads as an empty dataset; otherwise line 1 must be the
// manifest and every further non-blank line one sequence.
inline Dataset load_jsonl(std::istream& is) {
  Dataset ds;
  std::string line;
  int lineno = 0;
  bool have_manifest = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = detail::ordered_json::parse(line);
      if (!have_manifest) {
        ds.manifest = detail::manifest_from_json(j);
        have_manifest = true;
      } else {
        auto seq = detail::sequence_from_json(j);
        validate_sequence(seq, ds.manifest);
        ds.sequences.push_back(std::move(seq));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("load_jsonl: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

inline Dataset load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_jsonl: cannot open " + path);
  return load_jsonl(f);
}

// ---------------------------------------------------------------------------
// raw-table adapter hook for external datasets
// ---------------------------------------------------------------------------

// One text row per frame, num_joints blocks of three values laid out in
// coord_order ("xyz", "xzy", ...), any whitespace or the given delimiter
// between values. Raw benchmark formats are mapped by configuration; the
// loader itself stays format-agnostic.
struct AdapterConfig {
  int num_joints = 0;
  char delimiter = ' ';  // ' ' accepts any whitespace
  std::string coord_order = "xyz";
  double scale = 1.0;
  int skip_header_lines = 0;
};

inline SkeletonSequence import_table(std::istream& is, const AdapterConfig& cfg) {
  if (cfg.num_joints <= 0) throw std::invalid_argument("import_table: num_joints must be positive");
  if (cfg.coord_order.size() != 3) throw std::invalid_argument("import_table: coord_order must name three axes");
  int axis[3];
  for (int d = 0; d < 3; ++d) {
    const char c = cfg.coord_order[d];
    if (c != 'x' && c != 'y' && c != 'z') throw std::invalid_argument("import_table: bad coord_order");
    axis[d] = c - 'x';
  }
  SkeletonSequence seq;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno <= cfg.skip_header_lines) continue;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (cfg.delimiter != ' ')
      for (auto& ch : line)
        if (ch == cfg.delimiter) ch = ' ';
    std::istringstream ls(line);
    dmat f(cfg.num_joints, 3);
    for (int i = 0; i < cfg.num_joints; ++i) {
      double v[3];
      for (int d = 0; d < 3; ++d) {
        if (!(ls >> v[d]))
          throw std::runtime_error("import_table: line " + std::to_string(lineno) + ": expected " +
                                   std::to_string(cfg.num_joints * 3) + " values");
        f(i, axis[d]) = v[d] * cfg.scale;
      }
    }
    double extra;
    if (ls >> extra) throw std::runtime_error("import_table: line " + std::to_string(lineno) + ": trailing values");
    seq.frames.push_back(std::move(f));
  }
  if (seq.frames.empty()) throw std::runtime_error("import_table: no frames");
  return seq;
}

inline SkeletonSequence import_table(const std::string& path, const AdapterConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("import_table: cannot open " + path);
  return import_table(f, cfg);
}

}  // namespace a2gnn
