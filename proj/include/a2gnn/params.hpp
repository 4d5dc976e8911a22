#pragma once

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2gnn/matrix.hpp"

// Named learnable parameters plus the textual checkpoint format.
//
// Checkpoint layout (UTF-8, line oriented, versioned):
//   a2gnn-checkpoint v1
//   precision double|float
//   meta <key> <value...>        (repeatable)
//   param <name> <rows> <cols>
//   <cols values per line, rows lines, %.17g / %.9g>
//   ...
//   end
// %.17g (doubles) and %.9g (floats) round-trip exactly through strtod/strtof,
// so a save/load cycle reproduces forward passes bit for bit.

namespace a2gnn {

template <typename T>
struct ParamEntry {
  std::string name;
  Mat<T> value;
};

template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  Mat<T>* create(const std::string& name, Mat<T> init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter \"" + name + "\"");
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry<T>{name, std::move(init)});
    return &entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter \"" + name + "\"");
    return it->second;
  }

  Mat<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter \"" + name + "\"");
    return entries_[it->second].value;
  }
  const Mat<T>& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

  std::deque<ParamEntry<T>>& entries() { return entries_; }
  const std::deque<ParamEntry<T>>& entries() const { return entries_; }

  size_t total_parameters() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  uint64_t seed() const { return seed_; }

  std::string first_non_finite() const {
    for (const auto& e : entries_)
      if (!e.value.all_finite()) return e.name;
    return {};
  }

 private:
  std::deque<ParamEntry<T>> entries_;
  std::map<std::string, size_t> index_;
  uint64_t seed_;
};

namespace detail {
inline void format_value(char* buf, size_t cap, double v) { std::snprintf(buf, cap, "%.17g", v); }
inline void format_value(char* buf, size_t cap, float v) { std::snprintf(buf, cap, "%.9g", static_cast<double>(v)); }
inline const char* precision_name(double) { return "double"; }
inline const char* precision_name(float) { return "float"; }
}  // namespace detail

template <typename T>
void save_checkpoint(std::ostream& os, const ParamStore<T>& store,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  os << "a2gnn-checkpoint v1\n";
  os << "precision " << detail::precision_name(T{}) << "\n";
  for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
  char buf[64];
  for (const auto& e : store.entries()) {
    os << "param " << e.name << " " << e.value.rows() << " " << e.value.cols() << "\n";
    for (int i = 0; i < e.value.rows(); ++i) {
      for (int j = 0; j < e.value.cols(); ++j) {
        detail::format_value(buf, sizeof buf, e.value(i, j));
        os << buf << (j + 1 == e.value.cols() ? "" : " ");
      }
      os << "\n";
    }
  }
  os << "end\n";
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  save_checkpoint(f, store, meta);
  if (!f.good()) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct CheckpointMeta {
  std::string precision;
  std::map<std::string, std::string> meta;
};

// Parameters are appended to `store` in file order.
template <typename T>
CheckpointMeta load_checkpoint(std::istream& is, ParamStore<T>& store) {
  CheckpointMeta out;
  std::string line;
  if (!std::getline(is, line) || line != "a2gnn-checkpoint v1")
    throw std::runtime_error("load_checkpoint: bad magic line \"" + line + "\"");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") return out;
    if (tag == "precision") {
      ls >> out.precision;
    } else if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      out.meta[key] = rest;
    } else if (tag == "param") {
      std::string name;
      int rows = -1, cols = -1;
      ls >> name >> rows >> cols;
      if (name.empty() || rows < 0 || cols < 0) throw std::runtime_error("load_checkpoint: bad param header: " + line);
      Mat<T> m(rows, cols);
      for (int i = 0; i < rows; ++i) {
        std::string row;
        if (!std::getline(is, row)) throw std::runtime_error("load_checkpoint: truncated values for " + name);
        const char* p = row.c_str();
        char* endp = nullptr;
        for (int j = 0; j < cols; ++j) {
          const double v = std::strtod(p, &endp);
          if (endp == p) throw std::runtime_error("load_checkpoint: bad value in " + name + " row " + std::to_string(i));
          m(i, j) = static_cast<T>(v);
          p = endp;
        }
      }
      store.create(name, std::move(m));
    } else {
      throw std::runtime_error("load_checkpoint: unknown tag \"" + tag + "\"");
    }
  }
  throw std::runtime_error("load_checkpoint: missing end marker");
}

template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<T>& store) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  return load_checkpoint(f, store);
}

}  // namespace a2gnn
