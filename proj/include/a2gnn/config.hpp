#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Architecture and optimization hyperparameters, plus the flat key=value
// config-file syntax shared by the CLI (--config file and --set overrides).

namespace a2gnn {

enum class TemporalAgg { kMean, kLast };

inline const char* to_string(TemporalAgg a) { return a == TemporalAgg::kMean ? "mean" : "last"; }

inline TemporalAgg temporal_agg_from_string(const std::string& s) {
  if (s == "mean") return TemporalAgg::kMean;
  if (s == "last") return TemporalAgg::kLast;
  throw std::invalid_argument("temporal_agg must be mean or last, got \"" + s + "\"");
}

struct TrainConfig {
  int order = 10;  // Chebyshev receptive field K
  int channels1 = 32;
  int channels2 = 64;
  int hidden_size = 256;  // LSTM units
  double learning_rate = 0.02;
  double momentum = 0.9;
  int epochs = 100;
  int batch_size = 1;
  uint64_t seed = 0;
  TemporalAgg temporal_agg = TemporalAgg::kMean;
  std::string precision = "double";  // double | float
  bool use_attend = true;            // false drops both action-attending layers
  int segments = 12;
  double scale_lo = 0.98;
  double scale_hi = 1.02;
  double lr_decay = 1.0;   // per-epoch multiplier, 1 = constant rate
  double grad_clip = 0.0;  // global-norm clip, 0 = off
  std::string lambda_mode = "fixed2";  // input-graph lambda_max: fixed2 | power

  void validate() const {
    if (order < 1) throw std::invalid_argument("config: K must be >= 1");
    if (channels1 < 1 || channels2 < 1) throw std::invalid_argument("config: channels must be positive");
    if (hidden_size < 1) throw std::invalid_argument("config: hidden size must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("config: lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("config: momentum must be in [0,1)");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (segments < 1) throw std::invalid_argument("config: segments must be >= 1");
    if (scale_lo > scale_hi) throw std::invalid_argument("config: scale_lo > scale_hi");
    if (lr_decay <= 0 || lr_decay > 1) throw std::invalid_argument("config: lr_decay must be in (0,1]");
    if (grad_clip < 0) throw std::invalid_argument("config: grad_clip must be >= 0");
    if (precision != "double" && precision != "float")
      throw std::invalid_argument("config: precision must be double or float");
    if (lambda_mode != "fixed2" && lambda_mode != "power")
      throw std::invalid_argument("config: lambda_mode must be fixed2 or power");
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "K",         "channels1", "channels2", "hidden",   "lr",        "momentum",  "epochs",
      "batch_size", "seed",     "temporal_agg", "precision", "use_attend", "segments", "scale_lo",
      "scale_hi",  "lr_decay",  "grad_clip", "lambda_mode"};
  return keys;
}

inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: boolean value expected for " + key + ", got \"" + value + "\"");
  };
  if (key == "K") cfg.order = as_int();
  else if (key == "channels1") cfg.channels1 = as_int();
  else if (key == "channels2") cfg.channels2 = as_int();
  else if (key == "hidden") cfg.hidden_size = as_int();
  else if (key == "lr") cfg.learning_rate = as_double();
  else if (key == "momentum") cfg.momentum = as_double();
  else if (key == "epochs") cfg.epochs = as_int();
  else if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "temporal_agg") cfg.temporal_agg = temporal_agg_from_string(value);
  else if (key == "precision") cfg.precision = value;
  else if (key == "use_attend") cfg.use_attend = as_bool();
  else if (key == "segments") cfg.segments = as_int();
  else if (key == "scale_lo") cfg.scale_lo = as_double();
  else if (key == "scale_hi") cfg.scale_hi = as_double();
  else if (key == "lr_decay") cfg.lr_decay = as_double();
  else if (key == "grad_clip") cfg.grad_clip = as_double();
  else if (key == "lambda_mode") cfg.lambda_mode = value;
  else {
    std::string valid;
    for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw std::invalid_argument("config: unknown key \"" + key + "\" (valid keys: " + valid + ")");
  }
}

// key=value lines, '#' comments, blank lines ignored.
inline void load_config_file(TrainConfig& cfg, std::istream& is) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      s = a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(value);
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": bad value for " + key + ": " +
                                  e.what());
    }
  }
}

inline void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  load_config_file(cfg, f);
}

}  // namespace a2gnn
