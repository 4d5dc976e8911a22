#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "a2gnn/params.hpp"
#include "a2gnn/tape.hpp"

// Finite-difference verification of the tape. A builder constructs the scalar
// loss from the current store values and registers which tape leaves bind to
// which named parameters; the harness then compares one analytic backward
// against central differences, coordinate by coordinate.

namespace a2gnn {

template <typename T>
struct Bindings {
  std::vector<std::pair<ParamEntry<T>*, DiffNode<T>*>> items;

  DiffNode<T>* bind(Tape<T>& tape, ParamEntry<T>& entry) {
    DiffNode<T>* n = tape.param(&entry.value);
    items.push_back({&entry, n});
    return n;
  }
};

template <typename T>
using LossBuilder = std::function<DiffNode<T>*(Tape<T>&, Bindings<T>&)>;

struct GradCheckRow {
  std::string name;
  size_t coords_checked = 0;
  size_t coords_total = 0;
  double max_abs_diff = 0;
  double max_rel = 0;  // |a-n| / max(|a|,|n|), at the worst coordinate
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double rtol = 0, atol = 0, step = 0;
  bool all_pass = true;
};

// Pass rule per coordinate: |analytic - numeric| <= atol + rtol*max(|analytic|,|numeric|).
// max_coords_per_param caps the FD probes on very wide parameters (seeded
// subsample); 0 means every coordinate.
template <typename T>
GradCheckReport gradcheck(ParamStore<T>& store, const LossBuilder<T>& builder, double step, double rtol,
                          double atol = 1e-8, size_t max_coords_per_param = 0, uint64_t subsample_seed = 12345) {
  if (step <= 0) throw std::invalid_argument("gradcheck: degenerate step");
  GradCheckReport report;
  report.rtol = rtol;
  report.atol = atol;
  report.step = step;

  // One analytic pass.
  Tape<T> tape;
  Bindings<T> bindings;
  DiffNode<T>* loss = builder(tape, bindings);
  tape.backward(loss);

  auto loss_value = [&]() -> double {
    Tape<T> t2;
    Bindings<T> b2;
    DiffNode<T>* l2 = builder(t2, b2);
    return static_cast<double>(l2->val()(0, 0));
  };

  std::mt19937_64 rng(subsample_seed);
  for (auto& [entry, node] : bindings.items) {
    GradCheckRow row;
    row.name = entry->name;
    row.coords_total = entry->value.size();

    std::vector<size_t> coords(entry->value.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }

    for (size_t ci : coords) {
      T* slot = entry->value.data() + ci;
      const T saved = *slot;
      *slot = saved + static_cast<T>(step);
      const double up = loss_value();
      *slot = saved - static_cast<T>(step);
      const double down = loss_value();
      *slot = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic =
          node->grad_live ? static_cast<double>(node->grad.data()[ci]) : 0.0;
      const double diff = std::abs(analytic - numeric);
      const double mag = std::max(std::abs(analytic), std::abs(numeric));
      row.max_abs_diff = std::max(row.max_abs_diff, diff);
      if (diff > atol + rtol * mag) row.pass = false;
      if (mag > 0) row.max_rel = std::max(row.max_rel, diff / std::max(mag, atol / std::max(rtol, 1e-300)));
      ++row.coords_checked;
    }
    report.all_pass = report.all_pass && row.pass;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace a2gnn
