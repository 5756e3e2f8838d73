#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "duohand/nn.hpp"
#include "duohand/synth.hpp"

namespace duohand {

/// Feature rows for labelled windows.
inline Dataset make_feature_dataset(std::span<const ImuWindow> windows) {
  Dataset out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (!w.label) throw std::invalid_argument("window without label in a training set");
    out.push_back(to_sample(extract_features(w), *w.label));
  }
  return out;
}

inline std::vector<std::vector<double>> feature_rows(const Dataset& d) {
  std::vector<std::vector<double>> rows;
  rows.reserve(d.size());
  for (const auto& s : d) rows.push_back(s.x);
  return rows;
}

/// Window counts per class, in class-index order.
inline std::vector<std::size_t> class_counts(std::span<const ImuWindow> windows) {
  std::vector<std::size_t> counts(kNumGestures, 0);
  for (const auto& w : windows)
    if (w.label) ++counts[index_of(*w.label)];
  return counts;
}

}  // namespace duohand
