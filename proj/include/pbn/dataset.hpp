#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbn/rng.hpp"

namespace pbn {

struct Example {
  std::int64_t id = 0;
  std::string text;
  std::size_t label = 0;
};

struct LabeledDataset {
  std::vector<Example> examples;
  std::vector<std::string> label_names;
  std::string split_tag;

  std::size_t num_classes() const { return label_names.size(); }
  std::size_t size() const { return examples.size(); }
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
  bool stratified = true;
};

// Seeded shuffle then contiguous cut; stratified per class when every class
// can contribute at least one example to each nonempty split. Sizes follow
// floor-then-remainder-to-train rounding.
inline SplitResult split_dataset(const LabeledDataset& ds,
                                 double train_frac, double val_frac,
                                 double test_frac, std::uint64_t seed) {
  const double sum = train_frac + val_frac + test_frac;
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: fractions must be non-negative and sum to 1");

  const std::size_t n = ds.examples.size();
  std::size_t n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
  std::size_t n_test = static_cast<std::size_t>(test_frac * static_cast<double>(n));
  std::size_t n_train = n - n_val - n_test;

  SplitResult out;
  for (LabeledDataset* d : {&out.train, &out.validation, &out.test})
    d->label_names = ds.label_names;
  out.train.split_tag = "train";
  out.validation.split_tag = "validation";
  out.test.split_tag = "test";

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  // Stratification: round-robin classes into splits when feasible.
  const std::size_t C = ds.label_names.size();
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i : order) by_class[ds.examples[i].label].push_back(i);
  bool feasible = C > 0;
  for (std::size_t c = 0; c < C && feasible; ++c) {
    std::size_t need = 0;
    if (n_train) ++need;
    if (n_val) ++need;
    if (n_test) ++need;
    if (by_class[c].size() < need) feasible = false;
  }

  if (feasible) {
    out.stratified = true;
    std::size_t want_val = n_val, want_test = n_test;
    // Per class: proportional floor cut, remainder to train.
    std::vector<std::size_t> idx_val, idx_test, idx_train;
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t m = by_class[c].size();
      std::size_t v = std::min(want_val, static_cast<std::size_t>(
                                             val_frac * static_cast<double>(m)));
      std::size_t t = std::min(want_test, static_cast<std::size_t>(
                                              test_frac * static_cast<double>(m)));
      if (n_val && v == 0 && want_val > 0 && m >= 3) v = 1;
      if (n_test && t == 0 && want_test > 0 && m >= 3) t = 1;
      std::size_t p = 0;
      for (; p < v && p < m; ++p) idx_val.push_back(by_class[c][p]);
      for (std::size_t q = 0; q < t && p < m; ++q, ++p) idx_test.push_back(by_class[c][p]);
      for (; p < m; ++p) idx_train.push_back(by_class[c][p]);
      want_val -= std::min(want_val, v);
      want_test -= std::min(want_test, t);
    }
    for (std::size_t i : idx_train) out.train.examples.push_back(ds.examples[i]);
    for (std::size_t i : idx_val) out.validation.examples.push_back(ds.examples[i]);
    for (std::size_t i : idx_test) out.test.examples.push_back(ds.examples[i]);
  } else {
    out.stratified = false;
    std::size_t p = 0;
    for (std::size_t i = 0; i < n_train; ++i) out.train.examples.push_back(ds.examples[order[p++]]);
    for (std::size_t i = 0; i < n_val; ++i) out.validation.examples.push_back(ds.examples[order[p++]]);
    for (std::size_t i = 0; i < n_test; ++i) out.test.examples.push_back(ds.examples[order[p++]]);
  }
  return out;
}

}  // namespace pbn
