#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/model.hpp"
#include "pbn/train.hpp"

namespace pbn {

struct NearestExample {
  std::int64_t example_id = 0;
  double distance = 0.0;
  std::size_t gold_label = 0;
};

struct PrototypeCard {
  std::size_t prototype_index = 0;
  std::vector<NearestExample> nearest;  // ascending distance
  std::size_t derived_label = 0;        // majority label of the k nearest
};

struct PrototypeContribution {
  std::size_t prototype_index = 0;
  double score = 0.0;  // head weight times distance, signed
  std::size_t derived_label = 0;
};

struct PredictionExplanation {
  std::string text;
  std::size_t predicted = 0;
  std::vector<PrototypeContribution> top;  // descending |score|
};

// Exact k-nearest training examples for one prototype. Ties break to the
// lower example id; the derived label is the majority gold label (ties to
// the lower class index).
inline PrototypeCard nearest_training_examples(const ModelState& model,
                                               const LabeledDataset& train_set,
                                               std::size_t prototype_index,
                                               std::size_t k) {
  if (prototype_index >= model.config.num_prototypes)
    throw std::invalid_argument("nearest_training_examples: prototype index " +
                                std::to_string(prototype_index) +
                                " out of range");
  if (k > train_set.size())
    throw std::invalid_argument("nearest_training_examples: k exceeds dataset size");
  const Vec proto = model.prototypes.prototypes.row_vec(prototype_index);
  std::vector<NearestExample> all;
  all.reserve(train_set.size());
  for (const auto& ex : train_set.examples) {
    const Vec e = encode_text(model, ex.text);
    all.push_back({ex.id, distance(model.config.distance, e, proto), ex.label});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const NearestExample& a, const NearestExample& b) {
                     if (a.distance != b.distance) return a.distance < b.distance;
                     return a.example_id < b.example_id;
                   });
  PrototypeCard card;
  card.prototype_index = prototype_index;
  card.nearest.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::map<std::size_t, std::size_t> counts;
  for (const auto& ne : card.nearest) ++counts[ne.gold_label];
  std::size_t best_label = 0, best_count = 0;
  for (const auto& [label, count] : counts)
    if (count > best_count) {
      best_count = count;
      best_label = label;
    }
  card.derived_label = best_label;
  return card;
}

inline std::vector<PrototypeCard> all_prototype_cards(
    const ModelState& model, const LabeledDataset& train_set, std::size_t k) {
  std::vector<PrototypeCard> cards;
  for (std::size_t q = 0; q < model.config.num_prototypes; ++q)
    cards.push_back(nearest_training_examples(model, train_set, q, k));
  return cards;
}

// Contribution of prototype q toward the predicted class: the head weight
// times the raw distance. Top-k by |score|, ties to the lower index.
inline PredictionExplanation top_activated_prototypes(
    const ModelState& model, const std::string& text, std::size_t k,
    const std::vector<std::size_t>& derived_labels = {}) {
  if (k > model.config.num_prototypes)
    throw std::invalid_argument("top_activated_prototypes: k exceeds Q");
  const Vec e = encode_text(model, text);
  const ForwardTrace trace =
      forward(model.config, model.prototypes, model.head, {e});
  PredictionExplanation exp;
  exp.text = text;
  for (std::size_t c = 1; c < model.config.num_classes; ++c)
    if (trace.probabilities.at(0, c) > trace.probabilities.at(0, exp.predicted))
      exp.predicted = c;
  std::vector<PrototypeContribution> all;
  for (std::size_t q = 0; q < model.config.num_prototypes; ++q) {
    PrototypeContribution pc;
    pc.prototype_index = q;
    pc.score = model.head.weights.at(exp.predicted, q) * trace.distances.at(0, q);
    pc.derived_label = q < derived_labels.size() ? derived_labels[q] : 0;
    all.push_back(pc);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const PrototypeContribution& a, const PrototypeContribution& b) {
                     return std::abs(a.score) > std::abs(b.score);
                   });
  exp.top.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  return exp;
}

// Mean and population standard deviation over the full Q x N prototype-to-
// example distance matrix (raw distances).
inline std::pair<double, double> prototype_spread_stats(
    const ModelState& model, const LabeledDataset& dataset) {
  if (dataset.examples.empty())
    throw std::invalid_argument("prototype_spread_stats: empty dataset");
  std::vector<double> dists;
  dists.reserve(dataset.size() * model.config.num_prototypes);
  for (const auto& ex : dataset.examples) {
    const Vec e = encode_text(model, ex.text);
    for (std::size_t q = 0; q < model.config.num_prototypes; ++q)
      dists.push_back(distance(model.config.distance, e,
                               model.prototypes.prototypes.row_vec(q)));
  }
  double mean = 0.0;
  for (double d : dists) mean += d;
  mean /= static_cast<double>(dists.size());
  double var = 0.0;
  for (double d : dists) var += (d - mean) * (d - mean);
  var /= static_cast<double>(dists.size());
  return {mean, std::sqrt(var)};
}

}  // namespace pbn
