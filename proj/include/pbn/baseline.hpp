#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/linalg.hpp"
#include "pbn/text.hpp"
#include "pbn/train.hpp"

namespace pbn {

// Vanilla softmax classifier over the bag embedding: logits = W e, no bias.
// Shares the encoder and training loop mechanics with the prototype model
// and serves as the non-prototype baseline.
struct LinearModel {
  std::size_t num_classes = 2;
  std::size_t embed_dim = 32;
  Matrix weights;  // C x D
  EmbeddingTable table;
  Vocabulary vocab;
};

inline LinearModel init_linear_model(std::size_t num_classes,
                                     std::size_t embed_dim,
                                     const Vocabulary& vocab,
                                     std::uint64_t seed) {
  LinearModel m;
  m.num_classes = num_classes;
  m.embed_dim = embed_dim;
  m.vocab = vocab;
  Rng rng(seed);
  m.weights = Matrix(num_classes, embed_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (double& v : m.weights.data) v = rng.normal(0.0, scale);
  m.table.vectors = Matrix(vocab.size(), embed_dim);
  for (double& v : m.table.vectors.data) v = rng.normal(0.0, 0.1);
  return m;
}

inline Vec linear_probabilities(const LinearModel& m, const Vec& embedding) {
  Vec logits(m.num_classes, 0.0);
  for (std::size_t c = 0; c < m.num_classes; ++c)
    for (std::size_t i = 0; i < m.embed_dim; ++i)
      logits[c] += m.weights.at(c, i) * embedding[i];
  return softmax(logits);
}

inline std::size_t linear_predict_text(const LinearModel& m,
                                       const std::string& text) {
  const Vec probs =
      linear_probabilities(m, encode_bag(tokenize(text), m.table, m.vocab));
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

inline double linear_accuracy(const LinearModel& m, const LabeledDataset& ds) {
  if (ds.examples.empty())
    throw std::invalid_argument("linear_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : ds.examples)
    if (linear_predict_text(m, ex.text) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Sum-over-batch cross-entropy training with the same optimizer and early
// stopping as the prototype model.
inline LinearModel fit_linear(LinearModel model, const LabeledDataset& train_set,
                              const LabeledDataset& validation_set,
                              const TrainConfig& tc) {
  tc.validate();
  Optimizer opt;
  EarlyStopper stopper(tc.patience, tc.min_delta);
  LinearModel best = model;
  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(tc.seed * 1000003ULL + epoch);
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      Vec wgrad(model.weights.data.size(), 0.0);
      Vec tgrad(model.table.vectors.data.size(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train_set.examples[order[i]];
        const TokenSequence toks = tokenize(ex.text);
        const Vec e = encode_bag(toks, model.table, model.vocab);
        const Vec probs = linear_probabilities(model, e);
        Vec dlogits(probs);
        dlogits[ex.label] -= 1.0;
        Vec dembed(model.embed_dim, 0.0);
        for (std::size_t c = 0; c < model.num_classes; ++c)
          for (std::size_t d = 0; d < model.embed_dim; ++d) {
            wgrad[c * model.embed_dim + d] += dlogits[c] * e[d];
            dembed[d] += dlogits[c] * model.weights.at(c, d);
          }
        if (model.table.trainable && !tc.freeze_encoder) {
          for (const auto& [row, grad] :
               encode_bag_backward(toks, model.vocab, dembed))
            for (std::size_t d = 0; d < grad.size(); ++d)
              tgrad[row * model.embed_dim + d] += grad[d];
        }
      }
      opt.apply(model.weights.data, wgrad, opt.head, tc);
      if (model.table.trainable && !tc.freeze_encoder)
        opt.apply(model.table.vectors.data, tgrad, opt.table, tc);
    }

    const double val_acc = linear_accuracy(model, validation_set);
    if (stopper.update(val_acc)) best = model;
    if (stopper.should_stop()) break;
  }
  return best;
}

}  // namespace pbn
