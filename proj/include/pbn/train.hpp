#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbn/dataset.hpp"
#include "pbn/linalg.hpp"
#include "pbn/model.hpp"
#include "pbn/rng.hpp"
#include "pbn/text.hpp"

namespace pbn {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 4;
  double min_delta = 0.01;  // accuracy units
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (learning_rate < 0) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (min_delta < 0 || min_delta > 1)
      throw std::invalid_argument("TrainConfig: min_delta must be in [0, 1]");
  }
};

struct ModelState {
  PBNConfig config;
  PrototypeSet prototypes;
  ClassifierHead head;
  EmbeddingTable table;
  Vocabulary vocab;
  Rng rng;
};

struct EpochStats {
  LossBreakdown mean_loss;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

inline Vocabulary build_vocabulary(const LabeledDataset& ds) {
  Vocabulary vocab = Vocabulary::with_unk();
  for (const auto& ex : ds.examples)
    for (const auto& tok : tokenize(ex.text).tokens) vocab.add(tok);
  return vocab;
}

// Prototypes and embeddings N(0, 0.1^2); head N(0, 1/Q).
inline ModelState init_model(const PBNConfig& config, const Vocabulary& vocab,
                             std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  state.vocab = vocab;
  state.rng = Rng(seed);
  state.prototypes.prototypes = Matrix(config.num_prototypes, config.embed_dim);
  for (double& v : state.prototypes.prototypes.data)
    v = state.rng.normal(0.0, 0.1);
  state.head.weights = Matrix(config.num_classes, config.num_prototypes);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(config.num_prototypes));
  for (double& v : state.head.weights.data)
    v = state.rng.normal(0.0, head_scale);
  state.table.vectors = Matrix(vocab.size(), config.embed_dim);
  for (double& v : state.table.vectors.data) v = state.rng.normal(0.0, 0.1);
  state.table.trainable = true;
  return state;
}

// Per-block first/second moment state for Adam.
struct AdamState {
  Vec m, v;
  std::size_t t = 0;

  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
      t = 0;
    }
  }
};

inline void adam_step(Vec& params, const Vec& grads, AdamState& st,
                      const TrainConfig& tc) {
  st.ensure(params.size());
  ++st.t;
  const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * grads[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps);
  }
}

inline void sgd_step(Vec& params, const Vec& grads, const TrainConfig& tc) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] -= tc.learning_rate * grads[i];
}

struct Optimizer {
  AdamState protos, head, table;

  void apply(Vec& params, const Vec& grads, AdamState& st,
             const TrainConfig& tc) {
    if (tc.optimizer == OptimizerKind::Adam)
      adam_step(params, grads, st, tc);
    else
      sgd_step(params, grads, tc);
  }
};

inline Vec encode_text(const ModelState& state, const std::string& text) {
  return encode_bag(tokenize(text), state.table, state.vocab);
}

inline std::size_t predict_text(const ModelState& state, const std::string& text) {
  return predict(state.config, state.prototypes, state.head,
                 encode_text(state, text));
}

inline double evaluate_accuracy(const ModelState& state,
                                const LabeledDataset& ds) {
  if (ds.examples.empty())
    throw std::invalid_argument("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : ds.examples)
    if (predict_text(state, ex.text) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// One optimizer step per batch on the total-loss gradients. Shuffle order is
// fixed by (seed, epoch).
inline EpochStats train_epoch(ModelState& state, const LabeledDataset& train_set,
                              const TrainConfig& tc, Optimizer& opt,
                              std::size_t epoch_index) {
  if (train_set.examples.empty())
    throw std::invalid_argument("train_epoch: empty training set");
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(tc.seed * 1000003ULL + epoch_index);
  shuffle_rng.shuffle(order);

  LossBreakdown accum;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
    const std::size_t end = std::min(order.size(), start + tc.batch_size);
    std::vector<TokenSequence> token_batch;
    std::vector<Vec> embeddings;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = train_set.examples[order[i]];
      token_batch.push_back(tokenize(ex.text));
      embeddings.push_back(encode_bag(token_batch.back(), state.table, state.vocab));
      labels.push_back(ex.label);
    }
    const ForwardTrace trace =
        forward(state.config, state.prototypes, state.head, embeddings);
    const LossBreakdown loss =
        total_loss(state.config, trace, labels, state.prototypes);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("train_epoch: non-finite loss in batch " +
                               std::to_string(batches));
    const GradientBundle g =
        backward(state.config, trace, labels, state.prototypes, state.head);

    opt.apply(state.prototypes.prototypes.data, g.d_prototypes.data, opt.protos, tc);
    opt.apply(state.head.weights.data, g.d_head.data, opt.head, tc);

    if (state.table.trainable && !tc.freeze_encoder) {
      Vec table_grad(state.table.vectors.data.size(), 0.0);
      for (std::size_t b = 0; b < token_batch.size(); ++b) {
        for (const auto& [row, grad] :
             encode_bag_backward(token_batch[b], state.vocab, g.d_embeddings[b])) {
          for (std::size_t i = 0; i < grad.size(); ++i)
            table_grad[row * state.table.vectors.cols + i] += grad[i];
        }
      }
      opt.apply(state.table.vectors.data, table_grad, opt.table, tc);
    }

    accum.total += loss.total;
    accum.classification += loss.classification;
    accum.clustering += loss.clustering;
    accum.interpretability += loss.interpretability;
    accum.separation += loss.separation;
    ++batches;
  }
  EpochStats stats;
  const double inv = 1.0 / static_cast<double>(batches);
  stats.mean_loss = {accum.total * inv, accum.classification * inv,
                     accum.clustering * inv, accum.interpretability * inv,
                     accum.separation * inv};
  return stats;
}

// Early stopping: tracks the best-so-far validation accuracy; an epoch
// improves only when it beats the best by at least min_delta. Stops once the
// non-improving streak exceeds the patience.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta)
      : patience_(patience), min_delta_(min_delta) {}

  // Returns true if this epoch's accuracy qualifies as an improvement.
  bool update(double val_accuracy) {
    if (!seen_any_ || val_accuracy >= best_ + min_delta_) {
      best_ = val_accuracy;
      seen_any_ = true;
      streak_ = 0;
      return true;
    }
    ++streak_;
    return false;
  }

  bool should_stop() const { return streak_ > patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  std::size_t streak_ = 0;
  bool seen_any_ = false;
};

struct FitResult {
  ModelState best_state;
  TrainLog log;
};

inline FitResult fit(const ModelState& initial, const LabeledDataset& train_set,
                     const LabeledDataset& validation_set,
                     const TrainConfig& tc) {
  tc.validate();
  if (train_set.examples.empty() || validation_set.examples.empty())
    throw std::invalid_argument("fit: train and validation sets must be nonempty");
  ModelState state = initial;
  Optimizer opt;
  EarlyStopper stopper(tc.patience, tc.min_delta);
  FitResult result;
  result.best_state = state;
  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    EpochStats stats = train_epoch(state, train_set, tc, opt, epoch);
    stats.train_accuracy = evaluate_accuracy(state, train_set);
    stats.validation_accuracy = evaluate_accuracy(state, validation_set);
    result.log.epochs.push_back(stats);
    if (stopper.update(stats.validation_accuracy)) result.best_state = state;
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace pbn
