#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbn/linalg.hpp"

namespace pbn {

struct PBNConfig {
  std::size_t num_prototypes = 8;  // Q
  std::size_t num_classes = 2;     // C
  std::size_t embed_dim = 32;      // D
  DistanceKind distance = DistanceKind::Euclidean;
  double lambda_c = 0.9;
  double lambda_i = 0.9;
  double lambda_s = 0.9;

  void validate() const {
    if (num_prototypes < 2) throw std::invalid_argument("PBNConfig: Q must be >= 2");
    if (num_classes < 2) throw std::invalid_argument("PBNConfig: C must be >= 2");
    if (embed_dim < 1) throw std::invalid_argument("PBNConfig: D must be >= 1");
    if (lambda_c < 0 || lambda_i < 0 || lambda_s < 0)
      throw std::invalid_argument("PBNConfig: lambdas must be non-negative");
  }
};

struct PrototypeSet {
  Matrix prototypes;  // Q x D
};

// Intercept-free linear layer over the distance vector.
struct ClassifierHead {
  Matrix weights;  // C x Q
};

struct ForwardTrace {
  std::vector<Vec> embeddings;     // batch x D
  Matrix distances;                // batch x Q
  Matrix logits;                   // batch x C
  Matrix probabilities;            // batch x C
};

struct GradientBundle {
  Matrix d_prototypes;        // Q x D
  Matrix d_head;              // C x Q
  std::vector<Vec> d_embeddings;  // batch x D
};

inline ForwardTrace forward(const PBNConfig& config,
                            const PrototypeSet& protos,
                            const ClassifierHead& head,
                            const std::vector<Vec>& embeddings) {
  const std::size_t Q = config.num_prototypes;
  const std::size_t C = config.num_classes;
  const std::size_t D = config.embed_dim;
  if (protos.prototypes.rows != Q || protos.prototypes.cols != D)
    throw std::invalid_argument("forward: prototype shape mismatch");
  if (head.weights.rows != C || head.weights.cols != Q)
    throw std::invalid_argument("forward: head shape mismatch");
  const std::size_t N = embeddings.size();
  ForwardTrace trace;
  trace.embeddings = embeddings;
  trace.distances = Matrix(N, Q);
  trace.logits = Matrix(N, C);
  trace.probabilities = Matrix(N, C);
  for (std::size_t j = 0; j < N; ++j) {
    if (embeddings[j].size() != D)
      throw std::invalid_argument("forward: embedding " + std::to_string(j) +
                                  " has length " +
                                  std::to_string(embeddings[j].size()) +
                                  ", expected " + std::to_string(D));
    for (std::size_t k = 0; k < Q; ++k) {
      trace.distances.at(j, k) =
          distance(config.distance, embeddings[j], protos.prototypes.row_vec(k));
    }
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < Q; ++k)
        s += head.weights.at(c, k) * trace.distances.at(j, k);
      trace.logits.at(j, c) = s;
    }
    const Vec probs = softmax(trace.logits.row_vec(j));
    for (std::size_t c = 0; c < C; ++c) trace.probabilities.at(j, c) = probs[c];
  }
  return trace;
}

inline constexpr double kProbFloor = 1e-12;

inline double classification_loss(const ForwardTrace& trace,
                                  const std::vector<std::size_t>& labels) {
  if (labels.size() != trace.probabilities.rows)
    throw std::invalid_argument("classification_loss: label count mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= trace.probabilities.cols)
      throw std::invalid_argument("classification_loss: label out of range at index " +
                                  std::to_string(j));
    loss -= std::log(std::max(trace.probabilities.at(j, labels[j]), kProbFloor));
  }
  return loss;
}

// Mean over examples of the distance to the nearest prototype.
// Ties in the min resolve to the lowest prototype index.
inline double clustering_loss(const Matrix& distances) {
  if (distances.rows == 0)
    throw std::invalid_argument("clustering_loss: empty batch");
  double sum = 0.0;
  for (std::size_t j = 0; j < distances.rows; ++j) {
    double mn = distances.at(j, 0);
    for (std::size_t k = 1; k < distances.cols; ++k)
      mn = std::min(mn, distances.at(j, k));
    sum += mn;
  }
  return sum / static_cast<double>(distances.rows);
}

// Mean over prototypes of the distance to the nearest example.
inline double interpretability_loss(const Matrix& distances) {
  if (distances.rows == 0)
    throw std::invalid_argument("interpretability_loss: empty batch");
  double sum = 0.0;
  for (std::size_t k = 0; k < distances.cols; ++k) {
    double mn = distances.at(0, k);
    for (std::size_t j = 1; j < distances.rows; ++j)
      mn = std::min(mn, distances.at(j, k));
    sum += mn;
  }
  return sum / static_cast<double>(distances.cols);
}

// Mean pairwise inter-prototype distance over unordered distinct pairs.
inline double separation_loss(const PrototypeSet& protos, DistanceKind kind) {
  const std::size_t Q = protos.prototypes.rows;
  if (Q < 2)
    throw std::invalid_argument("separation_loss: undefined for Q < 2");
  double sum = 0.0;
  for (std::size_t k = 0; k < Q; ++k)
    for (std::size_t l = k + 1; l < Q; ++l)
      sum += distance(kind, protos.prototypes.row_vec(k),
                      protos.prototypes.row_vec(l));
  return 2.0 * sum / (static_cast<double>(Q) * static_cast<double>(Q - 1));
}

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double clustering = 0.0;
  double interpretability = 0.0;
  double separation = 0.0;
};

inline LossBreakdown total_loss(const PBNConfig& config,
                                const ForwardTrace& trace,
                                const std::vector<std::size_t>& labels,
                                const PrototypeSet& protos) {
  LossBreakdown b;
  b.classification = classification_loss(trace, labels);
  b.clustering = clustering_loss(trace.distances);
  b.interpretability = interpretability_loss(trace.distances);
  b.separation = separation_loss(protos, config.distance);
  b.total = b.classification + config.lambda_c * b.clustering +
            config.lambda_i * b.interpretability -
            config.lambda_s * b.separation;
  return b;
}

inline GradientBundle backward(const PBNConfig& config,
                               const ForwardTrace& trace,
                               const std::vector<std::size_t>& labels,
                               const PrototypeSet& protos,
                               const ClassifierHead& head) {
  const std::size_t Q = config.num_prototypes;
  const std::size_t C = config.num_classes;
  const std::size_t D = config.embed_dim;
  const std::size_t N = trace.embeddings.size();

  GradientBundle g;
  g.d_prototypes = Matrix(Q, D);
  g.d_head = Matrix(C, Q);
  g.d_embeddings.assign(N, Vec(D, 0.0));

  // dL/d logits for the sum-over-batch cross-entropy.
  Matrix dlogits(N, C);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t c = 0; c < C; ++c)
      dlogits.at(j, c) =
          trace.probabilities.at(j, c) - (labels[j] == c ? 1.0 : 0.0);

  // dL/d distances through the head, plus the min-terms of the
  // clustering and interpretability losses (tie-broken argmin).
  Matrix ddist(N, Q);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < Q; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        s += dlogits.at(j, c) * head.weights.at(c, k);
      ddist.at(j, k) = s;
    }
  if (config.lambda_c > 0.0) {
    for (std::size_t j = 0; j < N; ++j) {
      std::size_t arg = 0;
      for (std::size_t k = 1; k < Q; ++k)
        if (trace.distances.at(j, k) < trace.distances.at(j, arg)) arg = k;
      ddist.at(j, arg) += config.lambda_c / static_cast<double>(N);
    }
  }
  if (config.lambda_i > 0.0) {
    for (std::size_t k = 0; k < Q; ++k) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < N; ++j)
        if (trace.distances.at(j, k) < trace.distances.at(arg, k)) arg = j;
      ddist.at(arg, k) += config.lambda_i / static_cast<double>(Q);
    }
  }

  // Head gradient.
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < Q; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        s += dlogits.at(j, c) * trace.distances.at(j, k);
      g.d_head.at(c, k) = s;
    }

  // Distance gradients into prototypes and embeddings.
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t k = 0; k < Q; ++k) {
      const double w = ddist.at(j, k);
      if (w == 0.0) continue;
      const Vec pk = protos.prototypes.row_vec(k);
      accumulate_distance_grad(config.distance, trace.embeddings[j], pk, w,
                               g.d_embeddings[j]);
      Vec gp(D, 0.0);
      accumulate_distance_grad(config.distance, pk, trace.embeddings[j], w, gp);
      for (std::size_t i = 0; i < D; ++i) g.d_prototypes.at(k, i) += gp[i];
    }
  }

  // Separation term enters Eq-style total with a minus sign.
  if (config.lambda_s > 0.0) {
    const double coef =
        -config.lambda_s * 2.0 /
        (static_cast<double>(Q) * static_cast<double>(Q - 1));
    for (std::size_t k = 0; k < Q; ++k)
      for (std::size_t l = k + 1; l < Q; ++l) {
        const Vec pk = protos.prototypes.row_vec(k);
        const Vec pl = protos.prototypes.row_vec(l);
        Vec gk(D, 0.0), gl(D, 0.0);
        accumulate_distance_grad(config.distance, pk, pl, coef, gk);
        accumulate_distance_grad(config.distance, pl, pk, coef, gl);
        for (std::size_t i = 0; i < D; ++i) {
          g.d_prototypes.at(k, i) += gk[i];
          g.d_prototypes.at(l, i) += gl[i];
        }
      }
  }
  return g;
}

// Argmax of the class probabilities; ties resolve to the lowest index.
inline std::size_t predict(const PBNConfig& config, const PrototypeSet& protos,
                           const ClassifierHead& head, const Vec& embedding) {
  const ForwardTrace trace = forward(config, protos, head, {embedding});
  std::size_t best = 0;
  for (std::size_t c = 1; c < config.num_classes; ++c)
    if (trace.probabilities.at(0, c) > trace.probabilities.at(0, best)) best = c;
  return best;
}

}  // namespace pbn
