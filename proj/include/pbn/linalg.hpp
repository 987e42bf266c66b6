#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbn {

using Vec = std::vector<double>;

// Row-major dense matrix of 64-bit reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  Vec row_vec(std::size_t r) const {
    return Vec(data.begin() + static_cast<std::ptrdiff_t>(r * cols),
               data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }

  bool operator==(const Matrix&) const = default;
};

enum class DistanceKind { Euclidean, Cosine };

inline std::string to_string(DistanceKind k) {
  return k == DistanceKind::Euclidean ? "euclidean" : "cosine";
}

inline DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceKind::Euclidean;
  if (s == "cosine") return DistanceKind::Cosine;
  throw std::invalid_argument("unknown distance kind: '" + s +
                              "' (expected 'euclidean' or 'cosine')");
}

inline void check_same_length(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

inline double euclidean_distance(const Vec& a, const Vec& b) {
  check_same_length(a, b, "euclidean_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// Zero-norm inputs are treated as orthogonal (distance 1).
inline constexpr double kCosineNormEps = 1e-12;

inline double cosine_distance(const Vec& a, const Vec& b) {
  check_same_length(a, b, "cosine_distance");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < kCosineNormEps || nb < kCosineNormEps) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

inline double distance(DistanceKind kind, const Vec& a, const Vec& b) {
  return kind == DistanceKind::Euclidean ? euclidean_distance(a, b)
                                         : cosine_distance(a, b);
}

// d/da of distance(kind, a, b), accumulated into grad_a with weight w.
// Euclidean gradient at coincident points is taken as zero (subgradient).
inline void accumulate_distance_grad(DistanceKind kind, const Vec& a,
                                     const Vec& b, double w, Vec& grad_a) {
  if (kind == DistanceKind::Euclidean) {
    const double d = euclidean_distance(a, b);
    if (d <= 0.0) return;
    for (std::size_t i = 0; i < a.size(); ++i)
      grad_a[i] += w * (a[i] - b[i]) / d;
  } else {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na < kCosineNormEps || nb < kCosineNormEps) return;
    const double s = dot(a, b) / (na * nb);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double ds = b[i] / (na * nb) - s * a[i] / (na * na);
      grad_a[i] += -w * ds;
    }
  }
}

inline Vec softmax(const Vec& logits) {
  if (logits.empty())
    throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Central-difference gradient oracle.
inline Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                                      const Vec& x, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  Vec g(x.size());
  Vec p = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = x[i] + h;
    const double fp = f(p);
    p[i] = x[i] - h;
    const double fm = f(p);
    p[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error(
          "finite_difference_gradient: non-finite evaluation at coordinate " +
          std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace pbn
