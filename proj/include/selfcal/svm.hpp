#pragma once

// Soft-margin RBF-kernel SVM trained by sequential minimal optimization on
// the dual. Sized for the tens-to-hundreds of points an interactive session
// produces: the full kernel matrix is cached.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "selfcal/error.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

using Point = std::vector<double>;

struct LabeledPoint {
  Point x;
  Meaning label = Meaning::Yellow;
  // Anchored points (propagated ground truth) always train and are never
  // held out for scoring.
  bool anchored = false;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  return std::exp(-gamma * squared_distance(a, b));
}

/// gamma = 1 / (2 * median^2) over all pairwise Euclidean distances. Falls
/// back to the mean non-zero distance when the median is zero and to 1.0 when
/// every point coincides.
inline double median_heuristic_gamma(std::span<const Point> points) {
  std::vector<double> dist;
  dist.reserve(points.size() * (points.size() > 0 ? points.size() - 1 : 0) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      dist.push_back(std::sqrt(squared_distance(points[i], points[j])));
    }
  }
  if (dist.empty()) return 1.0;
  std::sort(dist.begin(), dist.end());
  const std::size_t n = dist.size();
  double median = n % 2 == 1 ? dist[n / 2] : 0.5 * (dist[n / 2 - 1] + dist[n / 2]);
  if (!(median > 0.0)) {
    double sum = 0.0;
    std::size_t count = 0;
    for (double d : dist) {
      if (d > 0.0) {
        sum += d;
        ++count;
      }
    }
    if (count == 0) return 1.0;
    median = sum / static_cast<double>(count);
  }
  return 1.0 / (2.0 * median * median);
}

/// Dense symmetric kernel matrix over a fixed point set.
class KernelMatrix {
 public:
  KernelMatrix(std::span<const Point> points, double gamma) : n_(points.size()), k_(n_ * n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      k_[i * n_ + i] = 1.0;
      for (std::size_t j = i + 1; j < n_; ++j) {
        const double v = rbf_kernel(points[i], points[j], gamma);
        k_[i * n_ + j] = v;
        k_[j * n_ + i] = v;
      }
    }
  }

  double operator()(std::size_t i, std::size_t j) const { return k_[i * n_ + j]; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> k_;
};

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;        // decision(x) = sum alpha_i y_i K(x_i, x) - rho
  double objective = 0.0;  // 0.5 a^T Q a - sum a
  std::size_t iterations = 0;
};

/// Dual objective 0.5 * a^T Q a - sum(a) with Q_ij = y_i y_j K_ij, evaluated
/// on the subset `index` of the kernel matrix.
inline double dual_objective(const KernelMatrix& kernel, std::span<const std::size_t> index,
                             std::span<const int> y, std::span<const double> alpha) {
  double quad = 0.0, lin = 0.0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    lin += alpha[a];
    if (alpha[a] == 0.0) continue;
    for (std::size_t b = 0; b < index.size(); ++b) {
      quad += alpha[a] * alpha[b] * y[a] * y[b] * kernel(index[a], index[b]);
    }
  }
  return 0.5 * quad - lin;
}

inline constexpr double kSmoTolerance = 1e-6;

/// SMO with second-order working-set selection. Ties in either selection
/// resolve to the lowest index so the path is a pure function of input order.
/// `index` selects the training rows of `kernel`; y holds +1/-1 per row.
inline DualSolution solve_dual(const KernelMatrix& kernel, std::span<const std::size_t> index,
                               std::span<const int> y, double C, double tol = kSmoTolerance) {
  const std::size_t n = index.size();
  constexpr double kTau = 1e-12;
  auto K = [&](std::size_t a, std::size_t b) { return kernel(index[a], index[b]); };
  auto Q = [&](std::size_t a, std::size_t b) { return y[a] * y[b] * K(a, b); };

  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double>& alpha = sol.alpha;
  std::vector<double> grad(n, -1.0);

  auto in_up = [&](std::size_t t) {
    return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0);
  };
  auto in_low = [&](std::size_t t) {
    return (y[t] == 1 && alpha[t] > 0.0) || (y[t] == -1 && alpha[t] < C);
  };

  const std::size_t max_iter = std::max<std::size_t>(10'000'000, 100 * n);
  while (sol.iterations < max_iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * grad[t] > gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    if (i == n) break;

    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y[t] * grad[t];
      gmin = std::min(gmin, v);
      const double b = gmax - v;
      if (b > 0.0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0.0) a = kTau;
        const double score = -(b * b) / a;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    if (j == n || gmax - gmin < tol) break;
    ++sol.iterations;

    const double old_i = alpha[i], old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }

    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * di + Q(t, j) * dj;
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  sol.objective = dual_objective(kernel, index, y, alpha);
  return sol;
}

struct SupportVector {
  Point x;
  double coefficient = 0.0;  // alpha_i * y_i
};

/// Trained classifier: sign of sum(coef * K(sv, x)) + bias, where a
/// non-negative value predicts `positive`.
class DecisionFunction {
 public:
  DecisionFunction() = default;
  DecisionFunction(std::vector<SupportVector> support, double bias, double gamma, Meaning positive)
      : support_(std::move(support)), bias_(bias), gamma_(gamma), positive_(positive) {}

  double value(std::span<const double> x) const {
    double v = bias_;
    for (const auto& sv : support_) {
      if (sv.x.size() != x.size()) {
        throw Error(ErrorCode::DimensionMismatch, "decision function evaluated at wrong dimension");
      }
      v += sv.coefficient * rbf_kernel(sv.x, x, gamma_);
    }
    return v;
  }

  Meaning predict(std::span<const double> x) const {
    return value(x) >= 0.0 ? positive_ : flip(positive_);
  }

  const std::vector<SupportVector>& support() const { return support_; }
  double bias() const { return bias_; }
  double gamma() const { return gamma_; }
  Meaning positive() const { return positive_; }

 private:
  std::vector<SupportVector> support_;
  double bias_ = 0.0;
  double gamma_ = 1.0;
  Meaning positive_ = Meaning::Yellow;
};

namespace detail {

inline void check_dimensions(std::span<const Point> points) {
  if (points.empty()) return;
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim || dim == 0) throw Error(ErrorCode::DimensionMismatch, "inconsistent point dimension");
    for (double v : p) {
      if (!std::isfinite(v)) throw Error(ErrorCode::DimensionMismatch, "non-finite feature");
    }
  }
}

// Trains on rows `index` of a cached kernel. The label of the first training
// row is mapped to +1 so a global label flip leaves the optimization path
// unchanged.
inline DecisionFunction train_on_subset(std::span<const Point> points, std::span<const Meaning> labels,
                                        const KernelMatrix& kernel, std::span<const std::size_t> index,
                                        double C, double gamma) {
  if (index.empty()) throw Error(ErrorCode::SingleClass, "empty training set");
  const Meaning positive = labels[index.front()];
  std::vector<int> y(index.size());
  bool both = false;
  for (std::size_t a = 0; a < index.size(); ++a) {
    y[a] = labels[index[a]] == positive ? 1 : -1;
    both = both || y[a] == -1;
  }
  if (!both) throw Error(ErrorCode::SingleClass, "training data holds a single class");

  const DualSolution sol = solve_dual(kernel, index, y, C);
  std::vector<SupportVector> support;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (sol.alpha[a] > 0.0) support.push_back({points[index[a]], sol.alpha[a] * y[a]});
  }
  return DecisionFunction(std::move(support), -sol.rho, gamma, positive);
}

}  // namespace detail

/// Fits a C-SVC with RBF kernel exp(-gamma |x - z|^2).
inline DecisionFunction train_rbf_svm(std::span<const LabeledPoint> data, double C, double gamma) {
  std::vector<Point> points;
  std::vector<Meaning> labels;
  points.reserve(data.size());
  labels.reserve(data.size());
  for (const auto& d : data) {
    points.push_back(d.x);
    labels.push_back(d.label);
  }
  detail::check_dimensions(points);
  const KernelMatrix kernel(points, gamma);
  std::vector<std::size_t> index(points.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  return detail::train_on_subset(points, labels, kernel, index, C, gamma);
}

}  // namespace selfcal
