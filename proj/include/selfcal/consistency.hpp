#pragma once

// Consistency of a hypothetically labeled continuous dataset, measured as the
// cross-validated accuracy of an RBF SVM; plus the cluster-then-label
// baseline it is compared against.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "selfcal/elim.hpp"
#include "selfcal/rng.hpp"
#include "selfcal/svm.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

/// Fold id per row. Stratified k-fold, or leave-one-out (fold i = row i) when
/// n < 2k. Rows are expected in canonical order; the shuffle seed depends
/// only on n and the unordered class counts.
inline std::vector<int> assign_folds(std::span<const Meaning> labels, int folds) {
  const std::size_t n = labels.size();
  std::vector<int> fold(n);
  if (n < 2 * static_cast<std::size_t>(folds)) {
    std::iota(fold.begin(), fold.end(), 0);
    return fold;
  }
  const auto yellow = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), Meaning::Yellow));
  const std::uint64_t grey = n - yellow;
  Rng rng(mix_seed(n, std::min(yellow, grey) * 1000003ULL + std::max(yellow, grey)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  int rank[2] = {0, 0};
  for (std::size_t row : order) {
    int& r = rank[static_cast<int>(labels[row])];
    fold[row] = r % folds;
    ++r;
  }
  return fold;
}

/// Cross-validated accuracy in [0,1] over the non-anchored points; anchored
/// points sit in every training fold. Datasets with fewer than two points, a
/// single class, or nothing to score give 1.0: nothing contradicts the
/// hypothesis yet.
inline double consistency_score(std::span<const LabeledPoint> data, const EngineConfig& config) {
  const std::size_t n = data.size();
  if (n < 2) return 1.0;
  const bool single_class = std::all_of(data.begin(), data.end(),
                                        [&](const LabeledPoint& p) { return p.label == data.front().label; });
  if (single_class) return 1.0;
  if (std::all_of(data.begin(), data.end(), [](const LabeledPoint& p) { return p.anchored; })) return 1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data[a].x != data[b].x) return data[a].x < data[b].x;
    if (data[a].label != data[b].label) return data[a].label < data[b].label;
    return data[a].anchored < data[b].anchored;
  });
  std::vector<Point> points;
  points.reserve(n);
  for (std::size_t i : order) points.push_back(data[i].x);
  detail::check_dimensions(points);

  std::vector<std::size_t> anchored, scored;
  std::vector<Meaning> labels(n), scored_labels;
  for (std::size_t r = 0; r < n; ++r) {
    labels[r] = data[order[r]].label;
    if (data[order[r]].anchored) {
      anchored.push_back(r);
    } else {
      scored.push_back(r);
      scored_labels.push_back(labels[r]);
    }
  }

  const double gamma = config.rbf_gamma.value_or(median_heuristic_gamma(points));
  const KernelMatrix kernel(points, gamma);
  const std::vector<int> fold = assign_folds(scored_labels, config.cv_folds);
  const int num_folds = *std::max_element(fold.begin(), fold.end()) + 1;

  std::size_t correct = 0;
  std::vector<std::size_t> train, test;
  for (int f = 0; f < num_folds; ++f) {
    train = anchored;
    test.clear();
    for (std::size_t i = 0; i < scored.size(); ++i) (fold[i] == f ? test : train).push_back(scored[i]);
    if (test.empty()) continue;
    std::sort(train.begin(), train.end());
    if (train.empty()) continue;
    const bool train_single = std::all_of(train.begin(), train.end(),
                                          [&](std::size_t i) { return labels[i] == labels[train.front()]; });
    if (train_single) {
      for (std::size_t i : test) correct += labels[i] == labels[train.front()] ? 1 : 0;
      continue;
    }
    const Meaning positive = labels[train.front()];
    std::vector<int> y(train.size());
    for (std::size_t a = 0; a < train.size(); ++a) y[a] = labels[train[a]] == positive ? 1 : -1;
    const DualSolution sol = solve_dual(kernel, train, y, config.svm_C);
    for (std::size_t i : test) {
      double v = -sol.rho;
      for (std::size_t a = 0; a < train.size(); ++a) {
        if (sol.alpha[a] > 0.0) v += sol.alpha[a] * y[a] * kernel(train[a], i);
      }
      const Meaning predicted = v >= 0.0 ? positive : flip(positive);
      correct += predicted == labels[i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(scored.size());
}

struct Clustering {
  std::vector<int> assignment;  // 0 or 1 per point
  std::vector<Point> centers;
  double inertia = 0.0;
};

/// Lloyd's 2-means with k-means++ seeding, best of `restarts` by inertia.
inline Clustering two_means(std::span<const Point> points, std::uint64_t seed = 0, int restarts = 10) {
  const std::size_t n = points.size();
  if (n < 2) throw Error(ErrorCode::TooFewPoints, "2-means needs at least two points");
  detail::check_dimensions(points);
  const std::size_t dim = points.front().size();

  Clustering best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<Point> centers;
    centers.push_back(points[uniform_index(rng, n)]);
    {
      std::vector<double> d2(n);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += d2[i] = squared_distance(points[i], centers[0]);
      std::size_t pick = 0;
      if (total > 0.0) {
        double target = uniform01(rng) * total;
        for (pick = 0; pick + 1 < n; ++pick) {
          target -= d2[pick];
          if (target < 0.0 && d2[pick] > 0.0) break;
        }
      }
      centers.push_back(points[pick]);
    }

    std::vector<int> assignment(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        const int c = squared_distance(points[i], centers[1]) < squared_distance(points[i], centers[0]) ? 1 : 0;
        if (c != assignment[i]) {
          assignment[i] = c;
          changed = true;
        }
      }
      if (!changed) break;
      for (int c = 0; c < 2; ++c) {
        Point mean(dim, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (assignment[i] != c) continue;
          for (std::size_t k = 0; k < dim; ++k) mean[k] += points[i][k];
          ++count;
        }
        if (count == 0) continue;  // keep the old center
        for (double& v : mean) v /= static_cast<double>(count);
        centers[c] = std::move(mean);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(points[i], centers[assignment[i]]);
    if (inertia < best.inertia) best = Clustering{assignment, centers, inertia};
  }
  return best;
}

/// Cluster first, then try both cluster -> color assignments and replay
/// elimination over the history. Yields a digit only when exactly one
/// assignment leaves exactly one survivor. points[i] is the action of history[i].
inline std::optional<int> unsup_baseline(std::span<const Point> points, std::span<const InteractionEvent> history) {
  if (points.size() != history.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one point per history event expected");
  }
  const Clustering clusters = two_means(points);
  std::optional<int> found;
  int single_survivor_assignments = 0;
  for (int swap = 0; swap < 2; ++swap) {
    PerIntent<bool> valid = all_valid();
    for (std::size_t i = 0; i < history.size(); ++i) {
      const Meaning m = (clusters.assignment[i] ^ swap) == 0 ? Meaning::Yellow : Meaning::Grey;
      valid = elim_step(valid, history[i].coloring, m);
    }
    if (count_valid(valid) == 1) {
      ++single_survivor_assignments;
      for (int d = 0; d < kNumIntents; ++d) {
        if (valid[d]) found = d;
      }
    }
  }
  if (single_survivor_assignments != 1) return std::nullopt;
  return found;
}

}  // namespace selfcal
