#pragma once

// Feature extraction for sketches and audio, and the 2-D projection that puts
// every continuous signal on the same kind of map as a touch point.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "selfcal/error.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// A single pen stroke.
struct Polyline {
  std::vector<Vec2> points;
};

inline constexpr std::size_t kSketchFeatureCount = 17;

struct SketchFeatures {
  double start_x = 0, start_y = 0, end_x = 0, end_y = 0;
  double delta_x = 0, delta_y = 0;
  double start_end_distance = 0;
  double path_length = 0;
  std::array<double, 9> grid_fraction{};  // index = row * 3 + col, row 0 = lowest y

  std::vector<double> to_vector() const {
    std::vector<double> v{start_x, start_y, end_x, end_y, delta_x, delta_y, start_end_distance, path_length};
    v.insert(v.end(), grid_fraction.begin(), grid_fraction.end());
    return v;
  }
};

/// Translate and uniformly scale so the bounding box fits [-1,1]^2, centered.
inline Polyline normalize_sketch(const Polyline& p) {
  if (p.points.size() < 2) throw Error(ErrorCode::TooFewPoints, "a sketch needs at least two points");
  double min_x = p.points[0].x, max_x = min_x, min_y = p.points[0].y, max_y = min_y;
  for (const auto& q : p.points) {
    if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw Error(ErrorCode::MalformedSignal, "non-finite sketch point");
    min_x = std::min(min_x, q.x);
    max_x = std::max(max_x, q.x);
    min_y = std::min(min_y, q.y);
    max_y = std::max(max_y, q.y);
  }
  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  const double half = 0.5 * std::max(max_x - min_x, max_y - min_y);
  Polyline out;
  out.points.reserve(p.points.size());
  for (const auto& q : p.points) {
    out.points.push_back(half > 0.0 ? Vec2{(q.x - cx) / half, (q.y - cy) / half} : Vec2{0.0, 0.0});
  }
  return out;
}

namespace detail {

// Boundaries of the 3x3 grid over [-1,1]; a coordinate on a boundary belongs
// to the lower-index cell.
inline int grid_axis_cell(double v) {
  if (v <= -1.0 / 3.0) return 0;
  if (v <= 1.0 / 3.0) return 1;
  return 2;
}

inline int grid_cell(Vec2 p) { return grid_axis_cell(p.y) * 3 + grid_axis_cell(p.x); }

}  // namespace detail

/// Endpoint, displacement, length and ink-distribution features of a
/// normalized stroke. Grid fractions are weighted by path length.
inline SketchFeatures sketch_features(const Polyline& p) {
  if (p.points.empty()) throw Error(ErrorCode::TooFewPoints, "empty sketch");
  SketchFeatures f;
  const Vec2 s = p.points.front(), e = p.points.back();
  f.start_x = s.x;
  f.start_y = s.y;
  f.end_x = e.x;
  f.end_y = e.y;
  f.delta_x = e.x - s.x;
  f.delta_y = e.y - s.y;
  f.start_end_distance = std::hypot(f.delta_x, f.delta_y);

  constexpr double kCuts[2] = {-1.0 / 3.0, 1.0 / 3.0};
  for (std::size_t k = 0; k + 1 < p.points.size(); ++k) {
    const Vec2 a = p.points[k], b = p.points[k + 1];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    f.path_length += len;
    std::vector<double> ts{0.0, 1.0};
    for (double c : kCuts) {
      if (b.x != a.x) {
        const double t = (c - a.x) / (b.x - a.x);
        if (t > 0.0 && t < 1.0) ts.push_back(t);
      }
      if (b.y != a.y) {
        const double t = (c - a.y) / (b.y - a.y);
        if (t > 0.0 && t < 1.0) ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      const double dt = ts[i + 1] - ts[i];
      if (dt <= 0.0) continue;
      const double tm = 0.5 * (ts[i] + ts[i + 1]);
      const Vec2 mid{a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y)};
      f.grid_fraction[detail::grid_cell(mid)] += dt * len;
    }
  }
  if (f.path_length > 0.0) {
    for (double& g : f.grid_fraction) g /= f.path_length;
  } else {
    f.grid_fraction[detail::grid_cell(s)] = 1.0;
  }
  return f;
}

/// Row-major N x D matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  static Matrix from_rows(std::span<const std::vector<double>> rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols) throw Error(ErrorCode::DimensionMismatch, "ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
    }
    return m;
  }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r].assign(row(r).begin(), row(r).end());
    return out;
  }
};

/// Hook for an externally computed 2-D embedding (e.g. UMAP run elsewhere).
using ExternalProjector = std::function<Matrix(const Matrix&)>;

/// Principal-component projection onto the top two directions of the
/// centered data. Each direction's largest-magnitude loading is positive.
inline Matrix principal_components_2d(const Matrix& data) {
  if (data.rows < 1 || data.cols < 2) throw Error(ErrorCode::DimensionMismatch, "projection needs N >= 1, D >= 2");
  for (double v : data.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DimensionMismatch, "non-finite entry");
  }
  const auto n = static_cast<Eigen::Index>(data.rows), d = static_cast<Eigen::Index>(data.cols);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c) x(r, c) = data(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov = x.transpose() * x;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last two columns.
  Eigen::MatrixXd basis(d, 2);
  basis.col(0) = eig.eigenvectors().col(d - 1);
  basis.col(1) = eig.eigenvectors().col(d - 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < d; ++k) {
      if (std::abs(basis(k, c)) > std::abs(basis(arg, c))) arg = k;
    }
    if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
  }
  const Eigen::MatrixXd proj = x * basis;
  Matrix out(data.rows, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    out(static_cast<std::size_t>(r), 0) = proj(r, 0);
    out(static_cast<std::size_t>(r), 1) = proj(r, 1);
  }
  return out;
}

inline Matrix project_2d(const Matrix& data, Projection method, const ExternalProjector& external = {}) {
  if (method == Projection::PrincipalComponents) return principal_components_2d(data);
  if (!external) throw Error(ErrorCode::InvalidConfig, "External2D projection requested without a projector");
  Matrix out = external(data);
  if (out.rows != data.rows || out.cols != 2) {
    throw Error(ErrorCode::DimensionMismatch, "external projection must return N x 2");
  }
  return out;
}

// ---------------------------------------------------------------- audio

inline constexpr int kAudioWindows = 21;
inline constexpr double kAudioClipSeconds = 3.0;

struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

inline std::size_t audio_window_length(double sample_rate) {
  return static_cast<std::size_t>(std::lround(sample_rate));
}

/// Tile or trim to exactly three seconds, then cut 21 one-second windows with
/// a 100 ms hop.
inline std::vector<std::vector<double>> audio_windows(const AudioClip& clip) {
  if (clip.samples.empty()) throw Error(ErrorCode::EmptyClip, "audio clip has no samples");
  if (!(clip.sample_rate > 0.0) || !std::isfinite(clip.sample_rate)) {
    throw Error(ErrorCode::MalformedSignal, "sample rate must be positive");
  }
  for (double v : clip.samples) {
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedSignal, "non-finite audio sample");
  }
  const auto total = static_cast<std::size_t>(std::lround(kAudioClipSeconds * clip.sample_rate));
  const std::size_t win = audio_window_length(clip.sample_rate);
  const auto hop = static_cast<std::size_t>(std::lround(0.1 * clip.sample_rate));
  if (win == 0) throw Error(ErrorCode::MalformedSignal, "sample rate too low for 1 s windows");

  std::vector<double> tiled(total);
  for (std::size_t i = 0; i < total; ++i) tiled[i] = clip.samples[i % clip.samples.size()];

  std::vector<std::vector<double>> windows;
  windows.reserve(kAudioWindows);
  for (int k = 0; k < kAudioWindows; ++k) {
    const std::size_t start = std::min(static_cast<std::size_t>(k) * hop, total - win);
    windows.emplace_back(tiled.begin() + static_cast<std::ptrdiff_t>(start),
                         tiled.begin() + static_cast<std::ptrdiff_t>(start + win));
  }
  return windows;
}

/// Maps a one-second window to a fixed-length vector. Implementations report
/// failures by throwing EmbedderFailure.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(std::span<const double> window, double sample_rate) const = 0;
};

/// Deterministic stand-in for a pretrained audio network: log power at
/// `bands` frequencies evenly spaced below Nyquist, via the Goertzel recurrence.
class BandEnergyEmbedder final : public Embedder {
 public:
  explicit BandEnergyEmbedder(std::size_t bands = 32) : bands_(bands) {}

  std::size_t dimension() const override { return bands_; }

  std::vector<double> embed(std::span<const double> window, double sample_rate) const override {
    if (window.empty()) throw Error(ErrorCode::EmbedderFailure, "empty window");
    std::vector<double> out(bands_);
    const double nyquist = 0.5 * sample_rate;
    const auto n = static_cast<double>(window.size());
    for (std::size_t b = 0; b < bands_; ++b) {
      const double freq = nyquist * (static_cast<double>(b) + 0.5) / static_cast<double>(bands_);
      const double coeff = 2.0 * std::cos(2.0 * std::numbers::pi * freq / sample_rate);
      double s1 = 0.0, s2 = 0.0;
      for (double v : window) {
        const double s0 = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
      }
      const double power = std::max(0.0, s1 * s1 + s2 * s2 - coeff * s1 * s2) / (n * n);
      out[b] = std::log(1e-12 + power);
    }
    return out;
  }

 private:
  std::size_t bands_;
};

/// The 21 window embeddings of one clip, flattened row-major (21 x E).
inline std::vector<double> embed_clip(const AudioClip& clip, const Embedder& embedder) {
  const auto windows = audio_windows(clip);
  std::vector<double> flat;
  flat.reserve(windows.size() * embedder.dimension());
  for (const auto& w : windows) {
    std::vector<double> e = embedder.embed(w, clip.sample_rate);
    if (e.size() != embedder.dimension()) throw Error(ErrorCode::EmbedderFailure, "embedding has wrong length");
    for (double v : e) {
      if (!std::isfinite(v)) throw Error(ErrorCode::EmbedderFailure, "non-finite embedding");
    }
    flat.insert(flat.end(), e.begin(), e.end());
  }
  return flat;
}

/// Stacks N flattened trajectories into an (N*21) x E matrix, projects it, and
/// averages each clip's 21 projected rows.
inline Matrix project_trajectories(std::span<const std::vector<double>> trajectories, Projection method,
                                   const ExternalProjector& external = {}) {
  if (trajectories.empty()) return Matrix(0, 2);
  const std::size_t flat = trajectories.front().size();
  if (flat == 0 || flat % kAudioWindows != 0) throw Error(ErrorCode::DimensionMismatch, "bad trajectory length");
  const std::size_t dim = flat / kAudioWindows;
  Matrix stacked(trajectories.size() * kAudioWindows, dim);
  for (std::size_t c = 0; c < trajectories.size(); ++c) {
    if (trajectories[c].size() != flat) throw Error(ErrorCode::DimensionMismatch, "trajectory lengths differ");
    std::copy(trajectories[c].begin(), trajectories[c].end(),
              stacked.data.begin() + static_cast<std::ptrdiff_t>(c * flat));
  }
  const Matrix proj = project_2d(stacked, method, external);
  Matrix out(trajectories.size(), 2);
  for (std::size_t c = 0; c < trajectories.size(); ++c) {
    for (int k = 0; k < kAudioWindows; ++k) {
      out(c, 0) += proj(c * kAudioWindows + k, 0);
      out(c, 1) += proj(c * kAudioWindows + k, 1);
    }
    out(c, 0) /= kAudioWindows;
    out(c, 1) /= kAudioWindows;
  }
  return out;
}

inline Matrix embed_and_project(std::span<const AudioClip> clips, const Embedder& embedder,
                                Projection method = Projection::PrincipalComponents,
                                const ExternalProjector& external = {}) {
  std::vector<std::vector<double>> trajectories;
  trajectories.reserve(clips.size());
  for (const auto& clip : clips) trajectories.push_back(embed_clip(clip, embedder));
  return project_trajectories(trajectories, method, external);
}

}  // namespace selfcal
