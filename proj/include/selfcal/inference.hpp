#pragma once

// The self-calibrating engine: label the history under every candidate
// digit, keep the hypotheses whose labeling stays consistent, decide, and
// propagate the winning labels as shared ground truth.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "selfcal/consistency.hpp"
#include "selfcal/elim.hpp"
#include "selfcal/rng.hpp"
#include "selfcal/signals.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

inline HypothesisDataset hypothesis_dataset(std::span<const InteractionEvent> history,
                                            std::span<const LabeledSignal> shared_prior, int intent) {
  if (intent < 0 || intent >= kNumIntents) throw Error(ErrorCode::PreconditionViolation, "intent out of range");
  HypothesisDataset out;
  out.intent = intent;
  out.items.reserve(shared_prior.size() + history.size());
  out.items.assign(shared_prior.begin(), shared_prior.end());
  for (const auto& e : history) out.items.push_back({e.action, e.coloring[intent], Provenance::Hypothetical});
  return out;
}

inline PerIntent<HypothesisDataset> hypothesis_datasets(const SessionState& s) {
  PerIntent<HypothesisDataset> out;
  for (int d = 0; d < kNumIntents; ++d) out[d] = hypothesis_dataset(s.history, s.shared_prior, d);
  return out;
}

/// The "yellow or grey" test: no button may carry both meanings.
inline bool discrete_consistent(const HypothesisDataset& dataset) {
  std::vector<std::optional<Meaning>> seen;
  for (const auto& item : dataset.items) {
    if (!item.action.is_discrete()) {
      throw Error(ErrorCode::MixedSignalKinds, "continuous action in a discrete consistency test");
    }
    const int b = item.action.button_id();
    if (b < 0) return false;
    if (static_cast<std::size_t>(b) >= seen.size()) seen.resize(static_cast<std::size_t>(b) + 1);
    auto& slot = seen[static_cast<std::size_t>(b)];
    if (slot && *slot != item.label) return false;
    slot = item.label;
  }
  return true;
}

/// Balanced random split of the valid digits; invalid digits get random
/// colors. The result always shows both colors.
inline ColoringPattern next_coloring(const PerIntent<bool>& valid, Rng& rng) {
  std::vector<int> live;
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d]) live.push_back(d);
  }
  const std::size_t k = live.size();
  if (k == 0) throw Error(ErrorCode::PreconditionViolation, "next_coloring needs a valid digit");

  std::size_t yellow = k / 2;
  if (k % 2 == 1 && coin(rng)) yellow = k / 2 + 1;
  shuffle(live, rng);

  PerIntent<Meaning> colors{};
  for (std::size_t i = 0; i < k; ++i) colors[live[i]] = i < yellow ? Meaning::Yellow : Meaning::Grey;
  for (;;) {
    for (int d = 0; d < kNumIntents; ++d) {
      if (!valid[d]) colors[d] = coin(rng) ? Meaning::Yellow : Meaning::Grey;
    }
    const bool has_yellow = std::find(colors.begin(), colors.end(), Meaning::Yellow) != colors.end();
    const bool has_grey = std::find(colors.begin(), colors.end(), Meaning::Grey) != colors.end();
    if (has_yellow && has_grey) return ColoringPattern(colors);
  }
}

inline ColoringPattern coloring_for_step(std::uint64_t seed, std::int64_t step_index, const PerIntent<bool>& valid) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(step_index)));
  return next_coloring(valid, rng);
}

/// With button signals and no shared prior, a digit that has shown the
/// opposite color of another at every step is that digit's mirror image: the
/// flipped button map explains the clicks equally well. The forced k=2 split
/// would keep them mirrored forever, so the pair is shown in one color instead.
inline ColoringPattern break_mirror(ColoringPattern coloring, const PerIntent<bool>& valid,
                                    std::span<const InteractionEvent> history) {
  std::vector<int> live;
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d]) live.push_back(d);
  }
  if (live.size() != 2 || history.empty()) return coloring;
  const int a = live[0], b = live[1];
  const bool mirrored = std::all_of(history.begin(), history.end(),
                                    [&](const InteractionEvent& e) { return e.coloring[a] != e.coloring[b]; });
  if (!mirrored) return coloring;
  PerIntent<Meaning> colors = coloring.colors();
  colors[b] = colors[a];
  if (std::all_of(colors.begin(), colors.end(), [&](Meaning m) { return m == colors[a]; })) {
    const int other = (a == 0 ? (b == 1 ? 2 : 1) : 0);
    colors[other] = flip(colors[a]);
  }
  return ColoringPattern(colors);
}

/// Consecutive-step bookkeeping for the continuous margin rule.
struct MarginTracker {
  int lead_digit = -1;
  int streak = 0;
};

struct Lead {
  int digit = -1;
  double margin = 0.0;
};

/// Best valid digit (lowest index on ties) and its lead over the runner-up.
inline Lead leading_margin(const PerIntent<double>& scores, const PerIntent<bool>& valid) {
  Lead lead;
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d] && (lead.digit < 0 || scores[d] > scores[lead.digit])) lead.digit = d;
  }
  if (lead.digit < 0) return lead;
  double runner_up = -std::numeric_limits<double>::infinity();
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d] && d != lead.digit) runner_up = std::max(runner_up, scores[d]);
  }
  lead.margin = scores[lead.digit] - runner_up;
  return lead;
}

// Scores are multiples of 1/n; the slack absorbs the rounding in their differences.
inline constexpr double kMarginSlack = 1e-12;

/// Discrete modes decide once a single digit survives. Continuous modes decide
/// when one digit has led every other valid digit by at least the configured
/// margin for the configured number of consecutive steps, with enough new points.
inline std::optional<int> decide(const PerIntent<double>& scores, const PerIntent<bool>& valid,
                                 std::size_t history_len, const EngineConfig& config, bool discrete,
                                 MarginTracker& tracker) {
  const int k = count_valid(valid);
  if (k == 0) throw Error(ErrorCode::NoValidHypothesis, "every digit has been eliminated");
  if (discrete) {
    if (k != 1) return std::nullopt;
    for (int d = 0; d < kNumIntents; ++d) {
      if (valid[d]) return d;
    }
  }
  const Lead lead = leading_margin(scores, valid);
  if (lead.margin >= config.decision_margin - kMarginSlack) {
    if (lead.digit == tracker.lead_digit) {
      ++tracker.streak;
    } else {
      tracker.lead_digit = lead.digit;
      tracker.streak = 1;
    }
  } else {
    tracker = {};
  }
  if (history_len >= static_cast<std::size_t>(config.min_points) && tracker.streak >= config.consecutive_steps) {
    return tracker.lead_digit;
  }
  return std::nullopt;
}

/// Softmax of sharpness * score over valid digits; zero elsewhere.
inline PerIntent<double> display_posterior(const PerIntent<double>& scores, const PerIntent<bool>& valid,
                                           double sharpness) {
  PerIntent<double> p{};
  double top = -std::numeric_limits<double>::infinity();
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d]) top = std::max(top, scores[d]);
  }
  double total = 0.0;
  for (int d = 0; d < kNumIntents; ++d) {
    if (valid[d]) total += p[d] = std::exp(sharpness * (scores[d] - top));
  }
  if (total > 0.0) {
    for (double& v : p) v /= total;
  }
  return p;
}

inline std::vector<Meaning> default_known_mapping(int button_count) {
  std::vector<Meaning> m(static_cast<std::size_t>(button_count));
  for (int b = 0; b < button_count; ++b) m[b] = b < (button_count + 1) / 2 ? Meaning::Yellow : Meaning::Grey;
  return m;
}

inline SessionState new_session(Mode mode, int button_count, std::uint64_t seed, const EngineConfig& config,
                                std::vector<Meaning> known_mapping = {}) {
  config.validate();
  SessionState s;
  s.mode = mode;
  s.rng_seed = seed;
  s.config = config;
  if (is_discrete(mode)) {
    if (button_count < 2) throw Error(ErrorCode::InvalidButtonCount, "at least two buttons are required");
    s.button_count = button_count;
  }
  if (mode == Mode::KnownButtons) {
    if (known_mapping.empty()) known_mapping = default_known_mapping(button_count);
    if (static_cast<int>(known_mapping.size()) != button_count) {
      throw Error(ErrorCode::InvalidConfig, "known mapping must cover every button");
    }
    const bool yellow = std::find(known_mapping.begin(), known_mapping.end(), Meaning::Yellow) != known_mapping.end();
    const bool grey = std::find(known_mapping.begin(), known_mapping.end(), Meaning::Grey) != known_mapping.end();
    if (!yellow || !grey) throw Error(ErrorCode::InvalidConfig, "known mapping needs a button of each color");
    s.known_mapping = known_mapping;
    for (int b = 0; b < button_count; ++b) {
      s.shared_prior.push_back({ActionSignal::button(b), known_mapping[b], Provenance::Propagated});
    }
  }
  s.valid = all_valid();
  s.scores.fill(1.0);
  s.posterior.fill(1.0 / kNumIntents);
  s.coloring = coloring_for_step(seed, 0, s.valid);
  return s;
}

/// Adds ground-truth labeled signals to a session before its first event.
inline SessionState inject_prior(SessionState s, std::span<const LabeledSignal> labeled) {
  if (!s.history.empty() || !s.pin_slots.empty()) {
    throw Error(ErrorCode::PreconditionViolation, "prior can only be injected into a fresh session");
  }
  for (LabeledSignal l : labeled) {
    l.provenance = Provenance::Propagated;
    s.shared_prior.push_back(std::move(l));
  }
  return s;
}

/// Features of every prior and history signal in dataset order, mapped to the
/// plane: touch points as-is, sketches and audio trajectories re-projected.
inline Matrix session_points(const SessionState& s, const ExternalProjector& external = {}) {
  std::vector<std::vector<double>> rows;
  rows.reserve(s.shared_prior.size() + s.history.size());
  for (const auto& l : s.shared_prior) rows.push_back(l.action.features());
  for (const auto& e : s.history) rows.push_back(e.action.features());
  if (rows.empty()) return Matrix(0, 2);
  switch (s.mode) {
    case Mode::TouchMap: return Matrix::from_rows(rows);
    case Mode::Sketch: return project_2d(Matrix::from_rows(rows), s.config.projection, external);
    case Mode::Audio: return project_trajectories(rows, s.config.projection, external);
    default: throw Error(ErrorCode::MixedSignalKinds, "button sessions have no continuous points");
  }
}

inline std::vector<LabeledPoint> labeled_points(const Matrix& points, const HypothesisDataset& dataset) {
  std::vector<LabeledPoint> out;
  out.reserve(points.rows);
  for (std::size_t r = 0; r < points.rows; ++r) {
    const auto& item = dataset.items[r];
    out.push_back({Point(points.row(r).begin(), points.row(r).end()), item.label,
                   item.provenance == Provenance::Propagated});
  }
  return out;
}

inline PerIntent<double> continuous_scores(const SessionState& s, const ExternalProjector& external = {}) {
  const Matrix points = session_points(s, external);
  PerIntent<double> scores{};
  for (int d = 0; d < kNumIntents; ++d) {
    const auto data = labeled_points(points, hypothesis_dataset(s.history, s.shared_prior, d));
    scores[d] = consistency_score(data, s.config);
  }
  return scores;
}

/// Winner's labels join the shared prior; the history is cleared so every
/// hypothesis dataset is identical until the next event.
inline SessionState propagate_labels(SessionState s, const Decision& decision) {
  if (s.history.empty()) throw Error(ErrorCode::PreconditionViolation, "a decision requires data");
  if (decision.digit < 0 || decision.digit >= kNumIntents || !s.valid[decision.digit]) {
    throw Error(ErrorCode::PreconditionViolation, "decided digit is not valid");
  }
  for (const auto& e : s.history) {
    s.shared_prior.push_back({e.action, e.coloring[decision.digit], Provenance::Propagated});
  }
  s.history.clear();
  return s;
}

struct StepResult {
  SessionState session;
  std::optional<Decision> decision;
};

namespace detail {

inline std::size_t expected_dimension(Mode mode) {
  switch (mode) {
    case Mode::TouchMap: return 2;
    case Mode::Sketch: return kSketchFeatureCount;
    default: return 0;
  }
}

inline void check_action(const SessionState& s, const ActionSignal& action) {
  if (is_discrete(s.mode)) {
    if (!action.is_discrete()) throw Error(ErrorCode::MixedSignalKinds, "button session received a continuous signal");
    const int b = action.button_id();
    if (b < 0 || b >= s.button_count) throw Error(ErrorCode::MalformedSignal, "button id out of range");
    return;
  }
  if (action.is_discrete()) throw Error(ErrorCode::MixedSignalKinds, "continuous session received a button press");
  const auto& f = action.features();
  if (f.empty()) throw Error(ErrorCode::MalformedSignal, "empty feature vector");
  for (double v : f) {
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedSignal, "non-finite feature");
  }
  const std::size_t expected = expected_dimension(s.mode);
  if (expected != 0 && f.size() != expected) throw Error(ErrorCode::DimensionMismatch, "unexpected feature dimension");
  if (s.mode == Mode::Audio && f.size() % kAudioWindows != 0) {
    throw Error(ErrorCode::DimensionMismatch, "audio trajectory must hold 21 windows");
  }
  const ActionSignal* existing = !s.shared_prior.empty() ? &s.shared_prior.front().action
                                 : !s.history.empty()    ? &s.history.front().action
                                                         : nullptr;
  if (existing && existing->features().size() != f.size()) {
    throw Error(ErrorCode::DimensionMismatch, "signal dimension differs from earlier signals");
  }
}

}  // namespace detail

/// One interaction: record the action under the displayed coloring, re-score
/// all ten hypotheses, maybe decide, and draw the next coloring. The input
/// session is left untouched; errors leave no partial state behind.
inline StepResult step(const SessionState& session, const ActionSignal& action,
                       const ExternalProjector& external = {}) {
  if (session.complete()) throw Error(ErrorCode::SessionComplete, "all PIN digits are identified");
  detail::check_action(session, action);

  StepResult out{session, std::nullopt};
  SessionState& s = out.session;
  s.history.push_back({action, s.coloring, s.next_step});
  const std::int64_t step_index = s.next_step++;
  const bool discrete = is_discrete(s.mode);

  if (s.mode == Mode::KnownButtons) {
    s.valid = elim_step(s.valid, s.history.back().coloring, s.known_mapping[action.button_id()]);
    for (int d = 0; d < kNumIntents; ++d) s.scores[d] = s.valid[d] ? 1.0 : 0.0;
  } else if (s.mode == Mode::SelfCalButtons) {
    for (int d = 0; d < kNumIntents; ++d) {
      s.valid[d] = discrete_consistent(hypothesis_dataset(s.history, s.shared_prior, d));
      s.scores[d] = s.valid[d] ? 1.0 : 0.0;
    }
  } else {
    s.valid = all_valid();
    s.scores = continuous_scores(s, external);
  }

  MarginTracker tracker{s.lead_digit, s.lead_streak};
  const std::optional<int> digit = decide(s.scores, s.valid, s.history.size(), s.config, discrete, tracker);
  s.lead_digit = tracker.lead_digit;
  s.lead_streak = tracker.streak;
  s.posterior = display_posterior(s.scores, s.valid, s.config.posterior_sharpness);

  if (digit) {
    const Decision decision{*digit, step_index, s.scores};
    s = propagate_labels(std::move(s), decision);
    s.pin_slots.push_back(decision.digit);
    s.decisions.push_back(decision);
    s.valid = all_valid();
    s.lead_digit = -1;
    s.lead_streak = 0;
    // All hypotheses now share one dataset, hence one score.
    double common = 1.0;
    if (!discrete) {
      const Matrix points = session_points(s, external);
      common = consistency_score(labeled_points(points, hypothesis_dataset(s.history, s.shared_prior, 0)), s.config);
    }
    s.scores.fill(common);
    s.posterior.fill(1.0 / kNumIntents);
    out.decision = decision;
  }

  s.coloring = coloring_for_step(s.rng_seed, s.next_step, s.valid);
  if (s.mode == Mode::SelfCalButtons && s.shared_prior.empty()) s.coloring = break_mirror(s.coloring, s.valid, s.history);
  return out;
}

}  // namespace selfcal
