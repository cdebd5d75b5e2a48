#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "selfcal/error.hpp"

namespace selfcal {

inline constexpr int kNumIntents = 10;
inline constexpr int kNumMeanings = 2;
inline constexpr int kPinLength = 4;

template <typename T>
using PerIntent = std::array<T, kNumIntents>;

enum class Meaning : std::uint8_t { Yellow = 0, Grey = 1 };

inline constexpr Meaning flip(Meaning m) {
  return m == Meaning::Yellow ? Meaning::Grey : Meaning::Yellow;
}

inline std::string_view to_string(Meaning m) {
  return m == Meaning::Yellow ? "yellow" : "grey";
}

inline std::optional<Meaning> meaning_from_string(std::string_view s) {
  if (s == "yellow") return Meaning::Yellow;
  if (s == "grey") return Meaning::Grey;
  return std::nullopt;
}

struct DiscreteAction {
  int button = 0;
  friend bool operator==(const DiscreteAction&, const DiscreteAction&) = default;
};

struct ContinuousAction {
  std::vector<double> features;
  friend bool operator==(const ContinuousAction&, const ContinuousAction&) = default;
};

/// What the user did: a button press or a real feature vector (a 2-D map
/// point, 17-D sketch features, or a flattened audio embedding trajectory).
struct ActionSignal {
  std::variant<DiscreteAction, ContinuousAction> value;

  static ActionSignal button(int id) { return {DiscreteAction{id}}; }
  static ActionSignal continuous(std::vector<double> f) { return {ContinuousAction{std::move(f)}}; }

  bool is_discrete() const { return std::holds_alternative<DiscreteAction>(value); }
  int button_id() const { return std::get<DiscreteAction>(value).button; }
  const std::vector<double>& features() const { return std::get<ContinuousAction>(value).features; }

  friend bool operator==(const ActionSignal&, const ActionSignal&) = default;
};

/// The digit -> meaning assignment shown on screen at one step.
class ColoringPattern {
 public:
  ColoringPattern() = default;

  // Throws InvalidConfig unless both meanings appear.
  explicit ColoringPattern(const PerIntent<Meaning>& colors) : colors_(colors) {
    bool yellow = false, grey = false;
    for (Meaning m : colors_) (m == Meaning::Yellow ? yellow : grey) = true;
    if (!yellow || !grey) {
      throw Error(ErrorCode::InvalidConfig, "coloring pattern must contain both colors");
    }
  }

  Meaning operator[](int digit) const { return colors_.at(static_cast<std::size_t>(digit)); }
  const PerIntent<Meaning>& colors() const { return colors_; }

  ColoringPattern flipped() const {
    PerIntent<Meaning> c{};
    for (int d = 0; d < kNumIntents; ++d) c[d] = flip(colors_[d]);
    return ColoringPattern(c);
  }

  friend bool operator==(const ColoringPattern&, const ColoringPattern&) = default;

 private:
  PerIntent<Meaning> colors_{Meaning::Yellow, Meaning::Grey, Meaning::Yellow, Meaning::Grey,
                             Meaning::Yellow, Meaning::Grey, Meaning::Yellow, Meaning::Grey,
                             Meaning::Yellow, Meaning::Grey};
};

struct InteractionEvent {
  ActionSignal action;
  ColoringPattern coloring;
  std::int64_t step_index = 0;

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

enum class Provenance : std::uint8_t { Hypothetical, Propagated };

struct LabeledSignal {
  ActionSignal action;
  Meaning label = Meaning::Yellow;
  Provenance provenance = Provenance::Hypothetical;

  friend bool operator==(const LabeledSignal&, const LabeledSignal&) = default;
};

/// The action history labeled as if `intent` were the digit being entered.
struct HypothesisDataset {
  int intent = 0;
  std::vector<LabeledSignal> items;

  // Two hypotheses "look the same" when their labeled items agree; the
  // intent tag itself is not part of the comparison.
  bool same_labeling(const HypothesisDataset& other) const { return items == other.items; }
};

enum class Mode : std::uint8_t { KnownButtons, SelfCalButtons, TouchMap, Sketch, Audio };

inline bool is_discrete(Mode m) { return m == Mode::KnownButtons || m == Mode::SelfCalButtons; }

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::KnownButtons: return "known";
    case Mode::SelfCalButtons: return "buttons";
    case Mode::TouchMap: return "touch";
    case Mode::Sketch: return "sketch";
    case Mode::Audio: return "audio";
  }
  return "unknown";
}

inline std::optional<Mode> mode_from_string(std::string_view s) {
  if (s == "known") return Mode::KnownButtons;
  if (s == "buttons") return Mode::SelfCalButtons;
  if (s == "touch") return Mode::TouchMap;
  if (s == "sketch") return Mode::Sketch;
  if (s == "audio") return Mode::Audio;
  return std::nullopt;
}

enum class Projection : std::uint8_t { PrincipalComponents, External2D };

struct EngineConfig {
  double decision_margin = 0.15;
  int consecutive_steps = 3;
  int min_points = 8;
  double svm_C = 10.0;
  std::optional<double> rbf_gamma;  // nullopt: median heuristic
  int cv_folds = 5;
  double posterior_sharpness = 10.0;
  Projection projection = Projection::PrincipalComponents;

  void validate() const {
    auto bad = [](const char* what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (!(decision_margin > 0.0 && decision_margin < 1.0)) bad("decision_margin must be in (0,1)");
    if (consecutive_steps < 1) bad("consecutive_steps must be >= 1");
    if (min_points < 1) bad("min_points must be >= 1");
    if (!(svm_C > 0.0) || !std::isfinite(svm_C)) bad("svm_C must be positive");
    if (rbf_gamma && (!(*rbf_gamma > 0.0) || !std::isfinite(*rbf_gamma))) bad("rbf_gamma must be positive");
    if (cv_folds < 2) bad("cv_folds must be >= 2");
    if (!(posterior_sharpness > 0.0) || !std::isfinite(posterior_sharpness)) {
      bad("posterior_sharpness must be positive");
    }
  }

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

struct Decision {
  int digit = 0;
  std::int64_t step_decided = 0;
  PerIntent<double> scores_at_decision{};

  friend bool operator==(const Decision&, const Decision&) = default;
};

/// Whole-session value: copying it forks the session.
struct SessionState {
  Mode mode = Mode::SelfCalButtons;
  int button_count = 0;
  std::vector<Meaning> known_mapping;  // KnownButtons only
  std::vector<int> pin_slots;
  std::vector<InteractionEvent> history;  // since the last decision
  std::vector<LabeledSignal> shared_prior;
  PerIntent<double> posterior{};
  PerIntent<double> scores{};
  PerIntent<bool> valid{};
  ColoringPattern coloring;  // currently displayed
  std::uint64_t rng_seed = 0;
  std::int64_t next_step = 0;  // step_index of the next event
  int lead_digit = -1;
  int lead_streak = 0;
  std::vector<Decision> decisions;
  EngineConfig config;

  bool complete() const { return static_cast<int>(pin_slots.size()) >= kPinLength; }

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

}  // namespace selfcal
