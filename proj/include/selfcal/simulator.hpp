#pragma once

// Simulated users and a closed-loop scenario runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "selfcal/inference.hpp"
#include "selfcal/rng.hpp"
#include "selfcal/signals.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

using Pin = std::array<int, kPinLength>;

struct ButtonUser {
  std::vector<Meaning> mapping;  // button -> meaning
};

struct Gaussian2 {
  Vec2 mean;
  Vec2 sd;
};

/// Color field f(p) = nx*x + ny*y + offset; negative means Yellow. (nx, ny)
/// is a unit normal so |f| is the distance to the boundary.
struct LinearBoundary {
  double nx = 1.0;
  double ny = 0.0;
  double offset = 0.0;

  double field(Vec2 p) const { return nx * p.x + ny * p.y + offset; }
  Meaning color(Vec2 p) const { return field(p) < 0.0 ? Meaning::Yellow : Meaning::Grey; }
};

struct MapUser {
  LinearBoundary boundary;
  std::vector<Gaussian2> components;  // empty: uniform over [-1,1]^2
  double margin = 0.05;
  bool noisy = false;  // allow points on either side of the boundary margin
};

/// One button per (digit0, digit1) color combination.
struct AdversarialButtonUser {
  std::array<int, 4> buttons{0, 1, 3, 4};
};

/// One screen area per (digit0, digit1) color combination: digit 0 Yellow ->
/// top, digit 1 Yellow -> left. Taps land within `spread` of the quadrant center.
struct AdversarialMapUser {
  double spread = 0.1;
};

/// Yellow strokes are loops, grey strokes are zigzags; position, size and
/// sampling vary per drawing.
struct SketchUser {
  double jitter = 0.02;
};

/// Yellow is a low tone, grey a high one.
struct ToneUser {
  double sample_rate = 8000.0;
  double yellow_hz = 300.0;
  double grey_hz = 2200.0;
};

class SimulatedUser {
 public:
  using Kind = std::variant<ButtonUser, MapUser, AdversarialButtonUser, AdversarialMapUser, SketchUser, ToneUser>;

  SimulatedUser(Kind kind, Pin pin, std::uint64_t seed) : kind_(std::move(kind)), pin_(pin), seed_(seed), rng_(seed) {
    if (const auto* b = std::get_if<ButtonUser>(&kind_)) {
      const bool y = std::find(b->mapping.begin(), b->mapping.end(), Meaning::Yellow) != b->mapping.end();
      const bool g = std::find(b->mapping.begin(), b->mapping.end(), Meaning::Grey) != b->mapping.end();
      if (!y || !g) throw Error(ErrorCode::InvalidConfig, "a button user needs a button of each color");
    }
  }

  const Kind& kind() const { return kind_; }
  const Pin& pin() const { return pin_; }
  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }

  bool adversarial() const {
    return std::holds_alternative<AdversarialButtonUser>(kind_) || std::holds_alternative<AdversarialMapUser>(kind_);
  }

 private:
  Kind kind_;
  Pin pin_;
  std::uint64_t seed_;
  Rng rng_;
};

inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Vec2 sample_map_point(const MapUser& user, Meaning wanted, Rng& rng) {
  for (;;) {
    Vec2 p;
    if (user.components.empty()) {
      p = {2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0};
    } else {
      const auto& g = user.components[uniform_index(rng, user.components.size())];
      p = {g.mean.x + g.sd.x * standard_normal(rng), g.mean.y + g.sd.y * standard_normal(rng)};
    }
    if (user.boundary.color(p) != wanted) continue;
    if (!user.noisy && std::abs(user.boundary.field(p)) < user.margin) continue;
    return p;
  }
}

inline Polyline draw_sketch(const SketchUser& user, Meaning meaning, Rng& rng) {
  const double cx = 4.0 * uniform01(rng) - 2.0, cy = 4.0 * uniform01(rng) - 2.0;
  const double scale = 0.5 + 2.0 * uniform01(rng);
  const int n = 20 + static_cast<int>(uniform_index(rng, 20));
  Polyline p;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    Vec2 q;
    if (meaning == Meaning::Yellow) {
      const double a = 2.0 * std::numbers::pi * t;
      q = {std::cos(a), std::sin(a)};
    } else {
      // Z shape: top edge, diagonal, bottom edge.
      if (t < 1.0 / 3.0) q = {-1.0 + 6.0 * t, 1.0};
      else if (t < 2.0 / 3.0) q = {1.0 - 6.0 * (t - 1.0 / 3.0), 1.0 - 6.0 * (t - 1.0 / 3.0)};
      else q = {-1.0 + 6.0 * (t - 2.0 / 3.0), -1.0};
    }
    q.x += user.jitter * standard_normal(rng);
    q.y += user.jitter * standard_normal(rng);
    p.points.push_back({cx + scale * q.x, cy + scale * q.y});
  }
  return p;
}

inline AudioClip record_tone(const ToneUser& user, Meaning meaning, Rng& rng) {
  const double seconds = 0.5 + 2.5 * uniform01(rng);
  const double hz = (meaning == Meaning::Yellow ? user.yellow_hz : user.grey_hz) * (0.95 + 0.1 * uniform01(rng));
  AudioClip clip;
  clip.sample_rate = user.sample_rate;
  const auto n = static_cast<std::size_t>(seconds * user.sample_rate);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / user.sample_rate;
    clip.samples[i] = std::sin(2.0 * std::numbers::pi * hz * t) + 0.05 * standard_normal(rng);
  }
  return clip;
}

namespace detail {

inline std::size_t combination_index(const ColoringPattern& c) {
  return (c[0] == Meaning::Grey ? 2u : 0u) + (c[1] == Meaning::Grey ? 1u : 0u);
}

}  // namespace detail

/// The user's next action given the displayed coloring and the digit they are
/// entering. Audio users need an embedder to turn their recording into a signal.
inline ActionSignal user_action(SimulatedUser& user, const ColoringPattern& coloring, int target_digit,
                                const Embedder* embedder = nullptr) {
  const Meaning wanted = coloring[target_digit];
  Rng& rng = user.rng();
  return std::visit(
      [&](const auto& kind) -> ActionSignal {
        using K = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<K, ButtonUser>) {
          std::vector<int> candidates;
          for (std::size_t b = 0; b < kind.mapping.size(); ++b) {
            if (kind.mapping[b] == wanted) candidates.push_back(static_cast<int>(b));
          }
          return ActionSignal::button(candidates[uniform_index(rng, candidates.size())]);
        } else if constexpr (std::is_same_v<K, MapUser>) {
          const Vec2 p = sample_map_point(kind, wanted, rng);
          return ActionSignal::continuous({p.x, p.y});
        } else if constexpr (std::is_same_v<K, AdversarialButtonUser>) {
          return ActionSignal::button(kind.buttons[detail::combination_index(coloring)]);
        } else if constexpr (std::is_same_v<K, AdversarialMapUser>) {
          const bool top = coloring[0] == Meaning::Yellow, left = coloring[1] == Meaning::Yellow;
          const double x = 0.5 + kind.spread * (2.0 * uniform01(rng) - 1.0);
          const double y = 0.5 + kind.spread * (2.0 * uniform01(rng) - 1.0);
          return ActionSignal::continuous({left ? -x : x, top ? y : -y});
        } else if constexpr (std::is_same_v<K, SketchUser>) {
          return ActionSignal::continuous(sketch_features(normalize_sketch(draw_sketch(kind, wanted, rng))).to_vector());
        } else {
          if (!embedder) throw Error(ErrorCode::EmbedderFailure, "audio user needs an embedder");
          return ActionSignal::continuous(embed_clip(record_tone(kind, wanted, rng), *embedder));
        }
      },
      user.kind());
}

enum class CaseKind { Structured, Unstructured, Deceptive };

inline Pin random_pin(Rng& rng) {
  Pin pin{};
  for (int& d : pin) d = static_cast<int>(uniform_index(rng, kNumIntents));
  return pin;
}

/// Point distributions for the clustering comparison. Structured: two blobs
/// on either side of the color boundary. Unstructured: one central blob with a
/// diagonal boundary. Deceptive: left/right blobs with a top/bottom boundary.
inline SimulatedUser generate_case(CaseKind kind, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xca5e));
  const Pin pin = random_pin(rng);
  MapUser user;
  switch (kind) {
    case CaseKind::Structured:
      user.boundary = {1.0, 0.0, 0.0};
      user.components = {{{-0.5, 0.0}, {0.15, 0.15}}, {{0.5, 0.0}, {0.15, 0.15}}};
      break;
    case CaseKind::Unstructured:
      user.boundary = {std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0, 0.0};
      user.components = {{{0.0, 0.0}, {0.4, 0.4}}};
      break;
    case CaseKind::Deceptive:
      user.boundary = {0.0, -1.0, 0.0};
      user.components = {{{-0.55, 0.0}, {0.15, 0.35}}, {{0.55, 0.0}, {0.15, 0.35}}};
      break;
  }
  return SimulatedUser(user, pin, seed);
}

/// Uniform points on [-1,1]^2, left half Yellow.
inline SimulatedUser half_plane_user(Pin pin, std::uint64_t seed, double margin = 0.05) {
  MapUser user;
  user.margin = margin;
  return SimulatedUser(user, pin, seed);
}

struct DigitOutcome {
  int target = 0;
  int clicks = 0;
  std::optional<int> decided;
  bool correct = false;
  bool budget_exhausted = false;
};

struct ScenarioReport {
  std::vector<DigitOutcome> digits;
  std::vector<InteractionEvent> events;
  std::vector<Decision> decisions;
  PerIntent<bool> final_valid{};
  PerIntent<double> final_scores{};
  std::string color_map;
  double wall_seconds = 0.0;

  bool all_correct() const {
    return digits.size() == kPinLength &&
           std::all_of(digits.begin(), digits.end(), [](const DigitOutcome& d) { return d.correct; });
  }
};

/// Human-readable summary of the learned action -> meaning map.
inline std::string describe_color_map(const SessionState& s) {
  std::ostringstream out;
  if (is_discrete(s.mode)) {
    std::vector<std::optional<Meaning>> button(static_cast<std::size_t>(s.button_count));
    for (const auto& l : s.shared_prior) button[static_cast<std::size_t>(l.action.button_id())] = l.label;
    for (int b = 0; b < s.button_count; ++b) {
      out << (b ? " " : "") << b << ':' << (button[b] ? to_string(*button[b]) : std::string_view("unknown"));
    }
  } else {
    int yellow = 0;
    for (const auto& l : s.shared_prior) yellow += l.label == Meaning::Yellow ? 1 : 0;
    out << s.shared_prior.size() << " labeled signals (" << yellow << " yellow, "
        << s.shared_prior.size() - static_cast<std::size_t>(yellow) << " grey)";
  }
  return out.str();
}

struct ScenarioSetup {
  Mode mode = Mode::TouchMap;
  int button_count = 0;
  std::vector<Meaning> known_mapping;
  std::uint64_t engine_seed = 0;
  EngineConfig config;
  int max_steps_per_digit = 100;
  const Embedder* embedder = nullptr;
};

/// Closed loop: the user acts on each displayed coloring until the engine
/// decides the current digit or the per-digit budget runs out (which ends the run).
inline ScenarioReport run_scenario(SimulatedUser& user, const ScenarioSetup& setup) {
  if (setup.max_steps_per_digit < 1) throw Error(ErrorCode::InvalidConfig, "max_steps must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  SessionState s = new_session(setup.mode, setup.button_count, setup.engine_seed, setup.config, setup.known_mapping);
  ScenarioReport report;
  for (int slot = 0; slot < kPinLength; ++slot) {
    DigitOutcome outcome;
    outcome.target = user.pin()[slot];
    while (!outcome.decided && outcome.clicks < setup.max_steps_per_digit) {
      const ActionSignal action = user_action(user, s.coloring, outcome.target, setup.embedder);
      report.events.push_back({action, s.coloring, s.next_step});
      StepResult r = step(s, action);
      ++outcome.clicks;
      if (r.decision) {
        outcome.decided = r.decision->digit;
        outcome.correct = r.decision->digit == outcome.target;
        report.decisions.push_back(*r.decision);
      }
      s = std::move(r.session);
    }
    outcome.budget_exhausted = !outcome.decided;
    report.digits.push_back(outcome);
    if (!outcome.decided) break;
  }
  report.final_valid = s.valid;
  report.final_scores = s.scores;
  report.color_map = describe_color_map(s);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Button -> color maps a user may pick: every assignment with both colors.
inline std::vector<std::vector<Meaning>> admissible_button_colorings(int buttons) {
  std::vector<std::vector<Meaning>> out;
  if (buttons < 1 || buttons > 20) return out;
  for (std::uint32_t mask = 0; mask < (1u << buttons); ++mask) {
    std::vector<Meaning> m(static_cast<std::size_t>(buttons));
    for (int b = 0; b < buttons; ++b) m[b] = (mask >> b) & 1u ? Meaning::Grey : Meaning::Yellow;
    try {
      SimulatedUser probe(ButtonUser{m}, Pin{}, 0);
      out.push_back(std::move(m));
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace selfcal
