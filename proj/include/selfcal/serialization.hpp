#pragma once

// JSON forms of the engine types. Doubles round-trip exactly, so a session
// written and read back compares equal.

#include <string>

#include "json.hpp"
#include "selfcal/types.hpp"

namespace selfcal {

using nlohmann::json;

namespace detail {

[[noreturn]] inline void bad_json(const std::string& what, ErrorCode code = ErrorCode::InvalidConfig) {
  throw Error(code, what);
}

inline const json& require(const json& j, const char* key, ErrorCode code = ErrorCode::InvalidConfig) {
  if (!j.is_object() || !j.contains(key)) bad_json(std::string("missing field '") + key + "'", code);
  return j.at(key);
}

inline double finite_number(const json& j, const char* what, ErrorCode code = ErrorCode::InvalidConfig) {
  if (!j.is_number()) bad_json(std::string(what) + " must be a number", code);
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad_json(std::string(what) + " must be finite", code);
  return v;
}

inline std::int64_t integer(const json& j, const char* what, ErrorCode code = ErrorCode::InvalidConfig) {
  if (!j.is_number_integer()) bad_json(std::string(what) + " must be an integer", code);
  return j.get<std::int64_t>();
}

}  // namespace detail

inline void to_json(json& j, Meaning m) { j = std::string(to_string(m)); }

inline void from_json(const json& j, Meaning& m) {
  const auto parsed = j.is_string() ? meaning_from_string(j.get<std::string>()) : std::nullopt;
  if (!parsed) detail::bad_json("color must be \"yellow\" or \"grey\"", ErrorCode::MalformedSignal);
  m = *parsed;
}

inline void to_json(json& j, const ActionSignal& a) {
  if (a.is_discrete()) j = json{{"button", a.button_id()}};
  else j = json{{"features", a.features()}};
}

inline void from_json(const json& j, ActionSignal& a) {
  constexpr auto code = ErrorCode::MalformedSignal;
  if (j.is_object() && j.contains("button")) {
    a = ActionSignal::button(static_cast<int>(detail::integer(j.at("button"), "button", code)));
    return;
  }
  const json& f = detail::require(j, "features", code);
  if (!f.is_array()) detail::bad_json("features must be an array", code);
  std::vector<double> v;
  v.reserve(f.size());
  for (const auto& x : f) v.push_back(detail::finite_number(x, "feature", code));
  a = ActionSignal::continuous(std::move(v));
}

inline void to_json(json& j, const ColoringPattern& c) {
  j = json::array();
  for (Meaning m : c.colors()) j.push_back(m);
}

inline void from_json(const json& j, ColoringPattern& c) {
  if (!j.is_array() || j.size() != kNumIntents) detail::bad_json("coloring must list 10 colors");
  PerIntent<Meaning> colors{};
  for (int d = 0; d < kNumIntents; ++d) colors[d] = j[static_cast<std::size_t>(d)].get<Meaning>();
  c = ColoringPattern(colors);
}

inline void to_json(json& j, const InteractionEvent& e) {
  j = json{{"action", e.action}, {"coloring", e.coloring}, {"step_index", e.step_index}};
}

inline void from_json(const json& j, InteractionEvent& e) {
  e.action = detail::require(j, "action").get<ActionSignal>();
  e.coloring = detail::require(j, "coloring").get<ColoringPattern>();
  e.step_index = detail::integer(detail::require(j, "step_index"), "step_index");
}

inline void to_json(json& j, const LabeledSignal& l) {
  j = json{{"action", l.action},
           {"label", l.label},
           {"provenance", l.provenance == Provenance::Propagated ? "propagated" : "hypothetical"}};
}

inline void from_json(const json& j, LabeledSignal& l) {
  l.action = detail::require(j, "action").get<ActionSignal>();
  l.label = detail::require(j, "label").get<Meaning>();
  const json& p = detail::require(j, "provenance");
  if (p == "propagated") l.provenance = Provenance::Propagated;
  else if (p == "hypothetical") l.provenance = Provenance::Hypothetical;
  else detail::bad_json("provenance must be \"propagated\" or \"hypothetical\"");
}

inline void to_json(json& j, const EngineConfig& c) {
  j = json{{"decision_margin", c.decision_margin},
           {"consecutive_steps", c.consecutive_steps},
           {"min_points", c.min_points},
           {"svm_C", c.svm_C},
           {"cv_folds", c.cv_folds},
           {"posterior_sharpness", c.posterior_sharpness},
           {"projection", c.projection == Projection::PrincipalComponents ? "principal_components" : "external_2d"}};
  if (c.rbf_gamma) j["rbf_gamma"] = *c.rbf_gamma;
  else j["rbf_gamma"] = "median";
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const json& j, EngineConfig& c) {
  if (!j.is_object()) detail::bad_json("config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "decision_margin") c.decision_margin = detail::finite_number(value, "decision_margin");
    else if (key == "consecutive_steps") c.consecutive_steps = static_cast<int>(detail::integer(value, "consecutive_steps"));
    else if (key == "min_points") c.min_points = static_cast<int>(detail::integer(value, "min_points"));
    else if (key == "svm_C") c.svm_C = detail::finite_number(value, "svm_C");
    else if (key == "cv_folds") c.cv_folds = static_cast<int>(detail::integer(value, "cv_folds"));
    else if (key == "posterior_sharpness") c.posterior_sharpness = detail::finite_number(value, "posterior_sharpness");
    else if (key == "rbf_gamma") {
      if (value == "median") c.rbf_gamma.reset();
      else c.rbf_gamma = detail::finite_number(value, "rbf_gamma");
    } else if (key == "projection") {
      if (value == "principal_components") c.projection = Projection::PrincipalComponents;
      else if (value == "external_2d") c.projection = Projection::External2D;
      else detail::bad_json("projection must be \"principal_components\" or \"external_2d\"");
    } else {
      detail::bad_json("unknown config field '" + key + "'");
    }
  }
  c.validate();
}

inline void to_json(json& j, const Decision& d) {
  j = json{{"digit", d.digit}, {"step_decided", d.step_decided}, {"scores", d.scores_at_decision}};
}

inline void from_json(const json& j, Decision& d) {
  d.digit = static_cast<int>(detail::integer(detail::require(j, "digit"), "digit"));
  d.step_decided = detail::integer(detail::require(j, "step_decided"), "step_decided");
  d.scores_at_decision = detail::require(j, "scores").get<PerIntent<double>>();
}

inline void to_json(json& j, const SessionState& s) {
  j = json{{"mode", to_string(s.mode)},
           {"button_count", s.button_count},
           {"known_mapping", s.known_mapping},
           {"pin_slots", s.pin_slots},
           {"history", s.history},
           {"shared_prior", s.shared_prior},
           {"posterior", s.posterior},
           {"scores", s.scores},
           {"valid", s.valid},
           {"coloring", s.coloring},
           {"rng_seed", s.rng_seed},
           {"next_step", s.next_step},
           {"lead_digit", s.lead_digit},
           {"lead_streak", s.lead_streak},
           {"decisions", s.decisions},
           {"config", s.config}};
}

inline void from_json(const json& j, SessionState& s) {
  const auto mode = mode_from_string(detail::require(j, "mode").get<std::string>());
  if (!mode) detail::bad_json("unknown mode");
  s.mode = *mode;
  s.button_count = j.at("button_count").get<int>();
  s.known_mapping = j.at("known_mapping").get<std::vector<Meaning>>();
  s.pin_slots = j.at("pin_slots").get<std::vector<int>>();
  s.history = j.at("history").get<std::vector<InteractionEvent>>();
  s.shared_prior = j.at("shared_prior").get<std::vector<LabeledSignal>>();
  s.posterior = j.at("posterior").get<PerIntent<double>>();
  s.scores = j.at("scores").get<PerIntent<double>>();
  s.valid = j.at("valid").get<PerIntent<bool>>();
  s.coloring = j.at("coloring").get<ColoringPattern>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.next_step = j.at("next_step").get<std::int64_t>();
  s.lead_digit = j.at("lead_digit").get<int>();
  s.lead_streak = j.at("lead_streak").get<int>();
  s.decisions = j.at("decisions").get<std::vector<Decision>>();
  s.config = j.at("config").get<EngineConfig>();
}

}  // namespace selfcal
