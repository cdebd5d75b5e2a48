#pragma once

// Session-scoped API over the engine. Transport-free: each handler takes a
// parsed JSON body and returns (status, JSON); tools/selfcal_server.cpp binds
// the handlers to HTTP routes. Every session keeps an append-only log that
// replays to the same state.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfcal/inference.hpp"
#include "selfcal/serialization.hpp"
#include "selfcal/signals.hpp"
#include "selfcal/svm.hpp"

namespace selfcal {

struct ServiceResponse {
  int status = 200;
  json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidButtonCount: return 400;
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::SessionComplete:
    case ErrorCode::NoValidHypothesis: return 409;
    case ErrorCode::EmbedderFailure: return 502;
    case ErrorCode::PreconditionViolation: return 500;
    default: return 422;
  }
}

inline ServiceResponse error_response(const Error& e) {
  return {http_status(e.code()), json{{"error", to_string(e.code())}, {"message", e.what()}}};
}

/// Wire mode names: "known2" and "buttons9" are shorthands for the two button
/// layouts; "known"/"buttons" take an explicit button_count.
struct WireMode {
  Mode mode;
  int button_count;
};

inline WireMode parse_wire_mode(const std::string& name, const json& request) {
  auto count = [&](int fallback) {
    if (!request.contains("button_count")) return fallback;
    return static_cast<int>(detail::integer(request.at("button_count"), "button_count"));
  };
  if (name == "known2") return {Mode::KnownButtons, 2};
  if (name == "buttons9") return {Mode::SelfCalButtons, 9};
  if (name == "known") return {Mode::KnownButtons, count(2)};
  if (name == "buttons") return {Mode::SelfCalButtons, count(9)};
  if (name == "touch") return {Mode::TouchMap, 0};
  if (name == "sketch") return {Mode::Sketch, 0};
  if (name == "audio") return {Mode::Audio, 0};
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + name + "'");
}

/// Converts an action body to an engine signal for the session's mode.
inline ActionSignal parse_action(const json& body, Mode mode, const Embedder& embedder) {
  constexpr auto code = ErrorCode::MalformedSignal;
  const json& type = detail::require(body, "type", code);
  if (!type.is_string()) throw Error(code, "type must be a string");
  const std::string t = type.get<std::string>();
  const std::string_view expected = is_discrete(mode)          ? "button"
                                    : mode == Mode::TouchMap   ? "point"
                                    : mode == Mode::Sketch     ? "sketch"
                                                               : "audio";
  if (t != expected) {
    throw Error(code, "a " + std::string(to_string(mode)) + " session expects '" + std::string(expected) + "' actions");
  }
  if (t == "button") {
    return ActionSignal::button(static_cast<int>(detail::integer(detail::require(body, "button", code), "button", code)));
  }
  if (t == "point") {
    return ActionSignal::continuous({detail::finite_number(detail::require(body, "x", code), "x", code),
                                     detail::finite_number(detail::require(body, "y", code), "y", code)});
  }
  if (t == "sketch") {
    const json& pts = detail::require(body, "points", code);
    if (!pts.is_array()) throw Error(code, "points must be an array");
    Polyline line;
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2) throw Error(code, "each point must be [x, y]");
      line.points.push_back({detail::finite_number(p[0], "x", code), detail::finite_number(p[1], "y", code)});
    }
    if (line.points.size() < 2) throw Error(code, "a sketch needs at least two points");
    return ActionSignal::continuous(sketch_features(normalize_sketch(line)).to_vector());
  }
  const json& samples = detail::require(body, "samples", code);
  if (!samples.is_array()) throw Error(code, "samples must be an array");
  AudioClip clip;
  clip.sample_rate = detail::finite_number(detail::require(body, "sample_rate", code), "sample_rate", code);
  clip.samples.reserve(samples.size());
  for (const auto& v : samples) clip.samples.push_back(detail::finite_number(v, "sample", code));
  if (clip.samples.empty()) throw Error(code, "empty audio clip");
  if (!(clip.sample_rate > 0.0)) throw Error(code, "sample_rate must be positive");
  return ActionSignal::continuous(embed_clip(clip, embedder));
}

inline json wire_session(const std::string& id, const std::string& wire_mode, const SessionState& s) {
  return json{{"session_id", id},
              {"mode", wire_mode},
              {"coloring", s.coloring},
              {"posterior", s.posterior},
              {"valid", s.valid},
              {"pin_slots", s.pin_slots},
              {"step_index", s.next_step},
              {"complete", s.complete()}};
}

inline json header_record(const std::string& id, const std::string& wire_mode, const SessionState& s) {
  return json{{"type", "header"},
              {"session_id", id},
              {"mode", wire_mode},
              {"engine_mode", to_string(s.mode)},
              {"button_count", s.button_count},
              {"known_mapping", s.known_mapping},
              {"seed", s.rng_seed},
              {"config", s.config}};
}

inline json event_record(const InteractionEvent& e, const SessionState& after) {
  return json{{"type", "event"},     {"step_index", e.step_index}, {"action", e.action},
              {"coloring", e.coloring}, {"scores", after.scores}, {"posterior", after.posterior},
              {"valid", after.valid}};
}

inline json decision_record(const Decision& d) {
  return json{{"type", "decision"}, {"digit", d.digit}, {"step_decided", d.step_decided}, {"scores", d.scores_at_decision}};
}

/// Rebuilds a session from its log by re-running every recorded action. Throws
/// PreconditionViolation if the log disagrees with what the engine computes.
inline SessionState replay_log(const std::vector<json>& records, const ExternalProjector& external = {}) {
  if (records.empty() || records.front().value("type", "") != "header") {
    throw Error(ErrorCode::PreconditionViolation, "log must start with a header");
  }
  const json& h = records.front();
  const auto mode = mode_from_string(h.at("engine_mode").get<std::string>());
  if (!mode) throw Error(ErrorCode::PreconditionViolation, "log names an unknown mode");
  SessionState s = new_session(*mode, h.at("button_count").get<int>(), h.at("seed").get<std::uint64_t>(),
                               h.at("config").get<EngineConfig>(), h.at("known_mapping").get<std::vector<Meaning>>());
  std::optional<Decision> pending;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const json& r = records[i];
    const std::string type = r.value("type", "");
    if (type == "event") {
      if (pending) throw Error(ErrorCode::PreconditionViolation, "decision record missing from log");
      if (r.at("coloring").get<ColoringPattern>() != s.coloring) {
        throw Error(ErrorCode::PreconditionViolation, "logged coloring differs from replayed coloring");
      }
      StepResult res = step(s, r.at("action").get<ActionSignal>(), external);
      pending = res.decision;
      s = std::move(res.session);
      if (r.at("scores").get<PerIntent<double>>() != s.scores) {
        throw Error(ErrorCode::PreconditionViolation, "logged scores differ from replayed scores");
      }
    } else if (type == "decision") {
      if (!pending || r.get<Decision>() != *pending) {
        throw Error(ErrorCode::PreconditionViolation, "logged decision differs from replayed decision");
      }
      pending.reset();
    } else {
      throw Error(ErrorCode::PreconditionViolation, "unknown log record type '" + type + "'");
    }
  }
  if (pending) throw Error(ErrorCode::PreconditionViolation, "decision record missing from log");
  return s;
}

struct DashboardOptions {
  int grid_size = 40;
};

/// Per-digit explanation panels: validity, score, the hypothesis labeling and,
/// for continuous modes, the predicted color map over the display square.
inline json dashboard(const SessionState& s, const DashboardOptions& options = {},
                      const ExternalProjector& external = {}) {
  json panels = json::array();
  const bool discrete = is_discrete(s.mode);
  Matrix points = discrete ? Matrix(0, 2) : session_points(s, external);

  // Display square: bounding box of the points padded by 10%, or [0,1]^2.
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  if (points.rows > 0) {
    x_min = x_max = points(0, 0);
    y_min = y_max = points(0, 1);
    for (std::size_t r = 0; r < points.rows; ++r) {
      x_min = std::min(x_min, points(r, 0));
      x_max = std::max(x_max, points(r, 0));
      y_min = std::min(y_min, points(r, 1));
      y_max = std::max(y_max, points(r, 1));
    }
    const double pad_x = std::max(0.1 * (x_max - x_min), 1e-3), pad_y = std::max(0.1 * (y_max - y_min), 1e-3);
    x_min -= pad_x;
    x_max += pad_x;
    y_min -= pad_y;
    y_max += pad_y;
  }

  for (int d = 0; d < kNumIntents; ++d) {
    const HypothesisDataset data = hypothesis_dataset(s.history, s.shared_prior, d);
    json panel{{"digit", d}, {"valid", s.valid[d]}, {"score", s.scores[d]}};
    json items = json::array();
    if (discrete) {
      for (const auto& item : data.items) {
        items.push_back(json{{"button", item.action.button_id()},
                             {"color", item.label},
                             {"propagated", item.provenance == Provenance::Propagated}});
      }
      panel["points"] = std::move(items);
      panels.push_back(std::move(panel));
      continue;
    }
    const auto labeled = labeled_points(points, data);
    for (const auto& p : labeled) {
      items.push_back(json{{"x", p.x[0]}, {"y", p.x[1]}, {"color", p.label}, {"propagated", p.anchored}});
    }
    panel["points"] = std::move(items);

    json grid = nullptr;
    if (!labeled.empty()) {
      const int g = options.grid_size;
      std::optional<DecisionFunction> fn;
      const bool single = std::all_of(labeled.begin(), labeled.end(),
                                      [&](const LabeledPoint& p) { return p.label == labeled.front().label; });
      if (!single) {
        std::vector<Point> xs;
        for (const auto& p : labeled) xs.push_back(p.x);
        fn = train_rbf_svm(labeled, s.config.svm_C, s.config.rbf_gamma.value_or(median_heuristic_gamma(xs)));
      }
      json rows = json::array();
      for (int r = 0; r < g; ++r) {
        json row = json::array();
        const double y = y_min + (r + 0.5) * (y_max - y_min) / g;
        for (int c = 0; c < g; ++c) {
          const double x = x_min + (c + 0.5) * (x_max - x_min) / g;
          const Point at{x, y};
          row.push_back(fn ? fn->predict(at) : labeled.front().label);
        }
        rows.push_back(std::move(row));
      }
      grid = json{{"size", g}, {"x_min", x_min}, {"x_max", x_max}, {"y_min", y_min}, {"y_max", y_max},
                  {"colors", std::move(rows)}};
    }
    panel["grid"] = std::move(grid);
    panels.push_back(std::move(panel));
  }
  return json{{"mode", to_string(s.mode)}, {"panels", std::move(panels)}};
}

struct ServiceOptions {
  std::filesystem::path data_dir;  // empty: logs kept in memory only
  DashboardOptions dashboard;
  std::shared_ptr<const Embedder> embedder = std::make_shared<BandEnergyEmbedder>();
};

class SessionService {
 public:
  explicit SessionService(ServiceOptions options = {}) : options_(std::move(options)) {
    if (!options_.data_dir.empty()) std::filesystem::create_directories(options_.data_dir);
  }

  ServiceResponse create_session(const json& request) {
    try {
      if (!request.is_object()) throw Error(ErrorCode::InvalidConfig, "request must be an object");
      const json& mode = detail::require(request, "mode");
      if (!mode.is_string()) throw Error(ErrorCode::InvalidConfig, "mode must be a string");
      const std::string wire_mode = mode.get<std::string>();
      const WireMode wm = parse_wire_mode(wire_mode, request);
      const std::uint64_t seed = request.contains("seed") ? request.at("seed").get<std::uint64_t>() : fresh_seed();
      const EngineConfig config = request.contains("config") ? request.at("config").get<EngineConfig>() : EngineConfig{};
      std::vector<Meaning> known;
      if (request.contains("known_mapping")) known = request.at("known_mapping").get<std::vector<Meaning>>();

      auto entry = std::make_shared<Entry>();
      entry->wire_mode = wire_mode;
      entry->state = new_session(wm.mode, wm.button_count, seed, config, known);
      entry->id = fresh_id();
      if (!options_.data_dir.empty()) entry->log_path = options_.data_dir / (entry->id + ".jsonl");
      append(*entry, header_record(entry->id, wire_mode, entry->state));
      json body = wire_session(entry->id, wire_mode, entry->state);
      {
        std::unique_lock lock(sessions_mutex_);
        sessions_[entry->id] = entry;
      }
      return {201, std::move(body)};
    } catch (const Error& e) {
      return error_response(e);
    } catch (const json::exception& e) {
      return error_response(Error(ErrorCode::InvalidConfig, e.what()));
    }
  }

  ServiceResponse get_session(const std::string& id) {
    return with_session(id, [&](Entry& e) -> ServiceResponse {
      return {200, wire_session(e.id, e.wire_mode, e.state)};
    });
  }

  ServiceResponse post_action(const std::string& id, const json& body) {
    return with_session(id, [&](Entry& e) -> ServiceResponse {
      if (e.state.complete()) throw Error(ErrorCode::SessionComplete, "all PIN digits are identified");
      const ActionSignal action = parse_action(body, e.state.mode, *options_.embedder);
      StepResult r = step(e.state, action);
      const InteractionEvent event{action, e.state.coloring, e.state.next_step};
      append(e, event_record(event, r.session));
      if (r.decision) append(e, decision_record(*r.decision));
      e.state = std::move(r.session);
      json out{{"session", wire_session(e.id, e.wire_mode, e.state)}};
      if (r.decision) out["decision"] = r.decision->digit;
      return {200, std::move(out)};
    });
  }

  ServiceResponse get_dashboard(const std::string& id) {
    return with_session(id, [&](Entry& e) -> ServiceResponse {
      json out = dashboard(e.state, options_.dashboard);
      out["session_id"] = e.id;
      return {200, std::move(out)};
    });
  }

  ServiceResponse get_log(const std::string& id) {
    return with_session(id, [&](Entry& e) -> ServiceResponse { return {200, json(e.log)}; });
  }

  /// Engine state behind a session, for diffing against an independent replay.
  std::optional<SessionState> snapshot(const std::string& id) {
    auto entry = find(id);
    if (!entry) return std::nullopt;
    std::lock_guard lock(entry->mutex);
    return entry->state;
  }

  /// Re-registers every session log found in the data directory.
  std::size_t load_existing() {
    if (options_.data_dir.empty()) return 0;
    std::size_t loaded = 0;
    for (const auto& file : std::filesystem::directory_iterator(options_.data_dir)) {
      if (file.path().extension() != ".jsonl") continue;
      std::ifstream in(file.path());
      std::vector<json> records;
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) records.push_back(json::parse(line));
      }
      if (records.empty()) continue;
      auto entry = std::make_shared<Entry>();
      entry->id = records.front().at("session_id").get<std::string>();
      entry->wire_mode = records.front().at("mode").get<std::string>();
      entry->state = replay_log(records);
      entry->log = std::move(records);
      entry->log_path = file.path();
      std::unique_lock lock(sessions_mutex_);
      sessions_[entry->id] = entry;
      ++loaded;
    }
    return loaded;
  }

 private:
  struct Entry {
    std::mutex mutex;
    std::string id;
    std::string wire_mode;
    SessionState state;
    std::vector<json> log;
    std::filesystem::path log_path;
  };

  std::shared_ptr<Entry> find(const std::string& id) {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  template <typename Fn>
  ServiceResponse with_session(const std::string& id, Fn&& fn) {
    auto entry = find(id);
    if (!entry) return error_response(Error(ErrorCode::UnknownSession, "no session '" + id + "'"));
    std::lock_guard lock(entry->mutex);
    try {
      return fn(*entry);
    } catch (const Error& e) {
      return error_response(e);
    } catch (const json::exception& e) {
      return error_response(Error(ErrorCode::MalformedSignal, e.what()));
    }
  }

  void append(Entry& e, json record) {
    if (!e.log_path.empty()) {
      std::ofstream out(e.log_path, std::ios::app);
      out << record.dump() << '\n';
    }
    e.log.push_back(std::move(record));
  }

  std::uint64_t fresh_seed() {
    std::lock_guard lock(rng_mutex_);
    return rng_();
  }

  std::string fresh_id() {
    std::ostringstream out;
    out << std::hex;
    std::lock_guard lock(rng_mutex_);
    out << rng_() << rng_();
    return out.str();
  }

  ServiceOptions options_;
  std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
};

}  // namespace selfcal
