#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "selfcal/server_routes.hpp"
#include "selfcal/simulator.hpp"

using namespace selfcal;

namespace {

json create(SessionService& svc, json request) {
  const auto r = svc.create_session(request);
  EXPECT_EQ(r.status, 201) << r.body.dump();
  return r.body;
}

std::string id_of(const json& session) { return session.at("session_id").get<std::string>(); }

ColoringPattern coloring_of(const json& session) { return session.at("coloring").get<ColoringPattern>(); }

json button(int b) { return json{{"type", "button"}, {"button", b}}; }

json point(const ActionSignal& a) { return json{{"type", "point"}, {"x", a.features()[0]}, {"y", a.features()[1]}}; }

// Drives a known2 session until digit `target` is decided; returns the posts made.
int enter_known_digit(SessionService& svc, const std::string& id, int target, int limit = 20) {
  for (int i = 1; i <= limit; ++i) {
    const json s = svc.get_session(id).body;
    const int b = coloring_of(s)[target] == Meaning::Yellow ? 0 : 1;
    const auto r = svc.post_action(id, button(b));
    EXPECT_EQ(r.status, 200) << r.body.dump();
    if (r.body.contains("decision")) {
      EXPECT_EQ(r.body.at("decision").get<int>(), target);
      return i;
    }
  }
  return -1;
}

std::vector<json> log_of(SessionService& svc, const std::string& id) {
  return svc.get_log(id).body.get<std::vector<json>>();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("selfcal-test-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST(CreateSession, ButtonsNineStartsUniform) {
  SessionService svc;
  const json s = create(svc, {{"mode", "buttons9"}});
  for (double p : s.at("posterior").get<std::vector<double>>()) EXPECT_DOUBLE_EQ(p, 0.1);
  EXPECT_EQ(s.at("step_index").get<int>(), 0);
  EXPECT_FALSE(s.at("complete").get<bool>());
  EXPECT_TRUE(s.at("pin_slots").empty());
  EXPECT_EQ(s.at("mode"), "buttons9");
}

TEST(CreateSession, KnownTwoColoringHasBothColors) {
  SessionService svc;
  for (int i = 0; i < 10; ++i) {
    const auto c = coloring_of(create(svc, {{"mode", "known2"}}));
    int yellow = 0;
    for (Meaning m : c.colors()) yellow += m == Meaning::Yellow;
    EXPECT_GT(yellow, 0);
    EXPECT_LT(yellow, kNumIntents);
  }
}

TEST(CreateSession, SeedFixesColoring) {
  SessionService svc;
  const json a = create(svc, {{"mode", "touch"}, {"seed", 42}});
  const json b = create(svc, {{"mode", "touch"}, {"seed", 42}});
  EXPECT_EQ(a.at("coloring"), b.at("coloring"));
  EXPECT_NE(id_of(a), id_of(b));
}

TEST(CreateSession, BadRequests) {
  SessionService svc;
  EXPECT_EQ(svc.create_session({{"mode", "telepathy"}}).status, 400);
  EXPECT_EQ(svc.create_session(json::object()).status, 400);
  EXPECT_EQ(svc.create_session({{"mode", "buttons"}, {"button_count", 1}}).status, 400);
  EXPECT_EQ(svc.create_session({{"mode", "touch"}, {"config", {{"decision_margin", -1}}}}).status, 400);
  EXPECT_EQ(svc.create_session({{"mode", "touch"}, {"config", {{"no_such_key", 1}}}}).status, 400);
  const auto r = svc.create_session({{"mode", "touch"}, {"config", {{"svm_C", 0}}}});
  EXPECT_EQ(r.body.at("error"), "InvalidConfig");
}

TEST(PostAction, AdvancesStepAndRecolors) {
  SessionService svc;
  const json s = create(svc, {{"mode", "buttons9"}, {"seed", 5}});
  const auto r = svc.post_action(id_of(s), button(3));
  ASSERT_EQ(r.status, 200);
  const json& after = r.body.at("session");
  EXPECT_EQ(after.at("step_index").get<int>(), 1);
  EXPECT_NE(after.at("coloring"), s.at("coloring"));
  EXPECT_FALSE(r.body.contains("decision"));
}

TEST(PostAction, WrongSignalKindIsRejected) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "buttons9"}}));
  const auto r = svc.post_action(id, {{"type", "point"}, {"x", 0.1}, {"y", 0.2}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body.at("error"), "MalformedSignal");
  EXPECT_EQ(svc.get_session(id).body.at("step_index").get<int>(), 0);
  EXPECT_EQ(svc.post_action(id, json::object()).status, 422);
  EXPECT_EQ(svc.post_action(id, {{"type", "button"}, {"button", "two"}}).status, 422);
}

TEST(PostAction, KnownModeDecidesQuickly) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "known2"}, {"seed", 11}}));
  const int posts = enter_known_digit(svc, id, 1);
  EXPECT_GE(posts, 1);
  EXPECT_LE(posts, 5);
  EXPECT_EQ(svc.get_session(id).body.at("pin_slots"), json::array({1}));
}

TEST(PostAction, UnknownSessionAndCompletedSession) {
  SessionService svc;
  EXPECT_EQ(svc.post_action("nope", button(0)).status, 404);
  EXPECT_EQ(svc.get_session("nope").status, 404);
  EXPECT_EQ(svc.get_dashboard("nope").status, 404);
  EXPECT_EQ(svc.get_log("nope").status, 404);

  const std::string id = id_of(create(svc, {{"mode", "known2"}, {"seed", 2}}));
  for (int d : {4, 0, 9, 4}) ASSERT_GT(enter_known_digit(svc, id, d), 0);
  const json s = svc.get_session(id).body;
  EXPECT_TRUE(s.at("complete").get<bool>());
  EXPECT_EQ(s.at("pin_slots"), json::array({4, 0, 9, 4}));
  const auto r = svc.post_action(id, button(0));
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body.at("error"), "SessionComplete");
}

TEST(PostAction, MalformedContinuousSignals) {
  SessionService svc;
  const std::string sketch = id_of(create(svc, {{"mode", "sketch"}}));
  EXPECT_EQ(svc.post_action(sketch, {{"type", "sketch"}, {"points", {{0.0, 0.0}}}}).status, 422);
  EXPECT_EQ(svc.post_action(sketch, {{"type", "sketch"}, {"points", {{0.0, 0.0}, {1.0}}}}).status, 422);
  EXPECT_EQ(svc.post_action(sketch, {{"type", "sketch"}, {"points", {{0.0, 0.0}, {1.0, 1.0}}}}).status, 200);

  const std::string audio = id_of(create(svc, {{"mode", "audio"}}));
  EXPECT_EQ(svc.post_action(audio, {{"type", "audio"}, {"samples", json::array()}, {"sample_rate", 8000}}).status,
            422);
  EXPECT_EQ(svc.post_action(audio, {{"type", "audio"}, {"samples", {0.1, 0.2}}, {"sample_rate", 0}}).status, 422);

  const std::string touch = id_of(create(svc, {{"mode", "touch"}}));
  EXPECT_EQ(svc.post_action(touch, {{"type", "point"}, {"x", 0.1}}).status, 422);
}

TEST(PostAction, AudioClipIsEmbedded) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "audio"}, {"seed", 1}}));
  std::vector<double> samples(4000);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = std::sin(0.3 * static_cast<double>(i));
  const auto r = svc.post_action(id, {{"type", "audio"}, {"samples", samples}, {"sample_rate", 8000}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("session").at("step_index").get<int>(), 1);
}

TEST(Dashboard, EmptySessionHasValidPanelsWithoutPoints) {
  SessionService svc;
  for (const char* mode : {"touch", "buttons9"}) {
    const auto r = svc.get_dashboard(id_of(create(svc, {{"mode", mode}})));
    ASSERT_EQ(r.status, 200);
    const json& panels = r.body.at("panels");
    ASSERT_EQ(panels.size(), 10u);
    for (const auto& p : panels) {
      EXPECT_TRUE(p.at("valid").get<bool>());
      EXPECT_TRUE(p.at("points").empty());
      if (std::string(mode) == "touch") EXPECT_TRUE(p.at("grid").is_null());
    }
  }
}

TEST(Dashboard, InconsistentButtonPanelIsInvalid) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "buttons9"}, {"seed", 8}}));
  // Press the same button twice; any digit whose colors differ across the two
  // steps now maps one button to both colors.
  ASSERT_EQ(svc.post_action(id, button(2)).status, 200);
  ASSERT_EQ(svc.post_action(id, button(2)).status, 200);
  const auto state = *svc.snapshot(id);
  const json panels = svc.get_dashboard(id).body.at("panels");
  int checked = 0;
  for (int d = 0; d < kNumIntents; ++d) {
    const bool mixed = state.history[0].coloring[d] != state.history[1].coloring[d];
    EXPECT_EQ(panels[d].at("valid").get<bool>(), !mixed) << "digit " << d;
    checked += mixed;
    const json& pts = panels[d].at("points");
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].at("button"), 2);
    EXPECT_EQ(pts[0].at("color").get<Meaning>(), state.history[0].coloring[d]);
  }
  EXPECT_GT(checked, 0);
}

TEST(Dashboard, TouchGridAndIdenticalPanelsAfterDecision) {
  SessionService svc({.data_dir = {}, .dashboard = {.grid_size = 8}});
  const std::string id = id_of(create(svc, {{"mode", "touch"}, {"seed", 3}}));
  SimulatedUser user = half_plane_user({7, 7, 7, 7}, 3);
  bool decided = false;
  for (int i = 0; i < 60 && !decided; ++i) {
    const auto a = user_action(user, coloring_of(svc.get_session(id).body), 7);
    const auto r = svc.post_action(id, point(a));
    ASSERT_EQ(r.status, 200);
    if (i == 3) {
      const json panels = svc.get_dashboard(id).body.at("panels");
      const json& g = panels[0].at("grid");
      ASSERT_FALSE(g.is_null());
      EXPECT_EQ(g.at("size"), 8);
      EXPECT_EQ(g.at("colors").size(), 8u);
      EXPECT_EQ(g.at("colors")[0].size(), 8u);
      EXPECT_LT(g.at("x_min").get<double>(), g.at("x_max").get<double>());
    }
    decided = r.body.contains("decision");
  }
  ASSERT_TRUE(decided);
  const json panels = svc.get_dashboard(id).body.at("panels");
  for (int d = 1; d < kNumIntents; ++d) {
    EXPECT_EQ(panels[d].at("points"), panels[0].at("points"));
    EXPECT_EQ(panels[d].at("grid"), panels[0].at("grid"));
    EXPECT_EQ(panels[d].at("score"), panels[0].at("score"));
  }
  for (const auto& p : panels[0].at("points")) EXPECT_TRUE(p.at("propagated").get<bool>());
}

TEST(Log, FreshLogIsHeaderOnly) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "known2"}, {"seed", 4}}));
  const auto log = log_of(svc, id);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].at("type"), "header");
  EXPECT_EQ(log[0].at("session_id"), id);
  EXPECT_EQ(log[0].at("seed"), 4);
}

TEST(Log, ReplayMatchesServiceState) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "known2"}, {"seed", 6}}));
  for (int d : {3, 1, 4, 1}) ASSERT_GT(enter_known_digit(svc, id, d), 0);
  const auto log = log_of(svc, id);
  int decisions = 0, events = 0;
  for (const auto& r : log) {
    decisions += r.at("type") == "decision";
    events += r.at("type") == "event";
  }
  EXPECT_EQ(decisions, 4);
  EXPECT_EQ(events + decisions + 1, static_cast<int>(log.size()));
  EXPECT_EQ(replay_log(log), *svc.snapshot(id));
}

TEST(Log, EngineRunOnLoggedActionsMatchesResponses) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "touch"}, {"seed", 12}}));
  SimulatedUser user = half_plane_user({2, 2, 2, 2}, 12);
  std::vector<json> responses;
  for (int i = 0; i < 40; ++i) {
    const auto a = user_action(user, coloring_of(svc.get_session(id).body), 2);
    responses.push_back(svc.post_action(id, point(a)).body);
  }
  // Drive the engine directly from the logged actions.
  SessionState s = new_session(Mode::TouchMap, 0, 12, {});
  std::size_t k = 0;
  for (const auto& r : log_of(svc, id)) {
    if (r.at("type") != "event") continue;
    ASSERT_EQ(r.at("coloring").get<ColoringPattern>(), s.coloring);
    const StepResult res = step(s, r.at("action").get<ActionSignal>());
    s = res.session;
    const json& resp = responses.at(k++);
    EXPECT_EQ(resp.at("session").at("posterior").get<PerIntent<double>>(), s.posterior);
    EXPECT_EQ(resp.at("session").at("coloring").get<ColoringPattern>(), s.coloring);
    EXPECT_EQ(resp.contains("decision"), res.decision.has_value());
  }
  EXPECT_EQ(k, responses.size());
}

TEST(Log, TamperedLogIsRejected) {
  SessionService svc;
  const std::string id = id_of(create(svc, {{"mode", "known2"}, {"seed", 9}}));
  ASSERT_GT(enter_known_digit(svc, id, 5), 0);
  auto log = log_of(svc, id);
  log[1]["action"]["button"] = 1 - log[1]["action"]["button"].get<int>();
  try {
    replay_log(log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PreconditionViolation);
  }
  EXPECT_THROW(replay_log({}), Error);
}

TEST(Persistence, LoadExistingRestoresSessions) {
  TempDir dir;
  std::string id;
  SessionState before;
  {
    SessionService svc({.data_dir = dir.path});
    id = id_of(create(svc, {{"mode", "known2"}, {"seed", 21}}));
    ASSERT_GT(enter_known_digit(svc, id, 8), 0);
    ASSERT_EQ(svc.post_action(id, button(0)).status, 200);
    before = *svc.snapshot(id);
    EXPECT_TRUE(std::filesystem::exists(dir.path / (id + ".jsonl")));
  }
  SessionService restored({.data_dir = dir.path});
  EXPECT_EQ(restored.load_existing(), 1u);
  EXPECT_EQ(*restored.snapshot(id), before);
  EXPECT_EQ(restored.get_session(id).body.at("pin_slots"), json::array({8}));
  EXPECT_EQ(restored.post_action(id, button(1)).status, 200);
  std::ifstream file(dir.path / (id + ".jsonl"));
  std::size_t lines = 0;
  for (std::string line; std::getline(file, line);) ++lines;
  EXPECT_EQ(lines, log_of(restored, id).size());
}

TEST(Http, RoutesServeSessionLifecycle) {
  SessionService svc;
  httplib::Server server;
  register_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", R"({"mode":"known2","seed":1})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const json s = json::parse(created->body);
  const std::string id = id_of(s);
  const int b = coloring_of(s)[0] == Meaning::Yellow ? 0 : 1;

  auto acted = client.Post("/sessions/" + id + "/actions", button(b).dump(), "application/json");
  ASSERT_TRUE(acted);
  EXPECT_EQ(acted->status, 200);
  EXPECT_EQ(json::parse(acted->body).at("session").at("step_index"), 1);

  auto bad = client.Post("/sessions/" + id + "/actions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 422);
  auto missing = client.Get("/sessions/unknown");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto dash = client.Get("/sessions/" + id + "/dashboard");
  ASSERT_TRUE(dash);
  EXPECT_EQ(json::parse(dash->body).at("panels").size(), 10u);

  auto log = client.Get("/sessions/" + id + "/log");
  ASSERT_TRUE(log);
  EXPECT_EQ(log->get_header_value("Content-Type"), "application/x-ndjson");
  std::istringstream lines(log->body);
  std::vector<json> records;
  for (std::string line; std::getline(lines, line);) records.push_back(json::parse(line));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(replay_log(records), *svc.snapshot(id));

  server.stop();
  thread.join();
}
