#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "selfcal/simulator.hpp"

using namespace selfcal;

namespace {

ColoringPattern pattern(std::initializer_list<int> yellow) {
  PerIntent<Meaning> c;
  c.fill(Meaning::Grey);
  for (int d : yellow) c[d] = Meaning::Yellow;
  return ColoringPattern(c);
}

double median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(UserAction, ButtonUserPicksButtonOfWantedColor) {
  SimulatedUser user(ButtonUser{{Meaning::Yellow, Meaning::Grey}}, Pin{3, 0, 0, 0}, 1);
  EXPECT_EQ(user_action(user, pattern({3}), 3).button_id(), 0);
  EXPECT_EQ(user_action(user, pattern({1}), 3).button_id(), 1);
}

TEST(UserAction, ButtonUserNeedsBothColors) {
  EXPECT_THROW(SimulatedUser(ButtonUser{{Meaning::Grey, Meaning::Grey}}, Pin{}, 0), Error);
}

TEST(UserAction, HalfPlaneGreyIsRightOfBoundary) {
  SimulatedUser user = half_plane_user({5, 5, 5, 5}, 2);
  for (int i = 0; i < 100; ++i) {
    const auto grey = user_action(user, pattern({0}), 5).features();
    EXPECT_GE(grey[0], 0.05);
    const auto yellow = user_action(user, pattern({5}), 5).features();
    EXPECT_LE(yellow[0], -0.05);
    for (double v : yellow) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(UserAction, AdversarialButtonFollowsDigitZeroAndOne) {
  SimulatedUser user(AdversarialButtonUser{}, Pin{7, 7, 7, 7}, 0);
  EXPECT_EQ(user_action(user, pattern({0, 1}), 7).button_id(), 0);
  EXPECT_EQ(user_action(user, pattern({0}), 7).button_id(), 1);
  EXPECT_EQ(user_action(user, pattern({1}), 7).button_id(), 3);
  EXPECT_EQ(user_action(user, pattern({2}), 7).button_id(), 4);
  EXPECT_TRUE(user.adversarial());
}

TEST(UserAction, AdversarialMapQuadrants) {
  SimulatedUser user(AdversarialMapUser{}, Pin{7, 7, 7, 7}, 0);
  for (int i = 0; i < 20; ++i) {
    const auto p = user_action(user, pattern({0}), 7).features();
    EXPECT_GT(p[1], 0.0);  // digit 0 yellow: top
    EXPECT_GT(p[0], 0.0);  // digit 1 grey: right
    const auto q = user_action(user, pattern({1}), 7).features();
    EXPECT_LT(q[1], 0.0);
    EXPECT_LT(q[0], 0.0);
  }
}

TEST(UserAction, AudioUserNeedsEmbedder) {
  SimulatedUser user(ToneUser{}, Pin{}, 0);
  try {
    user_action(user, pattern({0}), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmbedderFailure);
  }
}

TEST(UserAction, DeterministicPerSeed) {
  SimulatedUser a(SketchUser{}, Pin{}, 9), b(SketchUser{}, Pin{}, 9);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(user_action(a, pattern({2}), i), user_action(b, pattern({2}), i));
}

TEST(GenerateCase, ReproducibleAndSelfConsistent) {
  for (CaseKind kind : {CaseKind::Structured, CaseKind::Unstructured, CaseKind::Deceptive}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SimulatedUser a = generate_case(kind, seed), b = generate_case(kind, seed);
      EXPECT_EQ(a.pin(), b.pin());
      for (int d : a.pin()) {
        EXPECT_GE(d, 0);
        EXPECT_LT(d, kNumIntents);
      }
      const auto& map = std::get<MapUser>(a.kind());
      for (int i = 0; i < 50; ++i) {
        const Meaning m = i % 2 ? Meaning::Yellow : Meaning::Grey;
        const Vec2 p = sample_map_point(map, m, a.rng());
        EXPECT_EQ(map.boundary.color(p), m);
      }
    }
  }
}

TEST(AdmissibleColorings, CountsBothColoredMaps) {
  EXPECT_EQ(admissible_button_colorings(9).size(), 510u);
  EXPECT_EQ(admissible_button_colorings(2).size(), 2u);
  EXPECT_TRUE(admissible_button_colorings(1).empty());
  std::set<std::vector<Meaning>> distinct;
  for (const auto& m : admissible_button_colorings(5)) distinct.insert(m);
  EXPECT_EQ(distinct.size(), 30u);
}

TEST(RunScenario, KnownButtonsEntersPin) {
  std::vector<int> first_clicks;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SimulatedUser user(ButtonUser{{Meaning::Yellow, Meaning::Grey}}, Pin{1, 2, 3, 4}, seed);
    ScenarioSetup setup;
    setup.mode = Mode::KnownButtons;
    setup.button_count = 2;
    setup.known_mapping = {Meaning::Yellow, Meaning::Grey};
    setup.engine_seed = seed + 1000;
    const auto r = run_scenario(user, setup);
    ASSERT_TRUE(r.all_correct());
    EXPECT_EQ(r.decisions.size(), 4u);
    for (const auto& d : r.digits) first_clicks.push_back(d.clicks);
  }
  const double m = median(first_clicks);
  EXPECT_GE(m, 3.0);
  EXPECT_LE(m, 5.0);
}

TEST(RunScenario, TouchMapFirstDigit) {
  std::vector<int> clicks;
  int correct = 0;
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    SimulatedUser user = half_plane_user({6, 1, 8, 0}, seed);
    ScenarioSetup setup;
    setup.engine_seed = seed + 1000;
    const auto r = run_scenario(user, setup);
    ASSERT_FALSE(r.digits.empty());
    clicks.push_back(r.digits[0].clicks);
    correct += r.digits[0].correct;
  }
  EXPECT_LE(median(clicks), 25.0);
  EXPECT_GE(correct, 9);
}

TEST(RunScenario, AdversarialButtonsNeverDecide) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SimulatedUser user(AdversarialButtonUser{}, Pin{0, 0, 0, 0}, seed);
    ScenarioSetup setup;
    setup.mode = Mode::SelfCalButtons;
    setup.button_count = 9;
    setup.engine_seed = seed;
    setup.max_steps_per_digit = 36;
    const auto r = run_scenario(user, setup);
    ASSERT_EQ(r.digits.size(), 1u);
    EXPECT_TRUE(r.digits[0].budget_exhausted);
    EXPECT_TRUE(r.decisions.empty());
    PerIntent<bool> expected{};
    expected[0] = expected[1] = true;
    EXPECT_EQ(r.final_valid, expected);
    EXPECT_EQ(r.events.size(), 36u);
  }
}

TEST(RunScenario, Errors) {
  SimulatedUser user = half_plane_user({0, 0, 0, 0}, 0);
  ScenarioSetup setup;
  setup.max_steps_per_digit = 0;
  try {
    run_scenario(user, setup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(RunScenario, ColorMapSummary) {
  SimulatedUser user(ButtonUser{{Meaning::Grey, Meaning::Yellow, Meaning::Grey}}, Pin{4, 4, 4, 4}, 3);
  ScenarioSetup setup;
  setup.mode = Mode::SelfCalButtons;
  setup.button_count = 3;
  setup.engine_seed = 3;
  const auto r = run_scenario(user, setup);
  ASSERT_TRUE(r.all_correct());
  EXPECT_EQ(r.color_map, "0:grey 1:yellow 2:grey");
}
