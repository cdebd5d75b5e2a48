// selfcal-sim: batch closed-loop simulation of PIN entry.
//
//   selfcal-sim run --mode touch --pin 1234 --seeds 0..99 --config cfg.json --report out.jsonl
//
// The config file is JSON: {"engine": {...}, "user": {...}, "max_steps": 100}.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "selfcal/inference.hpp"
#include "selfcal/serialization.hpp"
#include "selfcal/simulator.hpp"

using namespace selfcal;

namespace {

struct SimConfig {
  EngineConfig engine;
  json user = json::object();
  int max_steps = 100;
};

SimConfig load_config(const std::string& path) {
  SimConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config '" + path + "'");
  const json j = json::parse(in);
  for (const auto& [key, value] : j.items()) {
    if (key == "engine") cfg.engine = value.get<EngineConfig>();
    else if (key == "user") cfg.user = value;
    else if (key == "max_steps") cfg.max_steps = static_cast<int>(detail::integer(value, "max_steps"));
    else throw Error(ErrorCode::InvalidConfig, "unknown config field '" + key + "'");
  }
  return cfg;
}

// "0..99", "7" or "1,5,9".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = std::stoull(text.substr(0, dots)), hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw Error(ErrorCode::InvalidConfig, "empty seed range");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');) seeds.push_back(std::stoull(part));
  if (seeds.empty()) throw Error(ErrorCode::InvalidConfig, "no seeds");
  return seeds;
}

Pin parse_pin(const std::string& text) {
  if (text.size() != kPinLength || !std::all_of(text.begin(), text.end(), ::isdigit)) {
    throw Error(ErrorCode::InvalidConfig, "pin must be four digits");
  }
  Pin pin{};
  for (int i = 0; i < kPinLength; ++i) pin[i] = text[i] - '0';
  return pin;
}

struct ModeChoice {
  Mode mode;
  int button_count;
};

ModeChoice parse_mode(const std::string& name) {
  if (name == "known") return {Mode::KnownButtons, 2};
  if (name == "buttons9") return {Mode::SelfCalButtons, 9};
  if (name == "touch") return {Mode::TouchMap, 0};
  if (name == "sketch") return {Mode::Sketch, 0};
  if (name == "audio") return {Mode::Audio, 0};
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + name + "'");
}

SimulatedUser make_user(const ModeChoice& mode, const json& spec, const Pin& pin, std::uint64_t seed) {
  const std::string kind = spec.value("kind", "");
  if (kind == "adversarial") {
    if (is_discrete(mode.mode)) return SimulatedUser(AdversarialButtonUser{}, pin, seed);
    return SimulatedUser(AdversarialMapUser{spec.value("spread", 0.1)}, pin, seed);
  }
  if (kind == "structured" || kind == "unstructured" || kind == "deceptive") {
    const CaseKind c = kind == "structured" ? CaseKind::Structured
                       : kind == "unstructured" ? CaseKind::Unstructured
                                                : CaseKind::Deceptive;
    return SimulatedUser(generate_case(c, seed).kind(), pin, seed);
  }
  if (!kind.empty() && kind != "default") throw Error(ErrorCode::InvalidConfig, "unknown user kind '" + kind + "'");

  switch (mode.mode) {
    case Mode::KnownButtons:
      return SimulatedUser(ButtonUser{default_known_mapping(mode.button_count)}, pin, seed);
    case Mode::SelfCalButtons: {
      std::vector<Meaning> mapping;
      if (spec.contains("mapping")) {
        mapping = spec.at("mapping").get<std::vector<Meaning>>();
      } else {
        const auto all = admissible_button_colorings(mode.button_count);
        Rng rng(mix_seed(seed, 0xb077));
        mapping = all[uniform_index(rng, all.size())];
      }
      return SimulatedUser(ButtonUser{mapping}, pin, seed);
    }
    case Mode::TouchMap: return half_plane_user(pin, seed, spec.value("margin", 0.05));
    case Mode::Sketch: return SimulatedUser(SketchUser{spec.value("jitter", 0.02)}, pin, seed);
    case Mode::Audio: return SimulatedUser(ToneUser{}, pin, seed);
  }
  throw Error(ErrorCode::InvalidConfig, "unsupported mode");
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int run(const std::string& mode_name, const std::string& pin_text, const std::string& seeds_text,
        const std::string& config_path, const std::string& report_path) {
  const ModeChoice mode = parse_mode(mode_name);
  const SimConfig cfg = load_config(config_path);
  const auto seeds = parse_seeds(seeds_text);
  const std::optional<Pin> fixed_pin = pin_text.empty() ? std::nullopt : std::optional(parse_pin(pin_text));

  std::ofstream report;
  if (!report_path.empty()) {
    report.open(report_path);
    if (!report) throw Error(ErrorCode::InvalidConfig, "cannot write report '" + report_path + "'");
  }
  const BandEnergyEmbedder embedder;

  std::vector<std::vector<double>> clicks(kPinLength);
  std::size_t runs_correct = 0, digits_total = 0, digits_correct = 0, exhausted = 0;
  double wall = 0.0;
  for (std::uint64_t seed : seeds) {
    Rng pin_rng(seed);
    const Pin pin = fixed_pin ? *fixed_pin : random_pin(pin_rng);
    SimulatedUser user = make_user(mode, cfg.user, pin, seed);
    ScenarioSetup setup;
    setup.mode = mode.mode;
    setup.button_count = mode.button_count;
    setup.engine_seed = seed + 1000;
    setup.config = cfg.engine;
    setup.max_steps_per_digit = cfg.max_steps;
    setup.embedder = &embedder;
    const ScenarioReport r = run_scenario(user, setup);

    json digits = json::array();
    for (std::size_t i = 0; i < r.digits.size(); ++i) {
      const auto& d = r.digits[i];
      clicks[i].push_back(d.clicks);
      ++digits_total;
      digits_correct += d.correct ? 1 : 0;
      exhausted += d.budget_exhausted ? 1 : 0;
      digits.push_back(json{{"target", d.target},
                            {"clicks", d.clicks},
                            {"decided", d.decided ? json(*d.decided) : json(nullptr)},
                            {"correct", d.correct}});
    }
    runs_correct += r.all_correct() ? 1 : 0;
    wall += r.wall_seconds;
    if (report.is_open()) {
      report << json{{"seed", seed},
                     {"mode", mode_name},
                     {"pin", pin},
                     {"digits", digits},
                     {"all_correct", r.all_correct()},
                     {"final_valid", r.final_valid},
                     {"final_scores", r.final_scores},
                     {"color_map", r.color_map},
                     {"wall_seconds", r.wall_seconds}}
                    .dump()
             << '\n';
    }
  }

  std::cout << "mode " << mode_name << ", " << seeds.size() << " runs\n";
  std::cout << std::left << std::setw(8) << "digit" << std::setw(8) << "runs" << std::setw(10) << "median"
            << std::setw(10) << "mean" << "\n";
  for (int i = 0; i < kPinLength; ++i) {
    if (clicks[i].empty()) continue;
    double sum = 0.0;
    for (double c : clicks[i]) sum += c;
    std::cout << std::setw(8) << i + 1 << std::setw(8) << clicks[i].size() << std::setw(10) << median(clicks[i])
              << std::setw(10) << std::fixed << std::setprecision(2) << sum / clicks[i].size() << "\n"
              << std::defaultfloat;
  }
  std::cout << "digit accuracy " << digits_correct << "/" << digits_total << ", full PIN correct " << runs_correct
            << "/" << seeds.size() << ", budget exhausted " << exhausted << ", wall " << std::setprecision(3) << wall
            << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop PIN entry simulator"};
  app.require_subcommand(1);
  auto* run_cmd = app.add_subcommand("run", "Simulate PIN entry over a range of seeds");
  std::string mode = "touch", pin, seeds = "0..99", config, report;
  run_cmd->add_option("--mode", mode, "known, buttons9, touch, sketch or audio")->capture_default_str();
  run_cmd->add_option("--pin", pin, "Four-digit PIN (random per seed when omitted)");
  run_cmd->add_option("--seeds", seeds, "Seed range a..b or list a,b,c")->capture_default_str();
  run_cmd->add_option("--config", config, "JSON file with engine, user and max_steps");
  run_cmd->add_option("--report", report, "Write one JSON record per run to this file");
  CLI11_PARSE(app, argc, argv);
  try {
    return run(mode, pin, seeds, config, report);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
