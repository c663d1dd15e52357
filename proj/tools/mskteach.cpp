// mskteach: headless runs of the teaching experiments and the live bridge.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mskteach/bridge.hpp"
#include "mskteach/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msk;

namespace {

constexpr const char* kConfigDirVar = "MSKTEACH_CONFIG_DIR";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string joined(const std::vector<std::string>& names) {
  std::string s;
  for (const std::string& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

std::string variant_names() {
  std::vector<std::string> names;
  for (MethodVariant v : kAllVariants) names.push_back(variant_name(v));
  return joined(names);
}

double deg(double rad) { return rad * 180.0 / M_PI; }

// Options shared by the commands that run a scenario.
struct ScenarioFlags {
  std::string config;
  std::string scenario;
  std::optional<double> limiter;
  bool no_limiter = false;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool json = false;

  void add_to(CLI::App& cmd) {
    auto* c = cmd.add_option("-c,--config", config,
                             std::string("Scenario JSON; relative paths are also looked up in $") + kConfigDirVar);
    cmd.add_option("-s,--scenario", scenario, "Built-in scenario: " + joined(builtin_scenario_names()))
        ->excludes(c);
    auto* l = cmd.add_option("--limiter", limiter, "Enable the tension limiter with this f_max [N]");
    cmd.add_flag("--no-limiter", no_limiter, "Disable the tension limiter")->excludes(l);
    cmd.add_option("--model", model, "\"oracle\" or a learned weight file");
    cmd.add_option("--seed", seed, "Seed for sensor noise");
    cmd.add_option("-o,--out", out, "Output directory (default: the config's output_dir)");
    cmd.add_flag("--json", json, "One JSON line per result on standard output");
  }
};

std::string find_config(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv(kConfigDirVar); dir && fs::path(path).is_relative()) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
    throw UsageError("config file not found: " + path + " (also tried " + candidate.string() + ")");
  }
  throw UsageError("config file not found: " + path);
}

struct Loaded {
  ScenarioConfig config;
  std::string base_dir;
  Scenario scenario;
  fs::path out;
};

ScenarioConfig read_config(const ScenarioFlags& flags, std::string& base_dir) {
  ScenarioConfig config;
  if (!flags.config.empty()) {
    const std::string path = find_config(flags.config);
    config = load_scenario(path);
    base_dir = fs::absolute(path).parent_path().string();
  } else {
    const std::string name = flags.scenario.empty() ? "arm-sweep" : flags.scenario;
    try {
      config = builtin_scenario(name);
    } catch (const DomainError&) {
      throw UsageError("unknown scenario '" + name + "'; built-in scenarios: " + joined(builtin_scenario_names()));
    }
  }
  SessionConfig& s = config.session;
  if (flags.limiter) {
    if (!(*flags.limiter > 0.0)) throw UsageError("--limiter needs f_max > 0");
    LimiterParams p = s.limiter.value_or(LimiterParams{});
    p.f_max = *flags.limiter;
    s.limiter = p;
  }
  if (flags.no_limiter) s.limiter.reset();
  if (!flags.model.empty()) config.model = flags.model == "oracle" ? flags.model : fs::absolute(flags.model).string();
  if (flags.seed) s.seed = *flags.seed;
  return config;
}

Loaded load(const ScenarioFlags& flags, bool writes = true) {
  try {
    std::string base_dir;
    ScenarioConfig config = read_config(flags, base_dir);
    Scenario scenario = resolve_scenario(config, base_dir);
    const fs::path out = flags.out.empty() ? fs::path(config.output_dir) : fs::path(flags.out);
    if (writes) fs::create_directories(out);
    return Loaded{std::move(config), std::move(base_dir), std::move(scenario), out};
  } catch (const DataError& e) {
    throw UsageError(e.what());
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

Trajectory load_input(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("trajectory file not found: " + path);
  try {
    return load_trajectory(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

std::string model_label(const Scenario& s) {
  return s.model.kind() == ModelKind::oracle ? "oracle" : "learned";
}

// Largest |theta_true - theta_ref| over frames and joints [rad].
double peak_deviation(const Trajectory& tr) {
  double peak = 0.0;
  for (const TimedFrame& f : tr.frames) peak = std::max(peak, (f.theta_true - f.theta_ref).cwiseAbs().maxCoeff());
  return peak;
}

void stamp(Trajectory& tr, const Loaded& l, const std::string& phase) {
  tr.meta.scenario = l.config.name;
  tr.meta.phase = phase;
  tr.meta.model = model_label(l.scenario);
  tr.meta.seed = l.config.session.seed;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  int samples = 20000;
  int epochs = TrainOptions{}.epochs;
  std::uint64_t seed = 1;
  std::string arm = "default";
  std::string out;
  bool json = false;
};

int cmd_train(const TrainFlags& f) {
  if (f.samples <= 0) throw UsageError("--samples must be positive");
  if (f.epochs <= 0) throw UsageError("--epochs must be positive");
  const ArmModel arm = [&] {
    try {
      return f.arm == "default" ? default_arm() : load_arm(f.arm);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }();
  SurrogateOptions options;
  options.net.epochs = f.epochs;
  options.net.seed = f.seed;
  const TrainingSet data = sample_training_set(arm, f.samples, f.seed);
  const Surrogate s = train_surrogate(data, arm.lower_limits(), arm.upper_limits(), options);
  if (const fs::path dir = fs::path(f.out).parent_path(); !dir.empty()) fs::create_directories(dir);
  save_model(s.model, f.out);

  const HeldOutErrors& h = s.held_out;
  if (f.json) {
    std::cout << json{{"type", "train"},          {"out", f.out},
                      {"samples", f.samples},      {"epochs", f.epochs},
                      {"seed", f.seed},            {"held_out", h.samples},
                      {"hl_rms_mm", h.hl_rms},     {"hl_max_mm", h.hl_max},
                      {"htheta_mean_rad", h.htheta_mean}, {"htheta_max_rad", h.htheta_max},
                      {"roundtrip_mean_rad", h.roundtrip_mean}, {"roundtrip_median_rad", h.roundtrip_median},
                      {"roundtrip_max_rad", h.roundtrip_max}}
                     .dump()
              << '\n';
  } else {
    std::cout << "wrote " << f.out << " (" << f.samples << " samples, " << f.epochs << " epochs, seed " << f.seed
              << ")\n"
              << "held-out (" << h.samples << " samples)\n"
              << std::fixed << std::setprecision(4) << "  h_l      rms " << h.hl_rms << " mm   max " << h.hl_max
              << " mm\n"
              << "  h_theta  mean " << deg(h.htheta_mean) << " deg   max " << deg(h.htheta_max) << " deg\n"
              << "  round trip  mean " << deg(h.roundtrip_mean) << " deg   median " << deg(h.roundtrip_median)
              << " deg   max " << deg(h.roundtrip_max) << " deg\n";
  }
  return 0;
}

int cmd_compare(const ScenarioFlags& flags) {
  const Loaded l = load(flags);
  const ComparisonReport rep = comparison_experiment(l.scenario.arm, l.scenario.model, l.scenario.spec);
  const std::string json_path = (l.out / "report.json").string(), csv_path = (l.out / "report.csv").string();
  save_report(rep, json_path, csv_path);

  // Variants within round-off of the smallest E all count as the minimum.
  constexpr double kTie = 1e-12;  // rad
  double least = std::numeric_limits<double>::infinity();
  for (const VariantResult& r : rep.variants)
    if (r.error) least = std::min(least, r.error->E);
  auto is_min = [&](const VariantResult& r) { return r.error && r.error->E <= least + kTie; };

  if (flags.json) {
    for (const VariantResult& r : rep.variants) {
      json line{{"type", "variant"}, {"variant", variant_name(r.variant)}};
      if (r.error) {
        line["E_rad"] = r.error->E;
        line["E_deg"] = r.error->E_degrees();
      } else {
        line["failure"] = r.failure;
      }
      std::cout << line.dump() << '\n';
    }
    json summary{{"type", "report"},       {"scenario", rep.scenario},
                 {"model", rep.model},     {"limiter", rep.limiter},
                 {"peak_deviation_rad", rep.peak_deviation},
                 {"max_teaching_tension", rep.max_teaching_tension},
                 {"files", {json_path, csv_path}}};
    if (rep.limiter) summary["f_max"] = rep.f_max;
    json best = json::array();
    for (const VariantResult& r : rep.variants)
      if (is_min(r)) best.push_back(variant_name(r.variant));
    summary["min"] = best;
    std::cout << summary.dump() << '\n';
    return 0;
  }

  std::cout << "scenario " << rep.scenario << "   model " << rep.model << "   limiter ";
  if (rep.limiter)
    std::cout << "f_max " << rep.f_max << " N\n";
  else
    std::cout << "off\n";
  std::cout << std::fixed << std::setprecision(3) << "teaching: peak deviation " << deg(rep.peak_deviation)
            << " deg, max tension " << std::setprecision(1) << rep.max_teaching_tension << " N\n\n"
            << "variant   E [deg]\n";
  for (const VariantResult& r : rep.variants) {
    std::cout << std::left << std::setw(8) << variant_name(r.variant) << std::right << "  ";
    if (r.error)
      std::cout << std::setw(7) << std::setprecision(4) << r.error->E_degrees() << (is_min(r) ? "  <- min" : "");
    else
      std::cout << "failed: " << r.failure;
    std::cout << '\n';
  }
  std::cout << "\nwrote " << json_path << ", " << csv_path << '\n';
  return 0;
}

int cmd_simulate(const ScenarioFlags& flags) {
  const Loaded l = load(flags);
  Trajectory tr = run_original(l.scenario.arm, l.scenario.model, l.scenario.spec.path, l.scenario.spec.config);
  stamp(tr, l, "original");
  const std::string path = (l.out / "original.csv").string();
  save_trajectory(tr, path);
  if (flags.json)
    std::cout << json{{"type", "original"}, {"frames", tr.size()}, {"tracking_error_rad", peak_deviation(tr)},
                      {"file", path}}
                     .dump()
              << '\n';
  else
    std::cout << "original: " << tr.size() << " frames, tracking error " << std::fixed << std::setprecision(3)
              << deg(peak_deviation(tr)) << " deg\nwrote " << path << '\n';
  return 0;
}

int cmd_teach(const ScenarioFlags& flags, const std::string& wrench_path) {
  Loaded l = load(flags);
  WrenchProfile wrench = l.scenario.spec.wrench;
  if (!wrench_path.empty()) {
    if (!fs::exists(wrench_path)) throw UsageError("wrench file not found: " + wrench_path);
    try {
      std::ifstream in(wrench_path);
      const json doc = json::parse(in);
      wrench = wrench_from_json(doc.contains("wrench") ? doc.at("wrench") : doc);
      if (!wrench.empty()) wrench.validate(l.scenario.arm);
    } catch (const json::exception& e) {
      throw UsageError(wrench_path + ": " + e.what());
    } catch (const DataError& e) {
      throw UsageError(wrench_path + ": " + e.what());
    } catch (const DomainError& e) {
      throw UsageError(wrench_path + ": " + e.what());
    }
  }
  Trajectory tr = run_teaching(l.scenario.arm, l.scenario.model, l.scenario.spec.path, wrench, l.scenario.spec.config);
  stamp(tr, l, "teaching");
  const std::string path = (l.out / "teaching.csv").string();
  save_trajectory(tr, path);
  double tension = 0.0;
  for (const TimedFrame& f : tr.frames) tension = std::max(tension, f.f_data.maxCoeff());
  if (flags.json)
    std::cout << json{{"type", "teaching"}, {"frames", tr.size()}, {"peak_deviation_rad", peak_deviation(tr)},
                      {"max_tension", tension}, {"file", path}}
                     .dump()
              << '\n';
  else
    std::cout << "teaching: " << tr.size() << " frames, peak deviation " << std::fixed << std::setprecision(3)
              << deg(peak_deviation(tr)) << " deg, max tension " << std::setprecision(1) << tension << " N\nwrote "
              << path << '\n';
  return 0;
}

int cmd_reproduce(const ScenarioFlags& flags, const std::string& taught_path, const std::string& variant) {
  MethodVariant v;
  try {
    v = parse_variant(variant);
  } catch (const DomainError&) {
    throw UsageError("unknown variant '" + variant + "'; valid names: " + variant_names());
  }
  const Loaded l = load(flags);
  const Trajectory taught = load_input(taught_path.empty() ? (l.out / "teaching.csv").string() : taught_path);
  Trajectory tr = run_reproduction(l.scenario.arm, l.scenario.model, taught, v, l.scenario.spec.config);
  stamp(tr, l, "reproduction:" + variant_name(v));
  const std::string path = (l.out / ("reproduction_" + variant_name(v) + ".csv")).string();
  save_trajectory(tr, path);
  const ErrorReport e = metric_E(taught, tr);
  if (flags.json)
    std::cout << json{{"type", "reproduction"}, {"variant", variant_name(v)}, {"E_rad", e.E},
                      {"E_deg", e.E_degrees()}, {"frames", tr.size()}, {"file", path}}
                     .dump()
              << '\n';
  else
    std::cout << "reproduction " << variant_name(v) << ": E = " << std::fixed << std::setprecision(4) << e.E_degrees()
              << " deg over " << tr.size() << " frames\nwrote " << path << '\n';
  return 0;
}

int cmd_serve(const ScenarioFlags& flags, const std::string& bind, unsigned short port) {
  const Loaded l = load(flags, false);
  bridge::LiveSession session(l.config, l.base_dir);
  std::optional<bridge::Server> server;
  try {
    server.emplace(session, bridge::ServerOptions{bind, port, true});
  } catch (const bridge::BindError& e) {
    std::cerr << "mskteach serve: " << e.what() << '\n';
    return 1;
  }
  const std::string url = "ws://" + bind + ":" + std::to_string(server->port());
  if (flags.json)
    std::cout << json{{"type", "ready"}, {"url", url}, {"port", server->port()},
                      {"protocol_version", bridge::kProtocolVersion}, {"scenario", l.config.name}}
                     .dump()
              << std::endl;
  else
    std::cout << "ready " << url << " protocol_version " << bridge::kProtocolVersion << " scenario "
              << l.config.name << std::endl;
  server->run();
  if (!flags.json) std::cout << "stopped" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Muscle-space kinesthetic teaching on a simulated musculoskeletal arm"};
  app.require_subcommand(1);
  app.footer(std::string("Exit codes: 0 success, 1 runtime failure, 2 usage or config error.\n$") + kConfigDirVar +
             " is searched for relative --config paths.");

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the learned intersensory model");
  train_cmd->add_option("--samples", train.samples, "Training triples sampled from the arm");
  train_cmd->add_option("--epochs", train.epochs, "Passes over the training rows");
  train_cmd->add_option("--seed", train.seed, "Sampling and initialization seed");
  train_cmd->add_option("--arm", train.arm, "\"default\" or an arm JSON file");
  train_cmd->add_option("-o,--out", train.out, "Weight file to write")->required();
  train_cmd->add_flag("--json", train.json, "One JSON line on standard output");

  ScenarioFlags compare, simulate, teach, reproduce, serve;
  compare.add_to(*app.add_subcommand("compare", "Original, teaching, then reproduction under every variant"));
  simulate.add_to(*app.add_subcommand("simulate", "Run the original motion"));

  CLI::App* teach_cmd = app.add_subcommand("teach", "Run the teaching phase under a scripted wrench");
  teach.add_to(*teach_cmd);
  std::string wrench_path;
  teach_cmd->add_option("--wrench", wrench_path, "Wrench profile JSON (default: the scenario's)");

  CLI::App* reproduce_cmd = app.add_subcommand("reproduce", "Reproduce a taught trajectory");
  reproduce.add_to(*reproduce_cmd);
  std::string taught_path, variant = "ALL";
  reproduce_cmd->add_option("--taught", taught_path, "Teaching trajectory CSV (default: <out>/teaching.csv)");
  reproduce_cmd->add_option("--variant", variant, "One of " + variant_names());

  CLI::App* serve_cmd = app.add_subcommand("serve", "Serve a live session over WebSocket");
  serve.add_to(*serve_cmd);
  std::string bind = bridge::ServerOptions{}.bind;
  unsigned short port = bridge::ServerOptions{}.port;
  serve_cmd->add_option("--bind", bind, "Listen address");
  serve_cmd->add_option("--port", port, "Listen port, 0 for any free port");
  serve_cmd->footer("Wire protocol version " + std::to_string(bridge::kProtocolVersion) +
                    ": JSON messages in WebSocket text frames. Stops on SIGINT or SIGTERM.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (app.got_subcommand("compare")) return cmd_compare(compare);
    if (app.got_subcommand("simulate")) return cmd_simulate(simulate);
    if (*teach_cmd) return cmd_teach(teach, wrench_path);
    if (*reproduce_cmd) return cmd_reproduce(reproduce, taught_path, variant);
    if (*serve_cmd) return cmd_serve(serve, bind, port);
  } catch (const UsageError& e) {
    std::cerr << "mskteach: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mskteach: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
