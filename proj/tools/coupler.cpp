// Command-line front end: simulate, handles, optimize, profile.
//
// Exit codes: 0 success, 1 usage / configuration / IO error, 2 numerical
// failure (outputs are still written, flagged as truncated or failed).

#include "coupler/config.hpp"
#include "coupler/error.hpp"
#include "coupler/optimize.hpp"
#include "coupler/profile.hpp"
#include "coupler/skinning.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coupler;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumerical = 2;

// Output directory plus the list of files written, recorded in manifest.json.
class Outputs {
 public:
  Outputs(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    const fs::path p = dir_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    files_.push_back(name);
    return out;
  }

  void json_file(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }

  int finish(int code) {
    json manifest = {{"command", command_}, {"exit_code", code}, {"files", files_}};
    std::ofstream(dir_ / "manifest.json") << manifest.dump(2) << '\n';
    return code;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> files_;
};

struct Overrides {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  int restarts = 1;
};

RunConfig load(const Overrides& o) {
  RunConfig c = load_config(o.config);
  if (!o.output.empty()) c.output = fs::absolute(o.output).lexically_normal();
  if (o.seed) {
    c.seed = *o.seed;
    c.anneal.seed = *o.seed;
  }
  if (o.iterations) c.anneal.max_iterations = *o.iterations;
  c.validate();
  return c;
}

void write_profile(Outputs& out, const std::string& name, const DeformationProfile& profile) {
  auto f = out.open(name);
  write_profile_csv(f, profile);
}

void write_step_meshes(Outputs& out, const DeformationProfile& profile, const Mesh& mesh) {
  for (const auto& step : profile.steps) {
    char name[32];
    std::snprintf(name, sizeof name, "meshes/step_%03d.off", step.step);
    auto f = out.open(name);
    write_off(f, mesh, step.state.positions());
  }
}

json profile_summary(const DeformationProfile& profile, double kappa) {
  json j = to_json(analyze_profile(profile, kappa));
  j["failure_step"] = profile.truncated ? json(profile.failure_step) : json(nullptr);
  if (profile.truncated) j["failure_message"] = profile.failure_message;
  return j;
}

int cmd_simulate(const Overrides& o) {
  const RunConfig config = load(o);
  const InsertionProblem problem = build_problem(config);
  Outputs out(config.output, "simulate");
  out.json_file("config.json", config.to_json());

  const DeformationProfile profile = run_insertion(problem);
  write_profile(out, "profile.csv", profile);
  out.json_file("descriptors.json", profile_summary(profile, config.target.kappa()));
  if (config.write_meshes) write_step_meshes(out, profile, *problem.mesh);
  if (profile.truncated) {
    spdlog::error("simulation stopped at step {}: {}", profile.failure_step, profile.failure_message);
    return out.finish(kNumerical);
  }
  spdlog::info("simulated {} poses", profile.steps.size());
  return out.finish(kOk);
}

struct HandleChoice {
  Placement placement;
  std::optional<DeformationProfile> baseline;
};

// Returns nullopt when the baseline insertion fails.
std::optional<HandleChoice> choose_handles(const RunConfig& config, const InsertionProblem& problem) {
  HandleChoice choice;
  switch (config.handles.placement) {
    case HandlePlacement::kDisplacement: {
      choice.baseline = run_insertion(problem);
      if (choice.baseline->truncated) {
        spdlog::error("baseline simulation stopped at step {}: {}", choice.baseline->failure_step,
                      choice.baseline->failure_message);
        return std::nullopt;
      }
      AffinitySettings ap;
      ap.seed = config.seed;
      choice.placement = place_handles_displacement(*problem.mesh, choice.baseline->max_displacement(), problem.fixed, ap);
      break;
    }
    case HandlePlacement::kSpatial:
      choice.placement = place_handles_spatial(*problem.mesh, config.handles.count, config.seed);
      break;
    case HandlePlacement::kFile: {
      std::ifstream in(config.handles.file);
      if (!in) throw ConfigError("cannot open handle file " + config.handles.file.string());
      try {
        choice.placement.handles = handles_from_json(json::parse(in));
      } catch (const json::parse_error& e) {
        throw ParseError("handle file " + config.handles.file.string() + ": " + e.what());
      }
      break;
    }
  }
  return choice;
}

void write_labels(Outputs& out, const Mesh& mesh, const HandleSet& set, const std::vector<int>& labels) {
  auto f = out.open("labels.csv");
  f << "vertex,label\n";
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    Eigen::Index j = 0;
    if (labels.empty()) set.weights.row(v).maxCoeff(&j);
    f << v << ',' << (labels.empty() ? static_cast<int>(j) : labels[v]) << '\n';
  }
}

int cmd_handles(const Overrides& o) {
  const RunConfig config = load(o);
  const InsertionProblem problem = build_problem(config);
  Outputs out(config.output, "handles");
  out.json_file("config.json", config.to_json());

  const auto choice = choose_handles(config, problem);
  if (!choice) return out.finish(kNumerical);
  if (choice->baseline) write_profile(out, "baseline_profile.csv", *choice->baseline);
  const HandleSet set = make_handle_set(*problem.mesh, choice->placement.handles);
  out.json_file("handles.json", handles_to_json(set.handles));
  write_labels(out, *problem.mesh, set, choice->placement.labels);
  spdlog::info("{} handles ({} active)", set.size(), set.active_indices().size());
  return out.finish(kOk);
}

int cmd_optimize(const Overrides& o, bool match_curve) {
  const RunConfig config = load(o);
  if (o.restarts < 1) throw ConfigError("--restarts must be >= 1");
  const InsertionProblem problem = build_problem(config);
  match_curve = match_curve || !config.target.force_profile.empty();
  if (match_curve && static_cast<int>(config.target.force_profile.size()) != problem.path.step_count()) {
    throw ConfigError("target.force_profile needs " + std::to_string(problem.path.step_count()) + " samples, got " +
                      std::to_string(config.target.force_profile.size()));
  }
  Outputs out(config.output, "optimize");
  out.json_file("config.json", config.to_json());

  const auto choice = choose_handles(config, problem);
  if (!choice) return out.finish(kNumerical);
  HandleSet set = make_handle_set(*problem.mesh, choice->placement.handles);
  out.json_file("handles.json", handles_to_json(set.handles));

  const OptimizationProblem op(problem, DesignSpace(problem.mesh, std::move(set)), config.target);
  const OptimizationResult result = optimize_with_restarts(op, config.anneal, o.restarts, match_curve);

  {
    auto f = out.open("audit.csv");
    write_audit_csv(f, result.anneal);
  }
  {
    auto f = out.open("optimized.off");
    write_off(f, *problem.mesh, result.rest);
  }
  if (!result.before.failed) write_profile(out, "profile_before.csv", result.before.profile);
  if (!result.after.failed) write_profile(out, "profile_after.csv", result.after.profile);
  json report = {{"mode", match_curve ? "curve" : "constraints"},
                 {"before", to_json(result.before)},
                 {"after", to_json(result.after)},
                 {"best_h", std::vector<double>(result.anneal.best_h.data(),
                                                result.anneal.best_h.data() + result.anneal.best_h.size())},
                 {"iterations", config.anneal.max_iterations},
                 {"restarts", o.restarts}};
  out.json_file("report.json", report);
  if (result.after.failed) {
    spdlog::error("optimized design failed to simulate: {}", result.after.diagnostic);
    return out.finish(kNumerical);
  }
  spdlog::info("objective {} -> {} (feasible: {})", result.before.objective, result.after.objective,
               result.after.feasible);
  return out.finish(kOk);
}

int cmd_profile(const std::string& csv, const std::string& mode, const std::string& output) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot open profile " + csv);
  const std::vector<ProfileRow> rows = read_profile_csv(in);
  if (rows.empty()) throw ParseError("profile " + csv + " has no rows");
  TargetSpec target;
  target.mode = mode == "loose" ? CouplingMode::kLoose : CouplingMode::kTight;
  const json descriptors = to_json(analyze_rows(rows, target.kappa()));
  if (output.empty()) {
    std::cout << descriptors.dump(2) << '\n';
    return kOk;
  }
  Outputs out(output, "profile");
  out.json_file("descriptors.json", descriptors);
  return out.finish(kOk);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rest-shape design of snap-fit couplings"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Overrides o;
  bool match_curve = false;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("config", o.config, "Run configuration (JSON)")->required();
    sub->add_option("-o,--output", o.output, "Output directory (overrides the config)");
  };
  auto* simulate = app.add_subcommand("simulate", "Run the insertion simulation");
  add_common(simulate);
  auto* handles = app.add_subcommand("handles", "Place deformation handles");
  add_common(handles);
  handles->add_option("--seed", o.seed, "Override the seed");
  auto* optimize = app.add_subcommand("optimize", "Optimize the rest shape");
  add_common(optimize);
  optimize->add_option("--seed", o.seed, "Override the seed");
  optimize->add_option("--iterations", o.iterations, "Override the annealing budget");
  optimize->add_option("--restarts", o.restarts, "Independent annealing chains, best kept")->check(CLI::PositiveNumber);
  optimize->add_flag("--match-curve", match_curve, "Fit target.force_profile instead of the constraints");

  std::string csv, mode = "tight", profile_out;
  auto* profile = app.add_subcommand("profile", "Coupling descriptors of an existing profile CSV");
  profile->add_option("csv", csv, "Profile CSV")->required()->check(CLI::ExistingFile);
  profile->add_option("--mode", mode, "tight or loose")->check(CLI::IsMember({"tight", "loose"}));
  profile->add_option("-o,--output", profile_out, "Output directory (prints to stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("coupler"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*simulate) return cmd_simulate(o);
    if (*handles) return cmd_handles(o);
    if (*optimize) return cmd_optimize(o, match_curve);
    if (*profile) return cmd_profile(csv, mode, profile_out);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const MeshError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  }
  return kUsage;
}
