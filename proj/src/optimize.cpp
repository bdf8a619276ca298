#include "coupler/optimize.hpp"

#include "coupler/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>
#include <random>

namespace coupler {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_bounds(const std::optional<ForceBounds>& b, const char* name) {
  if (!b) return;
  if (!(b->lower >= 0.0) || !(b->upper >= 0.0)) throw ConfigError(std::string("target: ") + name + " bounds must be >= 0");
  if (b->lower > b->upper) throw ConfigError(std::string("target: ") + name + " lower bound exceeds upper bound");
}

}  // namespace

void TargetSpec::validate() const {
  check_bounds(grip, "grip");
  check_bounds(insertion, "insertion");
  check_bounds(removal, "removal");
  if (sigma_yield && !(*sigma_yield > 0.0)) throw ConfigError("target: sigma_yield must be > 0");
}

void AnnealSettings::validate() const {
  if (max_iterations < 0) throw ConfigError("anneal: max_iterations must be >= 0");
  if (!(t0 > 0.0)) throw ConfigError("anneal: t0 must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("anneal: alpha must be in (0, 1)");
  if (!(sigma0 > 0.0)) throw ConfigError("anneal: sigma0 must be > 0");
  if (!(sigma_decay > 0.0 && sigma_decay <= 1.0)) throw ConfigError("anneal: sigma_decay must be in (0, 1]");
  if (!(penalty > 0.0)) throw ConfigError("anneal: penalty must be > 0");
}

std::vector<NamedConstraint> constraint_values(const CouplingDescriptors& d, const TargetSpec& target,
                                               double sigma_yield) {
  std::vector<NamedConstraint> out;
  out.push_back({"E_CR", d.e_cr});
  if (target.grip) {
    const double fg = d.grip ? d.grip->magnitude : 0.0;
    out.push_back({"E_GT1", target.grip->lower - fg});
    out.push_back({"E_GT2", fg - target.grip->upper});
  }
  if (target.insertion) {
    out.push_back({"E_F1", d.f_in - target.insertion->upper});
    out.push_back({"E_F2", target.insertion->lower - d.f_in});
  }
  if (target.removal) {
    out.push_back({"E_F3", d.f_rm - target.removal->upper});
    out.push_back({"E_F4", target.removal->lower - d.f_rm});
  }
  out.push_back({"E_MF", d.sigma_vm_max - target.sigma_yield.value_or(sigma_yield)});
  return out;
}

double penalty(const std::vector<NamedConstraint>& constraints, double k) {
  double sum = 0.0;
  for (const auto& c : constraints) {
    const double v = std::max(0.0, c.value);
    sum += v * v;
  }
  return k * sum;
}

double editing_energy(const LaplacianMatrix& laplacian, const Eigen::MatrixXd& rest, const Eigen::MatrixXd& modified) {
  const auto nb = static_cast<Eigen::Index>(laplacian.boundary_vertices.size());
  double e = 0.0;
  for (Eigen::Index axis = 0; axis < rest.cols(); ++axis) {
    Eigen::VectorXd d(nb);
    for (Eigen::Index k = 0; k < nb; ++k) {
      const int v = laplacian.boundary_vertices[k];
      d[k] = modified(v, axis) - rest(v, axis);
    }
    e += d.dot(laplacian.gram * d);
  }
  return e;
}

DesignSpace::DesignSpace(std::shared_ptr<const Mesh> mesh, HandleSet handles)
    : mesh_(std::move(mesh)), handles_(std::move(handles)), active_(handles_.active_indices()) {
  if (active_.empty()) throw ConfigError("design space needs at least one active handle");
  // Each vertex belongs to the handle with the largest weight.
  const int n = mesh_->vertex_count();
  std::vector<std::vector<int>> owned(handles_.size());
  for (int i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    handles_.weights.row(i).maxCoeff(&j);
    owned[j].push_back(i);
  }
  for (int j : active_) {
    double diameter = 0.0;
    for (int a : owned[j]) {
      for (int b : owned[j]) diameter = std::max(diameter, (mesh_->vertex2(a) - mesh_->vertex2(b)).norm());
    }
    radii_.push_back(0.5 * diameter);
  }
}

HandleTransforms DesignSpace::transforms(const Eigen::VectorXd& h) const {
  if (h.size() != size()) throw Error("design vector has " + std::to_string(h.size()) + " entries, expected " + std::to_string(size()));
  HandleTransforms t(static_cast<std::size_t>(handles_.size()));
  for (std::size_t a = 0; a < active_.size(); ++a) {
    const auto base = static_cast<Eigen::Index>(4 * a);
    auto& tr = t[static_cast<std::size_t>(active_[a])];
    tr.translation = radii_[a] * h.segment<2>(base);
    tr.scale = Eigen::Vector2d(std::exp2(h[base + 2]), std::exp2(h[base + 3]));
  }
  return t;
}

Eigen::MatrixXd DesignSpace::rest_shape(const Eigen::VectorXd& h) const {
  return apply_handles(*mesh_, handles_, transforms(h));
}

std::shared_ptr<const Mesh> remesh_positions(const Mesh& mesh, const Eigen::MatrixXd& positions) {
  Eigen::Matrix3d corners;
  corners.col(2).setOnes();
  for (int e = 0; e < mesh.element_count(); ++e) {
    for (int k = 0; k < 3; ++k) corners.row(k).head<2>() = positions.row(mesh.elements()(e, k)).head<2>();
    if (!(corners.determinant() > 0.0)) throw MeshError("modified rest shape inverts element " + std::to_string(e));
  }
  return std::make_shared<const Mesh>(make_mesh(2, positions.leftCols<2>(), mesh.elements()));
}

OptimizationProblem::OptimizationProblem(InsertionProblem insertion_problem, DesignSpace design_space,
                                         TargetSpec target_spec)
    : insertion(std::move(insertion_problem)),
      design(std::move(design_space)),
      target(std::move(target_spec)),
      laplacian(build_editing_laplacian(*insertion.mesh)) {
  target.validate();
}

namespace {

// Simulates the design h; leaves `e` failed with a diagnostic on error.
bool simulate_design(const OptimizationProblem& problem, const Eigen::VectorXd& h, Evaluation& e) {
  const Eigen::MatrixXd rest = problem.design.rest_shape(h);
  e.editing_energy = editing_energy(problem.laplacian, problem.insertion.mesh->vertices(), rest);
  InsertionProblem sim = problem.insertion;
  try {
    sim.mesh = remesh_positions(*problem.insertion.mesh, rest);
  } catch (const MeshError& err) {
    e.failed = true;
    e.diagnostic = err.what();
    return false;
  }
  e.profile = run_insertion(sim);
  if (e.profile.truncated) {
    e.failed = true;
    e.diagnostic = "simulation failed at step " + std::to_string(e.profile.failure_step) + ": " + e.profile.failure_message;
    return false;
  }
  return true;
}

}  // namespace

Evaluation evaluate_objective(const OptimizationProblem& problem, const Eigen::VectorXd& h, double k) {
  Evaluation e;
  if (!simulate_design(problem, h, e)) {
    e.objective = kInf;
    return e;
  }
  e.descriptors = analyze_profile(e.profile, problem.target.kappa());
  e.constraints = constraint_values(*e.descriptors, problem.target, problem.insertion.material.sigma_yield);
  e.penalty = penalty(e.constraints, k);
  e.feasible = std::all_of(e.constraints.begin(), e.constraints.end(), [](const auto& c) { return c.value < 0.0; });
  e.objective = e.editing_energy + e.penalty;
  return e;
}

Evaluation evaluate_force_match(const OptimizationProblem& problem, const Eigen::VectorXd& h) {
  const auto& target = problem.target.force_profile;
  if (static_cast<int>(target.size()) != problem.insertion.path.step_count()) {
    throw ConfigError("target force profile has " + std::to_string(target.size()) + " samples for " +
                      std::to_string(problem.insertion.path.step_count()) + " poses");
  }
  Evaluation e;
  e.curve_matching = true;
  if (!simulate_design(problem, h, e)) {
    e.objective = kInf;
    e.rms = kInf;
    return e;
  }
  e.descriptors = analyze_profile(e.profile, problem.target.kappa());
  e.constraints = constraint_values(*e.descriptors, problem.target, problem.insertion.material.sigma_yield);
  const std::vector<double> f = e.profile.forces();
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sq += (f[i] - target[i]) * (f[i] - target[i]);
  e.rms = std::sqrt(sq / static_cast<double>(f.size()));
  e.feasible = std::all_of(e.constraints.begin(), e.constraints.end(), [](const auto& c) { return c.value < 0.0; });
  e.objective = e.rms;
  return e;
}

AnnealResult anneal(const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& start,
                    const AnnealSettings& settings, double lower, double upper) {
  settings.validate();
  std::mt19937_64 rng(settings.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  AnnealResult out;
  Eigen::VectorXd current = start.cwiseMax(lower).cwiseMin(upper);
  double e_curr = objective(current);
  out.best_h = current;
  out.best = e_curr;
  out.trail.push_back({0, settings.t0, e_curr, true, e_curr});

  double temperature = settings.t0;
  double sigma = settings.sigma0;
  for (int i = 1; i <= settings.max_iterations; ++i) {
    Eigen::VectorXd candidate = current;
    for (Eigen::Index k = 0; k < candidate.size(); ++k) candidate[k] += sigma * normal(rng);
    candidate = candidate.cwiseMax(lower).cwiseMin(upper);
    temperature *= settings.alpha;
    sigma *= settings.sigma_decay;

    const double e_i = objective(candidate);
    bool accepted = false;
    if (e_i < e_curr) {
      accepted = true;
      if (e_i < out.best) {
        out.best = e_i;
        out.best_h = candidate;
      }
    } else {
      // Drawn even for an infinite e_i, which is never accepted.
      const double r = uniform(rng);
      accepted = std::isfinite(e_i) && std::exp((e_curr - e_i) / temperature) > r;
    }
    if (accepted) {
      e_curr = e_i;
      current = candidate;
    }
    out.trail.push_back({i, temperature, e_i, accepted, out.best});
  }
  return out;
}

void write_audit_csv(std::ostream& out, const AnnealResult& result) {
  const auto precision = out.precision(17);
  out << "iter,T,objective,accepted,best\n";
  for (const auto& r : result.trail) {
    out << r.iteration << ',' << r.temperature << ',' << r.objective << ',' << (r.accepted ? 1 : 0) << ',' << r.best
        << '\n';
  }
  out.precision(precision);
}

namespace {

OptimizationResult run_chain(const OptimizationProblem& problem, const AnnealSettings& settings, bool match_curve) {
  auto evaluate = [&](const Eigen::VectorXd& h) {
    return match_curve ? evaluate_force_match(problem, h) : evaluate_objective(problem, h, settings.penalty);
  };
  const Eigen::VectorXd start = Eigen::VectorXd::Zero(problem.design.size());
  OptimizationResult result;
  int iteration = 0;
  result.anneal = anneal(
      [&](const Eigen::VectorXd& h) {
        const Evaluation e = evaluate(h);
        if (iteration == 0) result.before = e;
        spdlog::debug("anneal seed {} iter {}: objective {}{}", settings.seed, iteration, e.objective,
                      e.failed ? " (" + e.diagnostic + ")" : std::string());
        ++iteration;
        return e.objective;
      },
      start, settings);
  result.after = evaluate(result.anneal.best_h);
  result.rest = problem.design.rest_shape(result.anneal.best_h);
  return result;
}

}  // namespace

OptimizationResult optimize_rest_shape(const OptimizationProblem& problem, const AnnealSettings& settings) {
  return run_chain(problem, settings, false);
}

OptimizationResult match_force_profile(const OptimizationProblem& problem, const AnnealSettings& settings) {
  return run_chain(problem, settings, true);
}

OptimizationResult optimize_with_restarts(const OptimizationProblem& problem, const AnnealSettings& settings,
                                          int restarts, bool match_curve) {
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  std::vector<std::future<OptimizationResult>> chains;
  for (int r = 0; r < restarts; ++r) {
    AnnealSettings s = settings;
    s.seed = settings.seed + static_cast<std::uint64_t>(r);
    chains.push_back(std::async(std::launch::async, [&problem, s, match_curve] { return run_chain(problem, s, match_curve); }));
  }
  std::optional<OptimizationResult> best;
  for (auto& c : chains) {
    OptimizationResult r = c.get();
    if (!best || r.anneal.best < best->anneal.best) best = std::move(r);
  }
  return std::move(*best);
}

nlohmann::json to_json(const Evaluation& e) {
  nlohmann::json j;
  j["objective"] = std::isfinite(e.objective) ? nlohmann::json(e.objective) : nlohmann::json(nullptr);
  j["E_L"] = e.editing_energy;
  j["penalty"] = e.penalty;
  j["feasible"] = e.feasible;
  j["failed"] = e.failed;
  if (e.failed) j["diagnostic"] = e.diagnostic;
  if (e.curve_matching && !e.failed) j["rms"] = e.rms;
  nlohmann::json constraints = nlohmann::json::object();
  for (const auto& c : e.constraints) constraints[c.name] = c.value;
  j["constraints"] = constraints;
  j["descriptors"] = e.descriptors ? to_json(*e.descriptors) : nlohmann::json(nullptr);
  return j;
}

}  // namespace coupler
