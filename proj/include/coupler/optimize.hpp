#pragma once

#include "coupler/contact.hpp"
#include "coupler/mesh.hpp"
#include "coupler/profile.hpp"
#include "coupler/skinning.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coupler {

enum class CouplingMode { kTight, kLoose };

struct ForceBounds {
  double lower = 0.0;
  double upper = 0.0;
};

struct TargetSpec {
  CouplingMode mode = CouplingMode::kTight;
  std::optional<ForceBounds> grip;
  std::optional<ForceBounds> insertion;
  std::optional<ForceBounds> removal;
  // Falls back to the material's yield stress.
  std::optional<double> sigma_yield;
  // Curve-matching mode: axial force per pose of the path.
  std::vector<double> force_profile;

  double kappa() const { return mode == CouplingMode::kTight ? 95.0 : 1e-3; }
  void validate() const;
};

struct NamedConstraint {
  std::string name;
  double value = 0.0;  // satisfied iff value < 0
};

// E_CR and E_MF always; grip and force pairs when their bounds are set.
std::vector<NamedConstraint> constraint_values(const CouplingDescriptors& d, const TargetSpec& target,
                                               double sigma_yield);

// K sum max(0, c)^2.
double penalty(const std::vector<NamedConstraint>& constraints, double k);

struct AnnealSettings {
  int max_iterations = 300;
  double t0 = 1.0;
  double alpha = 0.97;       // T_k = t0 alpha^k
  double sigma0 = 0.25;      // neighbor spread in normalized design units
  double sigma_decay = 0.97; // sigma_k = sigma0 decay^k
  double penalty = 1e4;
  std::uint64_t seed = 0;

  void validate() const;
};

// d^T M_L d summed over axes, d = modified - rest on the boundary vertices.
double editing_energy(const LaplacianMatrix& laplacian, const Eigen::MatrixXd& rest, const Eigen::MatrixXd& modified);

// Normalized design vector: per active handle [tx, ty, log2 sx, log2 sy],
// each in [-1, 1]. Translations scale by the handle's radius (half the
// diameter of the vertices it dominates), so scales stay in [0.5, 2].
class DesignSpace {
 public:
  DesignSpace() = default;
  DesignSpace(std::shared_ptr<const Mesh> mesh, HandleSet handles);

  int size() const { return 4 * static_cast<int>(active_.size()); }
  const HandleSet& handles() const { return handles_; }
  const Mesh& mesh() const { return *mesh_; }
  const std::vector<double>& radii() const { return radii_; }

  HandleTransforms transforms(const Eigen::VectorXd& h) const;
  Eigen::MatrixXd rest_shape(const Eigen::VectorXd& h) const;

 private:
  std::shared_ptr<const Mesh> mesh_;
  HandleSet handles_;
  std::vector<int> active_;
  std::vector<double> radii_;
};

// Rest mesh with positions X'. Throws MeshError when an element degenerates
// or flips.
std::shared_ptr<const Mesh> remesh_positions(const Mesh& mesh, const Eigen::MatrixXd& positions);

struct OptimizationProblem {
  InsertionProblem insertion;  // the unmodified design
  DesignSpace design;
  TargetSpec target;
  LaplacianMatrix laplacian;

  OptimizationProblem(InsertionProblem insertion, DesignSpace design, TargetSpec target);
};

struct Evaluation {
  double objective = 0.0;
  double editing_energy = 0.0;
  double penalty = 0.0;
  double rms = 0.0;  // curve-matching error
  bool curve_matching = false;
  bool failed = false;
  bool feasible = false;  // simulated and every constraint < 0
  std::string diagnostic;
  std::optional<CouplingDescriptors> descriptors;
  std::vector<NamedConstraint> constraints;
  DeformationProfile profile;
};

// E_L + K sum max(0, c)^2; +infinity when the shape is invalid or the
// simulation fails.
Evaluation evaluate_objective(const OptimizationProblem& problem, const Eigen::VectorXd& h, double k);

// RMS difference between the simulated and target force profiles.
Evaluation evaluate_force_match(const OptimizationProblem& problem, const Eigen::VectorXd& h);

struct AnnealRecord {
  int iteration = 0;
  double temperature = 0.0;
  double objective = 0.0;
  bool accepted = false;
  double best = 0.0;
};

struct AnnealResult {
  Eigen::VectorXd best_h;
  double best = 0.0;
  std::vector<AnnealRecord> trail;  // row 0 is the start
};

// Simulated annealing over the box [lower, upper]^n: Gaussian neighbors with
// geometrically decaying spread, exponential cooling, Metropolis acceptance
// and best-so-far tracking.
AnnealResult anneal(const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& start,
                    const AnnealSettings& settings, double lower = -1.0, double upper = 1.0);

void write_audit_csv(std::ostream& out, const AnnealResult& result);

struct OptimizationResult {
  AnnealResult anneal;
  Evaluation before;
  Evaluation after;
  Eigen::MatrixXd rest;  // optimized rest positions
};

OptimizationResult optimize_rest_shape(const OptimizationProblem& problem, const AnnealSettings& settings);

// Annealing on the curve-matching objective; target.force_profile must have
// one entry per pose.
OptimizationResult match_force_profile(const OptimizationProblem& problem, const AnnealSettings& settings);

// Best of `restarts` chains seeded settings.seed, seed + 1, ..., run
// concurrently. Ties go to the lowest seed.
OptimizationResult optimize_with_restarts(const OptimizationProblem& problem, const AnnealSettings& settings,
                                          int restarts, bool match_curve = false);

nlohmann::json to_json(const Evaluation& e);

}  // namespace coupler
