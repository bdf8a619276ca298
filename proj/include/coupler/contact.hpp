#pragma once

#include "coupler/elasticity.hpp"
#include "coupler/error.hpp"
#include "coupler/implicit_surface.hpp"
#include "coupler/mesh.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coupler {

// Rigid object poses along the insertion, uniformly spaced by step_length
// along `direction` (plus an optional uniform rotation schedule).
struct InsertionPath {
  Eigen::Vector2d direction = Eigen::Vector2d(-1.0, 0.0);
  double step_length = 0.0;
  std::vector<RigidPose> poses;

  // `increments` steps of length/increments, so poses.size() == increments + 1.
  static InsertionPath linear(const RigidPose& start, const Eigen::Vector2d& direction, double length, int increments,
                              double total_rotation = 0.0);

  double total_length() const { return step_length * static_cast<double>(poses.empty() ? 0 : poses.size() - 1); }
  int step_count() const { return static_cast<int>(poses.size()); }
  // Coordinate axis most aligned with the direction.
  int axis() const;
};

// Distance along `direction` from the object's centroid at `start` to the
// farthest point of the compliant mesh.
double auto_insertion_length(const Mesh& mesh, const Polyline& object, const RigidPose& start,
                             const Eigen::Vector2d& direction);

struct SolverSettings {
  double constraint_tol = 1e-3;  // max psi at convergence (mm)
  double kkt_tol = 1e-4;         // stationarity residual (N)
  int max_sqp_iters = 200;
  int refinement_points = 10;
  // |psi| band selecting constraints and edges near contact (mm); defaults to
  // twice the kernel width of the surface.
  std::optional<double> contact_band;
  int max_refinement_rounds = 5;
  bool refine = true;
  VonMisesModel von_mises = VonMisesModel::kPlaneStress;

  void validate() const;
  double band(const ImplicitSurface& surface) const { return contact_band.value_or(2.0 * surface.sigma()); }
};

// Constraint point on the compliant boundary: (1 - t) x[v0] + t x[v1]. Base
// vertex constraints have v0 == v1 and t == 0.
struct ConstraintPoint {
  int v0 = 0;
  int v1 = 0;
  double t = 0.0;

  static ConstraintPoint at_vertex(int v) { return {v, v, 0.0}; }
  bool is_vertex() const { return v0 == v1; }
  Eigen::Vector2d position(const Eigen::MatrixXd& x) const {
    return (1.0 - t) * x.row(v0).head<2>().transpose() + t * x.row(v1).head<2>().transpose();
  }
  friend bool operator==(const ConstraintPoint&, const ConstraintPoint&) = default;
};

// Raised when the SQP iteration budget runs out.
class SolveFailure : public Error {
 public:
  SolveFailure(const std::string& what, double worst_psi, double residual)
      : Error(what), worst_psi_(worst_psi), residual_(residual) {}
  double worst_psi() const { return worst_psi_; }
  double residual() const { return residual_; }

 private:
  double worst_psi_;
  double residual_;
};

struct SolveReport {
  int iterations = 0;
  double max_psi = 0.0;       // over all constraint points
  double kkt_residual = 0.0;  // inf-norm over free dofs (N)
  std::vector<ConstraintPoint> points;
  Eigen::VectorXd multipliers;  // one per point, >= 0
};

struct SolveResult {
  DeformedState state;
  SolveReport report;
};

// Minimizes the elastic energy subject to psi <= 0 at every mesh vertex and
// every extra point, starting from `warm_start`. Throws SolveFailure when the
// iteration budget is exhausted and InversionError if a step cannot avoid
// inverting an element.
SolveResult solve_step(const DeformedState& warm_start, const ImplicitSurface& surface, const SolverSettings& settings,
                       std::span<const ConstraintPoint> extra = {});

// Boundary edges near contact whose interior samples penetrate the object.
// Returns the samples (barycentric on their edge) of every such edge not in
// `already_refined`.
std::vector<ConstraintPoint> refine_contacts(const DeformedState& state, const ImplicitSurface& surface,
                                             const SolverSettings& settings,
                                             std::span<const ConstraintPoint> already_refined = {});

// Contact forces exerted by the object on each vertex (n x 2), from the
// constraint multipliers: -lambda grad psi, spread over edge samples.
Eigen::MatrixXd contact_forces(const DeformedState& state, const ImplicitSurface& surface, const SolveReport& report);

enum class ConstraintMode {
  kInsertionAxis,  // selected vertices fixed along the insertion axis only
  kAllAxes,
};

struct BoundarySpec {
  std::vector<int> vertices;
  ConstraintMode mode = ConstraintMode::kInsertionAxis;
};

std::vector<FixedDof> apply_boundary_conditions(const Mesh& mesh, const BoundarySpec& spec, int insertion_axis);

struct ProfileStep {
  int step = 0;
  double s = 0.0;              // insertion distance (mm)
  double energy = 0.0;         // N*mm
  double force = 0.0;          // N, negative resists insertion
  double max_von_mises = 0.0;  // MPa
  Eigen::VectorXd displacement;  // per-vertex |x - X|
  Eigen::MatrixXd contact_forces;
  double max_psi = 0.0;
  int sqp_iterations = 0;
  int refined_points = 0;
  DeformedState state;
};

struct DeformationProfile {
  Eigen::Vector2d direction = Eigen::Vector2d(-1.0, 0.0);
  std::vector<ProfileStep> steps;
  int planned_steps = 0;
  bool truncated = false;
  int failure_step = -1;
  std::string failure_message;

  std::vector<double> distances() const;
  std::vector<double> energies() const;
  std::vector<double> forces() const;
  // Max over recorded steps of each vertex displacement.
  Eigen::VectorXd max_displacement() const;
};

struct InsertionProblem {
  std::shared_ptr<const Mesh> mesh;
  Material material;
  double thickness = 1.0;
  ImplicitSurface surface;
  InsertionPath path;
  std::vector<FixedDof> fixed;
  SolverSettings settings;
};

// Runs every pose of the path, warm-starting each from the previous one and
// refining edge contacts per pose. Solver failures truncate the profile.
DeformationProfile run_insertion(const InsertionProblem& problem);

// Axial force: insertion direction dotted with the support reactions summed
// over fixed dofs. The reaction at a fixed dof is dE/dx minus any contact
// force applied there (n x 2, as from contact_forces).
double axial_force(const DeformedState& state, const Eigen::VectorXd& gradient, const Eigen::MatrixXd& contact,
                   const Eigen::Vector2d& direction);

void write_profile_csv(std::ostream& out, const DeformationProfile& profile);

// Minimal record read back from a profile CSV.
struct ProfileRow {
  int step = 0;
  double s = 0.0;
  double energy = 0.0;
  double force = 0.0;
  double max_von_mises = 0.0;
};
std::vector<ProfileRow> read_profile_csv(std::istream& in);

}  // namespace coupler
