#pragma once

#include "coupler/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <optional>
#include <vector>

namespace coupler {

// Lame parameters and yield stress, all in MPa (N/mm^2).
struct Material {
  double mu = 0.0;
  double lambda = 0.0;
  double sigma_yield = 0.0;

  // Standard isotropic conversion from Young's modulus and Poisson ratio.
  static Material from_young(double youngs_modulus, double poisson_ratio, double sigma_yield);

  // Throws ConfigError unless mu > 0, lambda >= 0, sigma_yield > 0.
  void validate() const;
};

// How the 2D Cauchy tensor is turned into a von Mises value.
enum class VonMisesModel {
  kPlaneStress,  // sqrt(s11^2 - s11 s22 + s22^2 + 3 s12^2)
  kPlaneStrain,  // out-of-plane stress from the Neo-Hookean model with F33 = 1
};

// Per-element rest quantities computed once per mesh: inverse rest edge
// matrices and rest measures.
class RestGeometry {
 public:
  explicit RestGeometry(const Mesh& mesh);

  int dim() const { return dim_; }
  // Inverse of the rest edge matrix [X1-X0, X2-X0, ...] of element e.
  Eigen::Map<const Eigen::MatrixXd> rest_inverse(int e) const {
    return {inverse_.data() + static_cast<std::size_t>(e) * dim_ * dim_, dim_, dim_};
  }
  double measure(int e) const { return measure_[e]; }
  const Eigen::VectorXd& measures() const { return measure_; }

 private:
  int dim_;
  std::vector<double> inverse_;
  Eigen::VectorXd measure_;
};

// One (vertex, axis) displacement constraint.
struct FixedDof {
  int vertex = 0;
  int axis = 0;
  friend bool operator==(const FixedDof&, const FixedDof&) = default;
};

// Current positions of the compliant mesh together with its rest geometry,
// material and displacement constraints. Cached quantities are filled by
// total_energy / nodal_forces / max_von_mises and cleared on set_positions.
class DeformedState {
 public:
  DeformedState(std::shared_ptr<const Mesh> mesh, Material material, double thickness = 1.0);

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  const RestGeometry& rest() const { return *rest_; }
  const Material& material() const { return material_; }
  // Out-of-plane thickness (mm) scaling 2D energies and forces; 1 in 3D.
  double thickness() const { return thickness_; }
  int dim() const { return mesh_->dim(); }

  // n x dim current positions.
  const Eigen::MatrixXd& positions() const { return x_; }
  void set_positions(const Eigen::MatrixXd& x);

  // Flat dof vector [x0, y0, x1, y1, ...].
  Eigen::VectorXd dofs() const;
  void set_dofs(const Eigen::VectorXd& q);

  const std::vector<FixedDof>& fixed_dofs() const { return fixed_; }
  // Fixed entries are reset to their rest values.
  void set_fixed_dofs(std::vector<FixedDof> fixed);
  // Per flat dof: 1 if fixed.
  std::vector<char> fixed_mask() const;

  std::optional<double> cached_energy;
  std::optional<Eigen::MatrixXd> cached_forces;
  std::optional<double> cached_max_von_mises;

 private:
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const RestGeometry> rest_;
  Material material_;
  double thickness_;
  Eigen::MatrixXd x_;
  std::vector<FixedDof> fixed_;
};

// F such that deformed edges = F * rest edges for element e.
Eigen::MatrixXd deformation_gradient(const DeformedState& state, int e);

// Neo-Hookean energy density times V. Throws InversionError (element -1)
// when det F <= 0.
double element_energy(const Eigen::MatrixXd& F, const Material& material, double volume);

// First Piola-Kirchhoff stress of the Neo-Hookean model.
Eigen::MatrixXd first_piola(const Eigen::MatrixXd& F, const Material& material);

// sigma = det(F)^-1 P F^T.
Eigen::MatrixXd cauchy_stress(const Eigen::MatrixXd& F, const Material& material);

// Von Mises value of a Cauchy tensor. For 2D tensors the model selects the
// plane-stress or plane-strain reading; `F` is needed for plane strain.
double von_mises(const Eigen::MatrixXd& sigma, VonMisesModel model = VonMisesModel::kPlaneStress,
                 const Material* material = nullptr, double det_f = 1.0);

// Sum of element energies scaled by thickness (N*mm). Caches the result.
double total_energy(DeformedState& state);

// f = -dE/dx as an n x dim matrix (N). Caches the result. Entries at fixed
// dofs are the internal elastic forces there; the support reaction is -f.
Eigen::MatrixXd nodal_forces(DeformedState& state);

// Flat energy gradient dE/dx, not cached.
Eigen::VectorXd energy_gradient(const DeformedState& state);

// Energy and gradient in one pass over the elements.
double energy_and_gradient(const DeformedState& state, Eigen::VectorXd* gradient);

// Smallest det F over all elements and the element attaining it.
std::pair<double, int> min_det_deformation_gradient(const DeformedState& state);

// Per-element von Mises stresses (MPa).
Eigen::VectorXd element_von_mises(const DeformedState& state, VonMisesModel model = VonMisesModel::kPlaneStress);

// Max over elements; caches the result.
double max_von_mises(DeformedState& state, VonMisesModel model = VonMisesModel::kPlaneStress);

// Energy Hessian with each element's stress derivative projected onto the
// positive semidefinite cone, so the assembled matrix is PSD.
Eigen::SparseMatrix<double> projected_energy_hessian(const DeformedState& state);

}  // namespace coupler
