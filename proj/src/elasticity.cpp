#include "coupler/elasticity.hpp"

#include "coupler/error.hpp"

#include <cmath>
#include <limits>

namespace coupler {

namespace {

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
using StressDerivative = Eigen::Matrix<double, Dim * Dim, Dim * Dim>;

template <int Dim>
double energy_density(const Mat<Dim>& F, const Material& mat, double det) {
  const double log_j = std::log(det);
  return 0.5 * mat.mu * (F.squaredNorm() - Dim) - mat.mu * log_j + 0.5 * mat.lambda * log_j * log_j;
}

template <int Dim>
Mat<Dim> piola(const Mat<Dim>& F, const Material& mat, double det) {
  const Mat<Dim> f_inv_t = F.inverse().transpose();
  return mat.mu * (F - f_inv_t) + mat.lambda * std::log(det) * f_inv_t;
}

// dP/dF in column-major vec() ordering.
template <int Dim>
StressDerivative<Dim> piola_derivative(const Mat<Dim>& F, const Material& mat, double det) {
  const Mat<Dim> f_inv = F.inverse();
  const Mat<Dim> f_inv_t = f_inv.transpose();
  const double log_j = std::log(det);
  StressDerivative<Dim> dp;
  for (int j = 0; j < Dim; ++j) {
    for (int i = 0; i < Dim; ++i) {
      Mat<Dim> dF = Mat<Dim>::Zero();
      dF(i, j) = 1.0;
      const Mat<Dim> d = mat.mu * dF + (mat.mu - mat.lambda * log_j) * f_inv_t * dF.transpose() * f_inv_t +
                         mat.lambda * (f_inv * dF).trace() * f_inv_t;
      dp.col(i + Dim * j) = Eigen::Map<const Eigen::Matrix<double, Dim * Dim, 1>>(d.data());
    }
  }
  return dp;
}

template <int Dim>
Mat<Dim> element_gradient_tensor(const DeformedState& state, int e) {
  const auto& elements = state.mesh().elements();
  const auto& x = state.positions();
  Mat<Dim> ds;
  for (int k = 0; k < Dim; ++k) {
    ds.col(k) = (x.row(elements(e, k + 1)) - x.row(elements(e, 0))).transpose();
  }
  return ds * Eigen::Map<const Mat<Dim>>(state.rest().rest_inverse(e).data());
}

template <int Dim>
double energy_gradient_impl(const DeformedState& state, Eigen::VectorXd* gradient) {
  const auto& elements = state.mesh().elements();
  const double scale = Dim == 2 ? state.thickness() : 1.0;
  if (gradient) gradient->setZero(state.positions().size());
  double total = 0.0;
  for (int e = 0; e < state.mesh().element_count(); ++e) {
    const Mat<Dim> F = element_gradient_tensor<Dim>(state, e);
    const double det = F.determinant();
    if (!(det > 0.0)) throw InversionError(e, det);
    const double volume = scale * state.rest().measure(e);
    total += volume * energy_density<Dim>(F, state.material(), det);
    if (gradient) {
      const Eigen::Map<const Mat<Dim>> b(state.rest().rest_inverse(e).data());
      const Mat<Dim> h = volume * piola<Dim>(F, state.material(), det) * b.transpose();
      Eigen::Matrix<double, Dim, 1> sum = Eigen::Matrix<double, Dim, 1>::Zero();
      for (int k = 0; k < Dim; ++k) {
        gradient->template segment<Dim>(Dim * elements(e, k + 1)) += h.col(k);
        sum += h.col(k);
      }
      gradient->template segment<Dim>(Dim * elements(e, 0)) -= sum;
    }
  }
  return total;
}

template <int Dim>
Eigen::SparseMatrix<double> hessian_impl(const DeformedState& state) {
  constexpr int kNodes = Dim + 1;
  constexpr int kLocal = Dim * kNodes;
  const auto& elements = state.mesh().elements();
  const double scale = Dim == 2 ? state.thickness() : 1.0;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(state.mesh().element_count()) * kLocal * kLocal);
  for (int e = 0; e < state.mesh().element_count(); ++e) {
    const Mat<Dim> F = element_gradient_tensor<Dim>(state, e);
    const double det = F.determinant();
    if (!(det > 0.0)) throw InversionError(e, det);
    StressDerivative<Dim> dp = piola_derivative<Dim>(F, state.material(), det);
    Eigen::SelfAdjointEigenSolver<StressDerivative<Dim>> eig(0.5 * (dp + dp.transpose()));
    dp = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();

    // vec(dF) = G * dx_local.
    const Eigen::Map<const Mat<Dim>> b(state.rest().rest_inverse(e).data());
    Eigen::Matrix<double, Dim * Dim, kLocal> g = Eigen::Matrix<double, Dim * Dim, kLocal>::Zero();
    for (int j = 0; j < Dim; ++j) {
      for (int i = 0; i < Dim; ++i) {
        double col_sum = 0.0;
        for (int k = 0; k < Dim; ++k) {
          g(i + Dim * j, Dim * (k + 1) + i) = b(k, j);
          col_sum += b(k, j);
        }
        g(i + Dim * j, i) = -col_sum;
      }
    }
    const double volume = scale * state.rest().measure(e);
    const Eigen::Matrix<double, kLocal, kLocal> local = volume * g.transpose() * dp * g;
    for (int a = 0; a < kNodes; ++a) {
      for (int b2 = 0; b2 < kNodes; ++b2) {
        for (int i = 0; i < Dim; ++i) {
          for (int j = 0; j < Dim; ++j) {
            triplets.emplace_back(Dim * elements(e, a) + i, Dim * elements(e, b2) + j, local(Dim * a + i, Dim * b2 + j));
          }
        }
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(state.positions().size());
  Eigen::SparseMatrix<double> h(n, n);
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

}  // namespace

Material Material::from_young(double youngs_modulus, double poisson_ratio, double sigma_yield) {
  if (!(youngs_modulus > 0.0) || !(poisson_ratio > -1.0 && poisson_ratio < 0.5)) {
    throw ConfigError("Young's modulus must be > 0 and Poisson ratio in (-1, 0.5)");
  }
  Material mat;
  mat.mu = youngs_modulus / (2.0 * (1.0 + poisson_ratio));
  mat.lambda = youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  mat.sigma_yield = sigma_yield;
  return mat;
}

void Material::validate() const {
  if (!(mu > 0.0)) throw ConfigError("material: mu must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("material: lambda must be >= 0");
  if (!(sigma_yield > 0.0)) throw ConfigError("material: sigma_yield must be > 0");
}

RestGeometry::RestGeometry(const Mesh& mesh)
    : dim_(mesh.dim()),
      inverse_(static_cast<std::size_t>(mesh.element_count()) * mesh.dim() * mesh.dim()),
      measure_(mesh.element_count()) {
  const auto& elements = mesh.elements();
  const auto& rest = mesh.vertices();
  for (int e = 0; e < mesh.element_count(); ++e) {
    Eigen::MatrixXd dm(dim_, dim_);
    for (int k = 0; k < dim_; ++k) dm.col(k) = (rest.row(elements(e, k + 1)) - rest.row(elements(e, 0))).transpose();
    Eigen::Map<Eigen::MatrixXd>(inverse_.data() + static_cast<std::size_t>(e) * dim_ * dim_, dim_, dim_) = dm.inverse();
    measure_[e] = element_rest_measure(mesh, e);
  }
}

DeformedState::DeformedState(std::shared_ptr<const Mesh> mesh, Material material, double thickness)
    : mesh_(std::move(mesh)),
      rest_(std::make_shared<RestGeometry>(*mesh_)),
      material_(material),
      thickness_(mesh_->dim() == 2 ? thickness : 1.0),
      x_(mesh_->vertices()) {
  material_.validate();
  if (!(thickness > 0.0)) throw ConfigError("thickness must be > 0");
}

void DeformedState::set_positions(const Eigen::MatrixXd& x) {
  if (x.rows() != x_.rows() || x.cols() != x_.cols()) throw Error("position array shape does not match the mesh");
  x_ = x;
  for (const auto& fd : fixed_) x_(fd.vertex, fd.axis) = mesh_->vertices()(fd.vertex, fd.axis);
  cached_energy.reset();
  cached_forces.reset();
  cached_max_von_mises.reset();
}

Eigen::VectorXd DeformedState::dofs() const {
  Eigen::VectorXd q(x_.size());
  for (Eigen::Index v = 0; v < x_.rows(); ++v) {
    for (Eigen::Index a = 0; a < x_.cols(); ++a) q[v * x_.cols() + a] = x_(v, a);
  }
  return q;
}

void DeformedState::set_dofs(const Eigen::VectorXd& q) {
  Eigen::MatrixXd x(x_.rows(), x_.cols());
  for (Eigen::Index v = 0; v < x_.rows(); ++v) {
    for (Eigen::Index a = 0; a < x_.cols(); ++a) x(v, a) = q[v * x_.cols() + a];
  }
  set_positions(x);
}

void DeformedState::set_fixed_dofs(std::vector<FixedDof> fixed) {
  for (const auto& fd : fixed) {
    if (fd.vertex < 0 || fd.vertex >= mesh_->vertex_count() || fd.axis < 0 || fd.axis >= dim()) {
      throw Error("fixed dof (" + std::to_string(fd.vertex) + ", " + std::to_string(fd.axis) + ") out of range");
    }
  }
  fixed_ = std::move(fixed);
  set_positions(x_);
}

std::vector<char> DeformedState::fixed_mask() const {
  std::vector<char> mask(x_.size(), 0);
  for (const auto& fd : fixed_) mask[static_cast<std::size_t>(fd.vertex) * dim() + fd.axis] = 1;
  return mask;
}

Eigen::MatrixXd deformation_gradient(const DeformedState& state, int e) {
  if (e < 0 || e >= state.mesh().element_count()) throw Error("element index out of range");
  if (state.dim() == 2) return element_gradient_tensor<2>(state, e);
  return element_gradient_tensor<3>(state, e);
}

double element_energy(const Eigen::MatrixXd& F, const Material& material, double volume) {
  const double det = F.determinant();
  if (!(det > 0.0)) throw InversionError(-1, det);
  if (F.rows() == 2) return volume * energy_density<2>(F, material, det);
  if (F.rows() == 3) return volume * energy_density<3>(F, material, det);
  throw Error("deformation gradient must be 2x2 or 3x3");
}

Eigen::MatrixXd first_piola(const Eigen::MatrixXd& F, const Material& material) {
  const double det = F.determinant();
  if (!(det > 0.0)) throw InversionError(-1, det);
  if (F.rows() == 2) return piola<2>(F, material, det);
  if (F.rows() == 3) return piola<3>(F, material, det);
  throw Error("deformation gradient must be 2x2 or 3x3");
}

Eigen::MatrixXd cauchy_stress(const Eigen::MatrixXd& F, const Material& material) {
  const Eigen::MatrixXd p = first_piola(F, material);
  return p * F.transpose() / F.determinant();
}

double von_mises(const Eigen::MatrixXd& s, VonMisesModel model, const Material* material, double det_f) {
  if (s.rows() == 2 && model == VonMisesModel::kPlaneStress) {
    return std::sqrt(std::max(0.0, s(0, 0) * s(0, 0) - s(0, 0) * s(1, 1) + s(1, 1) * s(1, 1) + 3.0 * s(0, 1) * s(0, 1)));
  }
  Eigen::Matrix3d full = Eigen::Matrix3d::Zero();
  if (s.rows() == 2) {
    full.topLeftCorner<2, 2>() = s;
    // With F33 = 1 the Neo-Hookean out-of-plane Cauchy stress is lambda ln J / J.
    if (material) full(2, 2) = material->lambda * std::log(det_f) / det_f;
  } else {
    full = s;
  }
  const double d01 = full(0, 0) - full(1, 1);
  const double d12 = full(1, 1) - full(2, 2);
  const double d20 = full(2, 2) - full(0, 0);
  const double shear = full(0, 1) * full(0, 1) + full(1, 2) * full(1, 2) + full(2, 0) * full(2, 0);
  return std::sqrt(0.5 * (d01 * d01 + d12 * d12 + d20 * d20) + 3.0 * shear);
}

double energy_and_gradient(const DeformedState& state, Eigen::VectorXd* gradient) {
  if (state.dim() == 2) return energy_gradient_impl<2>(state, gradient);
  return energy_gradient_impl<3>(state, gradient);
}

double total_energy(DeformedState& state) {
  if (!state.cached_energy) state.cached_energy = energy_and_gradient(state, nullptr);
  return *state.cached_energy;
}

Eigen::VectorXd energy_gradient(const DeformedState& state) {
  Eigen::VectorXd g;
  energy_and_gradient(state, &g);
  return g;
}

Eigen::MatrixXd nodal_forces(DeformedState& state) {
  if (!state.cached_forces) {
    Eigen::VectorXd g;
    state.cached_energy = energy_and_gradient(state, &g);
    const int d = state.dim();
    Eigen::MatrixXd f(state.mesh().vertex_count(), d);
    for (int v = 0; v < f.rows(); ++v) {
      for (int a = 0; a < d; ++a) f(v, a) = -g[v * d + a];
    }
    state.cached_forces = std::move(f);
  }
  return *state.cached_forces;
}

std::pair<double, int> min_det_deformation_gradient(const DeformedState& state) {
  double worst = std::numeric_limits<double>::infinity();
  int worst_e = -1;
  for (int e = 0; e < state.mesh().element_count(); ++e) {
    const double det = state.dim() == 2 ? element_gradient_tensor<2>(state, e).determinant()
                                        : element_gradient_tensor<3>(state, e).determinant();
    if (det < worst) {
      worst = det;
      worst_e = e;
    }
  }
  return {worst, worst_e};
}

Eigen::VectorXd element_von_mises(const DeformedState& state, VonMisesModel model) {
  Eigen::VectorXd out(state.mesh().element_count());
  for (int e = 0; e < state.mesh().element_count(); ++e) {
    const Eigen::MatrixXd F = deformation_gradient(state, e);
    const double det = F.determinant();
    if (!(det > 0.0)) throw InversionError(e, det);
    out[e] = von_mises(cauchy_stress(F, state.material()), model, &state.material(), det);
  }
  return out;
}

double max_von_mises(DeformedState& state, VonMisesModel model) {
  if (!state.cached_max_von_mises) {
    const Eigen::VectorXd vm = element_von_mises(state, model);
    state.cached_max_von_mises = vm.size() ? vm.maxCoeff() : 0.0;
  }
  return *state.cached_max_von_mises;
}

Eigen::SparseMatrix<double> projected_energy_hessian(const DeformedState& state) {
  if (state.dim() == 2) return hessian_impl<2>(state);
  return hessian_impl<3>(state);
}

}  // namespace coupler
