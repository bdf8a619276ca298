#pragma once

#include "coupler/contact.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <span>

namespace coupler {

struct SteadyState {
  int index = 0;
  double energy = 0.0;
};

// Scans backward from the last step for the first local minimum of the
// energy: a strict drop from the left (E[k-1] > E[k] + tol) and no drop to
// the right (E[k+1] >= E[k] - tol, or k is the last step), tol = 1e-9 E_max.
// Step 0 never qualifies. Without a local minimum the (last) maximum-energy
// step is returned. Throws Error on an empty profile.
SteadyState find_steady_state(std::span<const double> energies);

struct CouplingRatio {
  double value = 0.0;          // percent
  bool no_engagement = false;  // E_max == 0
};

// (E_ss / E_max) 100 - kappa; 100 - kappa when E_max is zero.
CouplingRatio coupling_ratio(double e_ss, double e_max, double kappa);

struct AxialForces {
  double insertion = 0.0;  // max(0, -min f)
  double removal = 0.0;    // max(0, max f over steps <= ss_index)
};

AxialForces extract_forces(std::span<const double> forces, int ss_index);

struct GripForce {
  Eigen::Vector2d components = Eigen::Vector2d::Zero();  // 0.5 sum |f^a|
  double magnitude = 0.0;
};

// Contact forces exerted by the object on the compliant vertices (n x 2).
GripForce grip_force(const Eigen::MatrixXd& contact_forces);

struct CouplingDescriptors {
  double e_ss = 0.0;
  double e_max = 0.0;
  int ss_index = 0;
  double kappa = 95.0;
  double e_cr = 0.0;
  bool no_engagement = false;
  double f_in = 0.0;
  double f_rm = 0.0;
  // Absent when analyzing a profile without contact data (CSV input).
  std::optional<GripForce> grip;
  double sigma_vm_max = 0.0;
  int steps = 0;
  bool truncated = false;
};

CouplingDescriptors analyze_profile(const DeformationProfile& profile, double kappa);
CouplingDescriptors analyze_rows(std::span<const ProfileRow> rows, double kappa);

nlohmann::json to_json(const CouplingDescriptors& d);

}  // namespace coupler
