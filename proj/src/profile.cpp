#include "coupler/profile.hpp"

#include "coupler/error.hpp"

#include <algorithm>
#include <cmath>

namespace coupler {

SteadyState find_steady_state(std::span<const double> e) {
  if (e.empty()) throw Error("steady state of an empty profile");
  const auto n = static_cast<int>(e.size());
  const double e_max = *std::max_element(e.begin(), e.end());
  const double tol = 1e-9 * std::max(e_max, 0.0);
  for (int k = n - 1; k >= 1; --k) {
    const bool drop_left = e[k - 1] > e[k] + tol;
    const bool rise_right = k == n - 1 || e[k + 1] >= e[k] - tol;
    if (drop_left && rise_right) return {k, e[k]};
  }
  int best = 0;
  for (int k = 1; k < n; ++k) {
    if (e[k] >= e[best]) best = k;
  }
  return {best, e[best]};
}

CouplingRatio coupling_ratio(double e_ss, double e_max, double kappa) {
  if (!(e_max > 0.0)) return {100.0 - kappa, true};
  return {e_ss / e_max * 100.0 - kappa, false};
}

AxialForces extract_forces(std::span<const double> f, int ss_index) {
  if (f.empty()) throw Error("forces of an empty profile");
  AxialForces out;
  out.insertion = std::max(0.0, -*std::min_element(f.begin(), f.end()));
  const auto last = std::min<std::size_t>(f.size(), static_cast<std::size_t>(std::max(ss_index, 0)) + 1);
  out.removal = std::max(0.0, *std::max_element(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(last)));
  return out;
}

GripForce grip_force(const Eigen::MatrixXd& contact_forces) {
  GripForce g;
  if (contact_forces.size() == 0) return g;
  g.components = 0.5 * contact_forces.leftCols<2>().cwiseAbs().colwise().sum().transpose();
  g.magnitude = g.components.norm();
  return g;
}

namespace {

CouplingDescriptors analyze(std::span<const double> energies, std::span<const double> forces,
                            std::span<const double> stresses, double kappa) {
  CouplingDescriptors d;
  const SteadyState ss = find_steady_state(energies);
  d.ss_index = ss.index;
  d.e_ss = ss.energy;
  d.e_max = *std::max_element(energies.begin(), energies.end());
  d.kappa = kappa;
  const CouplingRatio cr = coupling_ratio(d.e_ss, d.e_max, kappa);
  d.e_cr = cr.value;
  d.no_engagement = cr.no_engagement;
  const AxialForces af = extract_forces(forces, ss.index);
  d.f_in = af.insertion;
  d.f_rm = af.removal;
  d.sigma_vm_max = stresses.empty() ? 0.0 : *std::max_element(stresses.begin(), stresses.end());
  d.steps = static_cast<int>(energies.size());
  return d;
}

}  // namespace

CouplingDescriptors analyze_profile(const DeformationProfile& profile, double kappa) {
  if (profile.steps.empty()) throw Error("cannot analyze an empty profile");
  std::vector<double> stresses;
  for (const auto& s : profile.steps) stresses.push_back(s.max_von_mises);
  CouplingDescriptors d = analyze(profile.energies(), profile.forces(), stresses, kappa);
  d.grip = grip_force(profile.steps[static_cast<std::size_t>(d.ss_index)].contact_forces);
  d.truncated = profile.truncated;
  return d;
}

CouplingDescriptors analyze_rows(std::span<const ProfileRow> rows, double kappa) {
  if (rows.empty()) throw Error("cannot analyze an empty profile");
  std::vector<double> e, f, s;
  for (const auto& r : rows) {
    e.push_back(r.energy);
    f.push_back(r.force);
    s.push_back(r.max_von_mises);
  }
  return analyze(e, f, s, kappa);
}

nlohmann::json to_json(const CouplingDescriptors& d) {
  nlohmann::json j{
      {"E_ss", d.e_ss},
      {"E_max", d.e_max},
      {"ss_index", d.ss_index},
      {"kappa_cr", d.kappa},
      {"E_CR", d.e_cr},
      {"no_engagement", d.no_engagement},
      {"F_in", d.f_in},
      {"F_rm", d.f_rm},
      {"sigma_vm_max", d.sigma_vm_max},
      {"steps", d.steps},
      {"truncated", d.truncated},
  };
  if (d.grip) {
    j["F_g"] = d.grip->magnitude;
    j["F_g_components"] = {d.grip->components.x(), d.grip->components.y()};
  } else {
    j["F_g"] = nullptr;
    j["F_g_components"] = nullptr;
  }
  return j;
}

}  // namespace coupler
