#include "coupler/contact.hpp"

#include "coupler/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace coupler {

namespace {

// Elements with det F at or below this are rejected during line search.
constexpr double kMinDet = 1e-8;
constexpr double kArmijo = 1e-4;

struct ConstraintEval {
  Eigen::VectorXd psi;
  std::vector<Eigen::Vector2d> gradient;
};

ConstraintEval evaluate_constraints(const Eigen::MatrixXd& x, const ImplicitSurface& surface,
                                    std::span<const ConstraintPoint> points, bool with_gradient) {
  ConstraintEval out;
  out.psi.resize(static_cast<Eigen::Index>(points.size()));
  if (with_gradient) out.gradient.resize(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    const Eigen::Vector2d p = points[j].position(x);
    out.psi[static_cast<Eigen::Index>(j)] =
        with_gradient ? surface.psi_and_gradient(p, &out.gradient[j]) : surface.psi(p);
  }
  return out;
}

double violation(const Eigen::VectorXd& psi) { return psi.cwiseMax(0.0).sum(); }

double max_or_zero(const Eigen::VectorXd& v) {
  return v.size() ? v.maxCoeff() : -std::numeric_limits<double>::infinity();
}

}  // namespace

InsertionPath InsertionPath::linear(const RigidPose& start, const Eigen::Vector2d& direction, double length,
                                    int increments, double total_rotation) {
  if (increments < 1) throw ConfigError("insertion path needs at least one increment");
  if (!(length > 0.0)) throw ConfigError("insertion length must be > 0");
  if (!(direction.norm() > 0.0)) throw ConfigError("insertion direction must be non-zero");
  InsertionPath path;
  path.direction = direction.normalized();
  path.step_length = length / increments;
  for (int k = 0; k <= increments; ++k) {
    RigidPose pose = start;
    pose.translation = start.translation + path.direction * (path.step_length * k);
    pose.rotation = start.rotation + total_rotation * (static_cast<double>(k) / increments);
    path.poses.push_back(pose);
  }
  return path;
}

int InsertionPath::axis() const { return std::abs(direction.x()) >= std::abs(direction.y()) ? 0 : 1; }

double auto_insertion_length(const Mesh& mesh, const Polyline& object, const RigidPose& start,
                             const Eigen::Vector2d& direction) {
  const Eigen::Vector2d d = direction.normalized();
  const Eigen::Vector2d center = start.apply(object.centroid());
  double farthest = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < mesh.vertex_count(); ++v) farthest = std::max(farthest, d.dot(mesh.vertex2(v) - center));
  if (!(farthest > 0.0)) throw ConfigError("compliant mesh lies behind the object along the insertion direction");
  return farthest;
}

void SolverSettings::validate() const {
  if (!(constraint_tol > 0.0)) throw ConfigError("solver: constraint_tol must be > 0");
  if (!(kkt_tol > 0.0)) throw ConfigError("solver: kkt_tol must be > 0");
  if (max_sqp_iters < 1) throw ConfigError("solver: max_sqp_iters must be >= 1");
  if (refinement_points < 1) throw ConfigError("solver: refinement_points must be >= 1");
  if (contact_band && !(*contact_band > 0.0)) throw ConfigError("solver: contact_band must be > 0");
  if (max_refinement_rounds < 0) throw ConfigError("solver: max_refinement_rounds must be >= 0");
}

SolveResult solve_step(const DeformedState& warm_start, const ImplicitSurface& surface, const SolverSettings& settings,
                       std::span<const ConstraintPoint> extra) {
  settings.validate();
  if (warm_start.dim() != 2) throw Error("contact solve requires a 2D mesh");

  DeformedState state = warm_start;
  state.set_positions(warm_start.positions());
  const int n = state.mesh().vertex_count();
  const int ndof = 2 * n;

  std::vector<ConstraintPoint> points;
  points.reserve(static_cast<std::size_t>(n) + extra.size());
  for (int v = 0; v < n; ++v) points.push_back(ConstraintPoint::at_vertex(v));
  points.insert(points.end(), extra.begin(), extra.end());
  const auto point_count = static_cast<Eigen::Index>(points.size());

  const std::vector<char> fixed = state.fixed_mask();
  std::vector<int> free_index(ndof, -1);
  std::vector<int> free_dofs;
  for (int i = 0; i < ndof; ++i) {
    if (!fixed[i]) {
      free_index[i] = static_cast<int>(free_dofs.size());
      free_dofs.push_back(i);
    }
  }
  const auto nf = static_cast<Eigen::Index>(free_dofs.size());
  const double band = settings.band(surface);

  SolveReport report;
  report.points = points;
  report.multipliers = Eigen::VectorXd::Zero(point_count);

  // E >= 0 with E(X) = 0, so a feasible rest shape is the exact minimizer.
  {
    const ConstraintEval at_rest = evaluate_constraints(state.mesh().vertices(), surface, points, false);
    if (max_or_zero(at_rest.psi) <= 0.0) {
      state.set_positions(state.mesh().vertices());
      report.max_psi = max_or_zero(at_rest.psi);
      return {std::move(state), std::move(report)};
    }
  }

  double rho = 0.0;
  double damping_factor = 1e-8;
  double last_residual = std::numeric_limits<double>::infinity();
  double last_max_psi = std::numeric_limits<double>::infinity();

  for (int it = 0; it < settings.max_sqp_iters; ++it) {
    report.iterations = it;
    Eigen::VectorXd grad;
    const double energy = energy_and_gradient(state, &grad);
    const ConstraintEval cons = evaluate_constraints(state.positions(), surface, points, true);
    const double max_psi = max_or_zero(cons.psi);

    std::vector<Eigen::Index> working;
    for (Eigen::Index j = 0; j < point_count; ++j) {
      if (cons.psi[j] > -band) working.push_back(j);
    }
    const auto m = static_cast<Eigen::Index>(working.size());

    Eigen::VectorXd g_free(nf);
    for (Eigen::Index k = 0; k < nf; ++k) g_free[k] = grad[free_dofs[k]];

    // Constraint Jacobian transposed, restricted to free dofs.
    Eigen::MatrixXd jac_t = Eigen::MatrixXd::Zero(nf, m);
    Eigen::VectorXd psi_w(m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const Eigen::Index j = working[c];
      const ConstraintPoint& pt = points[j];
      psi_w[c] = cons.psi[j];
      for (int a = 0; a < 2; ++a) {
        const int d0 = free_index[2 * pt.v0 + a];
        const int d1 = free_index[2 * pt.v1 + a];
        if (pt.is_vertex()) {
          if (d0 >= 0) jac_t(d0, c) += cons.gradient[j][a];
        } else {
          if (d0 >= 0) jac_t(d0, c) += (1.0 - pt.t) * cons.gradient[j][a];
          if (d1 >= 0) jac_t(d1, c) += pt.t * cons.gradient[j][a];
        }
      }
    }

    // Reduced, damped Hessian model.
    const Eigen::SparseMatrix<double> hessian = projected_energy_hessian(state);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(hessian.nonZeros()) + static_cast<std::size_t>(nf));
    double diag_sum = 0.0;
    for (Eigen::Index col = 0; col < hessian.outerSize(); ++col) {
      const int fc = free_index[col];
      if (fc < 0) continue;
      for (Eigen::SparseMatrix<double>::InnerIterator iter(hessian, col); iter; ++iter) {
        const int fr = free_index[iter.row()];
        if (fr < 0) continue;
        triplets.emplace_back(fr, fc, iter.value());
        if (fr == fc) diag_sum += iter.value();
      }
    }
    const double damping = damping_factor * std::max(diag_sum / std::max<Eigen::Index>(nf, 1), 1e-12);
    for (Eigen::Index k = 0; k < nf; ++k) triplets.emplace_back(k, k, damping);
    Eigen::SparseMatrix<double> h_free(nf, nf);
    h_free.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h_free);
    if (ldlt.info() != Eigen::Success) {
      damping_factor *= 100.0;
      continue;
    }

    const Eigen::VectorXd u = ldlt.solve(g_free);
    const Eigen::MatrixXd y = m > 0 ? Eigen::MatrixXd(ldlt.solve(jac_t)) : Eigen::MatrixXd(nf, 0);
    const Eigen::MatrixXd q = jac_t.transpose() * y;
    const Eigen::VectorXd c = jac_t.transpose() * u - psi_w;
    const NonnegativeQpResult dual = solve_nonnegative_qp(0.5 * (q + q.transpose()), c);
    const Eigen::VectorXd& lambda = dual.solution;
    const Eigen::VectorXd step = -(u + y * lambda);
    const Eigen::VectorXd residual = g_free + jac_t * lambda;
    const double residual_norm = nf ? residual.cwiseAbs().maxCoeff() : 0.0;

    report.multipliers.setZero();
    for (Eigen::Index c2 = 0; c2 < m; ++c2) report.multipliers[working[c2]] = lambda[c2];
    report.max_psi = max_psi;
    report.kkt_residual = residual_norm;
    last_residual = residual_norm;
    last_max_psi = max_psi;

    if (max_psi <= settings.constraint_tol && residual_norm <= settings.kkt_tol) {
      return {std::move(state), std::move(report)};
    }

    // l1 merit line search.
    if (m > 0) rho = std::max(rho, 1.5 * lambda.maxCoeff() + 1e-9);
    const double merit0 = energy + rho * violation(cons.psi);
    const double slope = g_free.dot(step) - rho * violation(cons.psi);

    const Eigen::VectorXd q0 = state.dofs();
    auto trial_dofs = [&](const Eigen::VectorXd& delta) {
      Eigen::VectorXd q1 = q0;
      for (Eigen::Index k = 0; k < nf; ++k) q1[free_dofs[k]] += delta[k];
      return q1;
    };
    DeformedState trial = state;
    auto merit_at = [&](const Eigen::VectorXd& q1, double* out) {
      trial.set_dofs(q1);
      if (min_det_deformation_gradient(trial).first <= kMinDet) return false;
      const double e1 = energy_and_gradient(trial, nullptr);
      const ConstraintEval c1 = evaluate_constraints(trial.positions(), surface, points, false);
      *out = e1 + rho * violation(c1.psi);
      return true;
    };

    bool accepted = false;
    double merit1 = 0.0;
    const double decrease = std::min(slope, 0.0);
    if (merit_at(trial_dofs(step), &merit1) && merit1 <= merit0 + kArmijo * decrease) {
      accepted = true;
    } else if (m > 0) {
      // Second-order correction along the active constraints.
      std::vector<Eigen::Index> active;
      for (Eigen::Index c2 = 0; c2 < m; ++c2) {
        if (lambda[c2] > 0.0) active.push_back(c2);
      }
      if (!active.empty()) {
        const Eigen::VectorXd q_full = trial_dofs(step);
        DeformedState probe = state;
        probe.set_dofs(q_full);
        const auto na = static_cast<Eigen::Index>(active.size());
        Eigen::VectorXd c_act(na);
        Eigen::MatrixXd q_act(na, na);
        Eigen::MatrixXd y_act(nf, na);
        for (Eigen::Index a = 0; a < na; ++a) {
          c_act[a] = surface.psi(points[working[active[a]]].position(probe.positions()));
          y_act.col(a) = y.col(active[a]);
          for (Eigen::Index b = 0; b < na; ++b) q_act(a, b) = q(active[a], active[b]);
          q_act(a, a) += 1e-12 * std::max(q.diagonal().maxCoeff(), 1e-300);
        }
        const Eigen::VectorXd correction = -y_act * q_act.ldlt().solve(c_act);
        if (merit_at(trial_dofs(step + correction), &merit1) && merit1 <= merit0 + kArmijo * decrease) {
          state.set_dofs(trial.dofs());
          damping_factor = std::max(1e-8, damping_factor / 3.0);
          continue;
        }
      }
    }
    double alpha = 1.0;
    while (!accepted && alpha > 1e-10) {
      alpha *= 0.5;
      if (merit_at(trial_dofs(alpha * step), &merit1) && merit1 <= merit0 + kArmijo * alpha * decrease) accepted = true;
    }
    if (accepted) {
      state.set_dofs(trial.dofs());
      damping_factor = std::max(1e-8, damping_factor / 3.0);
    } else {
      damping_factor *= 10.0;
      if (damping_factor > 1e6) break;
    }
  }

  std::ostringstream msg;
  msg << "contact solve did not converge in " << settings.max_sqp_iters << " iterations (max psi " << last_max_psi
      << " mm, KKT residual " << last_residual << " N)";
  throw SolveFailure(msg.str(), last_max_psi, last_residual);
}

std::vector<ConstraintPoint> refine_contacts(const DeformedState& state, const ImplicitSurface& surface,
                                             const SolverSettings& settings,
                                             std::span<const ConstraintPoint> already_refined) {
  std::set<std::pair<int, int>> done;
  for (const auto& pt : already_refined) {
    if (!pt.is_vertex()) done.insert({std::min(pt.v0, pt.v1), std::max(pt.v0, pt.v1)});
  }
  const double band = settings.band(surface);
  const auto& x = state.positions();
  std::vector<ConstraintPoint> out;
  for (const auto& edge : state.mesh().boundary_edges()) {
    if (done.count({std::min(edge[0], edge[1]), std::max(edge[0], edge[1])})) continue;
    const double psi_a = surface.psi(x.row(edge[0]).head<2>().transpose());
    const double psi_b = surface.psi(x.row(edge[1]).head<2>().transpose());
    if (std::max(psi_a, psi_b) <= -band) continue;
    std::vector<ConstraintPoint> samples;
    bool colliding = false;
    for (int k = 1; k <= settings.refinement_points; ++k) {
      const ConstraintPoint pt{edge[0], edge[1], static_cast<double>(k) / (settings.refinement_points + 1)};
      if (surface.psi(pt.position(x)) > 0.0) colliding = true;
      samples.push_back(pt);
    }
    if (colliding) out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

Eigen::MatrixXd contact_forces(const DeformedState& state, const ImplicitSurface& surface, const SolveReport& report) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(state.mesh().vertex_count(), 2);
  for (std::size_t j = 0; j < report.points.size(); ++j) {
    const double lambda = report.multipliers[static_cast<Eigen::Index>(j)];
    if (lambda <= 0.0) continue;
    const ConstraintPoint& pt = report.points[j];
    const Eigen::Vector2d force = -lambda * surface.psi_gradient(pt.position(state.positions()));
    if (pt.is_vertex()) {
      f.row(pt.v0) += force.transpose();
    } else {
      f.row(pt.v0) += (1.0 - pt.t) * force.transpose();
      f.row(pt.v1) += pt.t * force.transpose();
    }
  }
  return f;
}

std::vector<FixedDof> apply_boundary_conditions(const Mesh& mesh, const BoundarySpec& spec, int insertion_axis) {
  if (spec.vertices.empty()) throw ConfigError("boundary conditions: no fixed vertices (the structure would translate freely)");
  if (insertion_axis < 0 || insertion_axis >= mesh.dim()) throw ConfigError("boundary conditions: bad insertion axis");
  std::vector<int> vertices = spec.vertices;
  std::sort(vertices.begin(), vertices.end());
  vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  std::vector<FixedDof> fixed;
  for (int v : vertices) {
    if (v < 0 || v >= mesh.vertex_count()) throw ConfigError("boundary conditions: vertex " + std::to_string(v) + " out of range");
    if (spec.mode == ConstraintMode::kAllAxes) {
      for (int a = 0; a < mesh.dim(); ++a) fixed.push_back({v, a});
    } else {
      fixed.push_back({v, insertion_axis});
    }
  }
  return fixed;
}

double axial_force(const DeformedState& state, const Eigen::VectorXd& gradient, const Eigen::MatrixXd& contact,
                   const Eigen::Vector2d& direction) {
  double f = 0.0;
  for (const auto& fd : state.fixed_dofs()) {
    f += (gradient[2 * fd.vertex + fd.axis] - contact(fd.vertex, fd.axis)) * direction[fd.axis];
  }
  return f;
}

std::vector<double> DeformationProfile::distances() const {
  std::vector<double> out;
  for (const auto& s : steps) out.push_back(s.s);
  return out;
}

std::vector<double> DeformationProfile::energies() const {
  std::vector<double> out;
  for (const auto& s : steps) out.push_back(s.energy);
  return out;
}

std::vector<double> DeformationProfile::forces() const {
  std::vector<double> out;
  for (const auto& s : steps) out.push_back(s.force);
  return out;
}

Eigen::VectorXd DeformationProfile::max_displacement() const {
  if (steps.empty()) return {};
  Eigen::VectorXd out = steps.front().displacement;
  for (const auto& s : steps) out = out.cwiseMax(s.displacement);
  return out;
}

DeformationProfile run_insertion(const InsertionProblem& problem) {
  problem.settings.validate();
  DeformationProfile profile;
  profile.direction = problem.path.direction;
  profile.planned_steps = problem.path.step_count();

  DeformedState state(problem.mesh, problem.material, problem.thickness);
  state.set_fixed_dofs(problem.fixed);
  ImplicitSurface surface = problem.surface;

  for (int k = 0; k < problem.path.step_count(); ++k) {
    surface.set_pose(problem.path.poses[k]);
    try {
      SolveResult result = solve_step(state, surface, problem.settings);
      int iterations = result.report.iterations;
      std::vector<ConstraintPoint> refined;
      if (problem.settings.refine) {
        for (int round = 0; round < problem.settings.max_refinement_rounds; ++round) {
          const auto added = refine_contacts(result.state, surface, problem.settings, refined);
          if (added.empty()) break;
          refined.insert(refined.end(), added.begin(), added.end());
          result = solve_step(result.state, surface, problem.settings, refined);
          iterations += result.report.iterations;
        }
      }

      DeformedState& solved = result.state;
      Eigen::VectorXd grad;
      const double energy = energy_and_gradient(solved, &grad);
      Eigen::MatrixXd contact = contact_forces(solved, surface, result.report);
      ProfileStep rec{
          .step = k,
          .s = problem.path.step_length * k,
          .energy = energy,
          .force = axial_force(solved, grad, contact, problem.path.direction),
          .max_von_mises = max_von_mises(solved, problem.settings.von_mises),
          .displacement = (solved.positions() - solved.mesh().vertices()).rowwise().norm(),
          .contact_forces = std::move(contact),
          .max_psi = result.report.max_psi,
          .sqp_iterations = iterations,
          .refined_points = static_cast<int>(refined.size()),
          .state = solved,
      };
      state = rec.state;
      profile.steps.push_back(std::move(rec));
    } catch (const SolveFailure& e) {
      profile.truncated = true;
      profile.failure_step = k;
      profile.failure_message = e.what();
      break;
    } catch (const InversionError& e) {
      profile.truncated = true;
      profile.failure_step = k;
      profile.failure_message = e.what();
      break;
    }
  }
  return profile;
}

void write_profile_csv(std::ostream& out, const DeformationProfile& profile) {
  out << "step,s_mm,energy_Nmm,force_N,max_vm_MPa\n";
  out.precision(17);
  for (const auto& s : profile.steps) {
    out << s.step << ',' << s.s << ',' << s.energy << ',' << s.force << ',' << s.max_von_mises << '\n';
  }
}

std::vector<ProfileRow> read_profile_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("profile CSV is empty");
  if (line.rfind("step,s_mm,energy_Nmm,force_N,max_vm_MPa", 0) != 0) {
    throw ParseError("profile CSV: unexpected header '" + line + "'");
  }
  std::vector<ProfileRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    ProfileRow r;
    if (!(row >> r.step >> r.s >> r.energy >> r.force >> r.max_von_mises)) {
      throw ParseError("profile CSV: malformed row on line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace coupler
