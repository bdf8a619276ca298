#include "benchmarks.hpp"
#include "coupler/error.hpp"
#include "coupler/optimize.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace coupler;

namespace {

OptimizationProblem gripper_design(int handles, int increments = 34, std::uint64_t seed = 0) {
  InsertionProblem p = bench::gripper_problem(bench::GripperCategory::kTight, increments);
  const Placement pl = place_handles_spatial(*p.mesh, handles, seed);
  HandleSet set = make_handle_set(*p.mesh, pl.handles);
  DesignSpace design(p.mesh, std::move(set));
  return OptimizationProblem(std::move(p), std::move(design), TargetSpec{});
}

}  // namespace

TEST_SUITE("rest_shape_opt") {
  TEST_CASE("editing energy") {
    const Mesh m = bench::make_strip(3.0, 1.0, 6, 2);
    const LaplacianMatrix lap = build_editing_laplacian(m);
    const Eigen::MatrixXd x = m.vertices();
    CHECK(editing_energy(lap, x, x) == 0.0);

    Eigen::MatrixXd moved = x;
    moved.col(0).array() += 2.5;
    moved.col(1).array() -= 1.0;
    CHECK(std::abs(editing_energy(lap, x, moved)) < 1e-9);

    // One boundary vertex displaced by delta: delta^T (G_kk I) delta.
    const int v = lap.boundary_vertices[3];
    const Eigen::Vector2d delta(0.2, -0.7);
    moved = x;
    moved.row(v) += delta.transpose();
    const Eigen::MatrixXd g(lap.gram);
    CHECK(editing_energy(lap, x, moved) == doctest::Approx(g(3, 3) * delta.squaredNorm()).epsilon(1e-12));

    // Dense oracle for a random boundary field.
    Eigen::MatrixXd d = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(lap.boundary_vertices.size()), 2);
    moved = x;
    for (std::size_t k = 0; k < lap.boundary_vertices.size(); ++k) moved.row(lap.boundary_vertices[k]) += d.row(k);
    const double oracle = (d.transpose() * g * d).trace();
    CHECK(editing_energy(lap, x, moved) == doctest::Approx(oracle).epsilon(1e-12));
  }

  TEST_CASE("constraints and penalty") {
    CouplingDescriptors d;
    d.e_cr = 5.0;
    d.sigma_vm_max = 10.0;
    TargetSpec t;
    auto c = constraint_values(d, t, 60.0);
    REQUIRE(c.size() == 2);
    CHECK(c[0].name == "E_CR");
    CHECK(c[1].name == "E_MF");
    CHECK(c[1].value == -50.0);
    CHECK(penalty(c, 1e4) == doctest::Approx(1e4 * 25.0));

    t.grip = ForceBounds{1.0, 2.0};
    t.insertion = ForceBounds{0.5, 3.0};
    t.removal = ForceBounds{0.0, 4.0};
    t.sigma_yield = 5.0;
    d.e_cr = -10.0;
    d.grip = GripForce{Eigen::Vector2d(1.5, 0.0), 1.5};
    d.f_in = 4.0;
    d.f_rm = 1.0;
    c = constraint_values(d, t, 60.0);
    REQUIRE(c.size() == 8);
    // Only E_F1 (4 - 3) and E_MF (10 - 5) are violated.
    CHECK(penalty(c, 2.0) == doctest::Approx(2.0 * (1.0 + 25.0)));

    d.f_in = 1.0;
    d.sigma_vm_max = 1.0;
    CHECK(penalty(constraint_values(d, t, 60.0), 1e4) == 0.0);

    t.grip = ForceBounds{3.0, 1.0};
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }

  TEST_CASE("design space") {
    const OptimizationProblem p = gripper_design(4);
    CHECK(p.design.size() == 16);
    for (double r : p.design.radii()) CHECK(r > 0.0);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(16);
    CHECK(p.design.rest_shape(zero) == p.insertion.mesh->vertices());
    Eigen::VectorXd h = zero;
    h[2] = 1.0;
    h[3] = -1.0;
    const HandleTransforms t = p.design.transforms(h);
    CHECK(t[0].scale == Eigen::Vector2d(2.0, 0.5));
    CHECK_THROWS_AS(p.design.transforms(Eigen::VectorXd::Zero(3)), Error);
  }

  TEST_CASE("inactive handles pin their vertices") {
    InsertionProblem p = bench::gripper_problem(bench::GripperCategory::kTight, 10);
    std::vector<Handle> handles = place_handles_spatial(*p.mesh, 4, 2).handles;
    const std::vector<int> left = bench::vertices_at(*p.mesh, 0, 0.0);
    for (int v : left) handles.push_back({v, false});
    const DesignSpace design(p.mesh, make_handle_set(*p.mesh, handles));
    Eigen::VectorXd h = Eigen::VectorXd::Random(design.size());
    const Eigen::MatrixXd x = design.rest_shape(h);
    for (int v : left) CHECK(x.row(v) == p.mesh->vertices().row(v));
  }

  TEST_CASE("flipped rest shapes are rejected") {
    const Mesh m = bench::make_strip(1.0, 1.0, 1, 1);
    Eigen::MatrixXd x = m.vertices();
    CHECK_NOTHROW(remesh_positions(m, x));
    x.col(0) *= -1.0;
    CHECK_THROWS_AS(remesh_positions(m, x), MeshError);
  }

  TEST_CASE("identity on a feasible design scores zero") {
    const OptimizationProblem p = gripper_design(3);
    const Evaluation e = evaluate_objective(p, Eigen::VectorXd::Zero(p.design.size()), 1e4);
    REQUIRE_FALSE(e.failed);
    CHECK(e.feasible);
    CHECK(e.editing_energy == 0.0);
    CHECK(e.penalty == 0.0);
    CHECK(e.objective == 0.0);

    const auto j = to_json(e);
    CHECK(j["objective"] == 0.0);
    CHECK(j["constraints"].contains("E_CR"));
    CHECK_FALSE(j.contains("rms"));
  }

  TEST_CASE("collapsed design scores infinity") {
    const OptimizationProblem p = gripper_design(3, 10);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.design.size());
    // Push one handle far past its neighbours until elements flip.
    h[0] = 1.0;
    h[1] = 1.0;
    h[2] = -1.0;
    h[3] = -1.0;
    h[4] = -1.0;
    h[5] = -1.0;
    const Evaluation e = evaluate_objective(p, h, 1e4);
    if (e.failed) {
      CHECK(std::isinf(e.objective));
      CHECK_FALSE(e.diagnostic.empty());
      CHECK(to_json(e)["objective"].is_null());
    } else {
      CHECK(std::isfinite(e.objective));
    }
  }

  TEST_CASE("annealing a 1-D quadratic") {
    AnnealSettings s;
    s.max_iterations = 500;
    s.seed = 11;
    // Temperature on the scale of the objective; at t0 = 1 the chain drifts
    // until the step size has decayed.
    s.t0 = 0.01;
    auto f = [](const Eigen::VectorXd& x) { return (x[0] - 0.3) * (x[0] - 0.3); };
    const AnnealResult r = anneal(f, Eigen::VectorXd::Constant(1, -0.9), s);
    CHECK(std::abs(r.best_h[0] - 0.3) < 1e-2);
    REQUIRE(r.trail.size() == 501);
    CHECK(r.trail.front().iteration == 0);
    CHECK(r.trail.front().objective == f(Eigen::VectorXd::Constant(1, -0.9)));
    for (std::size_t i = 1; i < r.trail.size(); ++i) {
      CHECK(r.trail[i].best <= r.trail[i - 1].best);
      CHECK(r.trail[i].temperature == doctest::Approx(s.t0 * std::pow(s.alpha, static_cast<double>(i))));
    }
    CHECK(r.best == r.trail.back().best);

    const AnnealResult again = anneal(f, Eigen::VectorXd::Constant(1, -0.9), s);
    std::ostringstream a, b;
    write_audit_csv(a, r);
    write_audit_csv(b, again);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("iter,T,objective,accepted,best\n", 0) == 0);
  }

  TEST_CASE("annealing stays inside the box and never accepts infinity") {
    AnnealSettings s;
    s.max_iterations = 200;
    s.sigma0 = 2.0;
    auto f = [](const Eigen::VectorXd& x) {
      CHECK(x.cwiseAbs().maxCoeff() <= 1.0);
      return x[0] > 0.5 ? std::numeric_limits<double>::infinity() : -x[0];
    };
    const AnnealResult r = anneal(f, Eigen::VectorXd::Zero(2), s);
    for (const auto& rec : r.trail) {
      if (std::isinf(rec.objective)) CHECK_FALSE(rec.accepted);
    }
    CHECK(r.best >= -0.5);
    CHECK(r.best < 0.0);
  }

  TEST_CASE("zero objective at the start is kept") {
    AnnealSettings s;
    s.max_iterations = 50;
    auto f = [](const Eigen::VectorXd& x) { return x.squaredNorm() == 0.0 ? 0.0 : 1.0 + x.squaredNorm(); };
    const AnnealResult r = anneal(f, Eigen::VectorXd::Zero(3), s);
    CHECK(r.best == 0.0);
    CHECK(r.best_h == Eigen::VectorXd::Zero(3));
  }

  TEST_CASE("anneal settings validation") {
    AnnealSettings s;
    s.alpha = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.t0 = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.penalty = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  TEST_CASE("curve matching") {
    OptimizationProblem p = gripper_design(3, 20);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p.design.size());
    p.target.force_profile = run_insertion(p.insertion).forces();
    const Evaluation e = evaluate_force_match(p, zero);
    REQUIRE_FALSE(e.failed);
    CHECK(e.rms == 0.0);
    CHECK(e.objective == 0.0);
    CHECK(to_json(e)["rms"] == 0.0);

    AnnealSettings s;
    s.max_iterations = 5;
    const OptimizationResult r = match_force_profile(p, s);
    CHECK(r.anneal.best == 0.0);
    CHECK(r.anneal.best_h == zero);

    p.target.force_profile.pop_back();
    CHECK_THROWS_AS(evaluate_force_match(p, zero), ConfigError);
  }

  TEST_CASE("more handles match a force profile at least as well") {
    // Target: the tight profile with its forces scaled by 1.5.
    const int increments = 20;
    std::vector<double> target = run_insertion(bench::gripper_problem(bench::GripperCategory::kTight, increments)).forces();
    for (double& f : target) f *= 1.5;
    AnnealSettings s;
    s.max_iterations = 40;
    s.seed = 3;
    s.t0 = 0.01;
    s.sigma0 = 0.05;
    double rms[2];
    int i = 0;
    for (int m : {2, 4}) {
      OptimizationProblem p = gripper_design(m, increments, 1);
      p.target.force_profile = target;
      const OptimizationResult r = match_force_profile(p, s);
      CHECK(r.after.rms == r.anneal.best);
      CHECK(r.anneal.best < r.before.rms);
      rms[i++] = r.anneal.best;
    }
    MESSAGE("rms m=2: " << rms[0] << ", m=4: " << rms[1]);
    CHECK(rms[0] >= rms[1]);
  }

  TEST_CASE("restarts keep the best chain") {
    const OptimizationProblem p = gripper_design(2, 10);
    AnnealSettings s;
    s.max_iterations = 3;
    s.seed = 5;
    const OptimizationResult best = optimize_with_restarts(p, s, 2);
    double single[2];
    for (int r = 0; r < 2; ++r) {
      AnnealSettings sr = s;
      sr.seed = s.seed + r;
      single[r] = optimize_rest_shape(p, sr).anneal.best;
    }
    CHECK(best.anneal.best == std::min(single[0], single[1]));
    CHECK_THROWS_AS(optimize_with_restarts(p, s, 0), ConfigError);
  }
}
