#include "benchmarks.hpp"
#include "coupler/elasticity.hpp"
#include "coupler/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace coupler;

namespace {

// Independent Neo-Hookean density for 2x2 F.
double density(const Eigen::Matrix2d& F, double mu, double lambda) {
  const double j = F.determinant();
  return 0.5 * mu * (F.squaredNorm() - 2.0) - mu * std::log(j) + 0.5 * lambda * std::log(j) * std::log(j);
}

Eigen::Matrix2d rotation(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

Eigen::Matrix2d random_f(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  Eigen::Matrix2d f;
  do {
    f << 1 + u(rng), u(rng), u(rng), 1 + u(rng);
  } while (f.determinant() <= 0.05);
  return f;
}

std::shared_ptr<const Mesh> strip() { return std::make_shared<const Mesh>(bench::make_strip(2.0, 1.0, 4, 2)); }

Material unit_material() { return {1.0, 1.0, 1.0}; }

}  // namespace

TEST_SUITE("elasticity") {
  TEST_CASE("deformation gradient") {
    Eigen::MatrixXd v(3, 2);
    v << 0, 0, 1, 0, 0, 1;
    Eigen::MatrixXi e(1, 3);
    e << 0, 1, 2;
    auto mesh = std::make_shared<const Mesh>(make_mesh(2, v, e));
    DeformedState s(mesh, unit_material());
    CHECK((deformation_gradient(s, 0) - Eigen::Matrix2d::Identity()).norm() == 0.0);
    Eigen::MatrixXd x(3, 2);
    x << 0, 0, 2, 0, 0, 1;
    s.set_positions(x);
    Eigen::Matrix2d expect;
    expect << 2, 0, 0, 1;
    CHECK((deformation_gradient(s, 0) - expect).norm() < 1e-15);
  }

  TEST_CASE("deformation gradient recovers an affine map") {
    auto mesh = strip();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    Eigen::Matrix2d a;
    a << 1 + u(rng), u(rng), u(rng), 1 + u(rng);
    const Eigen::Vector2d b(u(rng), u(rng));
    DeformedState s(mesh, unit_material());
    Eigen::MatrixXd x = (mesh->vertices() * a.transpose()).rowwise() + b.transpose();
    s.set_positions(x);
    for (int e = 0; e < mesh->element_count(); ++e) CHECK((deformation_gradient(s, e) - a).norm() < 1e-8);
  }

  TEST_CASE("element energy values") {
    CHECK(element_energy(Eigen::Matrix2d::Identity(), unit_material(), 1.0) == 0.0);
    const double expect = 3.0 - std::log(4.0) + 0.5 * std::log(4.0) * std::log(4.0);
    CHECK(element_energy(2.0 * Eigen::Matrix2d::Identity(), unit_material(), 1.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(element_energy(2.0 * Eigen::Matrix2d::Identity(), unit_material(), 1.0) - 2.5746) < 1e-4);
    CHECK(std::abs(element_energy(rotation(std::numbers::pi / 6), unit_material(), 1.0)) < 1e-12);
    Eigen::Matrix2d flip;
    flip << -1, 0, 0, 1;
    CHECK_THROWS_AS(element_energy(flip, unit_material(), 1.0), InversionError);
  }

  TEST_CASE("energy is non-negative and rotation invariant") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const Material mat{3.0, 5.0, 1.0};
    for (int k = 0; k < 1000; ++k) {
      const Eigen::Matrix2d f = random_f(rng);
      const double e = element_energy(f, mat, 1.0);
      CHECK(e >= 0.0);
      CHECK(std::abs(element_energy(rotation(angle(rng)) * f, mat, 1.0) - e) <= 1e-10 * std::max(1.0, e));
      CHECK(e == doctest::Approx(density(f, mat.mu, mat.lambda)).epsilon(1e-12));
    }
  }

  TEST_CASE("total energy is the per-element sum") {
    auto mesh = std::make_shared<const Mesh>(bench::make_strip(5.0, 1.0, 5, 1));
    REQUIRE(mesh->element_count() == 10);
    const Material mat{10.0, 20.0, 1.0};
    DeformedState s(mesh, mat);
    CHECK(total_energy(s) == 0.0);
    Eigen::MatrixXd x = mesh->vertices();
    x.col(0) *= 1.2;
    s.set_positions(x);
    Eigen::Matrix2d f;
    f << 1.2, 0, 0, 1;
    double oracle = 0.0;
    for (int e = 0; e < mesh->element_count(); ++e) oracle += element_rest_measure(*mesh, e) * density(f, mat.mu, mat.lambda);
    CHECK(std::abs(total_energy(s) - oracle) < 1e-10);

    DeformedState thick(mesh, mat, 2.5);
    thick.set_positions(x);
    CHECK(total_energy(thick) == doctest::Approx(2.5 * oracle).epsilon(1e-14));
  }

  TEST_CASE("nodal forces match central differences") {
    auto mesh = strip();
    const Material mat = Material::from_young(2000.0, 0.35, 60.0);
    const double bbox = (mesh->vertices().colwise().maxCoeff() - mesh->vertices().colwise().minCoeff()).norm();
    const double h = 1e-6 * bbox;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
      DeformedState s(mesh, mat);
      Eigen::MatrixXd x = mesh->vertices();
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += n(rng);
      s.set_positions(x);
      const Eigen::MatrixXd f = nodal_forces(s);
      Eigen::MatrixXd fd(x.rows(), 2);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (int a = 0; a < 2; ++a) {
          Eigen::MatrixXd xp = x, xm = x;
          xp(i, a) += h;
          xm(i, a) -= h;
          DeformedState sp(mesh, mat), sm(mesh, mat);
          sp.set_positions(xp);
          sm.set_positions(xm);
          fd(i, a) = -(total_energy(sp) - total_energy(sm)) / (2.0 * h);
        }
      }
      CHECK((fd - f).norm() / f.norm() < 1e-5);
      // Translation invariance.
      CHECK(f.colwise().sum().norm() < 1e-8);
      Eigen::VectorXd g;
      energy_and_gradient(s, &g);
      CHECK((g + Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(f.transpose()).data(), f.size())).norm() < 1e-10 * f.norm());
    }
  }

  TEST_CASE("rest state has zero force and stress") {
    auto mesh = strip();
    DeformedState s(mesh, Material::from_young(2000.0, 0.35, 60.0));
    CHECK(nodal_forces(s).norm() == 0.0);
    CHECK(max_von_mises(s) == 0.0);
  }

  TEST_CASE("Cauchy stress") {
    const Material mat{10.0, 10.0, 1.0};
    CHECK(cauchy_stress(Eigen::Matrix2d::Identity(), mat).norm() == 0.0);
    CHECK(cauchy_stress(rotation(0.7), mat).norm() < 1e-12);
    Eigen::Matrix2d f;
    f << 1.1, 0, 0, 1.0;
    // P from central differences of the density.
    Eigen::Matrix2d p;
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        Eigen::Matrix2d fp = f, fm = f;
        fp(i, j) += h;
        fm(i, j) -= h;
        p(i, j) = (density(fp, mat.mu, mat.lambda) - density(fm, mat.mu, mat.lambda)) / (2 * h);
      }
    }
    const Eigen::Matrix2d sigma = p * f.transpose() / f.determinant();
    CHECK((cauchy_stress(f, mat) - sigma).norm() < 1e-5);
    CHECK((first_piola(f, mat) - p).norm() < 1e-5);
  }

  TEST_CASE("von Mises formula") {
    CHECK(von_mises(3.0 * Eigen::Matrix2d::Identity()) == doctest::Approx(3.0));
    CHECK(von_mises(-2.0 * Eigen::Matrix2d::Identity()) == doctest::Approx(2.0));
    Eigen::Matrix2d uni;
    uni << 7.0, 0, 0, 0;
    CHECK(von_mises(uni) == doctest::Approx(7.0));
    Eigen::Matrix2d shear;
    shear << 0, 1.0, 1.0, 0;
    CHECK(von_mises(shear) == doctest::Approx(std::sqrt(3.0)));
  }

  TEST_CASE("fixed dofs keep their rest values") {
    auto mesh = strip();
    DeformedState s(mesh, unit_material());
    Eigen::MatrixXd x = mesh->vertices().array() + 0.1;
    s.set_positions(x);
    s.set_fixed_dofs({{0, 0}, {1, 1}});
    CHECK(s.positions()(0, 0) == mesh->vertices()(0, 0));
    CHECK(s.positions()(1, 1) == mesh->vertices()(1, 1));
    CHECK(s.positions()(0, 1) == x(0, 1));
    const auto mask = s.fixed_mask();
    CHECK(mask[0] == 1);
    CHECK(mask[3] == 1);
    CHECK(mask[1] == 0);
  }

  TEST_CASE("inverted state raises with the element id") {
    auto mesh = strip();
    DeformedState s(mesh, unit_material());
    Eigen::MatrixXd x = mesh->vertices();
    x.col(0) *= -1.0;
    s.set_positions(x);
    CHECK_THROWS_AS(total_energy(s), InversionError);
    CHECK(min_det_deformation_gradient(s).first < 0.0);
  }

  TEST_CASE("projected Hessian is PSD and matches the gradient near rest") {
    auto mesh = strip();
    DeformedState s(mesh, Material::from_young(100.0, 0.3, 10.0));
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 0.02);
    Eigen::MatrixXd x = mesh->vertices();
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += n(rng);
    s.set_positions(x);
    const Eigen::MatrixXd h(projected_energy_hessian(s));
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-9 * h.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * eig.eigenvalues().maxCoeff());
  }

  TEST_CASE("material validation") {
    CHECK_THROWS_AS((Material{0.0, 1.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((Material{1.0, -1.0, 1.0}.validate()), ConfigError);
    CHECK_THROWS_AS((Material{1.0, 1.0, 0.0}.validate()), ConfigError);
    const Material m = Material::from_young(2000.0, 0.35, 60.0);
    CHECK(m.mu == doctest::Approx(2000.0 / 2.7));
    CHECK(m.lambda == doctest::Approx(2000.0 * 0.35 / (1.35 * 0.3)));
  }
}
