#include "oracles.hpp"

#include "softshell/bcgen.hpp"
#include "softshell/errors.hpp"
#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace softshell;
using namespace softshell::fem;
using geometry::Vec3;

namespace {

const MaterialParams kMat = MaterialParams::from_young_poisson(1000.0, 0.4);

geometry::ArmProfile small_profile() {
  geometry::ArmProfile p;
  p.n_circ = 16;
  p.n_axial = 8;
  p.n_layers = 2;
  return p;
}

TetVectors unit_tet() { return {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}; }

}  // namespace

TEST_CASE("Lame conversion") {
  const auto [mu, lambda] = lame_from_young_poisson(1000.0, 0.4);
  CHECK(mu == doctest::Approx(357.142857142857).epsilon(1e-12));
  CHECK(lambda == doctest::Approx(1428.57142857143).epsilon(1e-12));
  CHECK(mu == 1000.0 / (2.0 * 1.4));
  CHECK(lambda == 1000.0 * 0.4 / (1.4 * (1.0 - 0.8)));
  const auto [mu0, lambda0] = lame_from_young_poisson(1000.0, 0.0);
  CHECK(mu0 == 500.0);
  CHECK(lambda0 == 0.0);
  CHECK_THROWS_AS(lame_from_young_poisson(1000.0, 0.5), ParameterError);
  CHECK_THROWS_AS(lame_from_young_poisson(0.0, 0.3), ParameterError);
  CHECK_THROWS_AS(lame_from_young_poisson(1000.0, -0.1), ParameterError);
  const auto m = MaterialParams::from_young_poisson(1000.0, 0.4);
  CHECK(m.mu == mu);
  CHECK(m.lambda == lambda);
  CHECK(m.density == 1000.0);
}

TEST_CASE("deformation gradient") {
  const auto rest = unit_tet();
  TetVectors zero{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  CHECK((deformation_gradient(rest, zero) - Mat3::Identity()).norm() == 0.0);
  TetVectors shift;
  for (auto& d : shift) d = Vec3(0.3, -2.0, 5.0);
  CHECK((deformation_gradient(rest, shift) - Mat3::Identity()).norm() < 1e-14);
  TetVectors scale;
  for (int a = 0; a < 4; ++a) scale[a] = 0.1 * rest[a];
  CHECK((deformation_gradient(rest, scale) - 1.1 * Mat3::Identity()).norm() < 1e-14);
  const TetVectors flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  CHECK_THROWS_AS(deformation_gradient(flat, zero), SingularElementError);
}

TEST_CASE("Neo-Hookean energy density") {
  CHECK(neo_hookean_energy_density(Mat3::Identity(), kMat) == 0.0);
  Mat3 F = Mat3::Identity();
  F(0, 0) = 1.1;
  const double lnJ = std::log(1.1);
  const double expect = 0.5 * kMat.mu * (1.21 + 2.0 - 3.0) - kMat.mu * lnJ + 0.5 * kMat.lambda * lnJ * lnJ;
  CHECK(neo_hookean_energy_density(F, kMat) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(neo_hookean_energy_density(F, kMat) == doctest::Approx(9.9).epsilon(0.01));
  const Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  CHECK(std::abs(neo_hookean_energy_density(R, kMat)) < 1e-12);
  Mat3 inv = Mat3::Identity();
  inv(2, 2) = -0.5;
  CHECK_THROWS_AS(neo_hookean_energy_density(inv, kMat), InvertedElementError);
}

TEST_CASE("energy grows without bound as J approaches zero") {
  double prev = -1.0;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    Mat3 F = Mat3::Identity();
    F(0, 0) = eps;
    const double psi = neo_hookean_energy_density(F, kMat);
    CHECK(psi > prev);
    prev = psi;
  }
}

TEST_CASE("element gradient: rest state, translation and finite differences") {
  const auto rest = unit_tet();
  TetVectors zero{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  CHECK(element_gradient(rest, zero, kMat).norm() == 0.0);
  TetVectors shift;
  for (auto& d : shift) d = Vec3(0.1, 0.2, -0.3);
  CHECK(element_gradient(rest, shift, kMat).norm() < 1e-10);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle::gradient_fd_error(oracle::random_element(rng), kMat));
  CHECK(worst < 1e-5);
}

TEST_CASE("element Hessian: finite differences, projection and symmetry") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto e = oracle::random_element(rng);
    worst = std::max(worst, oracle::hessian_fd_error(e, kMat));
    const double floor = 1e-8;
    const Mat12 H = element_hessian(e.rest, e.disp, kMat, floor);
    CHECK((H - H.transpose()).norm() <= 1e-12 * H.norm());
    Eigen::SelfAdjointEigenSolver<Mat12> es(H);
    CHECK(es.eigenvalues().minCoeff() >= floor * (1.0 - 1e-6) - 1e-12 * H.norm());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("inverted elements are rejected") {
  const auto rest = unit_tet();
  TetVectors flip{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3(0, 0, -2)};
  CHECK_THROWS_AS(element_gradient(rest, flip, kMat), InvertedElementError);
  CHECK_THROWS_AS(element_hessian(rest, flip, kMat), InvertedElementError);
}

TEST_CASE("solver settings validation") {
  SolveSettings s;
  CHECK_NOTHROW(s.validate());
  s.line_search_shrink = 1.0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = SolveSettings{};
  s.newton_tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("zero load gives exactly zero displacement") {
  const auto p = small_profile();
  const auto mesh = geometry::build_shell_mesh(p);
  const auto r = solve_static(mesh, kMat, NodalForces{}, mesh.fixed_vertex_ids(), SolveSettings{});
  CHECK(r.iterations <= 1);
  for (const auto& d : r.displacements) CHECK(d.norm() == 0.0);
  CHECK_THROWS_AS(solve_static(mesh, kMat, NodalForces{}, {}, SolveSettings{}), ParameterError);
}

TEST_CASE("mirrored load gives a mirrored solution") {
  const auto p = small_profile();
  const auto mesh = geometry::build_shell_mesh(p);
  const auto fixed = mesh.fixed_vertex_ids();
  const auto normals = geometry::outer_vertex_normals(mesh);
  SolveSettings s;
  s.newton_tolerance = 1e-10;
  auto load = [&](int axial) {
    NodalForces f;
    for (int circ : {3, 4}) {
      const int v = geometry::grid_vertex_index(p, circ, axial, p.n_layers);
      f.entries[v] = -0.5 * normals[v];
    }
    return f;
  };
  const int a = 2, b = p.n_axial - a;
  const auto r1 = solve_static(mesh, kMat, load(a), fixed, s);
  const auto r2 = solve_static(mesh, kMat, load(b), fixed, s);
  double worst = 0.0;
  for (int layer = 0; layer <= p.n_layers; ++layer)
    for (int ax = 0; ax <= p.n_axial; ++ax)
      for (int c = 0; c < p.n_circ; ++c) {
        const Vec3 u1 = r1.displacements[geometry::grid_vertex_index(p, c, ax, layer)];
        Vec3 u2 = r2.displacements[geometry::grid_vertex_index(p, c, p.n_axial - ax, layer)];
        u2.z() = -u2.z();
        worst = std::max(worst, (u1 - u2).norm());
      }
  CHECK(r1.max_displacement() > 0.1);
  CHECK(worst < 1e-6);
}

TEST_CASE("single vertex load matches a dense Newton solve") {
  const auto p = small_profile();
  const auto mesh = geometry::build_shell_mesh(p);
  REQUIRE(mesh.num_vertices() <= 500);
  const auto fixed = mesh.fixed_vertex_ids();
  const auto normals = geometry::outer_vertex_normals(mesh);
  const int v = geometry::grid_vertex_index(p, 5, p.n_axial / 2, p.n_layers);
  NodalForces f;
  f.entries[v] = -1.0 * normals[v];
  SolveSettings s;
  s.newton_tolerance = 1e-11;
  const auto r = solve_static(mesh, kMat, f, fixed, s);
  const auto ref = oracle::dense_newton(mesh, kMat, f, fixed);
  double ref_max = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref_max = std::max(ref_max, ref[i].norm());
    worst = std::max(worst, (ref[i] - r.displacements[i]).norm());
  }
  CHECK(std::abs(r.max_displacement() - ref_max) < 1e-6);
  CHECK(worst < 1e-6);
}

TEST_CASE("solve is deterministic and fixed vertices stay put") {
  const auto p = small_profile();
  const auto mesh = geometry::build_shell_mesh(p);
  const auto fixed = mesh.fixed_vertex_ids();
  const auto normals = geometry::outer_vertex_normals(mesh);
  NodalForces f;
  const int v = geometry::grid_vertex_index(p, 2, 3, p.n_layers);
  f.entries[v] = -2.0 * normals[v];
  const auto a = solve_static(mesh, kMat, f, fixed, SolveSettings{});
  const auto b = solve_static(mesh, kMat, f, fixed, SolveSettings{});
  CHECK(a.displacements == b.displacements);
  for (int id : fixed) CHECK(a.displacements[id].norm() == 0.0);
  CHECK(a.residual <= SolveSettings{}.newton_tolerance);
}

TEST_CASE("iteration cap raises a convergence error carrying the residual") {
  const auto p = small_profile();
  const auto mesh = geometry::build_shell_mesh(p);
  const auto normals = geometry::outer_vertex_normals(mesh);
  NodalForces f;
  const int v = geometry::grid_vertex_index(p, 2, 3, p.n_layers);
  f.entries[v] = -5.0 * normals[v];
  SolveSettings s;
  s.max_newton_iters = 1;
  try {
    solve_static(mesh, kMat, f, mesh.fixed_vertex_ids(), s);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_residual() > s.newton_tolerance);
  }
}

TEST_CASE("max displacement is non-decreasing in total force on the desk mesh") {
  const geometry::ArmProfile p;
  const auto mesh = geometry::build_shell_mesh(p);
  const auto chart = geometry::build_uv_chart(mesh, p);
  const auto normals = geometry::outer_vertex_normals(mesh);
  const auto fixed = mesh.fixed_vertex_ids();
  const auto disk = bcgen::make_circle(0.5, 0.5, 0.2, 1.0);
  const auto sel = bcgen::select_patch_vertices(chart, disk, fixed);
  double prev = 0.0;
  std::vector<Vec3> guess;
  for (int f = 1; f <= 10; ++f) {
    const auto forces = bcgen::nodal_forces(chart, disk.with_total(f), sel, normals);
    const auto r = solve_static(mesh, kMat, forces, fixed, SolveSettings{}, guess.empty() ? nullptr : &guess);
    CHECK(r.max_displacement() >= prev);
    prev = r.max_displacement();
    guess = r.displacements;
  }
}
