#pragma once

#include "softshell/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace softshell::fem {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using TetVectors = std::array<Vec3, 4>;

struct MaterialParams {
  double young_modulus = 1000.0;  // Pa
  double poisson_ratio = 0.4;
  double density = 1000.0;  // kg/m^3, carried for completeness; the static solve ignores it
  double mu = 0.0;
  double lambda = 0.0;

  static MaterialParams from_young_poisson(double young_modulus, double poisson_ratio, double density = 1000.0);
};

// Throws ParameterError for E <= 0 or nu < 0, and ParameterError for the
// incompressible limit nu >= 0.5.
std::pair<double, double> lame_from_young_poisson(double young_modulus, double poisson_ratio);

// Element kernels use whatever consistent length unit the caller picks; the
// solver feeds them meters so energies come out in J and gradients in N.
Mat3 deformation_gradient(const TetVectors& rest, const TetVectors& displacement);

// (mu/2)(tr(F^T F) - 3) - mu ln J + (lambda/2)(ln J)^2. Throws InvertedElementError if det F <= 0.
double neo_hookean_energy_density(const Mat3& F, const MaterialParams& material);

// First Piola-Kirchhoff stress dPsi/dF.
Mat3 neo_hookean_pk1(const Mat3& F, const MaterialParams& material);

// d^2 Psi / dF^2 acting on column-major vec(F).
Mat9 neo_hookean_pk1_derivative(const Mat3& F, const MaterialParams& material);

double element_energy(const TetVectors& rest, const TetVectors& displacement, const MaterialParams& material);
Vec12 element_gradient(const TetVectors& rest, const TetVectors& displacement, const MaterialParams& material);

// Exact Hessian of element_energy.
Mat12 element_hessian_raw(const TetVectors& rest, const TetVectors& displacement, const MaterialParams& material);

// Raw Hessian with every eigenvalue below `eigen_floor` raised to it.
Mat12 element_hessian(const TetVectors& rest, const TetVectors& displacement, const MaterialParams& material,
                      double eigen_floor = 1e-10);

// Vertex id -> force (N).
struct NodalForces {
  std::map<int, Vec3> entries;

  bool empty() const { return entries.empty(); }
  double total_magnitude() const;
};

struct SolveSettings {
  double newton_tolerance = 1e-7;  // N, infinity norm of the free residual
  int max_newton_iters = 100;
  double line_search_shrink = 0.5;
  double min_step = 1e-10;
  // Project every iteration instead of only when the exact Hessian is indefinite.
  bool always_project = false;

  void validate() const;
};

struct SolveResult {
  std::vector<Vec3> displacements;  // mm, one per mesh vertex
  int iterations = 0;
  int projected_iterations = 0;
  double residual = 0.0;  // N
  double max_displacement() const;
};

// Quasi-static equilibrium: minimizes the stored energy minus f^T u over the
// free vertices. Mesh in mm, forces in N. `initial_guess` (mm) warm-starts
// Newton; it must be zero on fixed vertices.
SolveResult solve_static(const geometry::ShellTetMesh& mesh, const MaterialParams& material, const NodalForces& forces,
                         const std::vector<int>& fixed_vertices, const SolveSettings& settings,
                         const std::vector<Vec3>* initial_guess = nullptr);

}  // namespace softshell::fem
