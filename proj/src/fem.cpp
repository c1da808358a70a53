#include "softshell/fem.hpp"

#include "softshell/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <cstdio>

namespace softshell::fem {

namespace {

constexpr double kMmToM = 1e-3;
using Mat9x12 = Eigen::Matrix<double, 9, 12>;

Mat3 edge_matrix(const TetVectors& x) {
  Mat3 m;
  m.col(0) = x[1] - x[0];
  m.col(1) = x[2] - x[0];
  m.col(2) = x[3] - x[0];
  return m;
}

Mat3 rest_inverse(const TetVectors& rest, double* volume = nullptr) {
  const Mat3 dm = edge_matrix(rest);
  const double det = dm.determinant();
  const double scale = std::pow(std::max({dm.col(0).norm(), dm.col(1).norm(), dm.col(2).norm()}), 3);
  if (!(std::abs(det) > 1e-12 * scale)) throw SingularElementError("degenerate rest tetrahedron");
  if (volume) *volume = std::abs(det) / 6.0;
  return dm.inverse();
}

// Rows are the gradients of the four linear shape functions.
Eigen::Matrix<double, 4, 3> shape_gradients(const Mat3& dm_inv) {
  Eigen::Matrix<double, 4, 3> c;
  c.row(0) = -dm_inv.colwise().sum();
  c.bottomRows<3>() = dm_inv;
  return c;
}

// V * B^T H9 B without forming B, using dF_ij/dx_ak = delta_ik c_aj.
Mat12 pull_back_hessian(const Mat9& h9, const Eigen::Matrix<double, 4, 3>& c, double volume) {
  Eigen::Matrix<double, 9, 12> t;
  for (int b = 0; b < 4; ++b)
    for (int k = 0; k < 3; ++k)
      t.col(3 * b + k) = h9.col(k) * c(b, 0) + h9.col(3 + k) * c(b, 1) + h9.col(6 + k) * c(b, 2);
  Mat12 h;
  for (int a = 0; a < 4; ++a)
    h.middleRows<3>(3 * a) =
        volume * (c(a, 0) * t.topRows<3>() + c(a, 1) * t.middleRows<3>(3) + c(a, 2) * t.bottomRows<3>());
  return h;
}

// dvec(F)/dx for the 12 nodal coordinates, vec() column major.
Mat9x12 dF_dx(const Mat3& dm_inv) {
  Mat9x12 b = Mat9x12::Zero();
  for (int j = 0; j < 3; ++j) {
    const double c0 = -(dm_inv(0, j) + dm_inv(1, j) + dm_inv(2, j));
    for (int i = 0; i < 3; ++i) {
      b(j * 3 + i, i) = c0;
      for (int a = 1; a < 4; ++a) b(j * 3 + i, 3 * a + i) = dm_inv(a - 1, j);
    }
  }
  return b;
}

Mat3 deformation_gradient_from(const Mat3& dm_inv, const TetVectors& u) {
  return Mat3::Identity() + edge_matrix(u) * dm_inv;
}

double energy_density_or_inf(const Mat3& F, const MaterialParams& m) {
  const double J = F.determinant();
  if (!(J > 0.0)) return std::numeric_limits<double>::infinity();
  const double logJ = std::log(J);
  return 0.5 * m.mu * (F.squaredNorm() - 3.0) - m.mu * logJ + 0.5 * m.lambda * logJ * logJ;
}

Vec9 flatten(const Mat3& m) { return Eigen::Map<const Vec9>(m.data()); }

// Clamp negative curvature of the 9x9 stress derivative. A PSD 9x9 block
// yields a PSD element Hessian. At rest the rotational modes sit exactly at
// zero, so the Cholesky probe allows a round-off sized shift before paying
// for the eigensolve.
Mat9 project_psd9(const Mat9& h, double scale) {
  Eigen::LLT<Mat9> llt(h + 1e-9 * scale * Mat9::Identity());
  if (llt.info() == Eigen::Success) return h;
  Eigen::SelfAdjointEigenSolver<Mat9> eig(h);
  Vec9 lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::pair<double, double> lame_from_young_poisson(double E, double nu) {
  if (!(E > 0.0)) throw ParameterError("Young's modulus must be > 0 Pa");
  if (!(nu >= 0.0)) throw ParameterError("Poisson ratio must be >= 0");
  if (!(nu < 0.5)) throw ParameterError("Poisson ratio " + num(nu) + " is incompressible (must be < 0.5)");
  const double mu = E / (2.0 * (1.0 + nu));
  const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  return {mu, lambda};
}

MaterialParams MaterialParams::from_young_poisson(double E, double nu, double density) {
  MaterialParams m;
  m.young_modulus = E;
  m.poisson_ratio = nu;
  m.density = density;
  std::tie(m.mu, m.lambda) = lame_from_young_poisson(E, nu);
  return m;
}

Mat3 deformation_gradient(const TetVectors& rest, const TetVectors& displacement) {
  return deformation_gradient_from(rest_inverse(rest), displacement);
}

double neo_hookean_energy_density(const Mat3& F, const MaterialParams& m) {
  const double psi = energy_density_or_inf(F, m);
  if (std::isinf(psi)) throw InvertedElementError("inverted element: det(F) = " + num(F.determinant()));
  return psi;
}

Mat3 neo_hookean_pk1(const Mat3& F, const MaterialParams& m) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InvertedElementError("inverted element: det(F) = " + num(J));
  const Mat3 finv_t = F.inverse().transpose();
  return m.mu * (F - finv_t) + m.lambda * std::log(J) * finv_t;
}

Mat9 neo_hookean_pk1_derivative(const Mat3& F, const MaterialParams& m) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InvertedElementError("inverted element: det(F) = " + num(J));
  const Mat3 a = F.inverse().transpose();
  const double c = m.mu - m.lambda * std::log(J);
  const Vec9 g = flatten(a);
  // dP = mu dF + (mu - lambda ln J) F^-T dF^T F^-T + lambda (F^-T : dF) F^-T.
  // For dF = e_r e_c^T the middle term is a(:, c) a(r, :).
  Mat9 h = m.mu * Mat9::Identity() + m.lambda * g * g.transpose();
  for (int col = 0; col < 3; ++col)
    for (int row = 0; row < 3; ++row)
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) h(j * 3 + i, col * 3 + row) += c * a(i, col) * a(row, j);
  return h;
}

double element_energy(const TetVectors& rest, const TetVectors& u, const MaterialParams& m) {
  double volume = 0.0;
  const Mat3 dm_inv = rest_inverse(rest, &volume);
  return volume * neo_hookean_energy_density(deformation_gradient_from(dm_inv, u), m);
}

Vec12 element_gradient(const TetVectors& rest, const TetVectors& u, const MaterialParams& m) {
  double volume = 0.0;
  const Mat3 dm_inv = rest_inverse(rest, &volume);
  const Mat3 P = neo_hookean_pk1(deformation_gradient_from(dm_inv, u), m);
  return volume * dF_dx(dm_inv).transpose() * flatten(P);
}

Mat12 element_hessian_raw(const TetVectors& rest, const TetVectors& u, const MaterialParams& m) {
  double volume = 0.0;
  const Mat3 dm_inv = rest_inverse(rest, &volume);
  const Mat9 h9 = neo_hookean_pk1_derivative(deformation_gradient_from(dm_inv, u), m);
  const Mat9x12 b = dF_dx(dm_inv);
  return volume * b.transpose() * h9 * b;
}

Mat12 element_hessian(const TetVectors& rest, const TetVectors& u, const MaterialParams& m, double eigen_floor) {
  Mat12 h = element_hessian_raw(rest, u, m);
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat12> eig(h);
  const Vec12 lam = eig.eigenvalues().cwiseMax(eigen_floor);
  Mat12 out = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

double NodalForces::total_magnitude() const {
  double s = 0.0;
  for (const auto& [id, f] : entries) s += f.norm();
  return s;
}

void SolveSettings::validate() const {
  if (!(newton_tolerance > 0.0)) throw ParameterError("newton_tolerance must be > 0");
  if (!(line_search_shrink > 0.0 && line_search_shrink < 1.0))
    throw ParameterError("line_search_shrink must lie in (0, 1)");
  if (max_newton_iters < 1) throw ParameterError("max_newton_iters must be >= 1");
  if (!(min_step > 0.0)) throw ParameterError("min_step must be > 0");
}

double SolveResult::max_displacement() const {
  double m = 0.0;
  for (const Vec3& d : displacements) m = std::max(m, d.norm());
  return m;
}

namespace {

// Sparse Newton solver state for one mesh and one set of Dirichlet vertices.
class StaticProblem {
 public:
  StaticProblem(const geometry::ShellTetMesh& mesh, const MaterialParams& material,
                const std::vector<int>& fixed)
      : mesh_(mesh), material_(material) {
    const std::size_t nv = mesh.vertices.size();
    dof_of_vertex_.assign(nv, -1);
    std::vector<bool> is_fixed(nv, false);
    for (int v : fixed) {
      if (v < 0 || static_cast<std::size_t>(v) >= nv) throw ParameterError("fixed vertex id out of range");
      is_fixed[v] = true;
    }
    int ndof = 0;
    for (std::size_t v = 0; v < nv; ++v)
      if (!is_fixed[v]) dof_of_vertex_[v] = (ndof += 3) - 3;
    ndof_ = ndof;

    const std::size_t nt = mesh.tets.size();
    dm_inv_.resize(nt);
    volume_.resize(nt);
    shape_.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      TetVectors rest;
      for (int a = 0; a < 4; ++a) rest[a] = mesh.vertices[mesh.tets[t][a]] * kMmToM;
      dm_inv_[t] = rest_inverse(rest, &volume_[t]);
      shape_[t] = shape_gradients(dm_inv_[t]);
    }
    build_pattern();
  }

  int ndof() const { return ndof_; }

  double energy(const Eigen::VectorXd& x, const Eigen::VectorXd& f) const {
    double e = 0.0;
    for (std::size_t t = 0; t < mesh_.tets.size(); ++t) {
      const double psi = energy_density_or_inf(deformation_gradient_from(dm_inv_[t], tet_displacement(x, t)), material_);
      if (std::isinf(psi)) return psi;
      e += volume_[t] * psi;
    }
    return e - f.dot(x);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& f) const {
    Eigen::VectorXd g = -f;
    for (std::size_t t = 0; t < mesh_.tets.size(); ++t) {
      const Mat3 P = neo_hookean_pk1(deformation_gradient_from(dm_inv_[t], tet_displacement(x, t)), material_);
      const Eigen::Matrix<double, 3, 4> ge = volume_[t] * P * shape_[t].transpose();
      for (int a = 0; a < 4; ++a) {
        const int d = dof_of_vertex_[mesh_.tets[t][a]];
        if (d >= 0) g.segment<3>(d) += ge.col(a);
      }
    }
    return g;
  }

  void assemble_hessian(const Eigen::VectorXd& x, bool project = true) {
    std::fill(hessian_.valuePtr(), hessian_.valuePtr() + hessian_.nonZeros(), 0.0);
    double* values = hessian_.valuePtr();
    for (std::size_t t = 0; t < mesh_.tets.size(); ++t) {
      const Mat3 F = deformation_gradient_from(dm_inv_[t], tet_displacement(x, t));
      const Mat9 h9 = project ? project_psd9(neo_hookean_pk1_derivative(F, material_), material_.mu) : neo_hookean_pk1_derivative(F, material_);
      const Mat12 he = pull_back_hessian(h9, shape_[t], volume_[t]);
      const int* slot = &slots_[t * 144];
      for (int c = 0; c < 12; ++c)
        for (int r = 0; r < 12; ++r) {
          const int s = slot[c * 12 + r];
          if (s >= 0) values[s] += he(r, c);
        }
    }
  }

  const Eigen::SparseMatrix<double>& hessian() const { return hessian_; }

  Eigen::VectorXd gather(const std::vector<Vec3>& per_vertex_m) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ndof_);
    for (std::size_t v = 0; v < per_vertex_m.size(); ++v)
      if (dof_of_vertex_[v] >= 0) x.segment<3>(dof_of_vertex_[v]) = per_vertex_m[v];
    return x;
  }

  std::vector<Vec3> scatter(const Eigen::VectorXd& x) const {
    std::vector<Vec3> out(mesh_.vertices.size(), Vec3::Zero());
    for (std::size_t v = 0; v < out.size(); ++v)
      if (dof_of_vertex_[v] >= 0) out[v] = x.segment<3>(dof_of_vertex_[v]);
    return out;
  }

  int dof(int vertex) const { return dof_of_vertex_[vertex]; }

 private:
  TetVectors tet_displacement(const Eigen::VectorXd& x, std::size_t t) const {
    TetVectors u;
    for (int a = 0; a < 4; ++a) {
      const int d = dof_of_vertex_[mesh_.tets[t][a]];
      u[a] = d >= 0 ? Vec3(x.segment<3>(d)) : Vec3::Zero();
    }
    return u;
  }

  void build_pattern() {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh_.tets.size() * 144);
    for (const auto& tet : mesh_.tets)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const int da = dof_of_vertex_[tet[a]], db = dof_of_vertex_[tet[b]];
          if (da < 0 || db < 0) continue;
          for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) triplets.emplace_back(da + i, db + k, 0.0);
        }
    hessian_.resize(ndof_, ndof_);
    hessian_.setFromTriplets(triplets.begin(), triplets.end());
    hessian_.makeCompressed();

    slots_.assign(mesh_.tets.size() * 144, -1);
    const int* outer = hessian_.outerIndexPtr();
    const int* inner = hessian_.innerIndexPtr();
    for (std::size_t t = 0; t < mesh_.tets.size(); ++t)
      for (int c = 0; c < 12; ++c)
        for (int r = 0; r < 12; ++r) {
          const int dc = dof_of_vertex_[mesh_.tets[t][c / 3]];
          const int dr = dof_of_vertex_[mesh_.tets[t][r / 3]];
          if (dc < 0 || dr < 0) continue;
          const int col = dc + c % 3, row = dr + r % 3;
          const int* pos = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
          slots_[t * 144 + c * 12 + r] = static_cast<int>(pos - inner);
        }
  }

  const geometry::ShellTetMesh& mesh_;
  MaterialParams material_;
  std::vector<int> dof_of_vertex_;
  int ndof_ = 0;
  std::vector<Mat3> dm_inv_;
  std::vector<double> volume_;
  std::vector<Eigen::Matrix<double, 4, 3>> shape_;
  std::vector<int> slots_;
  Eigen::SparseMatrix<double> hessian_;
};

}  // namespace

SolveResult solve_static(const geometry::ShellTetMesh& mesh, const MaterialParams& material,
                         const NodalForces& forces, const std::vector<int>& fixed_vertices,
                         const SolveSettings& settings, const std::vector<Vec3>* initial_guess) {
  settings.validate();
  if (fixed_vertices.empty()) throw ParameterError("at least one fixed vertex is required");
  StaticProblem problem(mesh, material, fixed_vertices);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(problem.ndof());
  for (const auto& [v, force] : forces.entries) {
    if (v < 0 || static_cast<std::size_t>(v) >= mesh.vertices.size())
      throw ParameterError("force on out-of-range vertex " + std::to_string(v));
    if (!force.allFinite()) throw ParameterError("non-finite force on vertex " + std::to_string(v));
    const int d = problem.dof(v);
    if (d < 0) continue;  // load on a Dirichlet vertex does no work
    f.segment<3>(d) += force;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(problem.ndof());
  if (initial_guess) {
    if (initial_guess->size() != mesh.vertices.size()) throw ParameterError("initial guess size mismatch");
    std::vector<Vec3> guess_m(initial_guess->size());
    for (std::size_t i = 0; i < guess_m.size(); ++i) guess_m[i] = (*initial_guess)[i] * kMmToM;
    x = problem.gather(guess_m);
    if (std::isinf(problem.energy(x, f))) x.setZero();
  }

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  bool analyzed = false;
  SolveResult result;
  Eigen::VectorXd g = problem.gradient(x, f);
  double residual = g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0;
  double e = problem.energy(x, f);
  int iter = 0;
  while (residual > settings.newton_tolerance) {
    if (iter >= settings.max_newton_iters)
      throw ConvergenceError("Newton did not converge in " + std::to_string(iter) + " iterations, residual " +
                                 num(residual) + " N",
                             residual);
    // The exact Hessian gives quadratic convergence whenever the assembled
    // system is positive definite; otherwise fall back to the projected one.
    bool projected = settings.always_project;
    problem.assemble_hessian(x, projected);
    if (!analyzed) {
      llt.analyzePattern(problem.hessian());
      analyzed = true;
    }
    llt.factorize(problem.hessian());
    if (llt.info() != Eigen::Success && !projected) {
      projected = true;
      problem.assemble_hessian(x, true);
      llt.factorize(problem.hessian());
    }
    if (llt.info() != Eigen::Success) throw ConvergenceError("projected Hessian factorization failed", residual);
    result.projected_iterations += projected;

    Eigen::VectorXd step = llt.solve(-g);
    for (int refine = 0; refine < 3; ++refine) {
      const Eigen::VectorXd r = -g - problem.hessian() * step;
      if (r.norm() <= 1e-10 * g.norm()) break;
      step += llt.solve(r);
    }
    ++iter;

    const double slope = g.dot(step);
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= settings.min_step) {
      const Eigen::VectorXd trial = x + alpha * step;
      const double e_trial = problem.energy(trial, f);
      if (std::isfinite(e_trial)) {
        if (e_trial <= e + 1e-4 * alpha * slope) {
          x = trial;
          e = e_trial;
          accepted = true;
          break;
        }
        // Near the minimum the energy decrease drowns in round-off; use the
        // residual as the merit function there.
        if (e_trial - e <= 1e-12 * std::abs(e)) {
          const Eigen::VectorXd g_trial = problem.gradient(trial, f);
          if (g_trial.lpNorm<Eigen::Infinity>() < residual) {
            x = trial;
            e = e_trial;
            accepted = true;
            break;
          }
        }
      }
      alpha *= settings.line_search_shrink;
    }
    if (!accepted)
      throw StagnationError("line search stalled below min_step, residual " + num(residual) + " N", residual);
    g = problem.gradient(x, f);
    residual = g.lpNorm<Eigen::Infinity>();
  }

  result.displacements = problem.scatter(x);
  for (Vec3& d : result.displacements) d /= kMmToM;
  result.iterations = iter;
  result.residual = residual;
  return result;
}

}  // namespace softshell::fem
