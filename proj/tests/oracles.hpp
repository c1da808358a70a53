#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests.

#include "softshell/errors.hpp"
#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"
#include "softshell/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using softshell::fem::MaterialParams;
using softshell::fem::TetVectors;
using softshell::geometry::Vec3;

struct RandomElement {
  TetVectors rest;
  TetVectors disp;
};

// Well-shaped random tet (edge scale ~ `scale`) with displacements of norm at
// most 0.1 * the shortest edge.
inline RandomElement random_element(std::mt19937_64& rng, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomElement e;
  for (;;) {
    const TetVectors ref{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    for (int a = 0; a < 4; ++a) e.rest[a] = scale * (ref[a] + 0.25 * Vec3(u(rng), u(rng), u(rng)));
    Eigen::Matrix3d D;
    for (int k = 0; k < 3; ++k) D.col(k) = e.rest[k + 1] - e.rest[0];
    if (D.determinant() > 0.05 * scale * scale * scale) break;
  }
  double min_edge = 1e300;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) min_edge = std::min(min_edge, (e.rest[a] - e.rest[b]).norm());
  for (int a = 0; a < 4; ++a) {
    Vec3 d(u(rng), u(rng), u(rng));
    d *= 0.1 * min_edge * std::abs(u(rng)) / std::max(d.norm(), 1e-300);
    e.disp[a] = d;
  }
  return e;
}

inline double element_size(const TetVectors& rest) {
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) s = std::max(s, (rest[a] - rest[b]).norm());
  return s;
}

// Relative error of the analytic element gradient against central differences
// of element_energy.
inline double gradient_fd_error(const RandomElement& e, const MaterialParams& m) {
  const auto g = softshell::fem::element_gradient(e.rest, e.disp, m);
  const double h = 1e-6 * element_size(e.rest);
  Eigen::Matrix<double, 12, 1> fd;
  for (int i = 0; i < 12; ++i) {
    TetVectors p = e.disp, q = e.disp;
    p[i / 3][i % 3] += h;
    q[i / 3][i % 3] -= h;
    fd[i] = (softshell::fem::element_energy(e.rest, p, m) - softshell::fem::element_energy(e.rest, q, m)) / (2 * h);
  }
  return (fd - g).norm() / std::max(g.norm(), 1e-300);
}

// Relative error of the pre-projection Hessian against central differences of
// element_gradient.
inline double hessian_fd_error(const RandomElement& e, const MaterialParams& m) {
  const auto H = softshell::fem::element_hessian_raw(e.rest, e.disp, m);
  const double h = 1e-6 * element_size(e.rest);
  Eigen::Matrix<double, 12, 12> fd;
  for (int i = 0; i < 12; ++i) {
    TetVectors p = e.disp, q = e.disp;
    p[i / 3][i % 3] += h;
    q[i / 3][i % 3] -= h;
    fd.col(i) =
        (softshell::fem::element_gradient(e.rest, p, m) - softshell::fem::element_gradient(e.rest, q, m)) / (2 * h);
  }
  return (fd - H).norm() / std::max(H.norm(), 1e-300);
}

// Dense-matrix Newton with backtracking on the same energy, assembled from the
// element kernels. Positions and displacements in mm, forces in N.
inline std::vector<Vec3> dense_newton(const softshell::geometry::ShellTetMesh& mesh, const MaterialParams& m,
                                      const softshell::fem::NodalForces& forces, const std::vector<int>& fixed,
                                      double tol = 1e-11, int max_iters = 200) {
  const double s = 1e-3;
  const int nv = static_cast<int>(mesh.vertices.size());
  std::vector<int> dof(nv, -1);
  std::set<int> fixed_set(fixed.begin(), fixed.end());
  int n = 0;
  for (int v = 0; v < nv; ++v)
    if (!fixed_set.count(v)) dof[v] = n++;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * n);
  for (const auto& [v, fv] : forces.entries)
    if (dof[v] >= 0) f.segment<3>(3 * dof[v]) = fv;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * n);

  auto gather = [&](const Eigen::VectorXd& xs, const softshell::geometry::Tet& t, TetVectors& rest, TetVectors& u) {
    for (int a = 0; a < 4; ++a) {
      rest[a] = mesh.vertices[t[a]] * s;
      u[a] = dof[t[a]] >= 0 ? Vec3(xs.segment<3>(3 * dof[t[a]])) : Vec3::Zero();
    }
  };
  auto energy = [&](const Eigen::VectorXd& xs) {
    double e = -f.dot(xs);
    try {
      for (const auto& t : mesh.tets) {
        TetVectors rest, u;
        gather(xs, t, rest, u);
        e += softshell::fem::element_energy(rest, u, m);
      }
    } catch (const softshell::InvertedElementError&) {
      return std::numeric_limits<double>::infinity();
    }
    return e;
  };
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd g = -f;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (const auto& t : mesh.tets) {
      TetVectors rest, u;
      gather(x, t, rest, u);
      const auto ge = softshell::fem::element_gradient(rest, u, m);
      const auto He = softshell::fem::element_hessian(rest, u, m);
      for (int a = 0; a < 4; ++a) {
        if (dof[t[a]] < 0) continue;
        g.segment<3>(3 * dof[t[a]]) += ge.segment<3>(3 * a);
        for (int b = 0; b < 4; ++b)
          if (dof[t[b]] >= 0) H.block<3, 3>(3 * dof[t[a]], 3 * dof[t[b]]) += He.block<3, 3>(3 * a, 3 * b);
      }
    }
    if (g.lpNorm<Eigen::Infinity>() <= tol) break;
    const Eigen::VectorXd step = H.ldlt().solve(-g);
    const double e0 = energy(x);
    double alpha = 1.0;
    while (alpha > 1e-12 && !(energy(x + alpha * step) <= e0 + 1e-4 * alpha * g.dot(step))) alpha *= 0.5;
    x += alpha * step;
  }
  std::vector<Vec3> out(nv, Vec3::Zero());
  for (int v = 0; v < nv; ++v)
    if (dof[v] >= 0) out[v] = x.segment<3>(3 * dof[v]) / s;
  return out;
}

// Direct nested-loop stride-2, kernel-4, padding-1 convolution. w is
// [cout, cin, 4, 4].
inline std::vector<double> conv_nested(const std::vector<double>& x, int n, int cin, int h, int w,
                                       const std::vector<double>& wt, const std::vector<double>& b, int cout) {
  const int ho = h / 2, wo = w / 2;
  std::vector<double> y(static_cast<std::size_t>(n) * cout * ho * wo, 0.0);
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b.empty() ? 0.0 : b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 4; ++ky)
              for (int kx = 0; kx < 4; ++kx) {
                const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += wt[((co * cin + ci) * 4 + ky) * 4 + kx] * x[((i * cin + ci) * h + iy) * w + ix];
              }
          y[((i * cout + co) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

// Direct scatter form of the transposed convolution. w is [cin, cout, 4, 4].
inline std::vector<double> tconv_nested(const std::vector<double>& x, int n, int cin, int h, int w,
                                        const std::vector<double>& wt, const std::vector<double>& b, int cout) {
  const int ho = h * 2, wo = w * 2;
  std::vector<double> y(static_cast<std::size_t>(n) * cout * ho * wo, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int co = 0; co < cout; ++co)
      for (int p = 0; p < ho * wo; ++p) y[(i * cout + co) * ho * wo + p] = b.empty() ? 0.0 : b[co];
    for (int ci = 0; ci < cin; ++ci)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix)
          for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < 4; ++ky)
              for (int kx = 0; kx < 4; ++kx) {
                const int oy = 2 * iy - 1 + ky, ox = 2 * ix - 1 + kx;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                y[((i * cout + co) * ho + oy) * wo + ox] +=
                    wt[((ci * cout + co) * 4 + ky) * 4 + kx] * x[((i * cin + ci) * h + iy) * w + ix];
              }
  }
  return y;
}

struct BruteMetrics {
  double mae_x = 0, mae_y = 0, mae_z = 0, mee = 0;
  double mae_x_std = 0, mee_std = 0;
  std::array<double, 5> ee{};
};

// Straight-line recomputation: per-sample means over masked vertices, then
// mean and population std over samples; EE ratios pooled over all vertices.
inline BruteMetrics brute_metrics(const std::vector<std::vector<Vec3>>& pred, const std::vector<std::vector<Vec3>>& gt,
                                  const std::vector<std::vector<int>>& masks) {
  const double th[5] = {0.1, 0.125, 0.15, 0.2, 0.5};
  BruteMetrics r;
  std::vector<double> sx, sy, sz, se;
  double hits[5] = {0, 0, 0, 0, 0};
  double total = 0;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    if (masks[s].empty()) continue;
    double ax = 0, ay = 0, az = 0, ae = 0;
    for (int v : masks[s]) {
      const double dx = pred[s][v][0] - gt[s][v][0];
      const double dy = pred[s][v][1] - gt[s][v][1];
      const double dz = pred[s][v][2] - gt[s][v][2];
      ax += std::fabs(dx);
      ay += std::fabs(dy);
      az += std::fabs(dz);
      const double e = std::sqrt(dx * dx + dy * dy + dz * dz);
      ae += e;
      for (int k = 0; k < 5; ++k) hits[k] += e <= th[k] ? 1 : 0;
      total += 1;
    }
    const double c = static_cast<double>(masks[s].size());
    sx.push_back(ax / c);
    sy.push_back(ay / c);
    sz.push_back(az / c);
    se.push_back(ae / c);
  }
  auto mean = [](const std::vector<double>& v) {
    double a = 0;
    for (double x : v) a += x;
    return a / static_cast<double>(v.size());
  };
  auto stdev = [&](const std::vector<double>& v) {
    const double mu = mean(v);
    double a = 0;
    for (double x : v) a += (x - mu) * (x - mu);
    return std::sqrt(a / static_cast<double>(v.size()));
  };
  r.mae_x = mean(sx);
  r.mae_y = mean(sy);
  r.mae_z = mean(sz);
  r.mee = mean(se);
  r.mae_x_std = stdev(sx);
  r.mee_std = stdev(se);
  for (int k = 0; k < 5; ++k) r.ee[k] = hits[k] / total;
  return r;
}

// Smooth random per-vertex field on the outer surface: a few low-order
// harmonics in angle and axial position.
inline std::vector<Vec3> smooth_field(const softshell::geometry::ShellTetMesh& mesh, double length,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::array<std::array<double, 6>, 3> c;
  for (auto& row : c)
    for (auto& x : row) x = u(rng);
  std::vector<Vec3> out(mesh.vertices.size(), Vec3::Zero());
  for (int v : mesh.outer_vertex_ids) {
    const Vec3& p = mesh.vertices[v];
    const double phi = std::atan2(p.y(), p.x());
    const double z = p.z() / length;
    for (int k = 0; k < 3; ++k)
      out[v][k] = c[k][0] + c[k][1] * std::cos(phi) + c[k][2] * std::sin(phi) + c[k][3] * std::sin(M_PI * z) +
                  c[k][4] * std::cos(2 * phi) * z + c[k][5] * z * z;
  }
  return out;
}

}  // namespace oracle
