#include "softshell/errors.hpp"
#include "softshell/geometry.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace softshell;
using namespace softshell::geometry;

namespace {

ArmProfile small_profile() {
  ArmProfile p;
  p.n_circ = 8;
  p.n_axial = 4;
  p.n_layers = 1;
  return p;
}

double analytic_volume(const ArmProfile& p) {
  const double ro = p.outer_radius(), ri = p.inner_radius;
  return std::numbers::pi * (ro * ro - ri * ri) * p.length;
}

}  // namespace

TEST_CASE("vertex and tet counts follow the structured grid") {
  const auto p = small_profile();
  const auto m = build_shell_mesh(p);
  CHECK(m.num_vertices() == 80);
  CHECK(m.tets.size() == 192);
  const ArmProfile d;
  const auto md = build_shell_mesh(d);
  CHECK(md.num_vertices() == static_cast<std::size_t>(d.n_circ * (d.n_axial + 1) * (d.n_layers + 1)));
  CHECK(md.tets.size() == static_cast<std::size_t>(d.n_circ * d.n_axial * d.n_layers * 6));
}

TEST_CASE("every tet has positive signed volume") {
  for (const ArmProfile& p : {small_profile(), ArmProfile{}}) {
    const auto m = build_shell_mesh(p);
    double min_v = 1e300;
    for (std::size_t t = 0; t < m.tets.size(); ++t) min_v = std::min(min_v, m.signed_volume(t));
    CHECK(min_v > 0.0);
  }
}

TEST_CASE("grid vertex index formula") {
  const ArmProfile p;
  const auto m = build_shell_mesh(p);
  for (int layer : {0, p.n_layers})
    for (int axial : {0, 7, p.n_axial})
      for (int circ : {0, 5, p.n_circ - 1}) {
        const int id = grid_vertex_index(p, circ, axial, layer);
        CHECK(id == (layer * (p.n_axial + 1) + axial) * p.n_circ + circ);
        const Vec3& x = m.vertices[id];
        const double r = p.inner_radius + p.thickness * layer / p.n_layers;
        const double phi = 2.0 * std::numbers::pi * circ / p.n_circ;
        CHECK(x.x() == doctest::Approx(r * std::cos(phi)).epsilon(1e-12));
        CHECK(x.y() == doctest::Approx(r * std::sin(phi)).epsilon(1e-12));
        CHECK(x.z() == doctest::Approx(p.length * axial / p.n_axial).epsilon(1e-12));
      }
}

TEST_CASE("shell volume matches the annulus within 2 percent") {
  ArmProfile p;
  p.inner_radius = 30;
  p.thickness = 10;
  p.length = 300;
  p.n_circ = 32;
  p.n_axial = 24;
  p.n_layers = 2;
  const auto m = build_shell_mesh(p);
  const double exact = analytic_volume(p);
  CHECK(std::abs(m.total_volume() - exact) / exact < 0.02);
  CHECK(m.total_volume() == doctest::Approx(polygonal_shell_volume(p)).epsilon(1e-10));
}

TEST_CASE("volume error at least halves when resolution doubles") {
  ArmProfile p;
  p.n_circ = 16;
  p.n_axial = 8;
  p.n_layers = 1;
  const double e1 = std::abs(build_shell_mesh(p).total_volume() - analytic_volume(p));
  p.n_circ *= 2;
  p.n_axial *= 2;
  p.n_layers *= 2;
  const double e2 = std::abs(build_shell_mesh(p).total_volume() - analytic_volume(p));
  CHECK(e2 <= 0.5 * e1);
}

TEST_CASE("invalid profiles are rejected") {
  ArmProfile p;
  p.thickness = 20.0;
  CHECK_THROWS_AS(build_shell_mesh(p), ParameterError);
  p = ArmProfile{};
  p.n_circ = 7;
  CHECK_THROWS_AS(build_shell_mesh(p), ParameterError);
  p = ArmProfile{};
  p.n_axial = 3;
  CHECK_THROWS_AS(build_shell_mesh(p), ParameterError);
  p = ArmProfile{};
  p.n_layers = 0;
  CHECK_THROWS_AS(build_shell_mesh(p), ParameterError);
  p = ArmProfile{};
  p.length = -1.0;
  CHECK_THROWS_AS(build_shell_mesh(p), ParameterError);
  p = ArmProfile{};
  p.thickness = 2.5;
  CHECK_NOTHROW(build_shell_mesh(p));
  p.thickness = 12.5;
  CHECK_NOTHROW(build_shell_mesh(p));
}

TEST_CASE("surface sets and fixed vertices") {
  const ArmProfile p;
  const auto m = build_shell_mesh(p);
  std::set<int> inner(m.inner_vertex_ids.begin(), m.inner_vertex_ids.end());
  for (int v : m.outer_vertex_ids) CHECK(inner.count(v) == 0);
  CHECK(m.outer_vertex_ids.size() == static_cast<std::size_t>(p.n_circ * (p.n_axial + 1)));
  const auto fixed = m.fixed_vertex_ids();
  CHECK(std::is_sorted(fixed.begin(), fixed.end()));
  std::set<int> expect(inner);
  expect.insert(m.end_ring_vertex_ids.begin(), m.end_ring_vertex_ids.end());
  CHECK(std::vector<int>(expect.begin(), expect.end()) == fixed);
  const auto mask = m.outer_mask();
  for (std::size_t i = 0; i < mask.size(); ++i)
    CHECK(mask[i] == std::binary_search(m.outer_vertex_ids.begin(), m.outer_vertex_ids.end(), static_cast<int>(i)));
}

TEST_CASE("outer triangles close over the side wall") {
  const ArmProfile p = small_profile();
  const auto m = build_shell_mesh(p);
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : m.outer_triangles)
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  for (const auto& [e, count] : edges) {
    if (count == 1) {
      const double za = m.vertices[e.first].z(), zb = m.vertices[e.second].z();
      CHECK(za == zb);
      CHECK((za == 0.0 || za == p.length));
    } else {
      CHECK(count == 2);
    }
  }
}

TEST_CASE("uv chart is the analytic unwrap with a duplicated seam") {
  const ArmProfile p;
  const auto m = build_shell_mesh(p);
  const auto c = build_uv_chart(m, p);
  CHECK(c.size() == m.outer_vertex_ids.size() + static_cast<std::size_t>(p.n_axial + 1));
  CHECK(c.seam_pairs.size() == static_cast<std::size_t>(p.n_axial + 1));
  for (const auto& [a, b] : c.seam_pairs) {
    CHECK(c.uv[a].x() == 0.0);
    CHECK(c.uv[b].x() == 1.0);
    CHECK(c.uv[a].y() == c.uv[b].y());
    CHECK(c.mesh_vertex[a] == c.mesh_vertex[b]);
  }
  const int mid = grid_vertex_index(p, p.n_circ / 2, p.n_axial / 2, p.n_layers);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.mesh_vertex[i] == mid) {
      CHECK(c.uv[i].x() == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(c.uv[i].y() == doctest::Approx(0.5).epsilon(1e-15));
    }
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3& x = m.vertices[c.mesh_vertex[i]];
    double phi = std::atan2(x.y(), x.x());
    if (phi < 0) phi += 2.0 * std::numbers::pi;
    if (c.uv[i].x() != 1.0) CHECK(c.uv[i].x() == doctest::Approx(phi / (2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(c.uv[i].y() == doctest::Approx(x.z() / p.length).epsilon(1e-12));
  }
  for (const auto& t : c.uv_triangles) {
    const Vec2 e1 = c.uv[t[1]] - c.uv[t[0]], e2 = c.uv[t[2]] - c.uv[t[0]];
    CHECK(e1.x() * e2.y() - e1.y() * e2.x() > 0.0);
    for (int k = 0; k < 3; ++k) {
      CHECK(c.uv[t[k]].x() >= 0.0);
      CHECK(c.uv[t[k]].x() <= 1.0);
      CHECK(c.uv[t[k]].y() >= 0.0);
      CHECK(c.uv[t[k]].y() <= 1.0);
    }
    const double umax = std::max({c.uv[t[0]].x(), c.uv[t[1]].x(), c.uv[t[2]].x()});
    const double umin = std::min({c.uv[t[0]].x(), c.uv[t[1]].x(), c.uv[t[2]].x()});
    CHECK(umax - umin < 0.5);
  }
}

TEST_CASE("non-seam outer vertices have distinct uv") {
  const ArmProfile p;
  const auto m = build_shell_mesh(p);
  const auto c = build_uv_chart(m, p);
  std::set<std::pair<double, double>> seen;
  std::set<int> seam;
  for (const auto& [a, b] : c.seam_pairs) seam.insert(c.mesh_vertex[a]);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (seam.count(c.mesh_vertex[i])) continue;
    CHECK(seen.insert({c.uv[i].x(), c.uv[i].y()}).second);
  }
}

TEST_CASE("outer normals are unit, outward and radial on interior rings") {
  ArmProfile p;
  p.n_circ = 256;
  const auto m = build_shell_mesh(p);
  const auto n = outer_vertex_normals(m);
  for (int v : m.outer_vertex_ids) {
    CHECK(std::abs(n[v].norm() - 1.0) < 1e-9);
    const Vec3 radial(m.vertices[v].x(), m.vertices[v].y(), 0.0);
    CHECK(n[v].dot(radial) > 0.0);
  }
  const int axial = p.n_axial / 4;
  for (int circ = 0; circ < p.n_circ; circ += 17) {
    const int v = grid_vertex_index(p, circ, axial, p.n_layers);
    const double phi = 2.0 * std::numbers::pi * circ / p.n_circ;
    CHECK((n[v] - Vec3(std::cos(phi), std::sin(phi), 0.0)).norm() < 1e-6);
  }
}

TEST_CASE("a vertex without outer triangles is a structural error") {
  auto m = build_shell_mesh(small_profile());
  m.outer_triangles.clear();
  CHECK_THROWS_AS(outer_vertex_normals(m), StructuralError);
}

TEST_CASE("tet mesh text round trip and determinism") {
  const auto m = build_shell_mesh(small_profile());
  std::stringstream s;
  write_tet_mesh(s, m);
  const auto r = read_tet_mesh(s);
  REQUIRE(r.vertices.size() == m.vertices.size());
  CHECK(r.tets == m.tets);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-9);
  std::stringstream a, b;
  write_tet_mesh(a, build_shell_mesh(small_profile()));
  write_tet_mesh(b, build_shell_mesh(small_profile()));
  CHECK(a.str() == b.str());
}
