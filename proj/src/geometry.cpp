#include "softshell/geometry.hpp"

#include "softshell/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace softshell::geometry {

namespace {

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

}  // namespace

void ArmProfile::validate() const {
  if (!(length > 0.0)) throw ParameterError("arm length must be > 0 mm, got " + fmt_double(length));
  if (!(inner_radius > 0.0))
    throw ParameterError("inner radius must be > 0 mm, got " + fmt_double(inner_radius));
  if (!(thickness > 0.0)) throw ParameterError("thickness must be > 0 mm, got " + fmt_double(thickness));
  if (thickness < kMinThicknessMm || thickness > kMaxThicknessMm)
    throw ParameterError("thickness " + fmt_double(thickness) + " mm is outside the [2.5, 12.5] mm range");
  if (n_circ < 8) throw ParameterError("n_circ must be >= 8, got " + std::to_string(n_circ));
  if (n_axial < 4) throw ParameterError("n_axial must be >= 4, got " + std::to_string(n_axial));
  if (n_layers < 1) throw ParameterError("n_layers must be >= 1, got " + std::to_string(n_layers));
}

int grid_vertex_index(const ArmProfile& p, int circ, int axial, int layer) {
  return (layer * (p.n_axial + 1) + axial) * p.n_circ + circ;
}

double ShellTetMesh::signed_volume(std::size_t t) const {
  const Tet& e = tets[t];
  return tet_signed_volume(vertices[e[0]], vertices[e[1]], vertices[e[2]], vertices[e[3]]);
}

double ShellTetMesh::total_volume() const {
  double v = 0.0;
  for (std::size_t t = 0; t < tets.size(); ++t) v += signed_volume(t);
  return v;
}

std::vector<int> ShellTetMesh::fixed_vertex_ids() const {
  std::vector<int> ids = inner_vertex_ids;
  ids.insert(ids.end(), end_ring_vertex_ids.begin(), end_ring_vertex_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<bool> ShellTetMesh::outer_mask() const {
  std::vector<bool> mask(vertices.size(), false);
  for (int v : outer_vertex_ids) mask[v] = true;
  return mask;
}

ShellTetMesh build_shell_mesh(const ArmProfile& p) {
  p.validate();
  ShellTetMesh mesh;
  const int nc = p.n_circ, na = p.n_axial, nl = p.n_layers;
  mesh.vertices.reserve(static_cast<std::size_t>(nc) * (na + 1) * (nl + 1));
  for (int l = 0; l <= nl; ++l) {
    const double r = p.inner_radius + p.thickness * static_cast<double>(l) / nl;
    for (int k = 0; k <= na; ++k) {
      const double z = p.length * static_cast<double>(k) / na;
      for (int j = 0; j < nc; ++j) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / nc;
        mesh.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
      }
    }
  }

  // Freudenthal split of each hex cell around its main diagonal. Cells in the
  // upper axial half use the pattern reflected in k so the mesh is symmetric
  // about the mid-plane z = length/2.
  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  mesh.tets.reserve(static_cast<std::size_t>(nc) * na * nl * 6);
  for (int l = 0; l < nl; ++l) {
    for (int k = 0; k < na; ++k) {
      const bool mirrored = 2 * k >= na;
      for (int j = 0; j < nc; ++j) {
        auto corner = [&](std::array<int, 3> d) {
          const int jj = (j + d[0]) % nc;
          const int kk = k + (mirrored ? 1 - d[1] : d[1]);
          return grid_vertex_index(p, jj, kk, l + d[2]);
        };
        for (const auto& perm : kPerms) {
          std::array<int, 3> d{0, 0, 0};
          Tet t;
          t[0] = corner(d);
          d[perm[0]] = 1;
          t[1] = corner(d);
          d[perm[1]] = 1;
          t[2] = corner(d);
          d[perm[2]] = 1;
          t[3] = corner(d);
          if (tet_signed_volume(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                                mesh.vertices[t[3]]) < 0.0)
            std::swap(t[2], t[3]);
          mesh.tets.push_back(t);
        }
      }
    }
  }

  for (int k = 0; k <= na; ++k)
    for (int j = 0; j < nc; ++j) {
      mesh.inner_vertex_ids.push_back(grid_vertex_index(p, j, k, 0));
      mesh.outer_vertex_ids.push_back(grid_vertex_index(p, j, k, nl));
    }
  for (int l = 0; l <= nl; ++l)
    for (int k : {0, na})
      for (int j = 0; j < nc; ++j) mesh.end_ring_vertex_ids.push_back(grid_vertex_index(p, j, k, l));
  std::sort(mesh.end_ring_vertex_ids.begin(), mesh.end_ring_vertex_ids.end());

  // Outer triangles are the tet faces whose vertices all lie on the outer layer.
  const int first_outer = grid_vertex_index(p, 0, 0, nl);
  static constexpr int kFaces[4][4] = {{1, 2, 3, 0}, {0, 3, 2, 1}, {0, 1, 3, 2}, {0, 2, 1, 3}};
  for (const Tet& t : mesh.tets) {
    for (const auto& f : kFaces) {
      Tri tri{t[f[0]], t[f[1]], t[f[2]]};
      if (tri[0] < first_outer || tri[1] < first_outer || tri[2] < first_outer) continue;
      const Vec3& a = mesh.vertices[tri[0]];
      const Vec3 n = (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a);
      if (n.dot(mesh.vertices[t[f[3]]] - a) > 0.0) std::swap(tri[1], tri[2]);
      mesh.outer_triangles.push_back(tri);
    }
  }
  return mesh;
}

UVChart build_uv_chart(const ShellTetMesh& mesh, const ArmProfile& p) {
  p.validate();
  const int nc = p.n_circ, na = p.n_axial;
  if (mesh.vertices.size() != static_cast<std::size_t>(nc) * (na + 1) * (p.n_layers + 1))
    throw StructuralError("mesh does not match the arm profile");
  UVChart chart;
  chart.num_mesh_vertices = mesh.vertices.size();
  const int row = nc + 1;
  chart.uv.reserve(static_cast<std::size_t>(row) * (na + 1));
  for (int k = 0; k <= na; ++k) {
    const double v = static_cast<double>(k) / na;
    for (int j = 0; j <= nc; ++j) {
      chart.uv.emplace_back(static_cast<double>(j) / nc, v);
      chart.mesh_vertex.push_back(grid_vertex_index(p, j % nc, k, p.n_layers));
    }
    chart.seam_pairs.emplace_back(k * row, k * row + nc);
  }

  const int first_outer = grid_vertex_index(p, 0, 0, p.n_layers);
  for (const Tri& t : mesh.outer_triangles) {
    std::array<int, 3> js, ks;
    bool touches_last_column = false;
    for (int i = 0; i < 3; ++i) {
      const int local = t[i] - first_outer;
      js[i] = local % nc;
      ks[i] = local / nc;
      touches_last_column |= js[i] == nc - 1;
    }
    Tri uvt;
    for (int i = 0; i < 3; ++i) {
      const int j = (touches_last_column && js[i] == 0) ? nc : js[i];
      uvt[i] = ks[i] * row + j;
    }
    // Outward 3D orientation maps to clockwise in (u, v); store counter-clockwise.
    const Vec2 e1 = chart.uv[uvt[1]] - chart.uv[uvt[0]];
    const Vec2 e2 = chart.uv[uvt[2]] - chart.uv[uvt[0]];
    if (e1.x() * e2.y() - e1.y() * e2.x() < 0.0) std::swap(uvt[1], uvt[2]);
    chart.uv_triangles.push_back(uvt);
  }
  return chart;
}

std::vector<Vec3> outer_vertex_normals(const ShellTetMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
  for (const Tri& t : mesh.outer_triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    // |cross| is twice the triangle area, so this sum is area weighted.
    const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
    for (int v : t) normals[v] += n;
  }
  for (int v : mesh.outer_vertex_ids) {
    Vec3& n = normals[v];
    const double len = n.norm();
    if (!(len > 0.0)) throw StructuralError("outer vertex " + std::to_string(v) + " has no incident outer triangle");
    n /= len;
    const Vec3& x = mesh.vertices[v];
    if (n.x() * x.x() + n.y() * x.y() < 0.0) n = -n;
  }
  return normals;
}

std::vector<double> outer_triangle_areas(const ShellTetMesh& mesh) {
  std::vector<double> areas;
  areas.reserve(mesh.outer_triangles.size());
  for (const Tri& t : mesh.outer_triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    areas.push_back(0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm());
  }
  return areas;
}

double polygonal_shell_volume(const ArmProfile& p) {
  const double ro = p.outer_radius();
  const double ri = p.inner_radius;
  return 0.5 * p.n_circ * std::sin(2.0 * std::numbers::pi / p.n_circ) * (ro * ro - ri * ri) * p.length;
}

void write_tet_mesh(std::ostream& out, const ShellTetMesh& mesh) {
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Tet& t : mesh.tets) out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
}

ShellTetMesh read_tet_mesh(std::istream& in) {
  ShellTetMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    std::string tag;
    s >> tag;
    if (tag == "v") {
      Vec3 v;
      s >> v.x() >> v.y() >> v.z();
      if (!s) throw StructuralError("bad vertex on line " + std::to_string(lineno));
      mesh.vertices.push_back(v);
    } else if (tag == "t") {
      Tet t;
      s >> t[0] >> t[1] >> t[2] >> t[3];
      if (!s) throw StructuralError("bad tet on line " + std::to_string(lineno));
      mesh.tets.push_back(t);
    } else {
      throw StructuralError("unknown record '" + tag + "' on line " + std::to_string(lineno));
    }
  }
  for (const Tet& t : mesh.tets)
    for (int i : t)
      if (i < 0 || static_cast<std::size_t>(i) >= mesh.vertices.size())
        throw StructuralError("tet index out of range: " + std::to_string(i));
  return mesh;
}

void write_outer_obj(std::ostream& out, const ShellTetMesh& mesh, const std::vector<Vec3>* displacements) {
  out.precision(10);
  // OBJ indices are global and one-based; export every vertex so ids match the tet file.
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    Vec3 x = mesh.vertices[i];
    if (displacements) x += (*displacements)[i];
    out << "v " << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  }
  for (const Tri& t : mesh.outer_triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void write_chart_obj(std::ostream& out, const UVChart& chart) {
  out.precision(10);
  for (const Vec2& uv : chart.uv) out << "v " << uv.x() << ' ' << uv.y() << " 0\n";
  for (const Vec2& uv : chart.uv) out << "vt " << uv.x() << ' ' << uv.y() << '\n';
  for (const Tri& t : chart.uv_triangles)
    out << "f " << t[0] + 1 << '/' << t[0] + 1 << ' ' << t[1] + 1 << '/' << t[1] + 1 << ' ' << t[2] + 1 << '/'
        << t[2] + 1 << '\n';
}

}  // namespace softshell::geometry
