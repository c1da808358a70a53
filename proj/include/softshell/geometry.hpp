#pragma once

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace softshell::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Tet = std::array<int, 4>;
using Tri = std::array<int, 3>;

// Soft-layer thickness bounds (mm) shared with the image normalization.
inline constexpr double kMinThicknessMm = 2.5;
inline constexpr double kMaxThicknessMm = 12.5;

// Cylindrical arm analogue. The axis is +z, the inner ("bone") surface sits at
// inner_radius and the outer ("skin") surface at inner_radius + thickness.
struct ArmProfile {
  double length = 300.0;        // mm
  double inner_radius = 30.0;   // mm
  double thickness = 10.0;      // mm
  int n_circ = 40;
  int n_axial = 30;
  int n_layers = 2;

  double outer_radius() const { return inner_radius + thickness; }
  // Throws ParameterError naming the first violated bound.
  void validate() const;
};

struct ShellTetMesh {
  std::vector<Vec3> vertices;  // mm
  std::vector<Tet> tets;
  std::vector<int> inner_vertex_ids;
  std::vector<int> outer_vertex_ids;
  // Vertices on the two end rings (z = 0 and z = length), all layers.
  std::vector<int> end_ring_vertex_ids;
  std::vector<Tri> outer_triangles;  // oriented outward

  std::size_t num_vertices() const { return vertices.size(); }
  double signed_volume(std::size_t tet) const;
  double total_volume() const;
  // Inner surface plus end rings, sorted and unique.
  std::vector<int> fixed_vertex_ids() const;
  std::vector<bool> outer_mask() const;
};

// Chart vertices are outer mesh vertices plus one duplicate per seam vertex.
struct UVChart {
  std::vector<Vec2> uv;
  std::vector<int> mesh_vertex;  // chart vertex -> mesh vertex
  std::vector<Tri> uv_triangles;  // indices into uv
  std::vector<std::pair<int, int>> seam_pairs;  // (chart id at u=0, chart id at u=1)
  std::size_t num_mesh_vertices = 0;

  std::size_t size() const { return uv.size(); }
};

// Vertex index of ring position (circ, axial, layer) in build_shell_mesh output.
int grid_vertex_index(const ArmProfile& profile, int circ, int axial, int layer);

ShellTetMesh build_shell_mesh(const ArmProfile& profile);

UVChart build_uv_chart(const ShellTetMesh& mesh, const ArmProfile& profile);

// Area-weighted outward unit normals, indexed by mesh vertex. Entries for
// non-outer vertices are zero.
std::vector<Vec3> outer_vertex_normals(const ShellTetMesh& mesh);

// Area of each outer triangle in mm^2.
std::vector<double> outer_triangle_areas(const ShellTetMesh& mesh);

// Closed-form volume of the polygonal annular prism the mesh discretizes.
double polygonal_shell_volume(const ArmProfile& profile);

// Plain-text tet format: "v x y z" per vertex, "t i j k l" per tet, zero-based.
void write_tet_mesh(std::ostream& out, const ShellTetMesh& mesh);
ShellTetMesh read_tet_mesh(std::istream& in);

// OBJ of the outer surface. If displacements are given (mm, per mesh vertex)
// the exported positions are deformed.
void write_outer_obj(std::ostream& out, const ShellTetMesh& mesh,
                     const std::vector<Vec3>* displacements = nullptr);

// Chart as OBJ with "vt" coordinates; vertex positions are the UVs at z = 0.
void write_chart_obj(std::ostream& out, const UVChart& chart);

}  // namespace softshell::geometry
