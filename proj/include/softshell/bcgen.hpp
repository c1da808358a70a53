#pragma once

#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace softshell::bcgen {

enum class PatchKind { circle, ellipse, band, stamp, composite };
enum class BandProfile { constant, linear_in_v };

const char* to_string(PatchKind kind);
const char* to_string(BandProfile profile);

// Binary mask, row 0 on top (largest v).
struct StampMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;  // row major

  bool at(int col, int row) const { return cells[static_cast<std::size_t>(row) * width + col] != 0; }
};

// 5x7 block glyph for an upper-case letter A-Z. Throws ParameterError otherwise.
StampMask glyph_mask(char letter);

inline constexpr double kMaxPatchForceN = 20.0;

struct ForcePatch {
  PatchKind kind = PatchKind::circle;
  double center_u = 0.5;
  double center_v = 0.5;
  // Circle/ellipse semi-axes; band half-extent in v (radius_u unused);
  // stamp half-size of the mask box.
  double radius_u = 0.1;
  double radius_v = 0.1;
  double rotation = 0.0;  // radians, ellipses
  double f_total = 1.0;   // N
  BandProfile profile = BandProfile::constant;
  std::optional<StampMask> stamp;
  std::vector<ForcePatch> parts;  // composite only
  std::string label;

  void validate() const;
  // UV membership with u taken modulo 1.
  bool contains(double u, double v) const;
  // Copy with f_total (and, for composites, each part's share) rescaled.
  ForcePatch with_total(double newtons) const;

  // Single-line human-readable record, and its inverse.
  std::string to_record() const;
  static ForcePatch from_record(const std::string& record);
};

ForcePatch make_circle(double u, double v, double radius, double f_total);
ForcePatch make_ellipse(double u, double v, double radius_u, double radius_v, double rotation, double f_total);
ForcePatch make_band(double v_low, double v_high, BandProfile profile, double f_total);
ForcePatch make_stamp(char letter, double u, double v, double half_u, double half_v, double f_total);

// Mesh vertex ids (sorted, unique) of outer vertices inside the patch. Seam
// duplicates collapse to one physical vertex; ids listed in `exclude` (the
// Dirichlet set) are skipped. Throws EmptyPatchError if nothing is selected.
std::vector<int> select_patch_vertices(const geometry::UVChart& chart, const ForcePatch& patch,
                                       const std::vector<int>& exclude = {});

// Per-vertex forces along the inward normal. Constant profile splits f_total
// equally over the selection; linear_in_v weights by v and rescales to f_total;
// composites sum their parts, each part restricted to `selected`.
fem::NodalForces nodal_forces(const geometry::UVChart& chart, const ForcePatch& patch,
                              const std::vector<int>& selected, const std::vector<geometry::Vec3>& normals);

// f_total over the 3D area of outer triangles whose UV centroid is inside the
// patch, in kPa. Throws EmptyPatchError if that area is zero.
double patch_pressure(const ForcePatch& patch, const geometry::UVChart& chart, const geometry::ShellTetMesh& mesh);

struct TrainingPatchSpec {
  int circle_grid_u = 5;
  int circle_grid_v = 4;
  std::vector<double> circle_radii{0.2, 0.26};
  int ellipse_grid_u = 2;
  int ellipse_grid_v = 1;
  std::vector<std::pair<double, double>> ellipse_axes{{0.3, 0.2}, {0.2, 0.3}};
  std::vector<double> ellipse_rotations{0.0, 0.7853981633974483};
  int seam_grid_v = 6;
  std::vector<double> seam_radii{0.2, 0.26};

  bool empty() const;
};

// Deterministic: circles on the (u, v) grid for every radius, ellipses for
// every center/axes/rotation, then seam-centered (u = 0) circles.
// f_total is 1 N; callers rescale with with_total().
std::vector<ForcePatch> enumerate_training_patches(const TrainingPatchSpec& spec);

struct OodPatchSpec {
  int band_count = 4;           // per profile
  double band_half_width = 0.12;
  std::string letters = "AEK";
  int letter_placements = 2;    // per letter
  double letter_half_u = 0.16;
  double letter_half_v = 0.28;
  int grasp_count = 4;
};

// Bands in both profiles, letter stamps, and 4-5 finger grasp composites.
std::vector<ForcePatch> make_ood_patches(const OodPatchSpec& spec = {});

}  // namespace softshell::bcgen
