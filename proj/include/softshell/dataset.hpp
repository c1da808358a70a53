#pragma once

#include "softshell/bcgen.hpp"
#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"
#include "softshell/surrogate.hpp"
#include "softshell/uvmap.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace softshell::dataset {

inline constexpr double kMaxPressureKpa = 5.0;

struct SampleRecord {
  std::string id;
  std::string patch_set;  // "id" (training family) or "ood"
  double thickness_mm = 0.0;
  bcgen::ForcePatch patch;
  double f_total = 0.0;  // N
  uvmap::UVImage force_img;        // normalized, 1 channel
  uvmap::UVImage thickness_img;    // normalized, 1 channel
  uvmap::UVImage deformation_img;  // normalized, dx dy dz
  std::vector<geometry::Vec3> raw_displacements;  // mm, per mesh vertex
  double pressure_kpa = 0.0;
  int solver_iterations = 0;
  std::string split = "none";

  surrogate::SampleView view() const { return {&force_img, &thickness_img, &deformation_img}; }
  bool operator==(const SampleRecord&) const;
};

struct GenerationSettings {
  geometry::ArmProfile profile;  // thickness replaced per variant
  std::vector<double> thickness_variants{5.0, 6.25, 7.5, 8.75, 10.0};
  std::vector<double> forces{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  fem::MaterialParams material = fem::MaterialParams::from_young_poisson(1000.0, 0.4);
  fem::SolveSettings solver;
  uvmap::NormalizationSpec normalization;
  int resolution = 128;
  double max_pressure_kpa = kMaxPressureKpa;
  // Skip solves whose patch pressure already exceeds the limit.
  bool prefilter_pressure = true;
  std::string patch_set = "id";
  int threads = 1;
  bool verbose = false;

  void validate() const;
};

struct GenerationReport {
  std::size_t attempted = 0;
  std::size_t solved = 0;
  std::size_t failed = 0;
  std::size_t prefiltered = 0;
  std::size_t empty_patches = 0;
  std::size_t clamped_values = 0;
  double solve_seconds = 0.0;
  std::vector<std::string> messages;
};

// One meshed thickness variant; immutable and shareable across threads.
struct MeshVariant {
  double thickness_mm = 0.0;
  geometry::ArmProfile profile;
  geometry::ShellTetMesh mesh;
  geometry::UVChart chart;
  std::vector<geometry::Vec3> normals;
  std::vector<int> fixed;
};

MeshVariant build_variant(const geometry::ArmProfile& profile, double thickness_mm);

// Normalized input images for a patch on a variant.
struct InputImages {
  uvmap::UVImage force;
  uvmap::UVImage thickness;
  fem::NodalForces forces;
};
InputImages make_inputs(const MeshVariant& variant, const bcgen::ForcePatch& patch, int resolution,
                        const uvmap::NormalizationSpec& norm, uvmap::NormalizeStats* stats = nullptr);

// Normalized deformation image of per-vertex displacements (mm).
uvmap::UVImage make_deformation_image(const MeshVariant& variant, const std::vector<geometry::Vec3>& displacements,
                                      int resolution, const uvmap::NormalizationSpec& norm,
                                      uvmap::NormalizeStats* stats = nullptr);

// One FEM solve per (variant, patch, force), forces ascending with warm
// starts. Failed or empty samples are reported and skipped. Output order is
// variant, patch, force regardless of thread count.
std::vector<SampleRecord> generate_dataset(const GenerationSettings& settings,
                                           const std::vector<bcgen::ForcePatch>& patches,
                                           GenerationReport* report = nullptr);

// Keeps records with pressure <= max_kpa.
std::vector<SampleRecord> clean(std::vector<SampleRecord> records, double max_kpa = kMaxPressureKpa,
                                std::size_t* removed = nullptr);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle then partition; sizes round(train*n), round(val*n), rest.
SplitIndices split(std::size_t count, const SplitSpec& spec);
// Applies split() and writes each record's split label.
SplitIndices assign_splits(std::vector<SampleRecord>& records, const SplitSpec& spec);

std::vector<const SampleRecord*> select_split(const std::vector<SampleRecord>& records, const std::string& split);
std::vector<const SampleRecord*> filter_by_thickness(const std::vector<const SampleRecord*>& records,
                                                     const std::vector<double>& thickness_mm);
std::vector<surrogate::SampleView> views(const std::vector<const SampleRecord*>& records);

// Container: magic "SSDSET01", u32 version, u64 record count, then per record
// a length-prefixed UTF-8 metadata block of key=value lines, u32 image count
// followed by that many UVImage blocks (force, thickness, deformation), u64
// vertex count and 3 f64 per vertex.
inline constexpr std::uint32_t kDatasetVersion = 1;
void save_dataset(std::ostream& out, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> load_dataset(std::istream& in);
void save_dataset_file(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> load_dataset_file(const std::string& path);

// id,variant_mm,patch_kind,f_total_N,pressure_kPa,split
void write_manifest(std::ostream& out, const std::vector<SampleRecord>& records);

}  // namespace softshell::dataset
