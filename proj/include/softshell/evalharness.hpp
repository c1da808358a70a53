#pragma once

#include "softshell/bcgen.hpp"
#include "softshell/dataset.hpp"
#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"
#include "softshell/surrogate.hpp"
#include "softshell/uvmap.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace softshell::eval {

inline constexpr double kActiveThresholdMm = 0.001;
inline constexpr std::array<double, 5> kEeThresholds{0.1, 0.125, 0.15, 0.2, 0.5};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(const std::vector<double>& values);

enum class EeMode { pooled, per_sample };

struct MetricsReport {
  MeanStd mae_x, mae_y, mae_z;  // mm, over samples
  MeanStd mee;                  // mm, over samples
  std::array<double, 5> ee_ratios{};
  std::size_t sample_count = 0;
  std::size_t excluded = 0;  // samples with an empty active mask
  double mean_max_deformation = 0.0;  // mm, mean over samples of max |gt| on the mask

  // MEE over mean maximum ground-truth deformation.
  double relative_error() const;
};

// Vertices whose ground-truth displacement magnitude exceeds 0.001 mm. If
// `candidates` is given only those vertices are considered.
std::vector<int> active_mask(const std::vector<geometry::Vec3>& gt, const std::vector<bool>* candidates = nullptr);

struct VertexError {
  std::string sample_id;
  int vertex = 0;
  double error = 0.0;  // mm
};

// Samples with an empty mask are skipped, counted in `excluded` and, if
// `warnings` is given, reported there. Throws DataError when nothing remains.
MetricsReport compute_metrics(const std::vector<std::vector<geometry::Vec3>>& predictions,
                              const std::vector<std::vector<geometry::Vec3>>& ground_truth,
                              const std::vector<std::vector<int>>& masks, EeMode mode = EeMode::pooled,
                              std::vector<std::string>* warnings = nullptr);

// Meshed variants keyed by thickness.
struct EvalContext {
  std::vector<dataset::MeshVariant> variants;
  uvmap::NormalizationSpec normalization;

  static EvalContext build(const geometry::ArmProfile& profile, const std::vector<double>& thickness_mm,
                           const uvmap::NormalizationSpec& norm = {});
  const dataset::MeshVariant& variant_for(double thickness_mm) const;
};

// Maps a record to a normalized (dx, dy, dz) deformation image.
using Predictor = std::function<uvmap::UVImage(const dataset::SampleRecord&)>;

Predictor unet_predictor(surrogate::UNet<float>& model);
Predictor naive_predictor(const surrogate::NaiveParams& params);

// Denormalized per-mesh-vertex displacements (mm) of a predicted image.
std::vector<geometry::Vec3> backmap_prediction(const uvmap::UVImage& normalized, const dataset::MeshVariant& variant,
                                               const uvmap::NormalizationSpec& norm);

// Metrics of back-mapped predictions against raw FEM displacements on the
// active outer vertices.
MetricsReport evaluate(const std::vector<const dataset::SampleRecord*>& records, const Predictor& predictor,
                       const EvalContext& ctx, EeMode mode = EeMode::pooled,
                       std::vector<VertexError>* dump = nullptr, std::vector<std::string>* warnings = nullptr);

void write_error_dump(std::ostream& out, const std::vector<VertexError>& rows);

struct NamedReport {
  std::string name;
  MetricsReport report;
};

struct AblationConfig {
  std::vector<double> train_thickness{10.0, 7.5, 5.0};
  std::vector<double> unseen_thickness{8.75, 6.25};
  surrogate::UNetConfig unet;
  surrogate::TrainConfig train;
  EeMode mode = EeMode::pooled;
};

struct AblationResult {
  // id-seen, id-unseen, ood-seen, ood-unseen
  std::vector<NamedReport> partitions;
  std::vector<surrogate::LossRecord> history;
  surrogate::UNet<float> model;
};

// Trains on the train/val splits of `id_records` restricted to the training
// thicknesses, then evaluates the test split of `id_records` and all of
// `ood_records`, each separated into seen and unseen thicknesses.
AblationResult run_ablation(const std::vector<dataset::SampleRecord>& id_records,
                            const std::vector<dataset::SampleRecord>& ood_records, const EvalContext& ctx,
                            const AblationConfig& config);

struct Timing {
  double mean = 0.0;  // s
  double std = 0.0;   // s
  int repetitions = 0;
};

struct BenchmarkReport {
  Timing fem;
  Timing surrogate;
  double speedup = 0.0;  // fem mean / surrogate mean
  double fem_max_displacement = 0.0;
};

// FEM: one cold-started static solve. Surrogate: network inference on
// prepared input images plus back-mapping to the mesh. Input preparation and
// model loading are excluded from both.
BenchmarkReport runtime_benchmark(const dataset::MeshVariant& variant, const bcgen::ForcePatch& patch,
                                  const fem::MaterialParams& material, const fem::SolveSettings& solver,
                                  surrogate::UNet<float>& model, const uvmap::NormalizationSpec& norm, int resolution,
                                  int repetitions = 20);

// Aligned text table: row name, MAE dx, MAE dy, MAE dz, MEE (mean +- std in
// mm), then EE ratios as percentages. Throws ParameterError when empty.
std::string render_table(const std::vector<NamedReport>& reports);
// CSV with one row per report, fixed 6-decimal values.
std::string render_csv(const std::vector<NamedReport>& reports);
std::string render_benchmark(const BenchmarkReport& report);

}  // namespace softshell::eval
