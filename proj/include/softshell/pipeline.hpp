#pragma once

#include "softshell/bcgen.hpp"
#include "softshell/dataset.hpp"
#include "softshell/evalharness.hpp"
#include "softshell/fem.hpp"
#include "softshell/geometry.hpp"
#include "softshell/surrogate.hpp"
#include "softshell/uvmap.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace softshell::pipeline {

// Every tunable of the pipeline. One key per field in the text format; see
// config_keys().
struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";

  geometry::ArmProfile profile;
  double young_modulus = 1000.0;  // Pa
  double poisson_ratio = 0.4;
  fem::SolveSettings solver;
  uvmap::NormalizationSpec normalization;

  bcgen::TrainingPatchSpec patches;
  std::size_t patch_limit = 0;  // 0: all enumerated training patches
  bcgen::OodPatchSpec ood;
  bool generate_ood = true;

  std::vector<double> thickness_variants{5.0, 6.25, 7.5, 8.75, 10.0};
  std::vector<double> forces{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> ood_forces{2, 5, 8};
  int resolution = 128;
  double max_pressure_kpa = dataset::kMaxPressureKpa;
  dataset::SplitSpec split;

  surrogate::UNetConfig unet;
  surrogate::TrainConfig train;
  surrogate::NaiveFitConfig naive;

  eval::EeMode ee_mode = eval::EeMode::pooled;
  bool dump_errors = false;

  std::string infer_patch = "kind=circle center=0.5,0.5 radii=0.2,0.2 rotation=0 f_total=5";
  double infer_thickness = 10.0;
  std::string infer_model = "unet";

  double bench_thickness = 10.0;
  double bench_force = 10.0;
  int bench_repetitions = 20;

  fem::MaterialParams material() const;
  dataset::GenerationSettings generation(const std::string& patch_set) const;
  void validate() const;
};

// Sorted list of accepted keys.
std::vector<std::string> config_keys();

// "key = value" lines; '#' starts a comment. Unknown or repeated keys and
// unparsable values throw ParameterError naming the line.
PipelineConfig parse_config(std::istream& in, const std::string& source = "<config>");
PipelineConfig load_config(const std::string& path);
void set_value(PipelineConfig& config, const std::string& key, const std::string& value);
// Canonical text form; parse_config(write_config(c)) == c field by field.
void write_config(std::ostream& out, const PipelineConfig& config);

// Output file names inside out_dir.
struct Paths {
  std::string dir;
  std::string file(const std::string& name) const;
};

// Each command writes into config.out_dir and logs progress to `log`.
void cmd_mesh(const PipelineConfig& config, std::ostream& log);
void cmd_gen(const PipelineConfig& config, std::ostream& log);
void cmd_train(const PipelineConfig& config, std::ostream& log);
void cmd_infer(const PipelineConfig& config, std::ostream& log);
void cmd_eval(const PipelineConfig& config, std::ostream& log);
void cmd_ablate(const PipelineConfig& config, std::ostream& log);
void cmd_bench(const PipelineConfig& config, std::ostream& log);

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kConvergenceError = 4, kIoError = 5 };

// Exit code of the exception currently being handled.
int exit_code_for_current_exception();

}  // namespace softshell::pipeline
