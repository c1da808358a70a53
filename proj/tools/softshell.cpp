#include "softshell/errors.hpp"
#include "softshell/kernels.hpp"
#include "softshell/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>

namespace pl = softshell::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Soft-tissue deformation pipeline: FEM dataset generation and UNet surrogate"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, resolution;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for all randomness");
  app.add_option("--threads", threads, "worker threads for dataset generation");
  app.add_option("--resolution", resolution, "UV image resolution");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", overrides, "extra key=value override (repeatable)");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  const std::map<std::string, std::pair<std::string, std::function<void(const pl::PipelineConfig&, std::ostream&)>>>
      commands{
          {"mesh", {"build the shell mesh and UV chart", pl::cmd_mesh}},
          {"gen", {"generate, clean and split the FEM dataset", pl::cmd_gen}},
          {"train", {"train the UNet and the naive baseline", pl::cmd_train}},
          {"infer", {"predict the deformation for one patch", pl::cmd_infer}},
          {"eval", {"evaluate both models on in- and out-of-distribution sets", pl::cmd_eval}},
          {"ablate", {"unseen-thickness ablation", pl::cmd_ablate}},
          {"bench", {"FEM vs surrogate runtime comparison", pl::cmd_bench}},
      };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pl::kConfigError;
  }

  try {
    pl::PipelineConfig config = config_path.empty() ? pl::PipelineConfig{} : pl::load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw softshell::ParameterError("--set expects key=value, got '" + kv + "'");
      pl::set_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (resolution) config.resolution = *resolution;
    if (out_dir) config.out_dir = *out_dir;
    if (print_config) {
      pl::write_config(std::cout, config);
      return pl::kOk;
    }
    std::cerr << "kernels: " << softshell::kernels::to_string(softshell::kernels::active_isa()) << "\n";
    for (const auto* sub : app.get_subcommands()) commands.at(sub->get_name()).second(config, std::cerr);
    return pl::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_code_for_current_exception();
  }
}
