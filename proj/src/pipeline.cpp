#include "softshell/pipeline.hpp"

#include "softshell/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace softshell::pipeline {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(d))
    throw ParameterError("'" + key + "' expects a number, got '" + v + "'");
  return d;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ParameterError("'" + key + "' expects an integer, got '" + v + "'");
  return i;
}

int parse_small_int(const std::string& key, const std::string& v) {
  const long long i = parse_int(key, v);
  if (i < -1000000000LL || i > 1000000000LL) throw ParameterError("'" + key + "' is out of range");
  return static_cast<int>(i);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long u = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    u = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ParameterError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return u;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParameterError("'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::pair<double, double>> parse_pairs(const std::string& key, const std::string& v) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : split_list(v)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParameterError("'" + key + "' expects a:b pairs, got '" + item + "'");
    out.emplace_back(parse_double(key, trim(item.substr(0, colon))), parse_double(key, trim(item.substr(colon + 1))));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i]);
  return s;
}

std::string join(const std::vector<std::pair<double, double>>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i].first) + ":" + fmt17(v[i].second);
  return s;
}

std::string to_text(bool b) { return b ? "true" : "false"; }

struct Key {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename F>
Key dbl(F field) {
  return {[field](PipelineConfig& c, const std::string& k, const std::string& v) { field(c) = parse_double(k, v); },
          [field](const PipelineConfig& c) { return fmt17(field(const_cast<PipelineConfig&>(c))); }};
}

template <typename F>
Key integer(F field) {
  return {[field](PipelineConfig& c, const std::string& k, const std::string& v) { field(c) = parse_small_int(k, v); },
          [field](const PipelineConfig& c) { return std::to_string(field(const_cast<PipelineConfig&>(c))); }};
}

template <typename F>
Key boolean(F field) {
  return {[field](PipelineConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); },
          [field](const PipelineConfig& c) { return to_text(field(const_cast<PipelineConfig&>(c))); }};
}

template <typename F>
Key doubles(F field) {
  return {[field](PipelineConfig& c, const std::string& k, const std::string& v) { field(c) = parse_doubles(k, v); },
          [field](const PipelineConfig& c) { return join(field(const_cast<PipelineConfig&>(c))); }};
}

template <typename F>
Key text(F field) {
  return {[field](PipelineConfig& c, const std::string&, const std::string& v) { field(c) = v; },
          [field](const PipelineConfig& c) { return field(const_cast<PipelineConfig&>(c)); }};
}

Key range_key(uvmap::ChannelRange uvmap::NormalizationSpec::*range, bool upper) {
  return {[range, upper](PipelineConfig& c, const std::string& k, const std::string& v) {
            auto& r = c.normalization.*range;
            (upper ? r.physical_max : r.physical_min) = parse_double(k, v);
          },
          [range, upper](const PipelineConfig& c) {
            const auto& r = c.normalization.*range;
            return fmt17(upper ? r.physical_max : r.physical_min);
          }};
}

const std::map<std::string, Key>& key_table() {
  using C = PipelineConfig;
  static const std::map<std::string, Key> table = {
      {"seed", {[](C& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                [](const C& c) { return std::to_string(c.seed); }}},
      {"threads", integer([](C& c) -> int& { return c.threads; })},
      {"out", text([](C& c) -> std::string& { return c.out_dir; })},
      {"geometry.length", dbl([](C& c) -> double& { return c.profile.length; })},
      {"geometry.inner_radius", dbl([](C& c) -> double& { return c.profile.inner_radius; })},
      {"geometry.thickness", dbl([](C& c) -> double& { return c.profile.thickness; })},
      {"geometry.n_circ", integer([](C& c) -> int& { return c.profile.n_circ; })},
      {"geometry.n_axial", integer([](C& c) -> int& { return c.profile.n_axial; })},
      {"geometry.n_layers", integer([](C& c) -> int& { return c.profile.n_layers; })},
      {"material.young_modulus_pa", dbl([](C& c) -> double& { return c.young_modulus; })},
      {"material.poisson_ratio", dbl([](C& c) -> double& { return c.poisson_ratio; })},
      {"solver.newton_tolerance", dbl([](C& c) -> double& { return c.solver.newton_tolerance; })},
      {"solver.max_newton_iters", integer([](C& c) -> int& { return c.solver.max_newton_iters; })},
      {"solver.line_search_shrink", dbl([](C& c) -> double& { return c.solver.line_search_shrink; })},
      {"solver.min_step", dbl([](C& c) -> double& { return c.solver.min_step; })},
      {"solver.always_project", boolean([](C& c) -> bool& { return c.solver.always_project; })},
      {"norm.force_min_n", range_key(&uvmap::NormalizationSpec::force, false)},
      {"norm.force_max_n", range_key(&uvmap::NormalizationSpec::force, true)},
      {"norm.thickness_min_mm", range_key(&uvmap::NormalizationSpec::thickness, false)},
      {"norm.thickness_max_mm", range_key(&uvmap::NormalizationSpec::thickness, true)},
      {"norm.deformation_min_mm", range_key(&uvmap::NormalizationSpec::deformation, false)},
      {"norm.deformation_max_mm", range_key(&uvmap::NormalizationSpec::deformation, true)},
      {"patches.circle_grid_u", integer([](C& c) -> int& { return c.patches.circle_grid_u; })},
      {"patches.circle_grid_v", integer([](C& c) -> int& { return c.patches.circle_grid_v; })},
      {"patches.circle_radii", doubles([](C& c) -> std::vector<double>& { return c.patches.circle_radii; })},
      {"patches.ellipse_grid_u", integer([](C& c) -> int& { return c.patches.ellipse_grid_u; })},
      {"patches.ellipse_grid_v", integer([](C& c) -> int& { return c.patches.ellipse_grid_v; })},
      {"patches.ellipse_axes", {[](C& c, const std::string& k, const std::string& v) {
                                  c.patches.ellipse_axes = parse_pairs(k, v);
                                },
                                [](const C& c) { return join(c.patches.ellipse_axes); }}},
      {"patches.ellipse_rotations",
       doubles([](C& c) -> std::vector<double>& { return c.patches.ellipse_rotations; })},
      {"patches.seam_grid_v", integer([](C& c) -> int& { return c.patches.seam_grid_v; })},
      {"patches.seam_radii", doubles([](C& c) -> std::vector<double>& { return c.patches.seam_radii; })},
      {"patches.limit", {[](C& c, const std::string& k, const std::string& v) { c.patch_limit = parse_u64(k, v); },
                         [](const C& c) { return std::to_string(c.patch_limit); }}},
      {"ood.enabled", boolean([](C& c) -> bool& { return c.generate_ood; })},
      {"ood.band_count", integer([](C& c) -> int& { return c.ood.band_count; })},
      {"ood.band_half_width", dbl([](C& c) -> double& { return c.ood.band_half_width; })},
      {"ood.letters", text([](C& c) -> std::string& { return c.ood.letters; })},
      {"ood.letter_placements", integer([](C& c) -> int& { return c.ood.letter_placements; })},
      {"ood.letter_half_u", dbl([](C& c) -> double& { return c.ood.letter_half_u; })},
      {"ood.letter_half_v", dbl([](C& c) -> double& { return c.ood.letter_half_v; })},
      {"ood.grasp_count", integer([](C& c) -> int& { return c.ood.grasp_count; })},
      {"ood.forces", doubles([](C& c) -> std::vector<double>& { return c.ood_forces; })},
      {"dataset.thickness_variants", doubles([](C& c) -> std::vector<double>& { return c.thickness_variants; })},
      {"dataset.forces", doubles([](C& c) -> std::vector<double>& { return c.forces; })},
      {"dataset.resolution", integer([](C& c) -> int& { return c.resolution; })},
      {"dataset.max_pressure_kpa", dbl([](C& c) -> double& { return c.max_pressure_kpa; })},
      {"split.train", dbl([](C& c) -> double& { return c.split.train; })},
      {"split.val", dbl([](C& c) -> double& { return c.split.val; })},
      {"split.test", dbl([](C& c) -> double& { return c.split.test; })},
      {"unet.base_channels", integer([](C& c) -> int& { return c.unet.base_channels; })},
      {"unet.depth", integer([](C& c) -> int& { return c.unet.depth; })},
      {"unet.dropout", dbl([](C& c) -> double& { return c.unet.dropout_rate; })},
      {"unet.leaky_slope", dbl([](C& c) -> double& { return c.unet.leaky_slope; })},
      {"train.epochs", integer([](C& c) -> int& { return c.train.epochs; })},
      {"train.batch_size", integer([](C& c) -> int& { return c.train.batch_size; })},
      {"train.lr", dbl([](C& c) -> double& { return c.train.lr; })},
      {"train.tv_weight", dbl([](C& c) -> double& { return c.train.tv_weight; })},
      {"train.max_steps", {[](C& c, const std::string& k, const std::string& v) { c.train.max_steps = parse_int(k, v); },
                           [](const C& c) { return std::to_string(c.train.max_steps); }}},
      {"train.verbose", boolean([](C& c) -> bool& { return c.train.verbose; })},
      {"naive.lr", dbl([](C& c) -> double& { return c.naive.lr; })},
      {"naive.epochs", integer([](C& c) -> int& { return c.naive.epochs; })},
      {"naive.batch_size", integer([](C& c) -> int& { return c.naive.batch_size; })},
      {"eval.ee_mode", {[](C& c, const std::string& k, const std::string& v) {
                          if (v == "pooled")
                            c.ee_mode = eval::EeMode::pooled;
                          else if (v == "per_sample")
                            c.ee_mode = eval::EeMode::per_sample;
                          else
                            throw ParameterError("'" + k + "' expects pooled or per_sample, got '" + v + "'");
                        },
                        [](const C& c) {
                          return std::string(c.ee_mode == eval::EeMode::pooled ? "pooled" : "per_sample");
                        }}},
      {"eval.dump_errors", boolean([](C& c) -> bool& { return c.dump_errors; })},
      {"infer.patch", text([](C& c) -> std::string& { return c.infer_patch; })},
      {"infer.thickness", dbl([](C& c) -> double& { return c.infer_thickness; })},
      {"infer.model", text([](C& c) -> std::string& { return c.infer_model; })},
      {"bench.thickness", dbl([](C& c) -> double& { return c.bench_thickness; })},
      {"bench.force", dbl([](C& c) -> double& { return c.bench_force; })},
      {"bench.repetitions", integer([](C& c) -> int& { return c.bench_repetitions; })},
  };
  return table;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing " + what + " '" + path + "'; run the producing command first");
  return in;
}

void write_text(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw IoError("failed to write '" + path + "'");
}

std::vector<double> thicknesses_of(const std::vector<dataset::SampleRecord>& a,
                                   const std::vector<dataset::SampleRecord>& b) {
  std::set<double> s;
  for (const auto* v : {&a, &b})
    for (const auto& r : *v) s.insert(r.thickness_mm);
  return {s.begin(), s.end()};
}

std::vector<dataset::SampleRecord> load_records(const Paths& paths, const std::string& name, bool required) {
  const std::string path = paths.file(name);
  if (!std::filesystem::exists(path)) {
    if (required) throw IoError("missing dataset '" + path + "'; run 'gen' first");
    return {};
  }
  return dataset::load_dataset_file(path);
}

surrogate::UNet<float> load_model(const std::string& path) {
  auto in = open_in(path, "checkpoint");
  return surrogate::load_checkpoint(in);
}

surrogate::NaiveParams load_naive_file(const std::string& path) {
  auto in = open_in(path, "naive model");
  return surrogate::load_naive(in);
}

std::string loss_csv(const std::vector<surrogate::LossRecord>& h) {
  std::ostringstream os;
  surrogate::write_loss_csv(os, h);
  return os.str();
}

}  // namespace

fem::MaterialParams PipelineConfig::material() const {
  return fem::MaterialParams::from_young_poisson(young_modulus, poisson_ratio);
}

dataset::GenerationSettings PipelineConfig::generation(const std::string& patch_set) const {
  dataset::GenerationSettings g;
  g.profile = profile;
  g.thickness_variants = thickness_variants;
  g.forces = patch_set == "ood" ? ood_forces : forces;
  g.material = material();
  g.solver = solver;
  g.normalization = normalization;
  g.resolution = resolution;
  g.max_pressure_kpa = max_pressure_kpa;
  g.patch_set = patch_set;
  g.threads = threads;
  return g;
}

void PipelineConfig::validate() const {
  if (threads < 1) throw ParameterError("threads must be >= 1");
  if (out_dir.empty()) throw ParameterError("out must not be empty");
  profile.validate();
  material();
  solver.validate();
  for (auto s : {uvmap::Semantic::force, uvmap::Semantic::thickness, uvmap::Semantic::dx}) {
    const auto& r = normalization.range(s);
    if (!(r.physical_max > r.physical_min)) throw ParameterError("normalization bounds must be increasing");
  }
  if (patches.empty()) throw ParameterError("training patch spec enumerates no patches");
  generation("id").validate();
  if (generate_ood) generation("ood").validate();
  split.validate();
  unet.validate();
  unet.check_input(resolution, resolution);
  if (train.epochs < 0 || train.batch_size < 1 || !(train.lr > 0.0) || train.tv_weight < 0.0 || train.max_steps < 0)
    throw ParameterError("invalid training hyperparameters");
  if (naive.epochs < 1 || naive.batch_size < 1 || !(naive.lr > 0.0))
    throw ParameterError("invalid naive fit hyperparameters");
  if (infer_model != "unet" && infer_model != "naive") throw ParameterError("infer.model must be unet or naive");
  if (bench_repetitions < 1) throw ParameterError("bench.repetitions must be >= 1");
  if (!(bench_force > 0.0 && bench_force <= bcgen::kMaxPatchForceN))
    throw ParameterError("bench.force must be in (0, 20] N");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : key_table()) keys.push_back(k);
  return keys;
}

void set_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ParameterError("unknown config key '" + key + "'");
  it->second.set(config, key, value);
}

PipelineConfig parse_config(std::istream& in, const std::string& source) {
  PipelineConfig c;
  std::set<std::string> seen;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ParameterError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ParameterError(where + "repeated key '" + key + "'");
    try {
      set_value(c, key, value);
    } catch (const ParameterError& e) {
      throw ParameterError(where + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

void write_config(std::ostream& out, const PipelineConfig& config) {
  for (const auto& [k, key] : key_table()) out << k << " = " << key.get(config) << "\n";
}

std::string Paths::file(const std::string& name) const { return (std::filesystem::path(dir) / name).string(); }

void cmd_mesh(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  ensure_dir(paths.dir);
  const auto mesh = geometry::build_shell_mesh(config.profile);
  const auto chart = geometry::build_uv_chart(mesh, config.profile);
  {
    auto out = open_out(paths.file("mesh.tet"));
    geometry::write_tet_mesh(out, mesh);
  }
  {
    auto out = open_out(paths.file("outer.obj"));
    geometry::write_outer_obj(out, mesh);
  }
  {
    auto out = open_out(paths.file("chart.obj"));
    geometry::write_chart_obj(out, chart);
  }
  std::ostringstream s;
  s << "thickness_mm " << fmt17(config.profile.thickness) << "\n"
    << "vertices " << mesh.num_vertices() << "\n"
    << "tets " << mesh.tets.size() << "\n"
    << "outer_vertices " << mesh.outer_vertex_ids.size() << "\n"
    << "outer_triangles " << mesh.outer_triangles.size() << "\n"
    << "fixed_vertices " << mesh.fixed_vertex_ids().size() << "\n"
    << "chart_vertices " << chart.size() << "\n"
    << "seam_pairs " << chart.seam_pairs.size() << "\n";
  char vol[96];
  std::snprintf(vol, sizeof vol, "volume_mm3 %.6f\n", mesh.total_volume());
  s << vol;
  write_text(paths.file("mesh_summary.txt"), s.str());
  log << s.str();
}

void cmd_gen(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  ensure_dir(paths.dir);

  auto patches = bcgen::enumerate_training_patches(config.patches);
  if (config.patch_limit > 0 && config.patch_limit < patches.size()) patches.resize(config.patch_limit);

  auto run = [&](const std::string& set, const std::vector<bcgen::ForcePatch>& ps) {
    dataset::GenerationReport rep;
    auto records = dataset::generate_dataset(config.generation(set), ps, &rep);
    std::size_t removed = 0;
    records = dataset::clean(std::move(records), config.max_pressure_kpa, &removed);
    for (const auto& m : rep.messages) log << "[" << set << "] " << m << "\n";
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "[%s] attempted %zu kept %zu dropped %zu (prefiltered %zu, cleaned %zu, failed %zu, empty %zu) "
                  "solve time %.1f s\n",
                  set.c_str(), rep.attempted, records.size(), rep.attempted - records.size(), rep.prefiltered,
                  removed, rep.failed, rep.empty_patches, rep.solve_seconds);
    log << buf;
    return records;
  };

  auto id_records = run("id", patches);
  if (id_records.empty()) throw DataError("no samples survived generation and cleaning");
  if (id_records.size() >= 10) {
    auto spec = config.split;
    spec.seed = config.seed;
    dataset::assign_splits(id_records, spec);
  } else {
    log << "fewer than 10 samples; all are labelled train\n";
    for (auto& r : id_records) r.split = "train";
  }
  dataset::save_dataset_file(paths.file("dataset_id.bin"), id_records);
  {
    auto out = open_out(paths.file("manifest_id.csv"));
    dataset::write_manifest(out, id_records);
  }

  if (config.generate_ood) {
    auto ood_records = run("ood", bcgen::make_ood_patches(config.ood));
    for (auto& r : ood_records) r.split = "test";
    dataset::save_dataset_file(paths.file("dataset_ood.bin"), ood_records);
    auto out = open_out(paths.file("manifest_ood.csv"));
    dataset::write_manifest(out, ood_records);
  }
}

void cmd_train(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  const auto records = load_records(paths, "dataset_id.bin", true);
  const auto train_set = dataset::views(dataset::select_split(records, "train"));
  const auto val_set = dataset::views(dataset::select_split(records, "val"));
  log << "training on " << train_set.size() << " samples, validating on " << val_set.size() << "\n";

  auto tc = config.train;
  tc.seed = config.seed;
  auto result = surrogate::train(config.unet, train_set, val_set, tc);
  {
    auto out = open_out(paths.file("model.ckpt"), true);
    surrogate::save_checkpoint(out, result.model);
  }
  write_text(paths.file("loss.csv"), loss_csv(result.history));
  char buf[160];
  std::snprintf(buf, sizeof buf, "unet: %ld steps, best epoch %d, val_l2 %.6e\n", result.steps, result.best_epoch,
                result.history[static_cast<std::size_t>(result.best_epoch)].val_l2);
  log << buf;

  auto nc = config.naive;
  nc.seed = config.seed;
  const auto naive = surrogate::naive_fit(train_set, nc);
  {
    auto out = open_out(paths.file("naive.txt"));
    surrogate::save_naive(out, naive.params);
  }
  std::ostringstream nl;
  nl << "epoch,train_l2\n";
  for (std::size_t i = 0; i < naive.loss_history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9e\n", i + 1, naive.loss_history[i]);
    nl << buf;
  }
  write_text(paths.file("naive_loss.csv"), nl.str());
  std::snprintf(buf, sizeof buf, "naive: alpha %.6g %.6g %.6g (closed form %.6g %.6g %.6g)\n", naive.params.alpha[0],
                naive.params.alpha[1], naive.params.alpha[2], naive.closed_form.alpha[0], naive.closed_form.alpha[1],
                naive.closed_form.alpha[2]);
  log << buf;
}

void cmd_infer(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  ensure_dir(paths.dir);
  const auto patch = bcgen::ForcePatch::from_record(config.infer_patch);
  const auto variant = dataset::build_variant(config.profile, config.infer_thickness);
  std::vector<geometry::Vec3> disp(variant.mesh.num_vertices(), geometry::Vec3::Zero());
  uvmap::UVImage image(config.resolution, config.resolution,
                       {uvmap::Semantic::dx, uvmap::Semantic::dy, uvmap::Semantic::dz});
  if (patch.f_total == 0.0) {
    log << "zero total force: the rest shape is returned\n";
  } else {
    patch.validate();
    const auto inputs = dataset::make_inputs(variant, patch, config.resolution, config.normalization);
    if (config.infer_model == "unet") {
      auto model = load_model(paths.file("model.ckpt"));
      image = surrogate::predict(model, inputs.force, inputs.thickness);
    } else {
      image = surrogate::naive_predict(load_naive_file(paths.file("naive.txt")), inputs.thickness, inputs.force);
    }
    disp = eval::backmap_prediction(image, variant, config.normalization);
    uvmap::denormalize_image(image, config.normalization);
  }
  {
    auto out = open_out(paths.file("infer_mesh.obj"));
    geometry::write_outer_obj(out, variant.mesh, &disp);
  }
  {
    auto out = open_out(paths.file("infer_deformation.img"), true);
    uvmap::write_image(out, image);
  }
  const auto& r = config.normalization.deformation;
  for (int c = 0; c < 3; ++c) {
    auto out = open_out(paths.file(std::string("infer_") + "xyz"[c] + ".pgm"), true);
    uvmap::write_channel_pgm(out, image, c, r.physical_min, r.physical_max);
  }
  double max_d = 0.0;
  for (const auto& d : disp) max_d = std::max(max_d, d.norm());
  char buf[128];
  std::snprintf(buf, sizeof buf, "max predicted displacement %.4f mm\n", max_d);
  log << buf;
}

void cmd_eval(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  const auto id_records = load_records(paths, "dataset_id.bin", true);
  const auto ood_records = load_records(paths, "dataset_ood.bin", false);
  auto model = load_model(paths.file("model.ckpt"));
  const auto naive = load_naive_file(paths.file("naive.txt"));
  const auto ctx = eval::EvalContext::build(config.profile, thicknesses_of(id_records, ood_records),
                                            config.normalization);
  const auto unet_p = eval::unet_predictor(model);
  const auto naive_p = eval::naive_predictor(naive);

  auto run = [&](const std::string& set, const std::vector<const dataset::SampleRecord*>& recs) {
    if (recs.empty()) {
      log << "[" << set << "] no test samples; skipped\n";
      return;
    }
    std::vector<eval::NamedReport> rows;
    for (const auto& [name, pred] : {std::pair<std::string, const eval::Predictor*>{"unet", &unet_p},
                                     std::pair<std::string, const eval::Predictor*>{"naive", &naive_p}}) {
      std::vector<eval::VertexError> dump;
      std::vector<std::string> warnings;
      rows.push_back({name, eval::evaluate(recs, *pred, ctx, config.ee_mode, config.dump_errors ? &dump : nullptr,
                                           &warnings)});
      for (const auto& w : warnings) log << "[" << set << "] " << w << "\n";
      if (config.dump_errors) {
        auto out = open_out(paths.file("errors_" + set + "_" + name + ".csv"));
        eval::write_error_dump(out, dump);
      }
    }
    const auto table = eval::render_table(rows);
    write_text(paths.file("metrics_" + set + ".txt"), table);
    write_text(paths.file("metrics_" + set + ".csv"), eval::render_csv(rows));
    log << "[" << set << "] " << recs.size() << " samples\n" << table;
  };
  run("id", dataset::select_split(id_records, "test"));
  std::vector<const dataset::SampleRecord*> ood_all;
  for (const auto& r : ood_records) ood_all.push_back(&r);
  run("ood", ood_all);
}

void cmd_ablate(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  const auto id_records = load_records(paths, "dataset_id.bin", true);
  const auto ood_records = load_records(paths, "dataset_ood.bin", true);
  const auto ctx = eval::EvalContext::build(config.profile, thicknesses_of(id_records, ood_records),
                                            config.normalization);
  eval::AblationConfig ac;
  ac.unet = config.unet;
  ac.train = config.train;
  ac.train.seed = config.seed;
  ac.mode = config.ee_mode;
  auto res = eval::run_ablation(id_records, ood_records, ctx, ac);
  const auto table = eval::render_table(res.partitions);
  write_text(paths.file("ablation.txt"), table);
  write_text(paths.file("ablation.csv"), eval::render_csv(res.partitions));
  write_text(paths.file("ablation_loss.csv"), loss_csv(res.history));
  log << table;
}

void cmd_bench(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const Paths paths{config.out_dir};
  auto model = load_model(paths.file("model.ckpt"));
  const auto variant = dataset::build_variant(config.profile, config.bench_thickness);
  const auto patch = bcgen::ForcePatch::from_record(config.infer_patch).with_total(config.bench_force);
  patch.validate();
  const auto rep = eval::runtime_benchmark(variant, patch, config.material(), config.solver, model,
                                           config.normalization, config.resolution, config.bench_repetitions);
  const auto text = eval::render_benchmark(rep);
  write_text(paths.file("bench.txt"), text);
  log << text;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConvergenceError&) {
    return kConvergenceError;
  } catch (const SingularElementError&) {
    return kConvergenceError;
  } catch (const InvertedElementError&) {
    return kConvergenceError;
  } catch (const IoError&) {
    return kIoError;
  } catch (const DataError&) {
    return kDataError;
  } catch (const ShapeError&) {
    return kDataError;
  } catch (const EmptyPatchError&) {
    return kDataError;
  } catch (const ParameterError&) {
    return kConfigError;
  } catch (const StructuralError&) {
    return kConfigError;
  } catch (...) {
    return kFailure;
  }
}

}  // namespace softshell::pipeline
