#include "softshell/dataset.hpp"

#include "softshell/binary_io.hpp"
#include "softshell/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace softshell::dataset {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr char kMagic[8] = {'S', 'S', 'D', 'S', 'E', 'T', '0', '1'};

std::string make_id(const std::string& set, double thickness, std::size_t patch, double force) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s-t%05.2f-p%03zu-f%04.1f", set.c_str(), thickness, patch, force);
  return buf;
}

struct TaskOutput {
  std::vector<SampleRecord> records;
  GenerationReport report;
};

}  // namespace

bool SampleRecord::operator==(const SampleRecord& o) const {
  return id == o.id && patch_set == o.patch_set && thickness_mm == o.thickness_mm &&
         patch.to_record() == o.patch.to_record() && f_total == o.f_total && force_img == o.force_img &&
         thickness_img == o.thickness_img && deformation_img == o.deformation_img &&
         raw_displacements == o.raw_displacements && pressure_kpa == o.pressure_kpa &&
         solver_iterations == o.solver_iterations && split == o.split;
}

void GenerationSettings::validate() const {
  profile.validate();
  if (thickness_variants.empty()) throw ParameterError("no thickness variants");
  for (double t : thickness_variants) {
    geometry::ArmProfile p = profile;
    p.thickness = t;
    p.validate();
  }
  for (double f : forces)
    if (!(f > 0.0 && f <= bcgen::kMaxPatchForceN))
      throw ParameterError("force " + fmt17(f) + " N is outside (0, 20] N");
  solver.validate();
  if (resolution < 8 || resolution > 4096) throw ParameterError("resolution must be in [8, 4096]");
  if (!(max_pressure_kpa > 0.0)) throw ParameterError("max_pressure_kpa must be positive");
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

MeshVariant build_variant(const geometry::ArmProfile& profile, double thickness_mm) {
  MeshVariant v;
  v.thickness_mm = thickness_mm;
  v.profile = profile;
  v.profile.thickness = thickness_mm;
  v.profile.validate();
  v.mesh = geometry::build_shell_mesh(v.profile);
  v.chart = geometry::build_uv_chart(v.mesh, v.profile);
  v.normals = geometry::outer_vertex_normals(v.mesh);
  v.fixed = v.mesh.fixed_vertex_ids();
  return v;
}

InputImages make_inputs(const MeshVariant& variant, const bcgen::ForcePatch& patch, int resolution,
                        const uvmap::NormalizationSpec& norm, uvmap::NormalizeStats* stats) {
  InputImages in;
  const auto selected = bcgen::select_patch_vertices(variant.chart, patch, variant.fixed);
  in.forces = bcgen::nodal_forces(variant.chart, patch, selected, variant.normals);
  std::vector<double> magnitude(variant.mesh.vertices.size(), 0.0);
  for (const auto& [v, f] : in.forces.entries) magnitude[v] = f.norm();
  std::vector<double> thickness(variant.mesh.vertices.size(), variant.thickness_mm);
  in.force = uvmap::rasterize_scalar(variant.chart, magnitude, uvmap::Semantic::force, resolution, resolution);
  in.thickness = uvmap::rasterize_scalar(variant.chart, thickness, uvmap::Semantic::thickness, resolution, resolution);
  uvmap::normalize_image(in.force, norm, stats);
  uvmap::normalize_image(in.thickness, norm, stats);
  return in;
}

uvmap::UVImage make_deformation_image(const MeshVariant& variant, const std::vector<geometry::Vec3>& displacements,
                                      int resolution, const uvmap::NormalizationSpec& norm,
                                      uvmap::NormalizeStats* stats) {
  auto img = uvmap::rasterize_vectors(variant.chart, displacements, resolution, resolution);
  uvmap::normalize_image(img, norm, stats);
  return img;
}

std::vector<SampleRecord> generate_dataset(const GenerationSettings& settings,
                                           const std::vector<bcgen::ForcePatch>& patches, GenerationReport* report) {
  settings.validate();
  for (const auto& p : patches) p.validate();
  std::vector<double> forces = settings.forces;
  std::sort(forces.begin(), forces.end());

  std::vector<MeshVariant> variants;
  for (double t : settings.thickness_variants) variants.push_back(build_variant(settings.profile, t));

  const std::size_t task_count = variants.size() * patches.size();
  std::vector<TaskOutput> outputs(task_count);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto run_task = [&](std::size_t task) {
    const MeshVariant& var = variants[task / patches.size()];
    const std::size_t pi = task % patches.size();
    TaskOutput& out = outputs[task];
    uvmap::NormalizeStats stats;
    std::vector<geometry::Vec3> guess;
    bool have_guess = false;
    for (double f : forces) {
      ++out.report.attempted;
      const bcgen::ForcePatch patch = patches[pi].with_total(f);
      const std::string id = make_id(settings.patch_set, var.thickness_mm, pi, f);
      double pressure = 0.0;
      InputImages in;
      try {
        pressure = bcgen::patch_pressure(patch, var.chart, var.mesh);
        if (settings.prefilter_pressure && pressure > settings.max_pressure_kpa) {
          ++out.report.prefiltered;
          continue;
        }
        in = make_inputs(var, patch, settings.resolution, settings.normalization, &stats);
      } catch (const EmptyPatchError& e) {
        ++out.report.empty_patches;
        out.report.messages.push_back(id + ": " + e.what());
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto res = fem::solve_static(var.mesh, settings.material, in.forces, var.fixed, settings.solver,
                                           have_guess ? &guess : nullptr);
        out.report.solve_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        SampleRecord r;
        r.id = id;
        r.patch_set = settings.patch_set;
        r.thickness_mm = var.thickness_mm;
        r.patch = patch;
        r.f_total = f;
        r.force_img = std::move(in.force);
        r.thickness_img = std::move(in.thickness);
        r.deformation_img = make_deformation_image(var, res.displacements, settings.resolution,
                                                   settings.normalization, &stats);
        r.raw_displacements = res.displacements;
        r.pressure_kpa = pressure;
        r.solver_iterations = res.iterations;
        guess = res.displacements;
        have_guess = true;
        ++out.report.solved;
        if (settings.verbose) {
          std::lock_guard<std::mutex> lock(log_mutex);
          std::fprintf(stderr, "%s iters=%d max=%.4f mm\n", id.c_str(), res.iterations, res.max_displacement());
        }
        out.records.push_back(std::move(r));
      } catch (const Error& e) {
        out.report.solve_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++out.report.failed;
        out.report.messages.push_back(id + ": " + e.what());
      }
    }
    out.report.clamped_values += stats.clamped;
  };

  auto worker = [&] {
    for (std::size_t t = next.fetch_add(1); t < task_count; t = next.fetch_add(1)) run_task(t);
  };
  const int nthreads = static_cast<int>(std::min<std::size_t>(settings.threads, std::max<std::size_t>(1, task_count)));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<SampleRecord> records;
  GenerationReport total;
  for (auto& o : outputs) {
    for (auto& r : o.records) records.push_back(std::move(r));
    total.attempted += o.report.attempted;
    total.solved += o.report.solved;
    total.failed += o.report.failed;
    total.prefiltered += o.report.prefiltered;
    total.empty_patches += o.report.empty_patches;
    total.clamped_values += o.report.clamped_values;
    total.solve_seconds += o.report.solve_seconds;
    for (auto& m : o.report.messages) total.messages.push_back(std::move(m));
  }
  if (report) *report = std::move(total);
  return records;
}

std::vector<SampleRecord> clean(std::vector<SampleRecord> records, double max_kpa, std::size_t* removed) {
  const std::size_t before = records.size();
  records.erase(std::remove_if(records.begin(), records.end(),
                               [&](const SampleRecord& r) { return !(r.pressure_kpa <= max_kpa); }),
                records.end());
  if (removed) *removed = before - records.size();
  return records;
}

void SplitSpec::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9)
    throw ParameterError("split ratios must be non-negative and sum to 1");
}

SplitIndices split(std::size_t count, const SplitSpec& spec) {
  spec.validate();
  if (count < 10) throw DataError("split needs at least 10 records, got " + std::to_string(count));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(count)));
  const auto n_val =
      std::min(count - n_train, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(count))));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

SplitIndices assign_splits(std::vector<SampleRecord>& records, const SplitSpec& spec) {
  auto s = split(records.size(), spec);
  for (auto i : s.train) records[i].split = "train";
  for (auto i : s.val) records[i].split = "val";
  for (auto i : s.test) records[i].split = "test";
  return s;
}

std::vector<const SampleRecord*> select_split(const std::vector<SampleRecord>& records, const std::string& which) {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.split == which) out.push_back(&r);
  return out;
}

std::vector<const SampleRecord*> filter_by_thickness(const std::vector<const SampleRecord*>& records,
                                                     const std::vector<double>& thickness_mm) {
  std::vector<const SampleRecord*> out;
  for (const auto* r : records)
    if (std::any_of(thickness_mm.begin(), thickness_mm.end(),
                    [&](double t) { return std::abs(t - r->thickness_mm) < 1e-9; }))
      out.push_back(r);
  return out;
}

std::vector<surrogate::SampleView> views(const std::vector<const SampleRecord*>& records) {
  std::vector<surrogate::SampleView> out;
  out.reserve(records.size());
  for (const auto* r : records) out.push_back(r->view());
  return out;
}

void save_dataset(std::ostream& out, const std::vector<SampleRecord>& records) {
  out.write(kMagic, sizeof kMagic);
  binary::put_u32(out, kDatasetVersion);
  binary::put_u64(out, records.size());
  for (const auto& r : records) {
    std::string meta;
    meta += "id=" + r.id + "\n";
    meta += "patch_set=" + r.patch_set + "\n";
    meta += "thickness_mm=" + fmt17(r.thickness_mm) + "\n";
    meta += "f_total_n=" + fmt17(r.f_total) + "\n";
    meta += "pressure_kpa=" + fmt17(r.pressure_kpa) + "\n";
    meta += "solver_iterations=" + std::to_string(r.solver_iterations) + "\n";
    meta += "split=" + r.split + "\n";
    meta += "patch=" + r.patch.to_record() + "\n";
    binary::put_bytes(out, meta);
    binary::put_u32(out, 3);
    uvmap::write_image(out, r.force_img);
    uvmap::write_image(out, r.thickness_img);
    uvmap::write_image(out, r.deformation_img);
    binary::put_u64(out, r.raw_displacements.size());
    for (const auto& d : r.raw_displacements)
      for (int k = 0; k < 3; ++k) binary::put_f64(out, d[k]);
  }
  if (!out) throw IoError("failed to write dataset");
}

std::vector<SampleRecord> load_dataset(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw FormatError("dataset truncated in header", 0);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("bad dataset magic", 0);
  std::uint64_t off = sizeof magic;
  const std::uint32_t version = binary::get_u32(in, off);
  if (version != kDatasetVersion)
    throw VersionError("dataset version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kDatasetVersion) + ")");
  const std::uint64_t count = binary::get_u64(in, off);
  std::vector<SampleRecord> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t start = off;
    SampleRecord r;
    const std::string meta = binary::get_bytes(in, off);
    std::map<std::string, std::string> kv;
    std::istringstream lines(meta);
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("malformed metadata line '" + line + "'", start);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw FormatError(std::string("record metadata lacks '") + key + "'", start);
      return it->second;
    };
    try {
      r.id = need("id");
      r.patch_set = need("patch_set");
      r.thickness_mm = std::stod(need("thickness_mm"));
      r.f_total = std::stod(need("f_total_n"));
      r.pressure_kpa = std::stod(need("pressure_kpa"));
      r.solver_iterations = std::stoi(need("solver_iterations"));
      r.split = need("split");
      r.patch = bcgen::ForcePatch::from_record(need("patch"));
    } catch (const std::logic_error&) {
      throw FormatError("bad number in record metadata", start);
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      throw FormatError(e.what(), start);
    }
    const std::uint32_t nimg = binary::get_u32(in, off);
    if (nimg != 3) throw FormatError("expected 3 images per record, found " + std::to_string(nimg), off - 4);
    r.force_img = uvmap::read_image(in, off);
    r.thickness_img = uvmap::read_image(in, off);
    r.deformation_img = uvmap::read_image(in, off);
    const std::uint64_t nv = binary::get_u64(in, off);
    if (nv > (1ull << 28)) throw FormatError("implausible vertex count", off - 8);
    r.raw_displacements.resize(nv);
    for (auto& d : r.raw_displacements)
      for (int k = 0; k < 3; ++k) d[k] = binary::get_f64(in, off);
    records.push_back(std::move(r));
  }
  return records;
}

void save_dataset_file(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_dataset(out, records);
}

std::vector<SampleRecord> load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  return load_dataset(in);
}

void write_manifest(std::ostream& out, const std::vector<SampleRecord>& records) {
  out << "id,variant_mm,patch_kind,f_total_N,pressure_kPa,split\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%s,%.1f,%.6f,%s\n", r.id.c_str(), r.thickness_mm,
                  bcgen::to_string(r.patch.kind), r.f_total, r.pressure_kpa, r.split.c_str());
    out << buf;
  }
}

}  // namespace softshell::dataset
