#include "softshell/evalharness.hpp"

#include "softshell/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace softshell::eval {

namespace {

bool contains_thickness(const std::vector<double>& set, double t) {
  return std::any_of(set.begin(), set.end(), [&](double s) { return std::abs(s - t) < 1e-9; });
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  // Width counts code points so the UTF-8 column labels align.
  std::size_t cps = 0;
  for (unsigned char ch : s)
    if ((ch & 0xC0) != 0x80) ++cps;
  return cps >= width ? s : std::string(width - cps, ' ') + s;
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

double MetricsReport::relative_error() const {
  return mean_max_deformation > 0.0 ? mee.mean / mean_max_deformation : 0.0;
}

std::vector<int> active_mask(const std::vector<geometry::Vec3>& gt, const std::vector<bool>* candidates) {
  if (candidates && candidates->size() != gt.size()) throw ShapeError("active_mask: candidate mask size mismatch");
  std::vector<int> out;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (candidates && !(*candidates)[i]) continue;
    if (gt[i].norm() > kActiveThresholdMm) out.push_back(static_cast<int>(i));
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<std::vector<geometry::Vec3>>& predictions,
                              const std::vector<std::vector<geometry::Vec3>>& ground_truth,
                              const std::vector<std::vector<int>>& masks, EeMode mode,
                              std::vector<std::string>* warnings) {
  if (predictions.size() != ground_truth.size() || masks.size() != ground_truth.size())
    throw ShapeError("compute_metrics: predictions, ground truth and masks differ in count");
  std::vector<double> mx, my, mz, mee, maxdef;
  std::array<std::size_t, 5> pooled_hits{};
  std::size_t pooled_total = 0;
  std::array<std::vector<double>, 5> sample_ratios;
  MetricsReport r;
  for (std::size_t s = 0; s < ground_truth.size(); ++s) {
    const auto& p = predictions[s];
    const auto& g = ground_truth[s];
    if (p.size() != g.size()) throw ShapeError("compute_metrics: prediction and ground truth sizes differ");
    const auto& m = masks[s];
    if (m.empty()) {
      ++r.excluded;
      if (warnings) warnings->push_back("sample " + std::to_string(s) + " has no active vertices; excluded");
      continue;
    }
    double ax = 0.0, ay = 0.0, az = 0.0, ae = 0.0, gmax = 0.0;
    std::array<std::size_t, 5> hits{};
    for (int v : m) {
      if (v < 0 || static_cast<std::size_t>(v) >= g.size()) throw ShapeError("compute_metrics: mask index out of range");
      const geometry::Vec3 e = p[v] - g[v];
      ax += std::abs(e.x());
      ay += std::abs(e.y());
      az += std::abs(e.z());
      const double en = e.norm();
      ae += en;
      gmax = std::max(gmax, g[v].norm());
      for (std::size_t k = 0; k < kEeThresholds.size(); ++k)
        if (en <= kEeThresholds[k]) ++hits[k];
    }
    const double n = static_cast<double>(m.size());
    mx.push_back(ax / n);
    my.push_back(ay / n);
    mz.push_back(az / n);
    mee.push_back(ae / n);
    maxdef.push_back(gmax);
    pooled_total += m.size();
    for (std::size_t k = 0; k < hits.size(); ++k) {
      pooled_hits[k] += hits[k];
      sample_ratios[k].push_back(static_cast<double>(hits[k]) / n);
    }
  }
  if (mee.empty()) throw DataError("compute_metrics: no sample has active vertices");
  r.sample_count = mee.size();
  r.mae_x = mean_std(mx);
  r.mae_y = mean_std(my);
  r.mae_z = mean_std(mz);
  r.mee = mean_std(mee);
  r.mean_max_deformation = mean_std(maxdef).mean;
  for (std::size_t k = 0; k < kEeThresholds.size(); ++k)
    r.ee_ratios[k] = mode == EeMode::pooled
                         ? static_cast<double>(pooled_hits[k]) / static_cast<double>(pooled_total)
                         : mean_std(sample_ratios[k]).mean;
  return r;
}

EvalContext EvalContext::build(const geometry::ArmProfile& profile, const std::vector<double>& thickness_mm,
                               const uvmap::NormalizationSpec& norm) {
  EvalContext ctx;
  ctx.normalization = norm;
  for (double t : thickness_mm) ctx.variants.push_back(dataset::build_variant(profile, t));
  return ctx;
}

const dataset::MeshVariant& EvalContext::variant_for(double thickness_mm) const {
  for (const auto& v : variants)
    if (std::abs(v.thickness_mm - thickness_mm) < 1e-9) return v;
  throw ParameterError("no mesh variant for thickness " + fmt("%g", thickness_mm) + " mm");
}

Predictor unet_predictor(surrogate::UNet<float>& model) {
  return [&model](const dataset::SampleRecord& r) { return surrogate::predict(model, r.force_img, r.thickness_img); };
}

Predictor naive_predictor(const surrogate::NaiveParams& params) {
  return [params](const dataset::SampleRecord& r) {
    return surrogate::naive_predict(params, r.thickness_img, r.force_img);
  };
}

std::vector<geometry::Vec3> backmap_prediction(const uvmap::UVImage& normalized, const dataset::MeshVariant& variant,
                                               const uvmap::NormalizationSpec& norm) {
  uvmap::UVImage img = normalized;
  uvmap::denormalize_image(img, norm);
  return uvmap::backmap_deformation(img, variant.chart);
}

MetricsReport evaluate(const std::vector<const dataset::SampleRecord*>& records, const Predictor& predictor,
                       const EvalContext& ctx, EeMode mode, std::vector<VertexError>* dump,
                       std::vector<std::string>* warnings) {
  if (records.empty()) throw DataError("evaluate: empty record set");
  std::vector<std::vector<geometry::Vec3>> preds, gts;
  std::vector<std::vector<int>> masks;
  preds.reserve(records.size());
  for (const auto* r : records) {
    const auto& var = ctx.variant_for(r->thickness_mm);
    if (r->raw_displacements.size() != var.mesh.num_vertices())
      throw DataError("record " + r->id + " does not match its mesh variant");
    preds.push_back(backmap_prediction(predictor(*r), var, ctx.normalization));
    gts.push_back(r->raw_displacements);
    const auto outer = var.mesh.outer_mask();
    masks.push_back(active_mask(r->raw_displacements, &outer));
  }
  std::vector<std::string> local;
  auto report = compute_metrics(preds, gts, masks, mode, &local);
  if (warnings)
    for (std::size_t s = 0; s < records.size(); ++s)
      if (masks[s].empty()) warnings->push_back(records[s]->id + ": no active vertices; excluded");
  if (dump)
    for (std::size_t s = 0; s < records.size(); ++s)
      for (int v : masks[s]) dump->push_back({records[s]->id, v, (preds[s][v] - gts[s][v]).norm()});
  return report;
}

void write_error_dump(std::ostream& out, const std::vector<VertexError>& rows) {
  out << "sample_id,vertex_id,error_mm\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%d,%.9e\n", r.vertex, r.error);
    out << r.sample_id << buf;
  }
}

AblationResult run_ablation(const std::vector<dataset::SampleRecord>& id_records,
                            const std::vector<dataset::SampleRecord>& ood_records, const EvalContext& ctx,
                            const AblationConfig& config) {
  if (config.train_thickness.empty() || config.unseen_thickness.empty())
    throw ParameterError("ablation needs training and unseen thickness sets");
  for (double t : config.unseen_thickness)
    if (contains_thickness(config.train_thickness, t))
      throw ParameterError("ablation thickness " + fmt("%g", t) + " mm is in both seen and unseen sets");
  auto present = [&](double t) {
    return std::any_of(id_records.begin(), id_records.end(),
                       [&](const dataset::SampleRecord& r) { return std::abs(r.thickness_mm - t) < 1e-9; });
  };
  for (const auto* set : {&config.train_thickness, &config.unseen_thickness})
    for (double t : *set)
      if (!present(t)) throw ParameterError("dataset lacks the " + fmt("%g", t) + " mm variant needed for ablation");

  const auto train_recs =
      dataset::filter_by_thickness(dataset::select_split(id_records, "train"), config.train_thickness);
  const auto val_recs = dataset::filter_by_thickness(dataset::select_split(id_records, "val"), config.train_thickness);
  auto trained = surrogate::train(config.unet, dataset::views(train_recs), dataset::views(val_recs), config.train);

  AblationResult res;
  res.history = trained.history;
  res.model = std::move(trained.model);
  const auto predictor = unet_predictor(res.model);
  const auto id_test = dataset::select_split(id_records, "test");
  std::vector<const dataset::SampleRecord*> ood_all;
  for (const auto& r : ood_records) ood_all.push_back(&r);
  auto add = [&](const std::string& name, const std::vector<const dataset::SampleRecord*>& recs) {
    if (recs.empty()) throw DataError("ablation partition '" + name + "' is empty");
    res.partitions.push_back({name, evaluate(recs, predictor, ctx, config.mode)});
  };
  add("id-seen", dataset::filter_by_thickness(id_test, config.train_thickness));
  add("id-unseen", dataset::filter_by_thickness(id_test, config.unseen_thickness));
  add("ood-seen", dataset::filter_by_thickness(ood_all, config.train_thickness));
  add("ood-unseen", dataset::filter_by_thickness(ood_all, config.unseen_thickness));
  return res;
}

namespace {

Timing summarize(const std::vector<double>& seconds) {
  const auto ms = mean_std(seconds);
  return {ms.mean, ms.std, static_cast<int>(seconds.size())};
}

}  // namespace

BenchmarkReport runtime_benchmark(const dataset::MeshVariant& variant, const bcgen::ForcePatch& patch,
                                  const fem::MaterialParams& material, const fem::SolveSettings& solver,
                                  surrogate::UNet<float>& model, const uvmap::NormalizationSpec& norm, int resolution,
                                  int repetitions) {
  if (repetitions < 1) throw ParameterError("benchmark repetitions must be positive");
  using clock = std::chrono::steady_clock;
  const auto inputs = dataset::make_inputs(variant, patch, resolution, norm);
  const auto input = surrogate::image_to_tensor(inputs.force, inputs.thickness);
  BenchmarkReport rep;
  std::vector<double> fem_s, sur_s;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = clock::now();
    const auto res = fem::solve_static(variant.mesh, material, inputs.forces, variant.fixed, solver);
    fem_s.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    rep.fem_max_displacement = res.max_displacement();
  }
  model.forward(input, false);  // warm the scratch buffers
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = clock::now();
    const auto out = surrogate::tensor_to_deformation_image(model.forward(input, false));
    const auto disp = backmap_prediction(out, variant, norm);
    sur_s.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    if (disp.empty()) throw DataError("empty surrogate prediction");
  }
  rep.fem = summarize(fem_s);
  rep.surrogate = summarize(sur_s);
  rep.speedup = rep.fem.mean / rep.surrogate.mean;
  return rep;
}

std::string render_table(const std::vector<NamedReport>& reports) {
  if (reports.empty()) throw ParameterError("render_table: no reports");
  std::size_t name_w = 5;
  for (const auto& r : reports) name_w = std::max(name_w, r.name.size());
  const std::vector<std::string> head{"MAE δx", "MAE δy", "MAE δz", "MEE", "EE≤0.1", "EE≤0.125", "EE≤0.15",
                                      "EE≤0.2", "EE≤0.5"};
  std::ostringstream os;
  std::string line = std::string("model") + std::string(name_w - 5, ' ');
  for (std::size_t i = 0; i < head.size(); ++i) line += "  " + pad(head[i], i < 4 ? 17 : 8);
  line += "  " + pad("n", 5) + "  " + pad("rel", 7);
  os << line << "\n";
  for (const auto& nr : reports) {
    const auto& r = nr.report;
    line = nr.name + std::string(name_w - nr.name.size(), ' ');
    for (const auto* m : {&r.mae_x, &r.mae_y, &r.mae_z, &r.mee})
      line += "  " + pad(fmt("%.4f", m->mean) + " ± " + fmt("%.4f", m->std), 17);
    for (double e : r.ee_ratios) line += "  " + pad(fmt("%.2f%%", 100.0 * e), 8);
    line += "  " + pad(std::to_string(r.sample_count), 5) + "  " + pad(fmt("%.2f%%", 100.0 * r.relative_error()), 7);
    os << line << "\n";
  }
  return os.str();
}

std::string render_csv(const std::vector<NamedReport>& reports) {
  if (reports.empty()) throw ParameterError("render_csv: no reports");
  std::ostringstream os;
  os << "model,mae_dx_mm,mae_dx_std_mm,mae_dy_mm,mae_dy_std_mm,mae_dz_mm,mae_dz_std_mm,mee_mm,mee_std_mm,"
        "ee_le_0.1,ee_le_0.125,ee_le_0.15,ee_le_0.2,ee_le_0.5,samples,relative_error\n";
  for (const auto& nr : reports) {
    const auto& r = nr.report;
    os << nr.name;
    for (const auto* m : {&r.mae_x, &r.mae_y, &r.mae_z, &r.mee}) os << fmt(",%.6f", m->mean) << fmt(",%.6f", m->std);
    for (double e : r.ee_ratios) os << fmt(",%.6f", e);
    os << "," << r.sample_count << fmt(",%.6f", r.relative_error()) << "\n";
  }
  return os.str();
}

std::string render_benchmark(const BenchmarkReport& r) {
  std::ostringstream os;
  os << "fem_solve_s       " << fmt("%.6f", r.fem.mean) << " ± " << fmt("%.6f", r.fem.std) << " (n=" << r.fem.repetitions
     << ")\n";
  os << "surrogate_infer_s " << fmt("%.6f", r.surrogate.mean) << " ± " << fmt("%.6f", r.surrogate.std)
     << " (n=" << r.surrogate.repetitions << ")\n";
  os << "speedup           " << fmt("%.1f", r.speedup) << "x\n";
  return os.str();
}

}  // namespace softshell::eval
