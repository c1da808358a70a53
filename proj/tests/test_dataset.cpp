#include "softshell/dataset.hpp"
#include "softshell/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

using namespace softshell;
using namespace softshell::dataset;

namespace {

GenerationSettings tiny_settings() {
  GenerationSettings s;
  s.profile.n_circ = 16;
  s.profile.n_axial = 8;
  s.profile.n_layers = 1;
  s.thickness_variants = {7.5, 10.0};
  s.forces = {2.0, 4.0, 6.0};
  s.resolution = 32;
  return s;
}

std::vector<bcgen::ForcePatch> tiny_patches() {
  return {bcgen::make_circle(0.5, 0.5, 0.2, 1.0), bcgen::make_ellipse(0.25, 0.6, 0.15, 0.1, 0.5, 1.0),
          bcgen::make_circle(0.0, 0.4, 0.15, 1.0)};
}

const std::vector<SampleRecord>& tiny_records() {
  static const std::vector<SampleRecord> r = generate_dataset(tiny_settings(), tiny_patches());
  return r;
}

std::vector<SampleRecord> fake_records(std::size_t n) {
  std::vector<SampleRecord> out(n);
  const auto& base = tiny_records().front();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = base;
    out[i].id = "r" + std::to_string(i);
    out[i].pressure_kpa = 0.1 * static_cast<double>(i);
  }
  return out;
}

double max_disp(const SampleRecord& r) {
  double m = 0.0;
  for (const auto& d : r.raw_displacements) m = std::max(m, d.norm());
  return m;
}

}  // namespace

TEST_CASE("tiny generation produces one record per variant, patch and force") {
  GenerationReport rep;
  const auto recs = generate_dataset(tiny_settings(), tiny_patches(), &rep);
  CHECK(rep.attempted == 18u);
  CHECK(rep.failed == 0u);
  CHECK(recs.size() == 18u);
  CHECK(recs == tiny_records());
  std::set<std::string> ids;
  for (const auto& r : recs) {
    CHECK(ids.insert(r.id).second);
    CHECK(r.force_img.width == 32);
    CHECK(r.force_img.channels == 1);
    CHECK(r.deformation_img.channels == 3);
    CHECK(r.pressure_kpa > 0.0);
    CHECK(r.solver_iterations > 0);
    for (float t : r.thickness_img.data) CHECK(t == doctest::Approx((r.thickness_mm - 2.5) / 10.0).epsilon(1e-6));
  }
  CHECK(recs[0].thickness_mm == 7.5);
  CHECK(recs[0].f_total == 2.0);
  CHECK(recs[2].f_total == 6.0);
  CHECK(recs[9].thickness_mm == 10.0);
}

TEST_CASE("displacement grows with force for each patch") {
  const auto& recs = tiny_records();
  for (std::size_t i = 0; i + 2 < recs.size(); i += 3) {
    CHECK(max_disp(recs[i]) < max_disp(recs[i + 1]));
    CHECK(max_disp(recs[i + 1]) < max_disp(recs[i + 2]));
  }
}

TEST_CASE("thread count does not change the output") {
  auto s = tiny_settings();
  s.threads = 3;
  CHECK(generate_dataset(s, tiny_patches()) == tiny_records());
}

TEST_CASE("deformation image is the normalized rasterization of the raw displacements") {
  const auto s = tiny_settings();
  const auto& r = tiny_records()[4];
  const auto v = build_variant(s.profile, r.thickness_mm);
  CHECK(make_deformation_image(v, r.raw_displacements, s.resolution, s.normalization) == r.deformation_img);
  auto img = uvmap::rasterize_vectors(v.chart, r.raw_displacements, s.resolution, s.resolution);
  uvmap::normalize_image(img, s.normalization);
  CHECK(img == r.deformation_img);
  for (int vid = 0; vid < static_cast<int>(v.mesh.vertices.size()); ++vid)
    if (std::binary_search(v.fixed.begin(), v.fixed.end(), vid)) CHECK(r.raw_displacements[vid].norm() == 0.0);
}

TEST_CASE("settings validation") {
  auto s = tiny_settings();
  s.forces = {0.0};
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = tiny_settings();
  s.forces = {25.0};
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = tiny_settings();
  s.thickness_variants = {20.0};
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = tiny_settings();
  s.threads = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("empty patches are counted and skipped") {
  GenerationReport rep;
  const auto recs =
      generate_dataset(tiny_settings(), {bcgen::make_circle(0.5, 0.5, 1e-4, 1.0)}, &rep);
  CHECK(recs.empty());
  CHECK(rep.empty_patches > 0u);
}

TEST_CASE("pressure cleaning keeps the boundary value") {
  auto recs = fake_records(100);
  std::size_t removed = 0;
  const auto kept = clean(recs, 5.0, &removed);
  CHECK(kept.size() == 51u);
  CHECK(removed == 49u);
  for (const auto& r : kept) CHECK(r.pressure_kpa <= 5.0);
  CHECK(clean(recs, 10.0).size() == 100u);
}

TEST_CASE("split sizes, disjointness and determinism") {
  SplitSpec spec;
  spec.seed = 7;
  const auto s = split(100, spec);
  CHECK(s.train.size() == 80u);
  CHECK(s.val.size() == 10u);
  CHECK(s.test.size() == 10u);
  std::vector<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  const auto again = split(100, spec);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  spec.seed = 8;
  CHECK(split(100, spec).train != s.train);
  CHECK_THROWS_AS(split(9, spec), DataError);
  const auto odd = split(17, spec);
  CHECK(odd.train.size() == 14u);
  CHECK(odd.val.size() == 2u);
  CHECK(odd.test.size() == 1u);
  spec.train = 0.9;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
}

TEST_CASE("assign and select splits") {
  auto recs = fake_records(20);
  SplitSpec spec;
  assign_splits(recs, spec);
  CHECK(select_split(recs, "train").size() == 16u);
  CHECK(select_split(recs, "val").size() == 2u);
  CHECK(select_split(recs, "test").size() == 2u);
}

TEST_CASE("thickness filter") {
  const auto& recs = tiny_records();
  std::vector<const SampleRecord*> all;
  for (const auto& r : recs) all.push_back(&r);
  CHECK(filter_by_thickness(all, {7.5}).size() == 9u);
  CHECK(filter_by_thickness(all, {7.5, 10.0}).size() == 18u);
  CHECK(filter_by_thickness(all, {5.0}).empty());
  CHECK(views(all).size() == 18u);
}

TEST_CASE("binary round trip and corruption") {
  std::vector<SampleRecord> recs(tiny_records().begin(), tiny_records().begin() + 10);
  recs[3].split = "val";
  std::stringstream s;
  save_dataset(s, recs);
  const std::string bytes = s.str();
  std::stringstream in(bytes);
  CHECK(load_dataset(in) == recs);

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_dataset(truncated), FormatError);
  std::string ver = bytes;
  ver[8] = static_cast<char>(ver[8] + 1);
  std::stringstream vin(ver);
  CHECK_THROWS_AS(load_dataset(vin), VersionError);
  std::string mag = bytes;
  mag[0] = 'X';
  std::stringstream min(mag);
  CHECK_THROWS_AS(load_dataset(min), FormatError);
  CHECK_THROWS_AS(load_dataset_file("/nonexistent/dir/x.bin"), IoError);
}

TEST_CASE("manifest rows") {
  std::vector<SampleRecord> recs(tiny_records().begin(), tiny_records().begin() + 2);
  std::stringstream s;
  write_manifest(s, recs);
  std::string line;
  std::getline(s, line);
  CHECK(line == "id,variant_mm,patch_kind,f_total_N,pressure_kPa,split");
  std::getline(s, line);
  CHECK(line.rfind(recs[0].id + ",7.50,circle,2.0,", 0) == 0);
  int rows = 1;
  while (std::getline(s, line)) ++rows;
  CHECK(rows == 2);
}
