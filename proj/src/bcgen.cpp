#include "softshell/bcgen.hpp"

#include "softshell/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace softshell::bcgen {

namespace {

constexpr double kEps = 1e-9;

// Signed u offset folded into [-0.5, 0.5).
double wrap_du(double du) { return du - std::floor(du + 0.5); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Per mesh vertex (u, v); seam duplicates resolve to their u = 0 copy.
std::vector<geometry::Vec2> mesh_uv(const geometry::UVChart& chart) {
  std::vector<geometry::Vec2> uv(chart.num_mesh_vertices, geometry::Vec2::Constant(-1.0));
  for (std::size_t c = 0; c < chart.size(); ++c)
    if (uv[chart.mesh_vertex[c]].x() < 0.0) uv[chart.mesh_vertex[c]] = chart.uv[c];
  return uv;
}

constexpr const char* kGlyphs[26][7] = {
    {"01110", "10001", "10001", "11111", "10001", "10001", "10001"},  // A
    {"11110", "10001", "10001", "11110", "10001", "10001", "11110"},  // B
    {"01110", "10001", "10000", "10000", "10000", "10001", "01110"},  // C
    {"11110", "10001", "10001", "10001", "10001", "10001", "11110"},  // D
    {"11111", "10000", "10000", "11110", "10000", "10000", "11111"},  // E
    {"11111", "10000", "10000", "11110", "10000", "10000", "10000"},  // F
    {"01110", "10001", "10000", "10111", "10001", "10001", "01111"},  // G
    {"10001", "10001", "10001", "11111", "10001", "10001", "10001"},  // H
    {"01110", "00100", "00100", "00100", "00100", "00100", "01110"},  // I
    {"00111", "00010", "00010", "00010", "00010", "10010", "01100"},  // J
    {"10001", "10010", "10100", "11000", "10100", "10010", "10001"},  // K
    {"10000", "10000", "10000", "10000", "10000", "10000", "11111"},  // L
    {"10001", "11011", "10101", "10101", "10001", "10001", "10001"},  // M
    {"10001", "10001", "11001", "10101", "10011", "10001", "10001"},  // N
    {"01110", "10001", "10001", "10001", "10001", "10001", "01110"},  // O
    {"11110", "10001", "10001", "11110", "10000", "10000", "10000"},  // P
    {"01110", "10001", "10001", "10001", "10101", "10010", "01101"},  // Q
    {"11110", "10001", "10001", "11110", "10100", "10010", "10001"},  // R
    {"01111", "10000", "10000", "01110", "00001", "00001", "11110"},  // S
    {"11111", "00100", "00100", "00100", "00100", "00100", "00100"},  // T
    {"10001", "10001", "10001", "10001", "10001", "10001", "01110"},  // U
    {"10001", "10001", "10001", "10001", "10001", "01010", "00100"},  // V
    {"10001", "10001", "10001", "10101", "10101", "10101", "01010"},  // W
    {"10001", "10001", "01010", "00100", "01010", "10001", "10001"},  // X
    {"10001", "10001", "10001", "01010", "00100", "00100", "00100"},  // Y
    {"11111", "00001", "00010", "00100", "01000", "10000", "11111"},  // Z
};

PatchKind parse_kind(const std::string& s) {
  for (PatchKind k : {PatchKind::circle, PatchKind::ellipse, PatchKind::band, PatchKind::stamp, PatchKind::composite})
    if (s == to_string(k)) return k;
  throw DataError("unknown patch kind '" + s + "'");
}

BandProfile parse_profile(const std::string& s) {
  if (s == "constant") return BandProfile::constant;
  if (s == "linear_in_v") return BandProfile::linear_in_v;
  throw DataError("unknown band profile '" + s + "'");
}

}  // namespace

const char* to_string(PatchKind kind) {
  switch (kind) {
    case PatchKind::circle: return "circle";
    case PatchKind::ellipse: return "ellipse";
    case PatchKind::band: return "band";
    case PatchKind::stamp: return "stamp";
    case PatchKind::composite: return "composite";
  }
  return "?";
}

const char* to_string(BandProfile profile) {
  return profile == BandProfile::constant ? "constant" : "linear_in_v";
}

StampMask glyph_mask(char letter) {
  if (letter < 'A' || letter > 'Z') throw ParameterError(std::string("no glyph for '") + letter + "'");
  StampMask m;
  m.width = 5;
  m.height = 7;
  for (const char* row : kGlyphs[letter - 'A'])
    for (int c = 0; c < 5; ++c) m.cells.push_back(row[c] == '1');
  return m;
}

void ForcePatch::validate() const {
  if (kind == PatchKind::composite) {
    if (parts.empty()) throw ParameterError("composite patch has no parts");
    for (const ForcePatch& p : parts) {
      if (p.kind == PatchKind::composite) throw ParameterError("nested composite patches are not supported");
      p.validate();
    }
  } else {
    if (!(radius_u > 0.0) || !(radius_v > 0.0)) throw ParameterError("patch radii must be > 0");
    if (!(center_u >= 0.0 && center_u <= 1.0 && center_v >= 0.0 && center_v <= 1.0))
      throw ParameterError("patch center must lie in [0,1]^2");
    if (kind == PatchKind::stamp && !stamp) throw ParameterError("stamp patch without mask");
  }
  if (!(f_total > 0.0 && f_total <= kMaxPatchForceN))
    throw ParameterError("patch force " + fmt(f_total) + " N is outside (0, 20] N");
}

bool ForcePatch::contains(double u, double v) const {
  const double du = wrap_du(u - center_u);
  const double dv = v - center_v;
  switch (kind) {
    case PatchKind::circle:
    case PatchKind::ellipse: {
      const double c = std::cos(rotation), s = std::sin(rotation);
      const double x = (du * c + dv * s) / radius_u;
      const double y = (-du * s + dv * c) / radius_v;
      return x * x + y * y <= 1.0 + kEps;
    }
    case PatchKind::band:
      return std::abs(dv) <= radius_v + kEps;
    case PatchKind::stamp: {
      if (std::abs(du) > radius_u || std::abs(dv) > radius_v) return false;
      const int col = std::min(stamp->width - 1, static_cast<int>((du + radius_u) / (2.0 * radius_u) * stamp->width));
      const int row_from_bottom =
          std::min(stamp->height - 1, static_cast<int>((dv + radius_v) / (2.0 * radius_v) * stamp->height));
      return stamp->at(col, stamp->height - 1 - row_from_bottom);
    }
    case PatchKind::composite:
      return std::any_of(parts.begin(), parts.end(), [&](const ForcePatch& p) { return p.contains(u, v); });
  }
  return false;
}

ForcePatch ForcePatch::with_total(double newtons) const {
  ForcePatch p = *this;
  if (kind == PatchKind::composite) {
    const double scale = newtons / f_total;
    for (ForcePatch& part : p.parts) part.f_total *= scale;
  }
  p.f_total = newtons;
  return p;
}

std::string ForcePatch::to_record() const {
  std::ostringstream s;
  s << "kind=" << to_string(kind) << " center=" << fmt(center_u) << ',' << fmt(center_v) << " radii=" << fmt(radius_u)
    << ',' << fmt(radius_v) << " rotation=" << fmt(rotation) << " f_total=" << fmt(f_total)
    << " profile=" << to_string(profile);
  if (stamp) {
    s << " mask=" << stamp->width << 'x' << stamp->height << ':';
    for (auto c : stamp->cells) s << (c ? '1' : '0');
  }
  if (!label.empty()) s << " label=" << label;
  if (!parts.empty()) {
    s << " parts=[";
    for (std::size_t i = 0; i < parts.size(); ++i) s << (i ? ";" : "") << parts[i].to_record();
    s << ']';
  }
  return s.str();
}

ForcePatch ForcePatch::from_record(const std::string& record) {
  ForcePatch p;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < record.size() && record[pos] == ' ') ++pos;
    const std::size_t start = pos;
    int depth = 0;
    while (pos < record.size() && (depth > 0 || record[pos] != ' ')) {
      if (record[pos] == '[') ++depth;
      if (record[pos] == ']') --depth;
      ++pos;
    }
    return record.substr(start, pos - start);
  };
  auto pair_of = [](const std::string& v) {
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw DataError("expected 'a,b' in patch record, got '" + v + "'");
    return std::pair<double, double>{std::stod(v.substr(0, comma)), std::stod(v.substr(comma + 1))};
  };
  try {
    for (std::string tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw DataError("malformed patch token '" + tok + "'");
      const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
      if (key == "kind") {
        p.kind = parse_kind(value);
      } else if (key == "center") {
        std::tie(p.center_u, p.center_v) = pair_of(value);
      } else if (key == "radii") {
        std::tie(p.radius_u, p.radius_v) = pair_of(value);
      } else if (key == "rotation") {
        p.rotation = std::stod(value);
      } else if (key == "f_total") {
        p.f_total = std::stod(value);
      } else if (key == "profile") {
        p.profile = parse_profile(value);
      } else if (key == "label") {
        p.label = value;
      } else if (key == "mask") {
        StampMask m;
        const auto x = value.find('x'), colon = value.find(':');
        if (x == std::string::npos || colon == std::string::npos) throw DataError("malformed mask '" + value + "'");
        m.width = std::stoi(value.substr(0, x));
        m.height = std::stoi(value.substr(x + 1, colon - x - 1));
        for (char c : value.substr(colon + 1)) m.cells.push_back(c == '1');
        if (m.cells.size() != static_cast<std::size_t>(m.width) * m.height) throw DataError("mask size mismatch");
        p.stamp = std::move(m);
      } else if (key == "parts") {
        if (value.size() < 2 || value.front() != '[' || value.back() != ']') throw DataError("malformed parts list");
        const std::string inner = value.substr(1, value.size() - 2);
        std::size_t start = 0;
        int depth = 0;
        for (std::size_t i = 0; i <= inner.size(); ++i) {
          if (i < inner.size() && inner[i] == '[') ++depth;
          if (i < inner.size() && inner[i] == ']') --depth;
          if (i == inner.size() || (inner[i] == ';' && depth == 0)) {
            p.parts.push_back(from_record(inner.substr(start, i - start)));
            start = i + 1;
          }
        }
      } else {
        throw DataError("unknown patch key '" + key + "'");
      }
    }
  } catch (const std::invalid_argument&) {
    throw DataError("bad number in patch record '" + record + "'");
  } catch (const std::out_of_range&) {
    throw DataError("number out of range in patch record '" + record + "'");
  }
  return p;
}

ForcePatch make_circle(double u, double v, double radius, double f_total) {
  ForcePatch p;
  p.kind = PatchKind::circle;
  p.center_u = u;
  p.center_v = v;
  p.radius_u = p.radius_v = radius;
  p.f_total = f_total;
  return p;
}

ForcePatch make_ellipse(double u, double v, double radius_u, double radius_v, double rotation, double f_total) {
  ForcePatch p = make_circle(u, v, radius_u, f_total);
  p.kind = PatchKind::ellipse;
  p.radius_v = radius_v;
  p.rotation = rotation;
  return p;
}

ForcePatch make_band(double v_low, double v_high, BandProfile profile, double f_total) {
  ForcePatch p;
  p.kind = PatchKind::band;
  p.center_u = 0.5;
  p.center_v = 0.5 * (v_low + v_high);
  p.radius_u = 0.5;
  p.radius_v = 0.5 * (v_high - v_low);
  p.profile = profile;
  p.f_total = f_total;
  return p;
}

ForcePatch make_stamp(char letter, double u, double v, double half_u, double half_v, double f_total) {
  ForcePatch p;
  p.kind = PatchKind::stamp;
  p.center_u = u;
  p.center_v = v;
  p.radius_u = half_u;
  p.radius_v = half_v;
  p.f_total = f_total;
  p.stamp = glyph_mask(letter);
  p.label = std::string(1, letter);
  return p;
}

std::vector<int> select_patch_vertices(const geometry::UVChart& chart, const ForcePatch& patch,
                                       const std::vector<int>& exclude) {
  std::vector<bool> excluded(chart.num_mesh_vertices, false);
  for (int v : exclude)
    if (v >= 0 && static_cast<std::size_t>(v) < excluded.size()) excluded[v] = true;
  std::vector<int> ids;
  for (std::size_t c = 0; c < chart.size(); ++c) {
    const int v = chart.mesh_vertex[c];
    if (excluded[v]) continue;
    if (patch.contains(chart.uv[c].x(), chart.uv[c].y())) ids.push_back(v);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) throw EmptyPatchError("patch selects no vertices: " + patch.to_record());
  return ids;
}

fem::NodalForces nodal_forces(const geometry::UVChart& chart, const ForcePatch& patch, const std::vector<int>& selected,
                              const std::vector<geometry::Vec3>& normals) {
  if (selected.empty()) throw EmptyPatchError("cannot distribute force over an empty vertex set");
  fem::NodalForces out;
  if (patch.kind == PatchKind::composite) {
    const auto uv = mesh_uv(chart);
    for (const ForcePatch& part : patch.parts) {
      std::vector<int> part_ids;
      for (int v : selected)
        if (part.contains(uv[v].x(), uv[v].y())) part_ids.push_back(v);
      if (part_ids.empty()) continue;
      for (const auto& [v, f] : nodal_forces(chart, part, part_ids, normals).entries) {
        auto [it, inserted] = out.entries.emplace(v, f);
        if (!inserted) it->second += f;
      }
    }
    if (out.empty()) throw EmptyPatchError("no composite part covers the selection");
    return out;
  }

  if (patch.kind == PatchKind::band && patch.profile == BandProfile::linear_in_v) {
    const auto uv = mesh_uv(chart);
    double weight_sum = 0.0;
    for (int v : selected) weight_sum += uv[v].y();
    if (!(weight_sum > 0.0)) throw EmptyPatchError("linear band has zero total weight");
    for (int v : selected) out.entries.emplace(v, -normals[v] * (patch.f_total * uv[v].y() / weight_sum));
    return out;
  }

  const double per_vertex = patch.f_total / static_cast<double>(selected.size());
  for (int v : selected) out.entries.emplace(v, -normals[v] * per_vertex);
  return out;
}

double patch_pressure(const ForcePatch& patch, const geometry::UVChart& chart, const geometry::ShellTetMesh& mesh) {
  if (chart.uv_triangles.size() != mesh.outer_triangles.size())
    throw StructuralError("chart and mesh triangle counts differ");
  const auto areas = geometry::outer_triangle_areas(mesh);
  double area_mm2 = 0.0;
  for (std::size_t t = 0; t < chart.uv_triangles.size(); ++t) {
    const auto& tri = chart.uv_triangles[t];
    const geometry::Vec2 c = (chart.uv[tri[0]] + chart.uv[tri[1]] + chart.uv[tri[2]]) / 3.0;
    if (patch.contains(c.x(), c.y())) area_mm2 += areas[t];
  }
  if (!(area_mm2 > 0.0)) throw EmptyPatchError("patch covers no outer triangle");
  return patch.f_total / area_mm2 * 1000.0;  // N/mm^2 = MPa
}

bool TrainingPatchSpec::empty() const {
  const bool circles = circle_grid_u > 0 && circle_grid_v > 0 && !circle_radii.empty();
  const bool ellipses = ellipse_grid_u > 0 && ellipse_grid_v > 0 && !ellipse_axes.empty() && !ellipse_rotations.empty();
  const bool seams = seam_grid_v > 0 && !seam_radii.empty();
  return !circles && !ellipses && !seams;
}

std::vector<ForcePatch> enumerate_training_patches(const TrainingPatchSpec& spec) {
  auto grid = [](int i, int n) { return (i + 1.0) / (n + 1.0); };
  std::vector<ForcePatch> out;
  for (double r : spec.circle_radii)
    for (int j = 0; j < spec.circle_grid_v; ++j)
      for (int i = 0; i < spec.circle_grid_u; ++i) {
        ForcePatch p = make_circle((i + 0.5) / spec.circle_grid_u, grid(j, spec.circle_grid_v), r, 1.0);
        p.label = "circle";
        out.push_back(p);
      }
  for (const auto& [ru, rv] : spec.ellipse_axes)
    for (double rot : spec.ellipse_rotations)
      for (int j = 0; j < spec.ellipse_grid_v; ++j)
        for (int i = 0; i < spec.ellipse_grid_u; ++i) {
          ForcePatch p =
              make_ellipse((i + 0.5) / spec.ellipse_grid_u, grid(j, spec.ellipse_grid_v), ru, rv, rot, 1.0);
          p.label = "ellipse";
          out.push_back(p);
        }
  for (double r : spec.seam_radii)
    for (int j = 0; j < spec.seam_grid_v; ++j) {
      ForcePatch p = make_circle(0.0, grid(j, spec.seam_grid_v), r, 1.0);
      p.label = "seam";
      out.push_back(p);
    }
  return out;
}

std::vector<ForcePatch> make_ood_patches(const OodPatchSpec& spec) {
  std::vector<ForcePatch> out;
  for (BandProfile profile : {BandProfile::constant, BandProfile::linear_in_v})
    for (int i = 0; i < spec.band_count; ++i) {
      const double v = (i + 1.0) / (spec.band_count + 1.0);
      ForcePatch p = make_band(v - spec.band_half_width, v + spec.band_half_width, profile, 1.0);
      p.label = std::string("band_") + to_string(profile);
      out.push_back(p);
    }
  for (char letter : spec.letters)
    for (int k = 0; k < spec.letter_placements; ++k) {
      const double u = std::fmod(0.25 + 0.5 * k + 0.13 * (letter - 'A'), 1.0);
      const double v = 0.5 + (k % 2 ? 0.08 : -0.08);
      ForcePatch p = make_stamp(letter, u, v, spec.letter_half_u, spec.letter_half_v, 1.0);
      out.push_back(p);
    }
  // Four fingers in a row and, on odd grasps, a thumb on the far side.
  for (int g = 0; g < spec.grasp_count; ++g) {
    ForcePatch grasp;
    grasp.kind = PatchKind::composite;
    grasp.label = "grasp";
    const double u0 = std::fmod(0.1 + 0.37 * g, 1.0);
    const double v0 = 0.3 + 0.4 * ((g * 0.618034) - std::floor(g * 0.618034));
    const int fingers = g % 2 ? 5 : 4;
    for (int f = 0; f < 4; ++f) {
      const double u = std::fmod(u0 + 0.11 * f, 1.0);
      const double v = v0 + (f == 1 || f == 2 ? 0.03 : -0.02);
      grasp.parts.push_back(make_ellipse(u, v, 0.05, 0.09, 0.2, 1.0));
    }
    if (fingers == 5) grasp.parts.push_back(make_ellipse(std::fmod(u0 + 0.165 + 0.5, 1.0), v0 - 0.05, 0.06, 0.08, -0.3, 1.0));
    const double share = 1.0 / fingers;
    for (ForcePatch& part : grasp.parts) part.f_total = share;
    grasp.f_total = 1.0;
    out.push_back(grasp);
  }
  return out;
}

}  // namespace softshell::bcgen
