#include "softshell/uvmap.hpp"

#include "softshell/binary_io.hpp"
#include "softshell/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace softshell::uvmap {

const char* to_string(Semantic s) {
  switch (s) {
    case Semantic::force: return "force";
    case Semantic::thickness: return "thickness";
    case Semantic::dx: return "dx";
    case Semantic::dy: return "dy";
    case Semantic::dz: return "dz";
  }
  return "?";
}

UVImage::UVImage(int w, int h, std::vector<Semantic> sem)
    : width(w), height(h), channels(static_cast<int>(sem.size())), semantics(std::move(sem)) {
  if (width <= 0 || height <= 0) throw ShapeError("image dimensions must be positive");
  data.assign(plane_size() * channels, 0.0f);
}

float UVImage::sample(int c, double u, double v) const {
  const double px = std::clamp(u * width - 0.5, 0.0, width - 1.0);
  const double py = std::clamp(v * height - 0.5, 0.0, height - 1.0);
  const int x0 = static_cast<int>(px), y0 = static_cast<int>(py);
  const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
  const double tx = px - x0, ty = py - y0;
  const double top = (1.0 - tx) * at(c, y0, x0) + tx * at(c, y0, x1);
  const double bottom = (1.0 - tx) * at(c, y1, x0) + tx * at(c, y1, x1);
  return static_cast<float>((1.0 - ty) * top + ty * bottom);
}

const ChannelRange& NormalizationSpec::range(Semantic s) const {
  switch (s) {
    case Semantic::force: return force;
    case Semantic::thickness: return thickness;
    default: return deformation;
  }
}

std::vector<double> normalize_channel(std::span<const double> values, Semantic semantic, const NormalizationSpec& spec,
                                      NormalizeStats* stats) {
  const ChannelRange& r = spec.range(semantic);
  const double scale = (r.normalized_max - r.normalized_min) / (r.physical_max - r.physical_min);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double x = values[i];
    if (x < r.physical_min || x > r.physical_max) {
      x = std::clamp(x, r.physical_min, r.physical_max);
      if (stats) ++stats->clamped;
    }
    out[i] = r.normalized_min + (x - r.physical_min) * scale;
  }
  return out;
}

std::vector<double> denormalize_channel(std::span<const double> values, Semantic semantic,
                                        const NormalizationSpec& spec) {
  const ChannelRange& r = spec.range(semantic);
  const double scale = (r.physical_max - r.physical_min) / (r.normalized_max - r.normalized_min);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = r.physical_min + (values[i] - r.normalized_min) * scale;
  return out;
}

void normalize_image(UVImage& img, const NormalizationSpec& spec, NormalizeStats* stats) {
  for (int c = 0; c < img.channels; ++c) {
    auto ch = img.channel(c);
    std::vector<double> tmp(ch.begin(), ch.end());
    const auto n = normalize_channel(tmp, img.semantics[c], spec, stats);
    std::transform(n.begin(), n.end(), ch.begin(), [](double x) { return static_cast<float>(x); });
  }
}

void denormalize_image(UVImage& img, const NormalizationSpec& spec) {
  for (int c = 0; c < img.channels; ++c) {
    auto ch = img.channel(c);
    std::vector<double> tmp(ch.begin(), ch.end());
    const auto d = denormalize_channel(tmp, img.semantics[c], spec);
    std::transform(d.begin(), d.end(), ch.begin(), [](double x) { return static_cast<float>(x); });
  }
}

UVImage rasterize_attribute(const geometry::UVChart& chart, std::span<const double> values,
                            std::vector<Semantic> semantics, int width, int height) {
  const int nc = static_cast<int>(semantics.size());
  if (nc == 0) throw ShapeError("rasterize needs at least one channel");
  if (values.size() != chart.num_mesh_vertices * nc)
    throw ShapeError("field has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(chart.num_mesh_vertices * nc));
  UVImage img(width, height, std::move(semantics));
  for (const auto& tri : chart.uv_triangles) {
    const geometry::Vec2 a = chart.uv[tri[0]], b = chart.uv[tri[1]], c = chart.uv[tri[2]];
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (det == 0.0) continue;
    const double umin = std::min({a.x(), b.x(), c.x()}), umax = std::max({a.x(), b.x(), c.x()});
    const double vmin = std::min({a.y(), b.y(), c.y()}), vmax = std::max({a.y(), b.y(), c.y()});
    const int x0 = std::max(0, static_cast<int>(std::ceil(umin * width - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(umax * width - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(vmin * height - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(vmax * height - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      const double pv = (y + 0.5) / height;
      for (int x = x0; x <= x1; ++x) {
        const double pu = (x + 0.5) / width;
        const double l1 = ((pu - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (pv - a.y())) / det;
        const double l2 = ((b.x() - a.x()) * (pv - a.y()) - (pu - a.x()) * (b.y() - a.y())) / det;
        const double l0 = 1.0 - l1 - l2;
        constexpr double kTol = -1e-12;
        if (l0 < kTol || l1 < kTol || l2 < kTol) continue;
        for (int ch = 0; ch < nc; ++ch) {
          const double val = l0 * values[chart.mesh_vertex[tri[0]] * nc + ch] +
                             l1 * values[chart.mesh_vertex[tri[1]] * nc + ch] +
                             l2 * values[chart.mesh_vertex[tri[2]] * nc + ch];
          img.at(ch, y, x) = static_cast<float>(val);
        }
      }
    }
  }
  return img;
}

UVImage rasterize_scalar(const geometry::UVChart& chart, std::span<const double> values, Semantic semantic, int width,
                         int height) {
  return rasterize_attribute(chart, values, {semantic}, width, height);
}

UVImage rasterize_vectors(const geometry::UVChart& chart, const std::vector<geometry::Vec3>& values, int width,
                          int height) {
  std::vector<double> flat;
  flat.reserve(values.size() * 3);
  for (const auto& v : values) flat.insert(flat.end(), {v.x(), v.y(), v.z()});
  return rasterize_attribute(chart, flat, {Semantic::dx, Semantic::dy, Semantic::dz}, width, height);
}

UVImage assemble_sample(const UVImage& force, const UVImage& thickness, const UVImage& deformation) {
  if (force.width != thickness.width || force.width != deformation.width || force.height != thickness.height ||
      force.height != deformation.height)
    throw ShapeError("sample images differ in size");
  if (force.semantics != std::vector<Semantic>{Semantic::force} ||
      thickness.semantics != std::vector<Semantic>{Semantic::thickness} ||
      deformation.semantics != std::vector<Semantic>{Semantic::dx, Semantic::dy, Semantic::dz})
    throw ShapeError("sample images have unexpected channel semantics");
  UVImage out(force.width, force.height,
              {Semantic::force, Semantic::thickness, Semantic::dx, Semantic::dy, Semantic::dz});
  auto it = std::copy(force.data.begin(), force.data.end(), out.data.begin());
  it = std::copy(thickness.data.begin(), thickness.data.end(), it);
  std::copy(deformation.data.begin(), deformation.data.end(), it);
  return out;
}

UVImage select_channels(const UVImage& img, std::span<const int> channels) {
  std::vector<Semantic> sem;
  for (int c : channels) {
    if (c < 0 || c >= img.channels) throw ShapeError("channel index out of range");
    sem.push_back(img.semantics[c]);
  }
  UVImage out(img.width, img.height, std::move(sem));
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto src = img.channel(channels[i]);
    std::copy(src.begin(), src.end(), out.channel(static_cast<int>(i)).begin());
  }
  return out;
}

SampleChannels disassemble_sample(const UVImage& sample) {
  if (sample.channels != 5) throw ShapeError("a sample image has 5 channels");
  static constexpr int kForce[] = {0}, kThickness[] = {1}, kDeformation[] = {2, 3, 4};
  return {select_channels(sample, kForce), select_channels(sample, kThickness), select_channels(sample, kDeformation)};
}

std::vector<geometry::Vec3> backmap_deformation(const UVImage& img, const geometry::UVChart& chart) {
  if (img.channels != 3) throw ShapeError("deformation image must have 3 channels");
  std::vector<geometry::Vec3> sum(chart.num_mesh_vertices, geometry::Vec3::Zero());
  std::vector<int> count(chart.num_mesh_vertices, 0);
  for (std::size_t c = 0; c < chart.size(); ++c) {
    const auto& uv = chart.uv[c];
    const int v = chart.mesh_vertex[c];
    for (int k = 0; k < 3; ++k) sum[v][k] += img.sample(k, uv.x(), uv.y());
    ++count[v];
  }
  for (std::size_t v = 0; v < sum.size(); ++v)
    if (count[v] > 1) sum[v] /= count[v];
  return sum;
}

void write_image(std::ostream& out, const UVImage& img) {
  binary::put_u32(out, static_cast<std::uint32_t>(img.width));
  binary::put_u32(out, static_cast<std::uint32_t>(img.height));
  binary::put_u32(out, static_cast<std::uint32_t>(img.channels));
  for (Semantic s : img.semantics) binary::put_u32(out, static_cast<std::uint32_t>(s));
  for (float f : img.data) binary::put_f32(out, f);
}

UVImage read_image(std::istream& in, std::uint64_t& offset) {
  const std::uint64_t start = offset;
  const std::uint32_t w = binary::get_u32(in, offset);
  const std::uint32_t h = binary::get_u32(in, offset);
  const std::uint32_t c = binary::get_u32(in, offset);
  if (w == 0 || h == 0 || c == 0 || w > 8192 || h > 8192 || c > 16)
    throw FormatError("implausible image header " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                          std::to_string(c),
                      start);
  std::vector<Semantic> sem;
  for (std::uint32_t i = 0; i < c; ++i) {
    const std::uint32_t code = binary::get_u32(in, offset);
    if (code > static_cast<std::uint32_t>(Semantic::dz)) throw FormatError("unknown channel semantic", offset - 4);
    sem.push_back(static_cast<Semantic>(code));
  }
  UVImage img(static_cast<int>(w), static_cast<int>(h), std::move(sem));
  for (float& f : img.data) f = binary::get_f32(in, offset);
  return img;
}

void write_channel_pgm(std::ostream& out, const UVImage& img, int channel, double lo, double hi) {
  out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  // PGM rows run top to bottom; put v = 1 on top.
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x) {
      const double t = std::clamp((img.at(channel, y, x) - lo) / (hi - lo), 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      out.put(static_cast<char>(q >> 8));
      out.put(static_cast<char>(q & 0xFF));
    }
}

}  // namespace softshell::uvmap
