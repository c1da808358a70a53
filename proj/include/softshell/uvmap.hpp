#pragma once

#include "softshell/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace softshell::uvmap {

enum class Semantic : std::uint32_t { force = 0, thickness = 1, dx = 2, dy = 3, dz = 4 };

const char* to_string(Semantic s);

// Planar float image: channel-major, each channel row major, row 0 at v = 0.
struct UVImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<Semantic> semantics;
  std::vector<float> data;

  UVImage() = default;
  UVImage(int width, int height, std::vector<Semantic> semantics);

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  std::span<float> channel(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const { return {data.data() + c * plane_size(), plane_size()}; }
  // Bilinear sample at (u, v) with edge clamping.
  float sample(int c, double u, double v) const;

  bool operator==(const UVImage&) const = default;
};

// Physical bounds mapped onto the normalized range per semantic.
struct ChannelRange {
  double physical_min;
  double physical_max;
  double normalized_min;
  double normalized_max;
};

struct NormalizationSpec {
  ChannelRange force{0.0, 20.0, 0.0, 1.0};          // N
  ChannelRange thickness{2.5, 12.5, 0.0, 1.0};      // mm
  ChannelRange deformation{-30.0, 30.0, -1.0, 1.0};  // mm, shared by dx/dy/dz

  const ChannelRange& range(Semantic s) const;
};

struct NormalizeStats {
  std::size_t clamped = 0;
};

// Affine map into the normalized range. Out-of-range inputs are clamped and
// counted in `stats`.
std::vector<double> normalize_channel(std::span<const double> values, Semantic semantic, const NormalizationSpec& spec,
                                      NormalizeStats* stats = nullptr);
std::vector<double> denormalize_channel(std::span<const double> values, Semantic semantic,
                                        const NormalizationSpec& spec);

// In-place normalization of every channel of an image.
void normalize_image(UVImage& img, const NormalizationSpec& spec, NormalizeStats* stats = nullptr);
void denormalize_image(UVImage& img, const NormalizationSpec& spec);

// Rasterizes a per-mesh-vertex field with `semantics.size()` components per
// vertex (interleaved) by barycentric interpolation at pixel centers.
// Pixels outside every UV triangle are 0.
UVImage rasterize_attribute(const geometry::UVChart& chart, std::span<const double> values,
                            std::vector<Semantic> semantics, int width, int height);

UVImage rasterize_scalar(const geometry::UVChart& chart, std::span<const double> values, Semantic semantic, int width,
                         int height);
UVImage rasterize_vectors(const geometry::UVChart& chart, const std::vector<geometry::Vec3>& values, int width,
                          int height);

// Channel order is fixed: force, thickness, dx, dy, dz.
UVImage assemble_sample(const UVImage& force, const UVImage& thickness, const UVImage& deformation);

struct SampleChannels {
  UVImage force;
  UVImage thickness;
  UVImage deformation;
};
SampleChannels disassemble_sample(const UVImage& sample);

// Extracts the listed channels, in order.
UVImage select_channels(const UVImage& img, std::span<const int> channels);

// Bilinear sample of a (dx, dy, dz) image at every chart vertex; chart vertices
// sharing a mesh vertex (the seam) are averaged. Non-outer vertices get zero.
std::vector<geometry::Vec3> backmap_deformation(const UVImage& img, const geometry::UVChart& chart);

// Binary layout (little endian): u32 width, u32 height, u32 channels,
// channels x u32 semantic code, then width*height*channels f32 in planar order.
void write_image(std::ostream& out, const UVImage& img);
// `offset` tracks the absolute stream position for error reporting.
UVImage read_image(std::istream& in, std::uint64_t& offset);

// 16-bit binary PGM of one channel, mapping [lo, hi] onto [0, 65535].
void write_channel_pgm(std::ostream& out, const UVImage& img, int channel, double lo, double hi);

}  // namespace softshell::uvmap
