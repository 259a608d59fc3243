#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "tcbf/barrier.hpp"
#include "tcbf/heightfield.hpp"
#include "tcbf/vehicle.hpp"

namespace tcbf {

/// 8-bit RGB raster, one pixel per terrain cell. Image row 0 is the
/// terrain's maximum-y row so +y points up.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;

  std::array<std::uint8_t, 3> pixel(std::uint32_t px, std::uint32_t py) const;
  void set(std::uint32_t px, std::uint32_t py, std::array<std::uint8_t, 3> c);
};

struct Pixel {
  std::int64_t px = 0;
  std::int64_t py = 0;
  bool operator==(const Pixel&) const = default;
};

Pixel world_to_pixel(const Heightfield& hf, double x, double y);
Point2 pixel_to_world(const Heightfield& hf, const Pixel& p);

struct RenderOptions {
  /// Cells between barrier evaluations when a barrier is supplied.
  std::uint32_t mask_stride = 4;
  /// Heading used for the barrier mask observations.
  double mask_yaw = 1.5707963267948966;
  VehicleGeometry vehicle;
  PatchGeometry patch;
};

/// Grayscale elevation with an optional trajectory (green) and h-sign mask
/// (blue for h >= 0, red for h < 0) at the evaluated cells.
Image render(const Heightfield& hf, const Trajectory* trajectory = nullptr, const Barrier* barrier = nullptr,
             const RenderOptions& options = {});

/// Binary PPM (P6).
std::vector<std::uint8_t> encode_ppm(const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

}  // namespace tcbf
