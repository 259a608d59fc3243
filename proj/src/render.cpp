#include "tcbf/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcbf/errors.hpp"
#include "tcbf/io.hpp"

namespace tcbf {

namespace {

constexpr std::array<std::uint8_t, 3> kTrajectory = {40, 220, 60};
constexpr std::array<std::uint8_t, 3> kSafe = {60, 120, 255};
constexpr std::array<std::uint8_t, 3> kUnsafe = {230, 40, 40};

bool inside(const Image& img, const Pixel& p) {
  return p.px >= 0 && p.py >= 0 && p.px < std::int64_t(img.width) && p.py < std::int64_t(img.height);
}

}  // namespace

std::array<std::uint8_t, 3> Image::pixel(std::uint32_t px, std::uint32_t py) const {
  const std::size_t k = (std::size_t(py) * width + px) * 3;
  return {rgb[k], rgb[k + 1], rgb[k + 2]};
}

void Image::set(std::uint32_t px, std::uint32_t py, std::array<std::uint8_t, 3> c) {
  const std::size_t k = (std::size_t(py) * width + px) * 3;
  std::copy(c.begin(), c.end(), rgb.begin() + std::ptrdiff_t(k));
}

Pixel world_to_pixel(const Heightfield& hf, double x, double y) {
  const auto col = std::int64_t(std::llround((x - hf.origin().x) / hf.resolution()));
  const auto row = std::int64_t(std::llround((y - hf.origin().y) / hf.resolution()));
  return {col, std::int64_t(hf.rows()) - 1 - row};
}

Point2 pixel_to_world(const Heightfield& hf, const Pixel& p) {
  const auto row = std::int64_t(hf.rows()) - 1 - p.py;
  return {hf.origin().x + double(p.px) * hf.resolution(), hf.origin().y + double(row) * hf.resolution()};
}

Image render(const Heightfield& hf, const Trajectory* trajectory, const Barrier* barrier,
             const RenderOptions& options) {
  Image img;
  img.width = hf.cols();
  img.height = hf.rows();
  img.rgb.assign(std::size_t(img.width) * img.height * 3, 0);

  const auto [lo, hi] = std::minmax_element(hf.heights().begin(), hf.heights().end());
  const double range = double(*hi) - double(*lo);
  for (std::uint32_t r = 0; r < hf.rows(); ++r) {
    for (std::uint32_t c = 0; c < hf.cols(); ++c) {
      const double t = range > 0.0 ? (double(hf.at(c, r)) - *lo) / range : 0.5;
      const auto g = std::uint8_t(std::lround(32.0 + 192.0 * t));
      img.set(c, hf.rows() - 1 - r, {g, g, g});
    }
  }

  if (barrier != nullptr) {
    if (options.mask_stride == 0) throw ValidationError("render: mask stride must be positive");
    std::vector<ObservationPatch> patches;
    std::vector<Pixel> where;
    for (std::uint32_t r = 0; r < hf.rows(); r += options.mask_stride) {
      for (std::uint32_t c = 0; c < hf.cols(); c += options.mask_stride) {
        const Point2 p{hf.origin().x + c * double(hf.resolution()), hf.origin().y + r * double(hf.resolution())};
        RobotState s;
        try {
          s = settle_pose(hf, p.x, p.y, options.mask_yaw, options.vehicle);
        } catch (const DomainError&) {
          continue;
        }
        auto patch = try_extract_patch(hf, s, options.patch);
        if (!patch) continue;
        patches.push_back(std::move(*patch));
        where.push_back({std::int64_t(c), std::int64_t(hf.rows()) - 1 - std::int64_t(r)});
      }
    }
    const auto h = barrier->evaluate(patches);
    for (std::size_t k = 0; k < h.size(); ++k) {
      img.set(std::uint32_t(where[k].px), std::uint32_t(where[k].py), h[k] >= 0.0 ? kSafe : kUnsafe);
    }
  }

  if (trajectory != nullptr) {
    for (const RobotState& s : trajectory->states) {
      const Pixel p = world_to_pixel(hf, s.x, s.y);
      if (!inside(img, p)) throw ValidationError("render: trajectory leaves the terrain");
      img.set(std::uint32_t(p.px), std::uint32_t(p.py), kTrajectory);
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) { io::write_file(path, encode_ppm(img)); }

}  // namespace tcbf
