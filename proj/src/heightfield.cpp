#include "tcbf/heightfield.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "tcbf/errors.hpp"
#include "tcbf/random.hpp"

namespace tcbf {

namespace {

// Nodes within this distance (in cells) of the border are treated as inside.
constexpr double kEdgeSlack = 1e-9;

struct Recipe {
  double amplitude;
  double bump_density;  // per square metre
  double sigma_min;
  double sigma_max;
  double gap_density;
  double ridge_density;
};

// Version 3 of the generator recipe (kTerrainRecipeVersion).
constexpr std::array<Recipe, 3> kRecipes = {{
    {0.12, 1.0, 0.35, 0.60, 0.00, 0.00},  // low: broad, gentle swells
    {0.18, 0.45, 0.22, 0.45, 0.05, 0.03},  // medium: steeper bumps, small gaps
    {0.25, 0.52, 0.16, 0.35, 0.084, 0.072},  // high: steep rocks and ridges
}};

struct Feature {
  double cx, cy;
  double sigma_along, sigma_across;
  double angle;
  double height;  // negative for gaps
};

bool node_coords(const Heightfield& hf, double x, double y, double& fx, double& fy) {
  fx = (x - hf.origin().x) / hf.resolution();
  fy = (y - hf.origin().y) / hf.resolution();
  const double cmax = double(hf.cols() - 1);
  const double rmax = double(hf.rows() - 1);
  if (!(fx >= -kEdgeSlack && fx <= cmax + kEdgeSlack && fy >= -kEdgeSlack && fy <= rmax + kEdgeSlack)) {
    return false;
  }
  fx = std::clamp(fx, 0.0, cmax);
  fy = std::clamp(fy, 0.0, rmax);
  return true;
}

double bilinear(const Heightfield& hf, double fx, double fy) {
  const auto i = std::min<std::uint32_t>(std::uint32_t(fx), hf.cols() - 2);
  const auto j = std::min<std::uint32_t>(std::uint32_t(fy), hf.rows() - 2);
  const double tx = fx - i;
  const double ty = fy - j;
  const double h00 = hf.at(i, j);
  const double h10 = hf.at(i + 1, j);
  const double h01 = hf.at(i, j + 1);
  const double h11 = hf.at(i + 1, j + 1);
  return (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11);
}

}  // namespace

Heightfield::Heightfield(std::uint32_t cols, std::uint32_t rows, float resolution, Point2 origin,
                         std::vector<float> heights)
    : cols_(cols), rows_(rows), resolution_(resolution), origin_(origin), heights_(std::move(heights)) {
  if (cols_ < 2 || rows_ < 2) throw ValidationError("heightfield needs at least 2x2 cells");
  if (!(resolution_ > 0.0f) || !std::isfinite(resolution_)) {
    throw ValidationError("heightfield resolution must be positive");
  }
  if (!std::isfinite(origin_.x) || !std::isfinite(origin_.y)) {
    throw ValidationError("heightfield origin must be finite");
  }
  if (heights_.size() != std::size_t(cols_) * rows_) {
    throw ValidationError("heightfield data length " + std::to_string(heights_.size()) +
                          " does not match " + std::to_string(cols_) + "x" + std::to_string(rows_));
  }
  for (float h : heights_) {
    if (!std::isfinite(h)) throw ValidationError("heightfield contains non-finite heights");
  }
}

Heightfield Heightfield::flat(std::uint32_t cols, std::uint32_t rows, float resolution, Point2 origin,
                              float height) {
  return Heightfield(cols, rows, resolution, origin, std::vector<float>(std::size_t(cols) * rows, height));
}

bool Heightfield::contains(double x, double y) const {
  double fx, fy;
  return node_coords(*this, x, y, fx, fy);
}

double Heightfield::elevation_at(double x, double y) const {
  double fx, fy;
  if (!node_coords(*this, x, y, fx, fy)) {
    throw DomainError("elevation query (" + std::to_string(x) + ", " + std::to_string(y) +
                      ") outside terrain extent");
  }
  return bilinear(*this, fx, fy);
}

std::optional<double> Heightfield::try_elevation_at(double x, double y) const {
  double fx, fy;
  if (!node_coords(*this, x, y, fx, fy)) return std::nullopt;
  return bilinear(*this, fx, fy);
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::low: return "low";
    case Difficulty::medium: return "medium";
    case Difficulty::high: return "high";
  }
  return "unknown";
}

Difficulty parse_difficulty(std::string_view s) {
  if (s == "low") return Difficulty::low;
  if (s == "medium") return Difficulty::medium;
  if (s == "high") return Difficulty::high;
  throw ValidationError("unknown difficulty '" + std::string(s) + "'");
}

void TerrainSpec::validate() const {
  if (!(width > 0.0) || !(length > 0.0) || !std::isfinite(width) || !std::isfinite(length)) {
    throw ValidationError("terrain extent must be positive");
  }
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw ValidationError("terrain resolution must be positive");
  }
  if (width / resolution < 1.0 || length / resolution < 1.0) {
    throw ValidationError("terrain extent smaller than one cell");
  }
  if (!(max_height >= 0.0)) throw ValidationError("max_height must be nonnegative");
  if (amplitude && !(*amplitude >= 0.0)) throw ValidationError("amplitude override must be nonnegative");
  if (feature_density && !(*feature_density >= 0.0)) {
    throw ValidationError("feature density override must be nonnegative");
  }
}

Heightfield generate(const TerrainSpec& spec) {
  spec.validate();
  const Recipe& recipe = kRecipes[std::size_t(spec.difficulty)];
  const double amp = spec.amplitude.value_or(recipe.amplitude);
  const double density = spec.feature_density.value_or(1.0);

  const auto cols = std::uint32_t(std::floor(spec.width / spec.resolution + 1e-9)) + 1;
  const auto rows = std::uint32_t(std::floor(spec.length / spec.resolution + 1e-9)) + 1;
  const auto res = float(spec.resolution);

  Rng rng(Rng::derive(spec.seed, std::uint64_t(spec.difficulty)));
  const double area = spec.width * spec.length;
  // Features may be centred slightly outside the field so borders are not flat.
  constexpr double kPad = 0.3;
  auto place = [&](Feature& f) {
    f.cx = rng.uniform(-kPad, spec.width + kPad);
    f.cy = rng.uniform(-kPad, spec.length + kPad);
  };

  std::vector<Feature> features;
  const auto bumps = std::size_t(std::lround(area * recipe.bump_density * density));
  for (std::size_t k = 0; k < bumps; ++k) {
    Feature f{};
    place(f);
    f.sigma_along = f.sigma_across = rng.uniform(recipe.sigma_min, recipe.sigma_max);
    f.height = amp * rng.uniform(0.4, 1.0);
    features.push_back(f);
  }
  const auto gaps = std::size_t(std::lround(area * recipe.gap_density * density));
  for (std::size_t k = 0; k < gaps; ++k) {
    Feature f{};
    place(f);
    f.sigma_along = f.sigma_across = rng.uniform(0.08, 0.15);
    f.height = -amp * rng.uniform(0.5, 0.9);
    features.push_back(f);
  }
  const auto ridges = std::size_t(std::lround(area * recipe.ridge_density * density));
  for (std::size_t k = 0; k < ridges; ++k) {
    Feature f{};
    place(f);
    f.sigma_along = rng.uniform(0.6, 1.4);
    f.sigma_across = rng.uniform(0.12, 0.22);
    f.angle = rng.uniform(0.0, std::numbers::pi);
    f.height = amp * rng.uniform(0.6, 1.0);
    features.push_back(f);
  }

  std::vector<double> acc(std::size_t(cols) * rows, 0.25 * amp);
  for (const Feature& f : features) {
    const double reach = 4.0 * std::max(f.sigma_along, f.sigma_across);
    const auto c0 = std::int64_t(std::floor((f.cx - reach) / spec.resolution));
    const auto c1 = std::int64_t(std::ceil((f.cx + reach) / spec.resolution));
    const auto r0 = std::int64_t(std::floor((f.cy - reach) / spec.resolution));
    const auto r1 = std::int64_t(std::ceil((f.cy + reach) / spec.resolution));
    const double ca = std::cos(f.angle);
    const double sa = std::sin(f.angle);
    for (std::int64_t r = std::max<std::int64_t>(r0, 0); r <= std::min<std::int64_t>(r1, rows - 1); ++r) {
      for (std::int64_t c = std::max<std::int64_t>(c0, 0); c <= std::min<std::int64_t>(c1, cols - 1); ++c) {
        const double dx = double(c) * spec.resolution - f.cx;
        const double dy = double(r) * spec.resolution - f.cy;
        const double along = (dx * ca + dy * sa) / f.sigma_along;
        const double across = (-dx * sa + dy * ca) / f.sigma_across;
        acc[std::size_t(r) * cols + std::size_t(c)] += f.height * std::exp(-0.5 * (along * along + across * across));
      }
    }
  }

  std::vector<float> heights(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    heights[k] = float(std::clamp(acc[k], 0.0, spec.max_height) + 0.0);
  }
  return Heightfield(cols, rows, res, Point2{0.0, 0.0}, std::move(heights));
}

std::vector<double> gradient_magnitudes(const Heightfield& hf) {
  std::vector<double> out;
  if (hf.cols() < 3 || hf.rows() < 3) return out;
  out.reserve(std::size_t(hf.cols() - 2) * (hf.rows() - 2));
  const double inv = 1.0 / (2.0 * hf.resolution());
  for (std::uint32_t r = 1; r + 1 < hf.rows(); ++r) {
    for (std::uint32_t c = 1; c + 1 < hf.cols(); ++c) {
      const double gx = (double(hf.at(c + 1, r)) - hf.at(c - 1, r)) * inv;
      const double gy = (double(hf.at(c, r + 1)) - hf.at(c, r - 1)) * inv;
      out.push_back(std::hypot(gx, gy));
    }
  }
  return out;
}

double PatchGeometry::forward(int row) const {
  return center_ahead + 0.5 * length - (row + 0.5) * (length / kPatchRows);
}

double PatchGeometry::left(int col) const {
  return 0.5 * width - (col + 0.5) * (width / kPatchCols);
}

std::optional<ObservationPatch> try_extract_patch(const Heightfield& hf, const RobotState& state,
                                                  const PatchGeometry& geometry) {
  const double c = std::cos(state.yaw);
  const double s = std::sin(state.yaw);
  auto world = [&](double fwd, double lft) {
    return Point2{state.x + fwd * c - lft * s, state.y + fwd * s + lft * c};
  };
  // The footprint is convex, so checking the outer lattice corners suffices.
  for (int row : {0, kPatchRows - 1}) {
    for (int col : {0, kPatchCols - 1}) {
      const Point2 p = world(geometry.forward(row), geometry.left(col));
      if (!hf.contains(p.x, p.y)) return std::nullopt;
    }
  }

  ObservationPatch patch;
  patch.anchor = state;
  for (int row = 0; row < kPatchRows; ++row) {
    const double fwd = geometry.forward(row);
    for (int col = 0; col < kPatchCols; ++col) {
      const Point2 p = world(fwd, geometry.left(col));
      const auto h = hf.try_elevation_at(p.x, p.y);
      if (!h) return std::nullopt;
      patch.values[std::size_t(row) * kPatchCols + col] = float(*h - state.z);
    }
  }
  return patch;
}

ObservationPatch extract_patch(const Heightfield& hf, const RobotState& state, const PatchGeometry& geometry) {
  auto patch = try_extract_patch(hf, state, geometry);
  if (!patch) {
    throw DomainError("observation footprint at (" + std::to_string(state.x) + ", " +
                      std::to_string(state.y) + ") leaves the terrain");
  }
  return std::move(*patch);
}

}  // namespace tcbf
