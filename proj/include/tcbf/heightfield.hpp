#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tcbf/types.hpp"

namespace tcbf {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

/// Gridded 2.5D elevation. Cell (col, row) sits at
/// origin + (col, row) * resolution; x runs along columns, y along rows.
class Heightfield {
 public:
  Heightfield(std::uint32_t cols, std::uint32_t rows, float resolution, Point2 origin,
              std::vector<float> heights);

  static Heightfield flat(std::uint32_t cols, std::uint32_t rows, float resolution,
                          Point2 origin = {}, float height = 0.0f);

  std::uint32_t cols() const { return cols_; }
  std::uint32_t rows() const { return rows_; }
  float resolution() const { return resolution_; }
  Point2 origin() const { return origin_; }
  std::span<const float> heights() const { return heights_; }

  float at(std::uint32_t col, std::uint32_t row) const { return heights_[std::size_t(row) * cols_ + col]; }

  double min_x() const { return origin_.x; }
  double min_y() const { return origin_.y; }
  double max_x() const { return origin_.x + double(cols_ - 1) * resolution_; }
  double max_y() const { return origin_.y + double(rows_ - 1) * resolution_; }
  double width() const { return max_x() - min_x(); }
  double length() const { return max_y() - min_y(); }

  bool contains(double x, double y) const;

  /// Bilinear interpolation; throws DomainError outside the extent.
  double elevation_at(double x, double y) const;

  /// Same as elevation_at but returns nullopt instead of throwing.
  std::optional<double> try_elevation_at(double x, double y) const;

  bool operator==(const Heightfield&) const = default;

 private:
  std::uint32_t cols_;
  std::uint32_t rows_;
  float resolution_;
  Point2 origin_;
  std::vector<float> heights_;
};

enum class Difficulty : std::uint8_t { low = 0, medium = 1, high = 2 };

std::string_view to_string(Difficulty d);
Difficulty parse_difficulty(std::string_view s);

/// Synthetic terrain recipe. Defaults describe a 3.1 m x 5 m testbed with
/// elevations capped at 0.6 m.
struct TerrainSpec {
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::low;
  double width = 3.1;
  double length = 5.0;
  double resolution = 0.05;
  double max_height = 0.6;
  std::optional<double> amplitude;
  std::optional<double> feature_density;

  void validate() const;
};

/// Generator recipe version; bump whenever generate() output changes.
inline constexpr int kTerrainRecipeVersion = 3;

/// Deterministic in `spec`: sum of seeded Gaussian bumps, plus gaps and
/// elongated ridges whose count and amplitude grow with difficulty,
/// clamped to [0, max_height].
Heightfield generate(const TerrainSpec& spec);

/// Central-difference gradient magnitudes at interior nodes.
std::vector<double> gradient_magnitudes(const Heightfield& hf);

/// Robot-frame observation footprint. Rows run front-to-back along the
/// heading, columns left-to-right; the footprint centre lies
/// `center_ahead` metres in front of the robot.
struct PatchGeometry {
  double length = 2.0;
  double width = 0.8;
  double center_ahead = 0.5;

  /// Robot-frame (forward, left) offset of lattice point (row, col).
  double forward(int row) const;
  double left(int col) const;
};

inline constexpr int kPatchRows = 100;
inline constexpr int kPatchCols = 40;
inline constexpr int kPatchSize = kPatchRows * kPatchCols;

/// Terrain elevation relative to the robot, sampled on the robot-frame lattice.
struct ObservationPatch {
  std::vector<float> values = std::vector<float>(kPatchSize, 0.0f);
  RobotState anchor;

  float at(int row, int col) const { return values[std::size_t(row) * kPatchCols + col]; }
  bool operator==(const ObservationPatch&) const = default;
};

/// Throws DomainError when the footprint leaves the terrain.
ObservationPatch extract_patch(const Heightfield& hf, const RobotState& state,
                               const PatchGeometry& geometry = {});

std::optional<ObservationPatch> try_extract_patch(const Heightfield& hf, const RobotState& state,
                                                  const PatchGeometry& geometry = {});

}  // namespace tcbf
