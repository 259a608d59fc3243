#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "tcbf/heightfield.hpp"
#include "tcbf/types.hpp"
#include "tcbf/vehicle.hpp"

namespace tcbf {

/// Unsafe-state thresholds. `displacement` defaults to 20% of the step
/// length at full speed (0.2 * 1 m/s * 0.1 s).
struct SafetyThresholds {
  double pitch = 0.45;
  double roll = 0.40;
  double displacement = 0.02;
  double control = 0.2;

  void validate() const;
  bool operator==(const SafetyThresholds&) const = default;
};

enum class UnsafeReason : std::uint8_t { none = 0, pitch = 1, roll = 2, immobilized = 3 };

std::string_view to_string(UnsafeReason r);

struct SafetyLabel {
  UnsafeReason reason = UnsafeReason::none;

  bool safe() const { return reason == UnsafeReason::none; }
  bool operator==(const SafetyLabel&) const = default;
};

/// Checks, in priority order: |pitch|, |roll| of `next`, then commanded
/// motion without displacement.
SafetyLabel classify(const RobotState& prev, const RobotState& next, const Control& u,
                     const SafetyThresholds& th);

/// Safety of a resting state (no command applied).
inline SafetyLabel classify_state(const RobotState& s, const SafetyThresholds& th) {
  return classify(s, s, Control{}, th);
}

struct LabeledSample {
  ObservationPatch o_t;
  ObservationPatch o_next;
  Control u;
  SafetyLabel label;

  bool operator==(const LabeledSample&) const = default;
};

struct Dataset {
  SafetyThresholds thresholds;
  std::vector<LabeledSample> samples;

  std::size_t count_safe() const;
  std::size_t count_unsafe() const { return samples.size() - count_safe(); }
  bool operator==(const Dataset&) const = default;
};

struct DatasetConfig {
  std::size_t n = 4000;
  std::uint64_t seed = 0;
  SafetyThresholds thresholds;
  ControlBounds bounds;
  VehicleGeometry vehicle;
  TractionParams traction;
  PatchGeometry patch;
  /// Attempts allowed per requested sample before giving up.
  std::size_t attempts_per_sample = 500;
};

/// Rejection-samples settled poses and controls on randomly chosen
/// terrains until exactly n/2 safe and n/2 unsafe transitions are collected.
Dataset generate_dataset(std::span<const Heightfield> terrains, const DatasetConfig& cfg);

/// Stratified seeded split; `fraction` of each class goes to validation.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(std::span<const LabeledSample> samples,
                                                                        double fraction, std::uint64_t seed);

}  // namespace tcbf
