#include "tcbf/safety.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tcbf/errors.hpp"
#include "tcbf/random.hpp"

namespace tcbf {

void SafetyThresholds::validate() const {
  if (!(pitch > 0 && roll > 0 && displacement > 0 && control > 0)) {
    throw ValidationError("safety thresholds must be strictly positive");
  }
}

std::string_view to_string(UnsafeReason r) {
  switch (r) {
    case UnsafeReason::none: return "none";
    case UnsafeReason::pitch: return "pitch";
    case UnsafeReason::roll: return "roll";
    case UnsafeReason::immobilized: return "immobilized";
  }
  return "unknown";
}

SafetyLabel classify(const RobotState& prev, const RobotState& next, const Control& u,
                     const SafetyThresholds& th) {
  if (std::abs(next.pitch) >= th.pitch) return {UnsafeReason::pitch};
  if (std::abs(next.roll) >= th.roll) return {UnsafeReason::roll};
  const double moved = std::sqrt((next.x - prev.x) * (next.x - prev.x) + (next.y - prev.y) * (next.y - prev.y) +
                                 (next.z - prev.z) * (next.z - prev.z));
  if (moved < th.displacement && u.norm() > th.control) return {UnsafeReason::immobilized};
  return {};
}

std::size_t Dataset::count_safe() const {
  return std::size_t(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label.safe(); }));
}

Dataset generate_dataset(std::span<const Heightfield> terrains, const DatasetConfig& cfg) {
  if (terrains.empty()) throw ValidationError("dataset generation needs at least one terrain");
  if (cfg.n == 0 || cfg.n % 2 != 0) throw ValidationError("dataset size must be positive and even");
  cfg.thresholds.validate();
  cfg.bounds.validate();
  cfg.vehicle.validate();
  cfg.traction.validate();

  Dataset out;
  out.thresholds = cfg.thresholds;
  out.samples.reserve(cfg.n);
  const std::size_t quota = cfg.n / 2;
  std::size_t n_safe = 0;
  std::size_t n_unsafe = 0;

  Rng rng(cfg.seed);
  const std::size_t budget = cfg.attempts_per_sample * cfg.n;
  std::size_t attempts = 0;
  while (n_safe < quota || n_unsafe < quota) {
    if (attempts++ >= budget) {
      throw ValidationError("dataset generation exhausted " + std::to_string(budget) + " attempts with " +
                            std::to_string(n_safe) + " safe and " + std::to_string(n_unsafe) +
                            " unsafe samples (need " + std::to_string(quota) + " each)");
    }
    const Heightfield& hf = terrains[rng.below(terrains.size())];
    const double x = rng.uniform(hf.min_x(), hf.max_x());
    const double y = rng.uniform(hf.min_y(), hf.max_y());
    const double yaw = normalize_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    const Control u{rng.uniform(cfg.bounds.v_min, cfg.bounds.v_max),
                    rng.uniform(cfg.bounds.omega_min, cfg.bounds.omega_max)};

    RobotState prev;
    try {
      prev = settle_pose(hf, x, y, yaw, cfg.vehicle);
    } catch (const DomainError&) {
      continue;
    }
    auto o_t = try_extract_patch(hf, prev, cfg.patch);
    if (!o_t) continue;

    // A step that cannot be settled leaves the robot where it was.
    RobotState next = prev;
    try {
      next = step(hf, prev, u, cfg.traction, cfg.vehicle).next;
    } catch (const DomainError&) {
    }
    auto o_next = try_extract_patch(hf, next, cfg.patch);
    if (!o_next) continue;

    const SafetyLabel label = classify(prev, next, u, cfg.thresholds);
    std::size_t& filled = label.safe() ? n_safe : n_unsafe;
    if (filled >= quota) continue;
    ++filled;
    out.samples.push_back(LabeledSample{std::move(*o_t), std::move(*o_next), u, label});
  }
  return out;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(std::span<const LabeledSample> samples,
                                                                        double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> safe_idx;
  std::vector<std::size_t> unsafe_idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label.safe() ? safe_idx : unsafe_idx).push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(std::span(safe_idx));
  rng.shuffle(std::span(unsafe_idx));

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  for (const auto* stratum : {&safe_idx, &unsafe_idx}) {
    const auto n_val = std::size_t(std::llround(fraction * double(stratum->size())));
    val_idx.insert(val_idx.end(), stratum->begin(), stratum->begin() + std::ptrdiff_t(n_val));
    train_idx.insert(train_idx.end(), stratum->begin() + std::ptrdiff_t(n_val), stratum->end());
  }
  // Interleave classes again so downstream batching sees a mixed order.
  rng.shuffle(std::span(train_idx));
  rng.shuffle(std::span(val_idx));

  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  out.first.reserve(train_idx.size());
  out.second.reserve(val_idx.size());
  for (auto i : train_idx) out.first.push_back(samples[i]);
  for (auto i : val_idx) out.second.push_back(samples[i]);
  return out;
}

}  // namespace tcbf
