#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tcbf/barrier.hpp"
#include "tcbf/heightfield.hpp"
#include "tcbf/planner.hpp"
#include "tcbf/safety.hpp"

namespace tcbf {

enum class Variant { tcbf, unconstrained };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ExperimentConfig {
  std::vector<Difficulty> difficulties = {Difficulty::high};
  std::vector<Variant> variants = {Variant::tcbf, Variant::unconstrained};
  int trials = 30;
  std::uint64_t seed = 1;
  double terrain_width = 4.0;
  double terrain_length = 8.0;
  double terrain_resolution = 0.05;
  /// Minimum start-goal distance as a fraction of terrain length.
  double min_separation = 0.6;
  int placement_attempts = 1000;
  PlannerConfig planner;
  SafetyThresholds thresholds;
  std::filesystem::path model;
  std::filesystem::path output_dir = "eval_out";

  void validate() const;
};

/// Parses line-oriented key=value text ('#' starts a comment).
ExperimentConfig parse_experiment_config(const std::string& text);

/// Every effective setting, as key=value lines accepted by parse_experiment_config.
std::string format_experiment_config(const ExperimentConfig& cfg);

/// Trial failure codes; together with success they partition all trials.
enum class TrialStatus { success, reached_unsafe, paused_infeasible, immobilized, budget_exhausted, unplaced };

std::string_view to_string(TrialStatus s);

struct TrialRecord {
  Variant variant = Variant::tcbf;
  Difficulty difficulty = Difficulty::high;
  int trial = 0;
  std::uint64_t terrain_seed = 0;
  bool placed = false;
  Point2 goal;
  Outcome outcome = Outcome::budget_exhausted;
  Trajectory trajectory;

  // Derived from the trajectory by summarize().
  bool reached = false;
  bool safe = false;
  std::size_t unsafe_states = 0;
  double traversal_time = 0.0;
  double mean_abs_roll = 0.0;
  double mean_abs_pitch = 0.0;

  bool success() const { return placed && reached && safe; }
  TrialStatus status() const;
};

/// Recomputes the derived fields of `rec` from its trajectory.
void summarize(TrialRecord& rec, const SafetyThresholds& th);

struct MetricsRow {
  Variant variant = Variant::tcbf;
  Difficulty difficulty = Difficulty::high;
  std::size_t trials = 0;
  double success_rate = 0.0;
  double reached_rate = 0.0;
  double safe_rate = 0.0;
  double time_mean = 0.0;  // over successful trials
  double time_std = 0.0;
  double roll_mean = 0.0;  // |roll| pooled over every state of every placed trial
  double roll_std = 0.0;
  double pitch_mean = 0.0;
  double pitch_std = 0.0;
  std::size_t reached_unsafe = 0;
  std::size_t paused_infeasible = 0;
  std::size_t immobilized = 0;
  std::size_t budget_exhausted = 0;
  std::size_t unplaced = 0;

  bool operator==(const MetricsRow&) const = default;
};

/// Rows ordered by (difficulty, variant) as they appear in the config.
std::vector<MetricsRow> aggregate(const std::vector<TrialRecord>& trials);

struct BenchmarkResult {
  std::vector<TrialRecord> trials;
  std::vector<MetricsRow> metrics;
};

Heightfield benchmark_terrain(const ExperimentConfig& cfg, Difficulty d, int trial);

/// `barrier` is required when the config includes the tcbf variant.
BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const Barrier* barrier);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// One row per trial with its outcome, goal and trajectory file name.
std::string trials_csv(const std::vector<TrialRecord>& trials);

std::string trajectory_filename(const TrialRecord& rec);

/// Writes metrics.csv, trials.csv, manifest.json and trajectories/ under cfg.output_dir.
void write_benchmark(const ExperimentConfig& cfg, const BenchmarkResult& result, const std::string& model_hash);

/// Rebuilds trial records from a directory written by write_benchmark.
std::vector<TrialRecord> load_trials(const std::filesystem::path& dir, const SafetyThresholds& th, double dt);

/// Terrains behind the standard synthetic dataset: seeds 1-4 at each
/// difficulty on the default 3.1 m x 5 m extent.
std::vector<TerrainSpec> standard_training_terrains();

/// 4000 balanced samples with the default thresholds, seed 2024.
DatasetConfig standard_dataset_config();

}  // namespace tcbf
