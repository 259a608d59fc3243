#include <filesystem>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "tcbf/benchmark.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/io.hpp"
#include "tcbf/render.hpp"

using namespace tcbf;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.difficulties = {Difficulty::low, Difficulty::high};
  cfg.trials = 2;
  cfg.seed = 9;
  cfg.planner.v_samples = 5;
  cfg.planner.omega_samples = 5;
  cfg.planner.horizon = 5;
  cfg.planner.max_steps = 80;
  return cfg;
}

}  // namespace

TEST_CASE("experiment config: format and parse round trip") {
  ExperimentConfig cfg = small_config();
  cfg.planner.cbf_form = CbfForm::strict;
  cfg.planner.lambda_goal = 0.125;
  cfg.model = "models/net.nn1";
  const std::string text = format_experiment_config(cfg);
  const ExperimentConfig back = parse_experiment_config(text);
  CHECK(format_experiment_config(back) == text);
  CHECK(back.planner.cbf_form == CbfForm::strict);
  CHECK(back.difficulties == cfg.difficulties);
  CHECK(back.model == cfg.model);

  const ExperimentConfig commented = parse_experiment_config("# comment\ntrials = 5\n\nseed=3  # trailing\n");
  CHECK(commented.trials == 5);
  CHECK(commented.seed == 3);
}

TEST_CASE("experiment config: errors name the offending line") {
  auto message = [](const std::string& text) {
    try {
      parse_experiment_config(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("trials=3\nbogus=1\n").find("line 2") != std::string::npos);
  CHECK(message("trials=three\n").find("line 1") != std::string::npos);
  CHECK(message("variants=tcbf,magic\n").find("line 1") != std::string::npos);
  CHECK_FALSE(message("trials=0\n").empty());
  CHECK_FALSE(message("no equals sign\n").empty());
}

TEST_CASE("benchmark: a barrier that is always positive matches the unconstrained baseline") {
  const ExperimentConfig cfg = small_config();
  const ConstantBarrier positive(1.0);
  const BenchmarkResult r = run_benchmark(cfg, &positive);
  REQUIRE(r.trials.size() == 8);
  std::map<std::pair<int, int>, const TrialRecord*> tcbf;
  for (const auto& t : r.trials) {
    if (t.variant == Variant::tcbf) tcbf[{int(t.difficulty), t.trial}] = &t;
  }
  for (const auto& t : r.trials) {
    if (t.variant != Variant::unconstrained) continue;
    const TrialRecord& c = *tcbf.at({int(t.difficulty), t.trial});
    CHECK(c.trajectory.states == t.trajectory.states);
    CHECK(c.goal == t.goal);
    CHECK(c.outcome == t.outcome);
  }
}

TEST_CASE("benchmark: statuses partition trials and success implies safe") {
  const ExperimentConfig cfg = small_config();
  const oracle::GeometricBarrier barrier;
  const BenchmarkResult r = run_benchmark(cfg, &barrier);
  for (const auto& t : r.trials) {
    if (t.success()) CHECK(t.safe);
    if (t.status() == TrialStatus::success) CHECK(t.success());
    if (t.placed) CHECK(t.trajectory.states.front().y < t.goal.y);
  }
  for (const auto& row : r.metrics) {
    const double failures = double(row.reached_unsafe + row.paused_infeasible + row.immobilized +
                                   row.budget_exhausted + row.unplaced);
    CHECK(row.success_rate * double(row.trials) + failures == doctest::Approx(double(row.trials)));
    CHECK(row.success_rate <= row.safe_rate);
    CHECK(row.success_rate <= row.reached_rate);
  }
  CHECK(aggregate(r.trials) == r.metrics);
}

TEST_CASE("benchmark: deterministic, and metrics recompute from written trials") {
  ExperimentConfig cfg = small_config();
  cfg.difficulties = {Difficulty::medium};
  const oracle::GeometricBarrier barrier;
  const BenchmarkResult a = run_benchmark(cfg, &barrier);
  const BenchmarkResult b = run_benchmark(cfg, &barrier);
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  CHECK(trials_csv(a.trials) == trials_csv(b.trials));

  const auto dir = std::filesystem::temp_directory_path() / "tcbf_harness_test";
  std::filesystem::remove_all(dir);
  cfg.output_dir = dir;
  write_benchmark(cfg, a, "none");
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(io::read_text(dir / "metrics.csv") == metrics_csv(a.metrics));
  const auto loaded = load_trials(dir, cfg.thresholds, cfg.planner.traction.dt);
  REQUIRE(loaded.size() == a.trials.size());
  CHECK(aggregate(loaded) == a.metrics);
  std::filesystem::remove_all(dir);
}

TEST_CASE("benchmark: the tcbf variant requires a barrier") {
  CHECK_THROWS_AS(run_benchmark(small_config(), nullptr), ValidationError);
  ExperimentConfig only = small_config();
  only.variants = {Variant::unconstrained};
  only.trials = 1;
  only.difficulties = {Difficulty::low};
  CHECK(run_benchmark(only, nullptr).trials.size() == 1);
}

TEST_CASE("render: flat terrain is uniform mid-gray at grid resolution") {
  const Heightfield hf = Heightfield::flat(30, 20, 0.1f, {1.0, 2.0});
  const Image img = render(hf);
  CHECK(img.width == 30);
  CHECK(img.height == 20);
  for (std::uint32_t y = 0; y < img.height; ++y)
    for (std::uint32_t x = 0; x < img.width; ++x) CHECK(img.pixel(x, y) == std::array<std::uint8_t, 3>{128, 128, 128});
  const auto ppm = encode_ppm(img);
  const std::string header = "P6\n30 20\n255\n";
  CHECK(std::string(ppm.begin(), ppm.begin() + long(header.size())) == header);
  CHECK(ppm.size() == header.size() + 30 * 20 * 3);
}

TEST_CASE("render: world and pixel coordinates round trip") {
  const Heightfield hf = Heightfield::flat(30, 20, 0.1f, {1.0, 2.0});
  for (std::int64_t py = 0; py < 20; ++py) {
    for (std::int64_t px = 0; px < 30; ++px) {
      const Point2 w = pixel_to_world(hf, {px, py});
      CHECK(world_to_pixel(hf, w.x, w.y) == Pixel{px, py});
    }
  }
  CHECK(world_to_pixel(hf, 1.0, 2.0) == Pixel{0, 19});
}

TEST_CASE("render: a positive barrier paints only safe markers") {
  const Heightfield hf = Heightfield::flat(81, 81, 0.05f);
  RenderOptions opt;
  opt.mask_stride = 5;
  const ConstantBarrier positive(1.0);
  const Image masked = render(hf, nullptr, &positive, opt);
  std::size_t blue = 0, red = 0;
  for (std::uint32_t y = 0; y < masked.height; ++y) {
    for (std::uint32_t x = 0; x < masked.width; ++x) {
      const auto p = masked.pixel(x, y);
      blue += p == std::array<std::uint8_t, 3>{60, 120, 255};
      red += p == std::array<std::uint8_t, 3>{230, 40, 40};
    }
  }
  CHECK(blue > 0);
  CHECK(red == 0);
}
