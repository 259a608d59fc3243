#include <algorithm>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "tcbf/benchmark.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/io.hpp"
#include "tcbf/safety.hpp"

using namespace tcbf;

namespace {

RobotState at(double x, double y, double roll = 0.0, double pitch = 0.0) {
  RobotState s;
  s.x = x;
  s.y = y;
  s.roll = roll;
  s.pitch = pitch;
  return s;
}

const std::vector<Heightfield>& terrains() {
  static const std::vector<Heightfield> t = [] {
    std::vector<Heightfield> out;
    for (const auto& spec : standard_training_terrains()) out.push_back(generate(spec));
    return out;
  }();
  return t;
}

Dataset small_dataset(std::size_t n, std::uint64_t seed) {
  DatasetConfig cfg = standard_dataset_config();
  cfg.n = n;
  cfg.seed = seed;
  return generate_dataset(terrains(), cfg);
}

}  // namespace

TEST_CASE("classify: individual criteria") {
  const SafetyThresholds th;
  CHECK(classify(at(0, 0), at(0.1, 0, 0.0, th.pitch + 0.01), {1, 0}, th).reason == UnsafeReason::pitch);
  CHECK(classify(at(0, 0), at(0.1, 0, 0.0, -(th.pitch + 0.01)), {1, 0}, th).reason == UnsafeReason::pitch);
  CHECK(classify(at(0, 0), at(0.1, 0, th.roll + 0.01), {1, 0}, th).reason == UnsafeReason::roll);
  CHECK(classify(at(0, 0), at(0.1, 0, 0.2, 0.3), {1, 0}, th).safe());

  SafetyThresholds tight = th;
  tight.displacement = 0.01;
  tight.control = 0.2;
  CHECK(classify(at(0, 0), at(0.001, 0), {1.0, 0.0}, tight).reason == UnsafeReason::immobilized);
  // Small commands may legitimately produce small motion.
  CHECK(classify(at(0, 0), at(0.001, 0), {0.1, 0.1}, tight).safe());
}

TEST_CASE("classify: priority is pitch, then roll, then immobilized") {
  const SafetyThresholds th;
  CHECK(classify(at(0, 0), at(0, 0, 1.0, 1.0), {1, 0}, th).reason == UnsafeReason::pitch);
  CHECK(classify(at(0, 0), at(0, 0, 1.0, 0.0), {1, 0}, th).reason == UnsafeReason::roll);
  CHECK(classify(at(0, 0), at(0, 0), {1, 0}, th).reason == UnsafeReason::immobilized);
  CHECK(classify_state(at(0, 0), th).safe());
}

TEST_CASE("classify: raising the pitch threshold never creates a pitch violation") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const RobotState prev = at(0, 0);
    const RobotState next = at(rng.uniform(0, 0.1), 0, rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    const Control u{rng.uniform(0, 1), rng.uniform(-1, 1)};
    SafetyThresholds lo, hi;
    hi.pitch = lo.pitch + rng.uniform(0.0, 0.3);
    const auto a = classify(prev, next, u, lo);
    const auto b = classify(prev, next, u, hi);
    if (a.safe()) CHECK(b.reason != UnsafeReason::pitch);
  }
}

TEST_CASE("thresholds: validation") {
  SafetyThresholds th;
  th.roll = 0.0;
  CHECK_THROWS_AS(th.validate(), ValidationError);
}

TEST_CASE("generate_dataset: exact balance, finite values, label consistency") {
  const Dataset ds = small_dataset(400, 5);
  CHECK(ds.samples.size() == 400);
  CHECK(ds.count_safe() == 200);
  CHECK(ds.count_unsafe() == 200);
  std::map<UnsafeReason, int> reasons;
  for (const auto& s : ds.samples) {
    ++reasons[s.label.reason];
    CHECK(classify(s.o_t.anchor, s.o_next.anchor, s.u, ds.thresholds) == s.label);
    CHECK(ControlBounds{}.contains(s.u));
    for (float v : s.o_t.values) REQUIRE(std::isfinite(v));
    for (float v : s.o_next.values) REQUIRE(std::isfinite(v));
  }
  // Every unsafe criterion is represented on the standard terrains.
  CHECK(reasons[UnsafeReason::pitch] > 0);
  CHECK(reasons[UnsafeReason::roll] > 0);
  CHECK(reasons[UnsafeReason::immobilized] > 0);
}

TEST_CASE("generate_dataset: deterministic per seed") {
  const Dataset a = small_dataset(100, 9);
  const Dataset b = small_dataset(100, 9);
  CHECK(io::encode_dataset(a) == io::encode_dataset(b));
  const Dataset c = small_dataset(100, 10);
  CHECK_FALSE(io::encode_dataset(a) == io::encode_dataset(c));
}

TEST_CASE("generate_dataset: invalid requests") {
  DatasetConfig cfg;
  cfg.n = 3;
  CHECK_THROWS_AS(generate_dataset(terrains(), cfg), ValidationError);
  cfg.n = 4;
  CHECK_THROWS_AS(generate_dataset({}, cfg), ValidationError);
  // A flat field cannot produce pitch or roll violations quickly enough.
  const std::vector<Heightfield> flat = {Heightfield::flat(80, 120, 0.05f)};
  cfg.attempts_per_sample = 2;
  CHECK_THROWS_AS(generate_dataset(flat, cfg), ValidationError);
}

TEST_CASE("split: stratified 80/20 partition") {
  Rng rng(3);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 4000; ++i) {
    LabeledSample s;
    s.o_t.values[0] = float(i);
    s.label.reason = i % 2 == 0 ? UnsafeReason::none : UnsafeReason::roll;
    samples.push_back(std::move(s));
  }
  const auto [train, val] = split(samples, 0.2, 42);
  CHECK(train.size() == 3200);
  CHECK(val.size() == 800);
  const auto safe_val = std::count_if(val.begin(), val.end(), [](const auto& s) { return s.label.safe(); });
  CHECK(safe_val == 400);
  std::vector<float> ids;
  for (const auto* part : {&train, &val})
    for (const auto& s : *part) ids.push_back(s.o_t.values[0]);
  std::sort(ids.begin(), ids.end());
  for (int i = 0; i < 4000; ++i) REQUIRE(ids[std::size_t(i)] == float(i));
  CHECK(split(samples, 0.2, 42).second == val);
  CHECK_THROWS_AS(split(samples, 1.0, 42), ValidationError);
}
