#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "tcbf/adam.hpp"
#include "tcbf/benchmark.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/io.hpp"
#include "tcbf/model.hpp"
#include "tcbf/planner.hpp"

using namespace tcbf;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Context {
  fs::path workdir;
  std::optional<TCBFNetwork> model;
  fs::path model_path() const { return workdir / "standard.nn1"; }
  fs::path dataset_path() const { return workdir / "standard.ds1"; }

  const TCBFNetwork& trained() {
    if (!model) model = io::load_model(model_path()).network;
    return *model;
  }
};

NetworkShape random_small_shape(Rng& rng) {
  NetworkShape s;
  s.conv_channels.assign(1 + rng.below(2), 0);
  for (int& c : s.conv_channels) c = 1 + int(rng.below(3));
  s.kernel = 3 + int(rng.below(3));
  s.stride = s.kernel;
  if (s.conv_channels.size() == 2) s.stride = 3;
  s.hidden.assign(1 + rng.below(2), 0);
  for (int& h : s.hidden) h = 2 + int(rng.below(5));
  s.encoder_hidden = 2 + int(rng.below(3));
  return s;
}

/// Every parameter of 20 random networks against central differences.
Verdict criterion1(Context&) {
  const auto t0 = Clock::now();
  double worst = 0.0, kink_worst = 0.0;
  std::size_t checked = 0, kinked = 0;
  for (std::uint64_t n = 0; n < 20; ++n) {
    Rng rng(Rng::derive(101, n));
    TCBFNetwork net(random_small_shape(rng));
    net.initialize(rng.next());
    std::vector<LabeledSample> batch;
    const std::size_t size = 4 + rng.below(4);
    for (std::size_t i = 0; i < size; ++i) batch.push_back(oracle::random_sample(rng, i % 2 == 0));
    LossConfig cfg;
    // Wide margins keep every hinge active so all parameters receive gradient.
    cfg.eps1 = cfg.eps2 = 2.0;
    cfg.eps3 = 2.0;

    for (auto& p : net.parameters()) p.tensor.zero_grad();
    ad::backward(certificate_loss(net, batch, cfg).total);
    auto loss_value = [&] {
      ad::NoGradGuard guard;
      return certificate_loss(net, batch, cfg).total.item();
    };
    const double h = 1e-5;
    const double center = loss_value();
    for (auto& p : net.parameters()) {
      const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
      const bool piecewise_linear = p.name.rfind("enc", 0) != 0;
      for (std::size_t i = 0; i < p.tensor.size(); ++i) {
        const double saved = p.tensor.data()[i];
        p.tensor.mutable_data()[i] = saved + h;
        const double plus = loss_value();
        p.tensor.mutable_data()[i] = saved - h;
        const double minus = loss_value();
        p.tensor.mutable_data()[i] = saved;
        ++checked;
        const double central = oracle::relative_error(analytic[i], (plus - minus) / (2 * h));
        if (central < 1e-4 || !piecewise_linear) {
          worst = std::max(worst, central);
          continue;
        }
        // Away from kinks the loss is linear in this parameter, so the two
        // one-sided differences agree; a disagreement locates a kink inside
        // the stencil and the kink-free side carries the true derivative.
        const double fwd = oracle::relative_error(analytic[i], (plus - center) / h);
        const double bwd = oracle::relative_error(analytic[i], (center - minus) / h);
        const double sides = oracle::relative_error((plus - center) / h, (center - minus) / h);
        if (sides > 1e-4 && std::min(fwd, bwd) < 1e-4) {
          ++kinked;
          kink_worst = std::max(kink_worst, std::min(fwd, bwd));
        } else {
          worst = std::max(worst, central);
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 60.0,
          fmt("max rel err %.3g over %zu parameters of 20 networks; %zu stencils straddle a ReLU kink and match the "
              "kink-free one-sided difference (max rel err %.3g); %.1f s",
              worst, checked, kinked, kink_worst, elapsed)};
}

/// conv2d against the naive loop; three Adam steps against the hand recurrence.
Verdict criterion2(Context&) {
  Rng rng(202);
  double conv_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 1 + rng.below(4), O = 1 + rng.below(5);
    const std::size_t k = 1 + rng.below(5), stride = 1 + rng.below(3), pad = rng.below(3);
    const std::size_t H = k + rng.below(12), W = k + rng.below(12);
    std::vector<double> x(C * H * W), w(O * C * k * k), b(O);
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : w) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    const ad::Tensor y = ad::conv2d(ad::Tensor::from({C, H, W}, x), ad::Tensor::from({O, C, k, k}, w),
                                    ad::Tensor::from({O}, b), stride, pad);
    const auto ref = oracle::conv2d(x, C, H, W, w, O, k, k, b, stride, pad);
    if (ref.size() != y.size()) return {false, fmt("shape mismatch on trial %d", trial)};
    for (std::size_t i = 0; i < ref.size(); ++i) conv_err = std::max(conv_err, std::abs(y.data()[i] - ref[i]));
  }

  double adam_err = 0.0;
  const std::size_t n = 16;
  std::vector<double> theta(n);
  for (double& v : theta) v = rng.uniform(-1, 1);
  std::vector<std::vector<double>> grads(3, std::vector<double>(n));
  for (auto& g : grads)
    for (double& v : g) v = rng.uniform(-2, 2);
  std::vector<ad::Tensor> params = {ad::Tensor::from({n}, theta, true)};
  const double lr = 1e-3;
  ad::AdamState st = ad::make_adam_state(params, ad::AdamConfig{lr});
  std::vector<std::vector<double>> expected(n);
  for (std::size_t i = 0; i < n; ++i) expected[i] = oracle::adam_trace(theta[i], {grads[0][i], grads[1][i], grads[2][i]}, lr);
  for (std::size_t t = 0; t < 3; ++t) {
    params[0].zero_grad();
    std::copy(grads[t].begin(), grads[t].end(), params[0].mutable_grad().begin());
    ad::adam_step(params, st);
    for (std::size_t i = 0; i < n; ++i) adam_err = std::max(adam_err, std::abs(params[0].data()[i] - expected[i][t]));
  }
  return {conv_err <= 1e-12 && adam_err <= 1e-12,
          fmt("conv2d max abs err %.3g over 50 shapes; adam max abs err %.3g over 3 steps", conv_err, adam_err)};
}

TCBFNetwork tiny_network(double head_bias, bool zero_weights) {
  NetworkShape s;
  s.conv_channels = {2};
  s.kernel = 4;
  s.stride = 4;
  s.hidden = {3};
  s.encoder_hidden = 3;
  TCBFNetwork net(s);
  net.initialize(303);
  if (zero_weights) {
    for (auto& p : net.parameters()) {
      if (p.name.rfind("enc", 0) != 0) std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
    }
    net.parameter("head.bias").mutable_data()[0] = head_bias;
  }
  return net;
}

/// Exact zeros at the hinge kinks and a hand-evaluated batch.
Verdict criterion3(Context&) {
  const LossConfig cfg;
  Rng rng(304);
  const std::vector<LabeledSample> unsafe = {oracle::random_sample(rng, false)};
  const std::vector<LabeledSample> safe = {oracle::random_sample(rng, true)};
  const double a = certificate_loss(tiny_network(-cfg.eps1, true), unsafe, cfg).unsafe_term.item();
  const double b = certificate_loss(tiny_network(cfg.eps2, true), safe, cfg).safe_term.item();

  const TCBFNetwork net = tiny_network(0.0, false);
  std::vector<LabeledSample> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(oracle::random_sample(rng, i % 2 == 0));
  const LossTerms t = certificate_loss(net, batch, cfg);
  const oracle::Loss ref = oracle::loss(net, batch, cfg);
  const double err = std::max({std::abs(t.total.item() - ref.total()), std::abs(t.unsafe_term.item() - ref.unsafe_term),
                               std::abs(t.safe_term.item() - ref.safe_term),
                               std::abs(t.decrease_term.item() - ref.decrease_term)});
  return {a == 0.0 && b == 0.0 && err <= 1e-12,
          fmt("term a at h=-eps1: %g; term b at h=eps2: %g; hand batch err %.3g", a, b, err)};
}

/// settle_pose on analytic planes: pitch = atan(tan g cos b), roll = -asin(sin g sin b).
Verdict criterion4(Context&) {
  Rng rng(404);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double grade = rng.uniform(0.0, 0.8);
    const double dir = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Heightfield hf = oracle::incline(grade, dir);
    const RobotState s = settle_pose(hf, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), yaw, VehicleGeometry{});
    const double beta = yaw - dir;
    const double pitch = std::atan(std::tan(grade) * std::cos(beta));
    const double roll = -std::asin(std::sin(grade) * std::sin(beta));
    worst = std::max({worst, std::abs(s.pitch - pitch), std::abs(s.roll - roll)});
  }
  return {worst <= 1e-6, fmt("max angle error %.3g rad over 100 (grade, heading) pairs", worst)};
}

/// Standard dataset, 150 epochs; the trained model is reused by criteria 6 and 7.
Verdict criterion5(Context& ctx) {
  const auto t0 = Clock::now();
  std::vector<Heightfield> terrains;
  for (const auto& spec : standard_training_terrains()) terrains.push_back(generate(spec));
  const DatasetConfig dcfg = standard_dataset_config();
  const Dataset ds = generate_dataset(terrains, dcfg);
  io::save_dataset(ctx.dataset_path(), ds);
  const auto [train_set, val_set] = split(ds.samples, 0.2, dcfg.seed);
  TrainConfig tcfg;
  tcfg.seed = dcfg.seed;
  const LossConfig lcfg;
  const TrainResult r = train(train_set, val_set, tcfg, lcfg);
  const CertificateReport rep = evaluate_certificate(r.network, val_set, lcfg);
  io::ModelMetadata meta;
  meta.train = tcfg;
  meta.loss = lcfg;
  meta.dataset_hash = io::dataset_hash(ds);
  meta.best_epoch = r.best_epoch;
  meta.val_accuracy = rep.accuracy;
  io::save_model(ctx.model_path(), r.network, meta);
  ctx.model = r.network;
  const double elapsed = seconds_since(t0);
  bool balanced = ds.count_safe() == ds.count_unsafe() && ds.samples.size() == 4000 && val_set.size() == 800;
  return {balanced && rep.accuracy >= 0.90 && rep.decrease_rate >= 0.85 && elapsed <= 600.0,
          fmt("val accuracy %.4f, decrease rate %.4f (best epoch %d of %d), %.0f s", rep.accuracy, rep.decrease_rate,
              r.best_epoch, tcfg.epochs, elapsed)};
}

/// Flat 6 m x 8 m field with a steep Gaussian ridge across the middle third
/// of the straight start-goal line.
Heightfield ridge_terrain() {
  const double res = 0.05, width = 6.0, length = 8.0;
  const auto cols = std::uint32_t(std::lround(width / res)) + 1;
  const auto rows = std::uint32_t(std::lround(length / res)) + 1;
  std::vector<float> z(std::size_t(cols) * rows);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      const double x = c * res, y = r * res;
      const double across = std::exp(-0.5 * std::pow((y - 4.0) / 0.25, 2));
      const double along = 1.0 / (1.0 + std::exp(-(x - 1.6) / 0.05)) * 1.0 / (1.0 + std::exp((x - 4.4) / 0.05));
      z[std::size_t(r) * cols + c] = float(0.45 * across * along);
    }
  }
  return Heightfield(cols, rows, float(res), {0.0, 0.0}, std::move(z));
}

std::size_t unsafe_states(const Trajectory& t, const SafetyThresholds& th) {
  TrialRecord rec;
  rec.placed = true;
  rec.trajectory = t;
  summarize(rec, th);
  return rec.unsafe_states;
}

Verdict criterion6(Context& ctx) {
  const TCBFNetwork& net = ctx.trained();
  const Heightfield hf = ridge_terrain();
  const ExperimentConfig defaults;
  PlannerConfig cfg = defaults.planner;
  const SafetyThresholds th = defaults.thresholds;
  const RobotState start = settle_pose(hf, 3.0, 1.2, std::numbers::pi / 2, cfg.vehicle);
  const Point2 goal{3.0, 6.6};

  const NavigationResult a = navigate(hf, &net, start, goal, cfg);
  const NavigationResult b = navigate(hf, &net, start, goal, cfg);
  PlannerConfig free = cfg;
  free.use_cbf = false;
  const NavigationResult u = navigate(hf, nullptr, start, goal, free);

  const std::size_t bad = unsafe_states(a.trajectory, th);
  const std::size_t bad_free = unsafe_states(u.trajectory, th);
  const bool ends_ok = a.outcome == Outcome::reached || a.outcome == Outcome::paused_infeasible;
  const bool deterministic = a.trajectory.states == b.trajectory.states && a.outcome == b.outcome;
  io::write_text(ctx.workdir / "ridge_tcbf.csv", io::trajectory_csv(a.trajectory));
  io::write_text(ctx.workdir / "ridge_unconstrained.csv", io::trajectory_csv(u.trajectory));
  io::save_heightfield(ctx.workdir / "ridge.hf1", hf);
  return {bad == 0 && ends_ok && bad_free > 0 && deterministic,
          fmt("tcbf: %zu unsafe states, %s after %zu steps; unconstrained: %zu unsafe states, %s; deterministic %s", bad,
              std::string(to_string(a.outcome)).c_str(), a.trajectory.controls.size(), bad_free,
              std::string(to_string(u.outcome)).c_str(), deterministic ? "yes" : "no")};
}

Verdict criterion7(Context& ctx) {
  const auto t0 = Clock::now();
  const TCBFNetwork& net = ctx.trained();
  ExperimentConfig cfg;
  cfg.difficulties = {Difficulty::high};
  cfg.trials = 30;
  cfg.seed = 7;
  cfg.output_dir = ctx.workdir / "benchmark_high";
  const BenchmarkResult r = run_benchmark(cfg, &net);
  write_benchmark(cfg, r, "acceptance");
  const MetricsRow* tc = nullptr;
  const MetricsRow* un = nullptr;
  for (const auto& row : r.metrics) (row.variant == Variant::tcbf ? tc : un) = &row;
  if (!tc || !un) return {false, "missing metrics rows"};

  double t_tc = 0.0, t_un = 0.0;
  std::size_t mutual = 0;
  for (const auto& a : r.trials) {
    if (a.variant != Variant::tcbf || !a.success()) continue;
    for (const auto& b : r.trials) {
      if (b.variant == Variant::unconstrained && b.trial == a.trial && b.success()) {
        t_tc += a.traversal_time;
        t_un += b.traversal_time;
        ++mutual;
      }
    }
  }
  if (mutual) {
    t_tc /= double(mutual);
    t_un /= double(mutual);
  }
  const double elapsed = seconds_since(t0);
  const bool pass = tc->safe_rate > un->safe_rate && tc->roll_mean <= un->roll_mean &&
                    tc->pitch_mean <= un->pitch_mean && mutual > 0 && t_tc >= t_un && elapsed <= 1800.0;
  return {pass, fmt("safe-rate %.3f vs %.3f; |roll| %.4f vs %.4f; |pitch| %.4f vs %.4f; time on %zu mutual successes "
                    "%.2f vs %.2f s; success %.3f vs %.3f; %.0f s",
                    tc->safe_rate, un->safe_rate, tc->roll_mean, un->roll_mean, tc->pitch_mean, un->pitch_mean, mutual,
                    t_tc, t_un, tc->success_rate, un->success_rate, elapsed)};
}

/// Repeatability of the metrics table and byte-exact round trips of every format.
Verdict criterion8(Context& ctx) {
  std::vector<std::string> failures;
  ExperimentConfig cfg;
  cfg.difficulties = {Difficulty::medium};
  cfg.trials = 3;
  cfg.seed = 8;
  const TCBFNetwork& net = ctx.trained();
  const BenchmarkResult a = run_benchmark(cfg, &net);
  const BenchmarkResult b = run_benchmark(cfg, &net);
  if (metrics_csv(a.metrics) != metrics_csv(b.metrics)) failures.push_back("metrics differ");
  if (trials_csv(a.trials) != trials_csv(b.trials)) failures.push_back("trials differ");

  const io::Bytes hf = io::encode_heightfield(benchmark_terrain(cfg, Difficulty::high, 0));
  if (io::encode_heightfield(io::decode_heightfield(hf)) != hf) failures.push_back("HF1");
  const io::Bytes ds = fs::exists(ctx.dataset_path()) ? io::read_file(ctx.dataset_path()) : io::Bytes{};
  if (ds.empty() || io::encode_dataset(io::decode_dataset(ds)) != ds) failures.push_back("DS1");
  const io::Bytes nn = io::read_file(ctx.model_path());
  const io::ModelFile mf = io::decode_model(nn);
  if (io::encode_model(mf.network, mf.metadata) != nn) failures.push_back("NN1");
  const std::string metrics = metrics_csv(a.metrics);
  if (metrics_csv(parse_metrics_csv(metrics)) != metrics) failures.push_back("metrics CSV");
  for (const auto& t : a.trials) {
    const std::string text = io::trajectory_csv(t.trajectory);
    if (io::trajectory_csv(io::parse_trajectory_csv(text, t.trajectory.dt)) != text) {
      failures.push_back("trajectory CSV");
      break;
    }
  }
  std::string detail = failures.empty() ? "metrics and trials identical across runs; HF1, DS1, NN1, CSV round trips exact"
                                        : "failed:";
  for (const auto& f : failures) detail += " " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for models and outputs");
  app.add_option("--only", only, "Run only these criteria (the trained model is reused)");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.workdir = workdir;
  fs::create_directories(ctx.workdir);

  const std::vector<std::pair<std::string, std::function<Verdict(Context&)>>> criteria = {
      {"gradient check on 20 random networks", criterion1},
      {"conv2d oracle and Adam recurrence", criterion2},
      {"loss kinks and hand-evaluated batch", criterion3},
      {"settle_pose on analytic inclines", criterion4},
      {"training on the standard dataset", criterion5},
      {"constructed unsafe band", criterion6},
      {"high-difficulty benchmark", criterion7},
      {"determinism and format round trips", criterion8},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d [PRIMARY] %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
