#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/model.hpp"

using namespace tcbf;

namespace {

NetworkShape tiny_shape() {
  NetworkShape s;
  s.conv_channels = {2};
  s.kernel = 4;
  s.stride = 4;
  s.hidden = {3};
  s.encoder_hidden = 3;
  return s;
}

std::vector<LabeledSample> random_batch(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_sample(rng, i % 2 == 0));
  return out;
}

/// Zeroes every barrier weight so that h(o) equals the head bias.
TCBFNetwork constant_h(double value) {
  TCBFNetwork net(tiny_shape());
  net.initialize(1);
  for (auto& p : net.parameters()) {
    if (p.name.rfind("enc", 0) == 0) continue;
    for (double& v : p.tensor.mutable_data()) v = 0.0;
  }
  net.parameter("head.bias").mutable_data()[0] = value;
  return net;
}

}  // namespace

TEST_CASE("network: forward is pure and matches the scalar oracle") {
  TCBFNetwork net;
  net.initialize(3);
  CHECK(net.parameter_count() == 50866);
  Rng rng(4);
  std::vector<ObservationPatch> patches;
  for (int i = 0; i < 5; ++i) patches.push_back(oracle::random_patch(rng));
  const auto a = net.evaluate(patches);
  const auto b = net.evaluate(patches);
  CHECK(a == b);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(std::abs(a[i] - oracle::h(net, patches[i])) < 1e-10);
    CHECK(std::abs(net.h(patches[i]) - a[i]) < 1e-12);
  }
}

TEST_CASE("network: zero head gives h = 0 everywhere") {
  TCBFNetwork net;
  net.initialize(5);
  for (double& v : net.parameter("head.weight").mutable_data()) v = 0.0;
  net.parameter("head.bias").mutable_data()[0] = 0.0;
  Rng rng(6);
  for (int i = 0; i < 10; ++i) CHECK(net.h(oracle::random_patch(rng)) == 0.0);
}

TEST_CASE("network: control encoding is positive and finite") {
  TCBFNetwork net;
  net.initialize(7);
  Rng rng(8);
  const ControlBounds b;
  for (int i = 0; i < 1000; ++i) {
    const Control u{rng.uniform(b.v_min, b.v_max), rng.uniform(b.omega_min, b.omega_max)};
    const double e = net.encode_control(u);
    CHECK(e > 0.0);
    CHECK(std::abs(e - oracle::u_e(net, u)) < 1e-12);
  }
  for (const Control u : {Control{b.v_min, b.omega_min}, Control{b.v_max, b.omega_max}}) {
    CHECK(std::isfinite(net.encode_control(u)));
  }
}

TEST_CASE("network: copies are deep and shapes are validated") {
  TCBFNetwork a(tiny_shape());
  a.initialize(1);
  TCBFNetwork b = a;
  b.parameter("head.bias").mutable_data()[0] += 1.0;
  CHECK(a.parameter("head.bias").data()[0] != b.parameter("head.bias").data()[0]);
  CHECK_THROWS_AS(a.parameter("missing"), ValidationError);
  NetworkShape bad;
  bad.kernel = 0;
  CHECK_THROWS_AS(TCBFNetwork{bad}, ValidationError);
}

TEST_CASE("loss: the unsafe hinge is zero exactly at h = -eps1") {
  const LossConfig cfg;
  const TCBFNetwork net = constant_h(-cfg.eps1);
  Rng rng(1);
  const std::vector<LabeledSample> batch = {oracle::random_sample(rng, false)};
  const LossTerms t = certificate_loss(net, batch, cfg);
  CHECK(t.unsafe_term.item() == 0.0);
  // Just above the kink the term is live.
  const TCBFNetwork above = constant_h(-cfg.eps1 + 1e-3);
  CHECK(certificate_loss(above, batch, cfg).unsafe_term.item() == doctest::Approx(1e-3));
}

TEST_CASE("loss: the safe hinge is zero exactly at h = eps2") {
  const LossConfig cfg;
  const TCBFNetwork net = constant_h(cfg.eps2);
  Rng rng(2);
  const std::vector<LabeledSample> batch = {oracle::random_sample(rng, true)};
  const LossTerms t = certificate_loss(net, batch, cfg);
  CHECK(t.safe_term.item() == 0.0);
  CHECK(certificate_loss(constant_h(cfg.eps2 - 1e-3), batch, cfg).safe_term.item() == doctest::Approx(1e-3));
}

TEST_CASE("loss: matches the hand evaluation on a tiny network") {
  TCBFNetwork net(tiny_shape());
  net.initialize(11);
  const auto batch = random_batch(12, 6);
  const LossConfig cfg;
  const LossTerms t = certificate_loss(net, batch, cfg);
  const oracle::Loss ref = oracle::loss(net, batch, cfg);
  CHECK(std::abs(t.unsafe_term.item() - ref.unsafe_term) < 1e-12);
  CHECK(std::abs(t.safe_term.item() - ref.safe_term) < 1e-12);
  CHECK(std::abs(t.decrease_term.item() - ref.decrease_term) < 1e-12);
  CHECK(std::abs(t.total.item() - ref.total()) < 1e-12);
}

TEST_CASE("loss: matches the oracle on the default network and is nonnegative") {
  TCBFNetwork net;
  net.initialize(13);
  const auto batch = random_batch(14, 8);
  const LossConfig cfg;
  const LossTerms t = certificate_loss(net, batch, cfg);
  CHECK(std::abs(t.total.item() - oracle::loss(net, batch, cfg).total()) < 1e-9);
  CHECK(t.unsafe_term.item() >= 0.0);
  CHECK(t.safe_term.item() >= 0.0);
  CHECK(t.decrease_term.item() >= 0.0);
}

TEST_CASE("loss: the unsafe term is nondecreasing in eps1") {
  TCBFNetwork net(tiny_shape());
  net.initialize(15);
  const auto batch = random_batch(16, 10);
  LossConfig cfg;
  double prev = -1.0;
  for (double eps : {0.0, 0.05, 0.1, 0.5, 1.0}) {
    cfg.eps1 = eps;
    const double v = certificate_loss(net, batch, cfg).unsafe_term.item();
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("loss: scaling the head scales h without changing its sign") {
  TCBFNetwork net(tiny_shape());
  net.initialize(17);
  Rng rng(18);
  std::vector<ObservationPatch> patches;
  for (int i = 0; i < 20; ++i) patches.push_back(oracle::random_patch(rng));
  const auto before = net.evaluate(patches);
  for (double& v : net.parameter("head.weight").mutable_data()) v *= 3.0;
  net.parameter("head.bias").mutable_data()[0] *= 3.0;
  const auto after = net.evaluate(patches);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    CHECK(std::abs(after[i] - 3.0 * before[i]) < 1e-12);
    CHECK(std::signbit(after[i]) == std::signbit(before[i]));
  }
}

TEST_CASE("loss: parameter gradients agree with central differences") {
  TCBFNetwork net(tiny_shape());
  net.initialize(19);
  const auto batch = random_batch(20, 6);
  const LossConfig cfg;
  for (auto& p : net.parameters()) p.tensor.zero_grad();
  ad::backward(certificate_loss(net, batch, cfg).total);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& p : net.parameters()) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    // Every weight of the small layers, a stride through the large ones.
    const std::size_t stride = p.tensor.size() > 200 ? 37 : 1;
    for (std::size_t i = 0; i < p.tensor.size(); i += stride) {
      const double saved = p.tensor.data()[i];
      p.tensor.mutable_data()[i] = saved + h;
      const double plus = oracle::loss(net, batch, cfg).total();
      p.tensor.mutable_data()[i] = saved - h;
      const double minus = oracle::loss(net, batch, cfg).total();
      p.tensor.mutable_data()[i] = saved;
      worst = std::max(worst, oracle::relative_error(analytic[i], (plus - minus) / (2 * h)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train: deterministic and reduces the loss") {
  const auto train_set = random_batch(21, 64);
  const auto val_set = random_batch(22, 16);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.seed = 5;
  const TrainResult a = train(train_set, val_set, cfg, LossConfig{}, tiny_shape());
  const TrainResult b = train(train_set, val_set, cfg, LossConfig{}, tiny_shape());
  REQUIRE(a.history.size() == 8);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
  CHECK(a.history.back().loss < a.history.front().loss);
  CHECK(a.best_epoch >= 1);
  for (std::size_t i = 0; i < a.network.parameters().size(); ++i) {
    const auto x = a.network.parameters()[i].tensor.data();
    const auto y = b.network.parameters()[i].tensor.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(train_set, val_set, bad, LossConfig{}, tiny_shape()), ValidationError);
}

TEST_CASE("evaluate_certificate: constant barriers") {
  auto samples = random_batch(23, 10);
  const ConstantBarrier zero(0.0);
  const CertificateReport r = evaluate_certificate(zero, samples, LossConfig{});
  CHECK(r.n_safe == 5);
  CHECK(r.n_unsafe == 5);
  CHECK(r.safe_rate == 1.0);
  CHECK(r.unsafe_rate == 0.0);
  CHECK(r.decrease_rate == 1.0);
  CHECK(r.accuracy == 0.5);
  const CertificateReport neg = evaluate_certificate(ConstantBarrier(-1.0), samples, LossConfig{});
  CHECK(neg.unsafe_rate == 1.0);
  CHECK(neg.safe_rate == 0.0);
  CHECK(neg.decrease_rate == 0.0);
}

TEST_CASE("evaluate_certificate: a perfect oracle barrier scores 1") {
  // h reads the sign planted in the first patch value.
  class Planted final : public Barrier {
   public:
    std::vector<double> evaluate(std::span<const ObservationPatch> ps) const override {
      std::vector<double> out;
      for (const auto& p : ps) out.push_back(p.values[0]);
      return out;
    }
    double encode_control(const Control&) const override { return 1.0; }
  };
  auto samples = random_batch(24, 10);
  for (auto& s : samples) {
    s.o_t.values[0] = s.label.safe() ? 1.0f : -1.0f;
    s.o_next.values[0] = 1.0f;
  }
  const CertificateReport r = evaluate_certificate(Planted{}, samples, LossConfig{});
  CHECK(r.accuracy == 1.0);
  CHECK(r.safe_rate == 1.0);
  CHECK(r.unsafe_rate == 1.0);
  CHECK(r.decrease_rate == 1.0);
}
