#include "tcbf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcbf/adam.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/random.hpp"

namespace tcbf {

namespace {

// Inference batch size for Barrier::evaluate.
constexpr std::size_t kEvalChunk = 128;

std::size_t conv_out(std::size_t in, int kernel, int stride) {
  return (in - std::size_t(kernel)) / std::size_t(stride) + 1;
}

}  // namespace

void NetworkShape::validate() const {
  if (patch_rows <= 0 || patch_cols <= 0) throw ValidationError("patch dimensions must be positive");
  if (kernel <= 0 || stride <= 0) throw ValidationError("kernel and stride must be positive");
  if (encoder_hidden <= 0) throw ValidationError("encoder width must be positive");
  std::size_t r = std::size_t(patch_rows);
  std::size_t c = std::size_t(patch_cols);
  for (int ch : conv_channels) {
    if (ch <= 0) throw ValidationError("conv channels must be positive");
    if (r < std::size_t(kernel) || c < std::size_t(kernel)) {
      throw ValidationError("patch too small for the convolution stack");
    }
    r = conv_out(r, kernel, stride);
    c = conv_out(c, kernel, stride);
  }
  for (int w : hidden) {
    if (w <= 0) throw ValidationError("hidden widths must be positive");
  }
  if (!(input_scale > 0.0)) throw ValidationError("input scale must be positive");
}

std::size_t NetworkShape::conv_features() const {
  std::size_t r = std::size_t(patch_rows);
  std::size_t c = std::size_t(patch_cols);
  for (std::size_t k = 0; k < conv_channels.size(); ++k) {
    r = conv_out(r, kernel, stride);
    c = conv_out(c, kernel, stride);
  }
  const std::size_t ch = conv_channels.empty() ? 1 : std::size_t(conv_channels.back());
  return ch * r * c;
}

TCBFNetwork::TCBFNetwork(NetworkShape shape) : shape_(std::move(shape)) {
  shape_.validate();
  auto add = [&](std::string name, ad::Shape s) {
    params_.push_back({std::move(name), ad::Tensor::zeros(std::move(s), true)});
  };
  std::size_t in_ch = 1;
  for (std::size_t k = 0; k < shape_.conv_channels.size(); ++k) {
    const auto out_ch = std::size_t(shape_.conv_channels[k]);
    const auto kk = std::size_t(shape_.kernel);
    add("conv" + std::to_string(k) + ".weight", {out_ch, in_ch, kk, kk});
    add("conv" + std::to_string(k) + ".bias", {out_ch});
    in_ch = out_ch;
  }
  std::size_t in = shape_.conv_features();
  for (std::size_t k = 0; k < shape_.hidden.size(); ++k) {
    const auto out = std::size_t(shape_.hidden[k]);
    add("fc" + std::to_string(k) + ".weight", {out, in});
    add("fc" + std::to_string(k) + ".bias", {out});
    in = out;
  }
  add("head.weight", {1, in});
  add("head.bias", {1});
  const auto eh = std::size_t(shape_.encoder_hidden);
  add("enc0.weight", {eh, 2});
  add("enc0.bias", {eh});
  add("enc1.weight", {1, eh});
  add("enc1.bias", {1});
}

TCBFNetwork::TCBFNetwork(const TCBFNetwork& other) : shape_(other.shape_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    params_.push_back({p.name, ad::Tensor::from(p.tensor.shape(),
                                                std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()),
                                                true)});
  }
}

TCBFNetwork& TCBFNetwork::operator=(const TCBFNetwork& other) {
  if (this != &other) *this = TCBFNetwork(other);
  return *this;
}

void TCBFNetwork::initialize(std::uint64_t seed) {
  Rng rng(seed);
  // Bias bounds follow the fan-in of the weight declared just before them.
  double bound = 1.0;
  for (auto& p : params_) {
    const auto& s = p.tensor.shape();
    if (s.size() >= 2) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < s.size(); ++d) fan_in *= s[d];
      bound = 1.0 / std::sqrt(double(fan_in));
    }
    for (double& w : p.tensor.mutable_data()) w = rng.uniform(-bound, bound);
  }
}

std::vector<ad::Tensor> TCBFNetwork::parameter_tensors() const {
  std::vector<ad::Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::size_t TCBFNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

ad::Tensor& TCBFNetwork::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ValidationError("no parameter named '" + name + "'");
}

ad::Tensor TCBFNetwork::forward_h(const ad::Tensor& patches) const {
  if (patches.shape().size() != 4 || patches.dim(1) != 1 || patches.dim(2) != std::size_t(shape_.patch_rows) ||
      patches.dim(3) != std::size_t(shape_.patch_cols)) {
    throw ValidationError("forward_h expects [N,1," + std::to_string(shape_.patch_rows) + "," +
                          std::to_string(shape_.patch_cols) + "], got " + ad::to_string(patches.shape()));
  }
  const std::size_t n = patches.dim(0);
  std::size_t k = 0;
  ad::Tensor x = patches;
  for (std::size_t layer = 0; layer < shape_.conv_channels.size(); ++layer, k += 2) {
    x = ad::relu(ad::conv2d(x, params_[k].tensor, params_[k + 1].tensor, std::size_t(shape_.stride), 0));
  }
  x = ad::reshape(x, {n, x.size() / n});
  for (std::size_t layer = 0; layer < shape_.hidden.size(); ++layer, k += 2) {
    x = ad::relu(ad::dense(x, params_[k].tensor, params_[k + 1].tensor));
  }
  x = ad::dense(x, params_[k].tensor, params_[k + 1].tensor);
  return ad::reshape(x, {n});
}

ad::Tensor TCBFNetwork::forward_encoder(const ad::Tensor& controls) const {
  if (controls.shape().size() != 2 || controls.dim(1) != 2) {
    throw ValidationError("forward_encoder expects [N,2], got " + ad::to_string(controls.shape()));
  }
  const std::size_t base = params_.size() - 4;
  auto hidden = ad::relu(ad::dense(controls, params_[base].tensor, params_[base + 1].tensor));
  auto out = ad::softplus(ad::dense(hidden, params_[base + 2].tensor, params_[base + 3].tensor));
  return ad::reshape(out, {controls.dim(0)});
}

ad::Tensor TCBFNetwork::patch_tensor(std::span<const ObservationPatch* const> patches) const {
  const auto rows = std::size_t(shape_.patch_rows);
  const auto cols = std::size_t(shape_.patch_cols);
  std::vector<double> data(patches.size() * rows * cols);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& v = patches[i]->values;
    if (v.size() != rows * cols) {
      throw ValidationError("patch has " + std::to_string(v.size()) + " values, network expects " +
                            std::to_string(rows * cols));
    }
    for (std::size_t j = 0; j < v.size(); ++j) data[i * rows * cols + j] = double(v[j]) * shape_.input_scale;
  }
  return ad::Tensor::from({patches.size(), 1, rows, cols}, std::move(data));
}

std::vector<double> TCBFNetwork::evaluate(std::span<const ObservationPatch> patches) const {
  ad::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(patches.size());
  std::vector<const ObservationPatch*> chunk;
  for (std::size_t start = 0; start < patches.size(); start += kEvalChunk) {
    const std::size_t end = std::min(patches.size(), start + kEvalChunk);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&patches[i]);
    const auto h = forward_h(patch_tensor(chunk));
    out.insert(out.end(), h.data().begin(), h.data().end());
  }
  return out;
}

double TCBFNetwork::encode_control(const Control& u) const {
  ad::NoGradGuard guard;
  return forward_encoder(ad::Tensor::from({1, 2}, {u.v, u.omega})).item();
}

void LossConfig::validate() const {
  if (!(c1 >= 0 && c2 >= 0 && c3 >= 0)) throw ValidationError("loss weights must be nonnegative");
  if (!(eps1 >= 0 && eps2 >= 0 && eps3 >= 0)) throw ValidationError("loss margins must be nonnegative");
  if (!(alpha_gamma >= 0 && alpha_gamma < 1)) throw ValidationError("alpha_gamma must lie in [0, 1)");
}

LossTerms certificate_loss(const TCBFNetwork& net, std::span<const LabeledSample* const> batch,
                           const LossConfig& cfg) {
  if (batch.empty()) throw ValidationError("loss over an empty batch");
  // One forward pass over [o_t for all samples ; o_next for safe samples].
  std::vector<const ObservationPatch*> patches;
  std::vector<std::size_t> unsafe_idx;
  std::vector<std::size_t> safe_idx;
  std::vector<double> controls;
  patches.reserve(batch.size() * 2);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    patches.push_back(&batch[i]->o_t);
    (batch[i]->label.safe() ? safe_idx : unsafe_idx).push_back(i);
  }
  std::vector<std::size_t> next_idx;
  for (std::size_t i : safe_idx) {
    next_idx.push_back(patches.size());
    patches.push_back(&batch[i]->o_next);
    controls.push_back(batch[i]->u.v);
    controls.push_back(batch[i]->u.omega);
  }
  const ad::Tensor h = net.forward_h(net.patch_tensor(patches));

  LossTerms out;
  const auto zero = ad::Tensor::scalar(0.0);
  out.unsafe_term = unsafe_idx.empty()
                        ? zero
                        : ad::scale(ad::sum(ad::relu(ad::add_scalar(ad::gather(h, unsafe_idx), cfg.eps1))), cfg.c1);
  if (safe_idx.empty()) {
    out.safe_term = zero;
    out.decrease_term = zero;
  } else {
    const auto h_safe = ad::gather(h, safe_idx);
    out.safe_term = ad::scale(ad::sum(ad::relu(ad::add_scalar(ad::scale(h_safe, -1.0), cfg.eps2))), cfg.c2);
    const auto u_e = net.forward_encoder(ad::Tensor::from({safe_idx.size(), 2}, std::move(controls)));
    const auto decrease = ad::add(ad::mul(ad::gather(h, next_idx), u_e), ad::scale(h_safe, cfg.alpha_gamma));
    out.decrease_term = ad::scale(ad::sum(ad::relu(ad::add_scalar(ad::scale(decrease, -1.0), cfg.eps3))), cfg.c3);
  }
  out.total = ad::add(ad::add(out.unsafe_term, out.safe_term), out.decrease_term);
  return out;
}

LossTerms certificate_loss(const TCBFNetwork& net, std::span<const LabeledSample> batch, const LossConfig& cfg) {
  std::vector<const LabeledSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return certificate_loss(net, std::span<const LabeledSample* const>(ptrs), cfg);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate > 0)) throw ValidationError("learning rate must be positive");
}

TrainResult train(std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set,
                  const TrainConfig& cfg, const LossConfig& loss_cfg, const NetworkShape& shape) {
  cfg.validate();
  loss_cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ValidationError("training and validation sets must be nonempty");

  TrainResult result{TCBFNetwork(shape), {}, 0};
  TCBFNetwork& net = result.network;
  net.initialize(Rng::derive(cfg.seed, 0));
  TCBFNetwork best = net;
  double best_accuracy = -1.0;

  std::vector<ad::Tensor> params = net.parameter_tensors();
  ad::AdamState adam = ad::make_adam_state(params, ad::AdamConfig{cfg.learning_rate});
  Rng rng(Rng::derive(cfg.seed, 1));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const LabeledSample*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      for (auto& p : params) p.zero_grad();
      const LossTerms terms = certificate_loss(net, batch, loss_cfg);
      const double values[3] = {terms.unsafe_term.item(), terms.safe_term.item(), terms.decrease_term.item()};
      constexpr const char* kNames[3] = {"unsafe (h + eps1)", "safe (eps2 - h)", "decrease (eps3 - h' u_e - alpha h)"};
      for (int t = 0; t < 3; ++t) {
        if (!std::isfinite(values[t])) {
          throw TrainingError("non-finite loss in the " + std::string(kNames[t]) + " term at epoch " +
                              std::to_string(epoch));
        }
      }
      rec.unsafe_term += values[0];
      rec.safe_term += values[1];
      rec.decrease_term += values[2];
      if (terms.total.requires_grad()) {
        ad::backward(terms.total);
        adam_step(params, adam);
      }
    }
    const double n = double(train_set.size());
    rec.unsafe_term /= n;
    rec.safe_term /= n;
    rec.decrease_term /= n;
    rec.loss = rec.unsafe_term + rec.safe_term + rec.decrease_term;
    rec.val_accuracy = evaluate_certificate(net, val_set, loss_cfg).accuracy;
    result.history.push_back(rec);
    if (rec.val_accuracy > best_accuracy) {
      best_accuracy = rec.val_accuracy;
      best = net;
      result.best_epoch = epoch;
    }
  }
  result.network = std::move(best);
  return result;
}

void Histogram::add(double value) {
  if (counts.empty()) return;
  const double t = (value - lo) / (hi - lo) * double(counts.size());
  const auto bin = std::size_t(std::clamp(std::floor(t), 0.0, double(counts.size() - 1)));
  ++counts[bin];
}

CertificateReport evaluate_certificate(const Barrier& barrier, std::span<const LabeledSample> samples,
                                       const LossConfig& cfg) {
  CertificateReport report;
  std::vector<ObservationPatch> current;
  std::vector<ObservationPatch> next;
  current.reserve(samples.size());
  for (const auto& s : samples) {
    current.push_back(s.o_t);
    if (s.label.safe()) next.push_back(s.o_next);
  }
  const auto h = barrier.evaluate(current);
  const auto h_next = barrier.evaluate(next);

  std::size_t safe_ok = 0;
  std::size_t unsafe_ok = 0;
  std::size_t decrease_ok = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label.safe()) {
      ++report.n_safe;
      if (h[i] >= 0.0) ++safe_ok;
      report.safe_margin.add(h[i]);
      const double d = h_next[k++] * barrier.encode_control(samples[i].u) + cfg.alpha_gamma * h[i];
      if (d >= 0.0) ++decrease_ok;
      report.decrease_margin.add(d);
    } else {
      ++report.n_unsafe;
      if (h[i] < 0.0) ++unsafe_ok;
      report.unsafe_margin.add(h[i]);
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : double(a) / double(b); };
  report.safe_rate = ratio(safe_ok, report.n_safe);
  report.unsafe_rate = ratio(unsafe_ok, report.n_unsafe);
  report.decrease_rate = ratio(decrease_ok, report.n_safe);
  report.accuracy = ratio(safe_ok + unsafe_ok, samples.size());
  return report;
}

}  // namespace tcbf
