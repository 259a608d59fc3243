#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcbf/autodiff.hpp"
#include "tcbf/barrier.hpp"
#include "tcbf/safety.hpp"

namespace tcbf {

/// Layer sizes of the barrier network. The defaults take a 100x40 patch
/// through three stride-2 3x3 convolutions and two hidden dense layers.
struct NetworkShape {
  int patch_rows = kPatchRows;
  int patch_cols = kPatchCols;
  std::vector<int> conv_channels = {8, 16, 16};
  int kernel = 3;
  int stride = 2;
  std::vector<int> hidden = {64, 32};
  int encoder_hidden = 16;
  /// Multiplies patch elevations before the first layer.
  double input_scale = 1.0;

  void validate() const;
  /// Flattened feature count after the convolution stack.
  std::size_t conv_features() const;
  bool operator==(const NetworkShape&) const = default;
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

/// Conv+dense barrier h(o) and a softplus control encoder u_e(u) > 0.
/// Copies are deep.
class TCBFNetwork final : public Barrier {
 public:
  explicit TCBFNetwork(NetworkShape shape = {});
  TCBFNetwork(const TCBFNetwork& other);
  TCBFNetwork& operator=(const TCBFNetwork& other);
  TCBFNetwork(TCBFNetwork&&) noexcept = default;
  TCBFNetwork& operator=(TCBFNetwork&&) noexcept = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(std::uint64_t seed);

  const NetworkShape& shape() const { return shape_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<ad::Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  ad::Tensor& parameter(const std::string& name);

  /// patches [N,1,rows,cols] -> h [N].
  ad::Tensor forward_h(const ad::Tensor& patches) const;
  /// controls [N,2] -> u_e [N].
  ad::Tensor forward_encoder(const ad::Tensor& controls) const;

  /// Packs patches into [N,1,rows,cols]; throws ValidationError on shape mismatch.
  ad::Tensor patch_tensor(std::span<const ObservationPatch* const> patches) const;

  std::vector<double> evaluate(std::span<const ObservationPatch> patches) const override;
  double encode_control(const Control& u) const override;

  double forward_h(const ObservationPatch& patch) const { return h(patch); }

 private:
  NetworkShape shape_;
  std::vector<NamedParameter> params_;
};

/// Margin loss weights. The decrease term uses alpha(h) = alpha_gamma * h.
struct LossConfig {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 0.5;
  double eps1 = 0.1;
  double eps2 = 0.1;
  double eps3 = 0.01;
  double alpha_gamma = 0.5;

  void validate() const;
};

struct LossTerms {
  ad::Tensor total;
  ad::Tensor unsafe_term;    // c1 * sum_unsafe relu(h(o_t) + eps1)
  ad::Tensor safe_term;      // c2 * sum_safe relu(eps2 - h(o_t))
  ad::Tensor decrease_term;  // c3 * sum_safe relu(eps3 - (h(o_next) u_e + gamma h(o_t)))
};

LossTerms certificate_loss(const TCBFNetwork& net, std::span<const LabeledSample* const> batch,
                           const LossConfig& cfg);
LossTerms certificate_loss(const TCBFNetwork& net, std::span<const LabeledSample> batch, const LossConfig& cfg);

struct TrainConfig {
  int epochs = 150;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // per training sample
  double unsafe_term = 0.0;
  double safe_term = 0.0;
  double decrease_term = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  TCBFNetwork network;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Adam on shuffled mini-batches; returns the parameters of the epoch with
/// the best validation accuracy (earliest on ties).
TrainResult train(std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set,
                  const TrainConfig& cfg, const LossConfig& loss_cfg, const NetworkShape& shape = {});

struct Histogram {
  double lo = -2.0;
  double hi = 2.0;
  std::vector<std::size_t> counts = std::vector<std::size_t>(40, 0);

  void add(double value);
};

struct CertificateReport {
  std::size_t n_safe = 0;
  std::size_t n_unsafe = 0;
  double safe_rate = 0.0;      // P(h >= 0 | safe)
  double unsafe_rate = 0.0;    // P(h < 0 | unsafe)
  double decrease_rate = 0.0;  // P(h(o_next) u_e + gamma h(o_t) >= 0 | safe)
  double accuracy = 0.0;       // sign(h) agreement over all samples
  Histogram safe_margin;
  Histogram unsafe_margin;
  Histogram decrease_margin;
};

CertificateReport evaluate_certificate(const Barrier& barrier, std::span<const LabeledSample> samples,
                                       const LossConfig& cfg);

}  // namespace tcbf
