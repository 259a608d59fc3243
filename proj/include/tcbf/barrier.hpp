#pragma once

#include <span>
#include <vector>

#include "tcbf/heightfield.hpp"
#include "tcbf/types.hpp"

namespace tcbf {

/// Observation-conditioned barrier h(o) with a positive control encoding u_e.
/// Implementations must be safe to call concurrently.
class Barrier {
 public:
  virtual ~Barrier() = default;

  virtual std::vector<double> evaluate(std::span<const ObservationPatch> patches) const = 0;
  virtual double encode_control(const Control& u) const = 0;

  double h(const ObservationPatch& patch) const { return evaluate(std::span(&patch, 1)).front(); }
};

/// Barrier returning fixed values; useful as a stand-in for a trained network.
class ConstantBarrier final : public Barrier {
 public:
  explicit ConstantBarrier(double h, double u_e = 1.0) : h_(h), u_e_(u_e) {}

  std::vector<double> evaluate(std::span<const ObservationPatch> patches) const override {
    return std::vector<double>(patches.size(), h_);
  }
  double encode_control(const Control&) const override { return u_e_; }

 private:
  double h_;
  double u_e_;
};

}  // namespace tcbf
