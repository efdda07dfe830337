#pragma once

#include <span>
#include <vector>

#include "nits/pnn.hpp"
#include "nits/weight_model.hpp"

namespace nits::grad {

/// Recorded forward pass of the per-datum loss -log nu(x).
///
/// The loss is -log dF/dx(x) + log(F(B) - F(A)), so the tape holds dual
/// (value, d/dx) traces at x, A and B. backward() reverse-accumulates both
/// components of all three traces into d loss / d raw.
class GradTape {
 public:
  GradTape(const PnnSpec& spec, std::span<const double> raw, double x);

  double loss() const noexcept { return loss_; }
  const pnn::Network& network() const noexcept { return net_; }

  /// Fresh gradient with respect to the raw parameters. Does not modify the
  /// tape, so repeated calls return identical results.
  std::vector<double> backward() const;

  /// Adds scale * gradient into `grad`.
  void backward_into(std::span<double> grad, double scale = 1.0) const;

 private:
  pnn::Network net_;
  pnn::Forward at_x_;
  pnn::Forward at_lo_;
  pnn::Forward at_hi_;
  std::vector<double> raw_bias_;
  double loss_ = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

LossGrad loss_and_grad(const PnnSpec& spec, std::span<const double> raw, double x);

/// Pulls a gradient over the emitted PNN parameters back to the weight-model
/// parameters phi. `grad_theta` has one slot per weight-model output.
std::vector<double> chain_to_phi(const WeightModel& model, const WeightModel::Tape& tape,
                                 std::span<const double> grad_theta);

}  // namespace nits::grad
