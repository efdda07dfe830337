#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nits/pnn.hpp"
#include "nits/weight_model.hpp"

namespace nits {

/// Per-coordinate affine map from data units to model units,
/// z = (x - shift) / scale. The identity unless the data were standardized.
struct AffineMap {
  std::vector<double> shift;
  std::vector<double> scale;

  static AffineMap identity(std::size_t dims);
  std::size_t dims() const noexcept { return shift.size(); }
  double to_model(std::size_t i, double x) const { return (x - shift[i]) / scale[i]; }
  double to_data(std::size_t i, double z) const { return z * scale[i] + shift[i]; }
  /// Sum of log scale: the change-of-variables constant for log-densities.
  double log_abs_det() const;
  void validate() const;

  friend bool operator==(const AffineMap&, const AffineMap&) = default;
};

/// Architecture knobs for a new model. The defaults follow the two 16-unit
/// hidden layers used for every PNN conditional.
struct ModelConfig {
  std::vector<std::size_t> pnn_widths{1, 16, 16, 1};
  std::size_t hidden_dim = 64;
  std::size_t residual_blocks = 2;
  double dropout_rate = 0.0;
  Masking masking = Masking::autoregressive;
};

/// Levels first, first + step, ..., first + (levels - 1) * step in data
/// units. Level a owns [a - step/2, a + step/2); the first bin starts at the
/// lower bound and the last bin ends at the upper bound.
struct QuantizationGrid {
  double first = 0.0;
  double step = 1.0;
  std::size_t levels = 1;
};

/// Multi-dimensional NITS: one PNN conditional per coordinate whose raw
/// parameters come from the causally masked weight model.
class NitsModel {
 public:
  /// Fresh model with initialized weights. `bounds` are in model units.
  NitsModel(const ModelConfig& config, std::vector<Bounds> bounds, std::uint64_t seed,
            AffineMap transform = {});

  /// Reassembles a model from stored parts (used by the checkpoint reader).
  NitsModel(std::vector<std::size_t> pnn_widths, std::vector<Bounds> bounds,
            WeightModel weight_model, AffineMap transform, std::uint64_t seed);

  std::size_t dims() const noexcept { return bounds_.size(); }
  std::size_t params_per_dim() const noexcept { return specs_.front().param_count(); }
  const std::vector<std::size_t>& pnn_widths() const noexcept { return specs_.front().widths(); }
  const std::vector<Bounds>& bounds() const noexcept { return bounds_; }
  const PnnSpec& pnn_spec(std::size_t i) const { return specs_.at(i); }
  const WeightModel& weight_model() const noexcept { return weights_; }
  WeightModel& weight_model() noexcept { return weights_; }
  const AffineMap& transform() const noexcept { return transform_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Maps a data-unit point to model units; values within 1e-12 of the box
  /// width outside a bound are snapped onto it.
  std::vector<double> to_model_units(std::span<const double> x) const;
  /// Throws DomainError naming the first model-unit coordinate outside its bounds.
  void check_in_bounds(std::span<const double> z) const;

  // The following work in model units.

  /// All raw PNN parameters, coordinate-major (dims() * params_per_dim()).
  std::vector<double> emit_theta(std::span<const double> z) const;
  std::span<const double> theta_slice(std::span<const double> theta, std::size_t i) const;
  /// log nu(z_i | z_<i) for every coordinate.
  std::vector<double> conditional_log_pdfs(std::span<const double> z) const;

  // The following work in data units.

  /// log density of x: the sum of the conditional log-densities in model
  /// units minus the log-scale of the affine map.
  double log_likelihood(std::span<const double> x) const;

  /// Probability of the grid cell of coordinate i given the other
  /// coordinates of x as ancestors.
  double discretized_pmf(std::span<const double> x, const QuantizationGrid& grid,
                         std::size_t i) const;
  /// Sum over coordinates of the log cell probabilities.
  double discretized_log_pmf(std::span<const double> x, const QuantizationGrid& grid) const;

 private:
  std::vector<Bounds> bounds_;
  std::vector<PnnSpec> specs_;
  WeightModel weights_;
  AffineMap transform_;
  std::uint64_t seed_ = 0;
};

}  // namespace nits
