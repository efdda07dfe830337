#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nits {

/// Compact support [lo, hi] of one coordinate.
struct Bounds {
  double lo = 0.0;
  double hi = 1.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  /// Throws InvalidParameter unless lo < hi and both are finite.
  void validate() const;

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Layer structure of one probabilistically normalized network.
///
/// widths = {1, h_1, ..., h_k, 1}. Layer l maps widths[l] -> widths[l+1].
/// Every layer except the last is a sigmoid layer with a bias; the last is
/// a softmax-weighted convex combination without bias.
///
/// Raw parameter layout, layer by layer: the weight matrix A_l stored
/// row-major as A[i * out + j] (i = input unit, j = output unit), then for
/// hidden layers the bias vector b_l.
class PnnSpec {
 public:
  PnnSpec(std::vector<std::size_t> widths, Bounds bounds);

  /// Two hidden layers of 16 units.
  static PnnSpec standard(Bounds bounds);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  std::size_t num_layers() const noexcept { return widths_.size() - 1; }
  bool is_final(std::size_t layer) const noexcept { return layer + 1 == num_layers(); }
  std::size_t fan_in(std::size_t layer) const { return widths_.at(layer); }
  std::size_t fan_out(std::size_t layer) const { return widths_.at(layer + 1); }

  std::size_t param_count() const noexcept { return param_count_; }
  std::size_t weight_offset(std::size_t layer) const { return weight_offsets_.at(layer); }
  /// Only valid for hidden layers.
  std::size_t bias_offset(std::size_t layer) const;

  PnnSpec with_bounds(Bounds bounds) const { return PnnSpec(widths_, bounds); }

  friend bool operator==(const PnnSpec&, const PnnSpec&) = default;

 private:
  std::vector<std::size_t> widths_;
  Bounds bounds_;
  std::vector<std::size_t> weight_offsets_;
  std::size_t param_count_ = 0;
};

/// Raw (unconstrained) parameters of one PNN. Positivity is imposed only at
/// evaluation time, so any finite vector of the right length is valid.
class PnnParams {
 public:
  PnnParams(const PnnSpec& spec, std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  operator std::span<const double>() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
};

namespace diagnostics {
/// Number of exp() saturations and partition floors since the last reset.
std::uint64_t clamp_count() noexcept;
void reset_clamp_count() noexcept;
}  // namespace diagnostics

namespace pnn {

inline constexpr double kMinPositiveWeight = 1e-30;
inline constexpr double kMaxPositiveWeight = 1e30;
inline constexpr double kLogFloor = 1e-300;

/// h_A: elementwise exp(-raw), saturated to [1e-30, 1e30].
std::vector<double> transform_weights(std::span<const double> raw);

/// h_b: per-unit bias contribution -mean_i(exp(-A[i, j])) * b[j].
///
/// The bias of output unit j is scaled by the mean transformed weight
/// feeding that unit, so a single-input layer computes
/// sigmoid(w_j * (x - b_j)) and b_j reads as a location on the input axis.
std::vector<double> transform_bias(std::span<const double> raw_bias,
                                   std::span<const double> raw_weights,
                                   std::size_t fan_in, std::size_t fan_out);

/// h_s: max-shifted softmax.
std::vector<double> transform_final(std::span<const double> raw);

double sigmoid(double z) noexcept;

/// Activations of one layer at one input, with their x-derivatives.
struct LayerTrace {
  std::vector<double> act;        // sigma(z)
  std::vector<double> one_minus;  // 1 - sigma(z), evaluated as sigma(-z)
  std::vector<double> dact;       // d act / dx
  std::vector<double> dpre;       // d z / dx
};

/// F(x) and dF/dx together with the hidden-layer trace.
struct Forward {
  double x = 0.0;
  double value = 0.0;
  double dvalue = 0.0;
  std::vector<LayerTrace> hidden;
};

/// Everything the density needs at one point.
struct PnnEval {
  double cdf_value = 0.0;
  double pdf_value = 0.0;
  double log_pdf = 0.0;
  double partition = 0.0;
  Forward trace;
};

/// A PNN with its transformed parameters cached, ready for repeated
/// evaluation. Holds no reference to the raw parameters.
class Network {
 public:
  Network(const PnnSpec& spec, std::span<const double> raw);

  const PnnSpec& spec() const noexcept { return spec_; }

  /// F(x) only; x may lie outside the bounds.
  double value(double x) const;
  /// F(x), dF/dx and the per-layer trace; x may lie outside the bounds.
  Forward forward(double x) const;

  double partition() const noexcept { return partition_; }
  double log_partition() const noexcept { return log_partition_; }
  double value_at_lo() const noexcept { return f_lo_; }
  double value_at_hi() const noexcept { return f_hi_; }

  /// Normalized cdf (F(x) - F(A)) / (F(B) - F(A)); x must lie in bounds.
  double cdf(double x) const;
  double pdf(double x) const;
  double log_pdf(double x) const;
  PnnEval evaluate(double x) const;

  // Transformed parameters, exposed for the gradient engine.
  const std::vector<double>& weights(std::size_t layer) const { return weights_.at(layer); }
  const std::vector<double>& bias_scale(std::size_t layer) const { return bias_scale_.at(layer); }
  const std::vector<double>& bias(std::size_t layer) const { return bias_.at(layer); }
  const std::vector<double>& mixture() const noexcept { return mixture_; }

 private:
  void check_domain(double x) const;

  PnnSpec spec_;
  std::vector<std::vector<double>> weights_;     // h_A(A_l), per layer
  std::vector<std::vector<double>> bias_scale_;  // mean_i h_A(A_l)[i, j], hidden layers
  std::vector<std::vector<double>> bias_;        // h_b(b_l, A_l), hidden layers
  std::vector<double> mixture_;                  // h_s(A_final)
  double f_lo_ = 0.0;
  double f_hi_ = 0.0;
  double partition_ = 0.0;
  double log_partition_ = 0.0;
};

Forward forward(const PnnSpec& spec, std::span<const double> raw, double x);
double cdf(const PnnSpec& spec, std::span<const double> raw, double x);
double log_pdf(const PnnSpec& spec, std::span<const double> raw, double x);
double partition(const PnnSpec& spec, std::span<const double> raw);
PnnEval evaluate(const PnnSpec& spec, std::span<const double> raw, double x);

/// Raw parameters for a broad, roughly flat density over the bounds.
///
/// Hidden sigmoids are spread evenly along their input range with
/// overlapping slopes and the final mixture is uniform. Used to seed the
/// weight-model output biases so that no initial partition underflows.
std::vector<double> reference_params(const PnnSpec& spec);

/// Gaussian raw parameters with the given standard deviation.
PnnParams random_params(const PnnSpec& spec, std::uint64_t seed, double scale = 1.0);

}  // namespace pnn
}  // namespace nits
