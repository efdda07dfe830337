#include "nits/model.hpp"

#include <cmath>
#include <string>

#include "nits/error.hpp"

namespace nits {

AffineMap AffineMap::identity(std::size_t dims) {
  return AffineMap{std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0)};
}

double AffineMap::log_abs_det() const {
  double total = 0.0;
  for (double s : scale) total += std::log(s);
  return total;
}

void AffineMap::validate() const {
  if (shift.size() != scale.size()) throw InvalidParameter("affine map shift/scale size mismatch");
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (!std::isfinite(shift[i]) || !std::isfinite(scale[i]) || !(scale[i] > 0.0)) {
      throw InvalidParameter("affine map needs finite shifts and positive scales");
    }
  }
}

namespace {

std::vector<PnnSpec> make_specs(const std::vector<std::size_t>& widths,
                                const std::vector<Bounds>& bounds) {
  if (bounds.empty()) throw InvalidParameter("a model needs at least one dimension");
  std::vector<PnnSpec> specs;
  specs.reserve(bounds.size());
  for (const Bounds& b : bounds) specs.emplace_back(widths, b);
  return specs;
}

WeightModelSpec weight_spec(const ModelConfig& config, std::size_t dims,
                            std::size_t params_per_dim) {
  WeightModelSpec s;
  s.data_dim = dims;
  s.hidden_dim = config.hidden_dim;
  s.residual_blocks = config.residual_blocks;
  s.dropout_rate = config.dropout_rate;
  s.params_per_dim = params_per_dim;
  s.masking = config.masking;
  return s;
}

}  // namespace

NitsModel::NitsModel(const ModelConfig& config, std::vector<Bounds> bounds, std::uint64_t seed,
                     AffineMap transform)
    : bounds_(std::move(bounds)),
      specs_(make_specs(config.pnn_widths, bounds_)),
      weights_(weight_spec(config, bounds_.size(), specs_.front().param_count())),
      transform_(transform.dims() == 0 ? AffineMap::identity(bounds_.size())
                                       : std::move(transform)),
      seed_(seed) {
  transform_.validate();
  if (transform_.dims() != dims()) throw InvalidParameter("affine map has the wrong dimension");
  std::vector<double> bias;
  bias.reserve(weights_.output_size());
  for (const PnnSpec& s : specs_) {
    const auto ref = pnn::reference_params(s);
    bias.insert(bias.end(), ref.begin(), ref.end());
  }
  weights_.initialize(seed, bias);
}

NitsModel::NitsModel(std::vector<std::size_t> pnn_widths, std::vector<Bounds> bounds,
                     WeightModel weight_model, AffineMap transform, std::uint64_t seed)
    : bounds_(std::move(bounds)),
      specs_(make_specs(pnn_widths, bounds_)),
      weights_(std::move(weight_model)),
      transform_(std::move(transform)),
      seed_(seed) {
  transform_.validate();
  if (transform_.dims() != dims()) throw InvalidParameter("affine map has the wrong dimension");
  const auto& ws = weights_.spec();
  if (ws.data_dim != dims() || ws.params_per_dim != specs_.front().param_count()) {
    throw InvalidParameter("weight model does not match the PNN layout");
  }
}

std::vector<double> NitsModel::to_model_units(std::span<const double> x) const {
  if (x.size() != dims()) {
    throw UsageError("expected a " + std::to_string(dims()) + "-dimensional point, got " +
                     std::to_string(x.size()));
  }
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    z[i] = transform_.to_model(i, x[i]);
    // Bounds mapped to data units and back can land an ulp outside.
    const Bounds& b = bounds_[i];
    const double slack = 1e-12 * b.width();
    if (z[i] < b.lo && z[i] >= b.lo - slack) z[i] = b.lo;
    if (z[i] > b.hi && z[i] <= b.hi + slack) z[i] = b.hi;
  }
  return z;
}

void NitsModel::check_in_bounds(std::span<const double> z) const {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!bounds_[i].contains(z[i])) {
      throw DomainError("coordinate " + std::to_string(i) + " = " + std::to_string(z[i]) +
                        " lies outside its bounds [" + std::to_string(bounds_[i].lo) + ", " +
                        std::to_string(bounds_[i].hi) + "]");
    }
  }
}

std::vector<double> NitsModel::emit_theta(std::span<const double> z) const {
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("weight-model input must be finite");
  }
  auto theta = weights_.forward(z);
  for (double v : theta) {
    if (!std::isfinite(v)) throw NumericalError("weight model produced a non-finite output");
  }
  return theta;
}

std::span<const double> NitsModel::theta_slice(std::span<const double> theta,
                                               std::size_t i) const {
  return theta.subspan(i * params_per_dim(), params_per_dim());
}

std::vector<double> NitsModel::conditional_log_pdfs(std::span<const double> z) const {
  if (z.size() != dims()) throw UsageError("point has the wrong dimension");
  check_in_bounds(z);
  const auto theta = emit_theta(z);
  std::vector<double> out(dims());
  for (std::size_t i = 0; i < dims(); ++i) {
    out[i] = pnn::Network(specs_[i], theta_slice(theta, i)).log_pdf(z[i]);
  }
  return out;
}

double NitsModel::log_likelihood(std::span<const double> x) const {
  const auto z = to_model_units(x);
  double total = 0.0;
  for (double v : conditional_log_pdfs(z)) total += v;
  return total - transform_.log_abs_det();
}

double NitsModel::discretized_pmf(std::span<const double> x, const QuantizationGrid& grid,
                                  std::size_t i) const {
  if (!(grid.step > 0.0) || grid.levels == 0 || !std::isfinite(grid.first)) {
    throw InvalidParameter("quantization grid needs a positive step and at least one level");
  }
  if (i >= dims()) throw UsageError("coordinate index out of range");
  const auto z = to_model_units(x);
  const double pos = (x[i] - grid.first) / grid.step;
  const double level = std::round(pos);
  if (std::abs(pos - level) > 1e-9 || level < 0.0 ||
      level > static_cast<double>(grid.levels - 1)) {
    throw DomainError("coordinate " + std::to_string(i) + " = " + std::to_string(x[i]) +
                      " is not on the quantization grid");
  }
  const auto k = static_cast<std::size_t>(level);
  const Bounds& b = bounds_[i];
  auto edge = [&](double half_steps) {
    const double e = transform_.to_model(i, grid.first + half_steps * grid.step);
    if (!b.contains(e)) {
      throw DomainError("bounds of coordinate " + std::to_string(i) +
                        " do not cover the quantization grid");
    }
    return e;
  };
  const double lower = k == 0 ? b.lo : edge(static_cast<double>(k) - 0.5);
  const double upper = k + 1 == grid.levels ? b.hi : edge(static_cast<double>(k) + 0.5);

  // Ancestors only matter through the weight model; coordinate i itself is
  // replaced by the bin edges.
  const auto theta = emit_theta(z);
  const pnn::Network net(specs_[i], theta_slice(theta, i));
  const double z_part = std::max(net.partition(), pnn::kLogFloor);
  const double f_lo = lower == b.lo ? net.value_at_lo() : net.value(lower);
  const double f_hi = upper == b.hi ? net.value_at_hi() : net.value(upper);
  return (f_hi - f_lo) / z_part;
}

double NitsModel::discretized_log_pmf(std::span<const double> x,
                                      const QuantizationGrid& grid) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dims(); ++i) {
    total += std::log(std::max(discretized_pmf(x, grid, i), pnn::kLogFloor));
  }
  return total;
}

}  // namespace nits
