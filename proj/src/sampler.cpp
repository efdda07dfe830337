#include "nits/sampler.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nits/error.hpp"
#include "nits/parallel.hpp"

namespace nits::sampler {

InversionConfig InversionConfig::for_bounds(const Bounds& bounds) {
  return InversionConfig{1e-10 * bounds.width(), 64};
}

std::size_t required_iterations(const Bounds& bounds, double tolerance) {
  const double ratio = bounds.width() / tolerance;
  if (ratio <= 1.0) return 0;
  return static_cast<std::size_t>(std::ceil(std::log2(ratio)));
}

void InversionConfig::validate(const Bounds& bounds) const {
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
    throw InvalidParameter("inversion tolerance must be positive");
  }
  if (max_iters < required_iterations(bounds, tolerance)) {
    throw InvalidParameter("max_iters = " + std::to_string(max_iters) +
                           " cannot reach tolerance " + std::to_string(tolerance) +
                           " (needs " + std::to_string(required_iterations(bounds, tolerance)) +
                           ")");
  }
}

Inversion monotonic_inverse(const std::function<double(double)>& cdf, double z,
                            const Bounds& bounds, const InversionConfig& config) {
  config.validate(bounds);
  if (!(z >= 0.0 && z <= 1.0)) throw DomainError("inverse cdf argument must lie in [0, 1]");
  double lo = bounds.lo;
  double hi = bounds.hi;
  std::size_t it = 0;
  while (hi - lo > config.tolerance) {
    if (it == config.max_iters) {
      throw ConvergenceError("bisection did not converge in " + std::to_string(it) +
                                 " iterations",
                             lo, hi);
    }
    ++it;
    const double mid = lo + 0.5 * (hi - lo);
    if (cdf(mid) >= z) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return Inversion{lo + 0.5 * (hi - lo), it, lo, hi};
}

double sample_1d(const PnnSpec& spec, std::span<const double> raw, Rng& rng,
                 const InversionConfig& config) {
  const pnn::Network net(spec, raw);
  const double z = uniform01(rng);
  return monotonic_inverse([&](double x) { return net.cdf(x); }, z, spec.bounds(), config).x;
}

InversionConfig SamplingOptions::config_for(const Bounds& bounds) const {
  return InversionConfig{tolerance.value_or(relative_tolerance * bounds.width()), max_iters};
}

Inversion sample_coordinate(const NitsModel& model, std::span<const double> z, std::size_t i,
                            double uniform, const InversionConfig& config) {
  const auto theta = model.emit_theta(z);
  const PnnSpec& spec = model.pnn_spec(i);
  const pnn::Network net(spec, model.theta_slice(theta, i));
  return monotonic_inverse([&](double x) { return net.cdf(x); }, uniform, spec.bounds(), config);
}

Matrix sample_ancestral(const NitsModel& model, std::size_t n, std::uint64_t seed,
                        const SamplingOptions& options) {
  const std::size_t d = model.dims();
  std::vector<InversionConfig> configs;
  for (const Bounds& b : model.bounds()) {
    configs.push_back(options.config_for(b));
    configs.back().validate(b);
  }
  Matrix out(n, d);
  const bool constant = model.weight_model().output_is_constant();
  std::vector<double> shared_theta;
  if (constant) shared_theta = model.emit_theta(std::vector<double>(d, 0.0));

  parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> z(d), u(d);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = make_stream(seed, r);
      for (double& v : u) v = uniform01(rng);
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        if (constant) {
          const pnn::Network net(model.pnn_spec(i), model.theta_slice(shared_theta, i));
          z[i] = monotonic_inverse([&](double x) { return net.cdf(x); }, u[i],
                                   model.bounds()[i], configs[i])
                     .x;
        } else {
          z[i] = sample_coordinate(model, z, i, u[i], configs[i]).x;
        }
      }
      for (std::size_t i = 0; i < d; ++i) out(r, i) = model.transform().to_data(i, z[i]);
    }
  });
  return out;
}

}  // namespace nits::sampler
