#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "nits/matrix.hpp"
#include "nits/model.hpp"
#include "nits/pnn.hpp"
#include "nits/rng.hpp"

namespace nits::sampler {

/// Bisection stopping rule: stop once the bracket is no wider than
/// `tolerance` (in x units).
struct InversionConfig {
  double tolerance = 0.0;
  std::size_t max_iters = 64;

  /// tolerance = 1e-10 * (B - A), 64 iterations.
  static InversionConfig for_bounds(const Bounds& bounds);
  /// Throws InvalidParameter unless tolerance > 0 and max_iters covers
  /// required_iterations().
  void validate(const Bounds& bounds) const;
};

/// ceil(log2((B - A) / tolerance)), the halvings needed to reach tolerance.
std::size_t required_iterations(const Bounds& bounds, double tolerance);

struct Inversion {
  double x = 0.0;
  std::size_t iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

/// Smallest x with cdf(x) >= z, located by bisection on [A, B] and returned
/// as the midpoint of the final bracket. Throws ConvergenceError carrying
/// the last bracket when max_iters halvings do not close it.
Inversion monotonic_inverse(const std::function<double(double)>& cdf, double z,
                            const Bounds& bounds, const InversionConfig& config);

/// One draw from a 1D PNN: z ~ U[0, 1), x = N^{-1}(z).
double sample_1d(const PnnSpec& spec, std::span<const double> raw, Rng& rng,
                 const InversionConfig& config);

/// Options for multi-dimensional sampling. Without an absolute tolerance
/// each coordinate uses relative_tolerance * (B_i - A_i).
struct SamplingOptions {
  std::optional<double> tolerance;
  double relative_tolerance = 1e-10;
  std::size_t max_iters = 64;
  std::size_t threads = 1;

  InversionConfig config_for(const Bounds& bounds) const;
};

/// Draws coordinate i given the model-unit point z, of which only z[0..i)
/// is read by the model. Returns the model-unit value.
Inversion sample_coordinate(const NitsModel& model, std::span<const double> z, std::size_t i,
                            double uniform, const InversionConfig& config);

/// n ancestral draws in data units. Row r uses stream (seed, r), so rows are
/// independent of the thread count.
Matrix sample_ancestral(const NitsModel& model, std::size_t n, std::uint64_t seed,
                        const SamplingOptions& options = {});

}  // namespace nits::sampler
