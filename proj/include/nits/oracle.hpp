#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "nits/pnn.hpp"

// Reference computations used to check the toolkit. Nothing here calls into
// the PNN evaluation code; callers pass the function under test in.
namespace nits::oracle {

using RealFn = std::function<double(double)>;

/// Composite Simpson's rule with `panels` (even, >= 2) subintervals.
double simpson(const RealFn& f, double a, double b, std::size_t panels);

struct AdaptiveResult {
  double value = 0.0;
  std::size_t panels = 0;
  bool converged = false;
};

/// Composite Simpson, doubling the panel count (reusing every previous
/// sample) until two successive estimates agree to `rel_tol`, capped at
/// `max_panels`.
AdaptiveResult adaptive_simpson(const RealFn& f, double a, double b, double rel_tol = 1e-10,
                                std::size_t max_panels = std::size_t{1} << 20);

/// Nested composite Simpson over [ax, bx] x [ay, by].
double simpson_2d(const std::function<double(double, double)>& f, double ax, double bx,
                  double ay, double by, std::size_t panels);

/// Central difference (f(x + h) - f(x - h)) / 2h.
double central_difference(const RealFn& f, double x, double h);

/// Mixture of logistics with cdf sum_i w_i * logistic((x - mu_i) / s_i).
struct MoLRef {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;

  std::size_t components() const noexcept { return weights.size(); }
  void validate() const;
};

double mol_cdf(const MoLRef& ref, double x);
double mol_pdf(const MoLRef& ref, double x);

/// Two-layer PNN (widths {1, k, 1}) whose unnormalized output is exactly the
/// mixture cdf.
///
/// With one input, hidden unit j computes
///   sigmoid(exp(-A_j) * x - exp(-A_j) * b_j) = sigmoid((x - b_j) / exp(A_j)),
/// so A_j = log s_j and b_j = mu_j reproduce component j, and the final raw
/// weights log w_j give softmax weights w_j. Only the normalization over
/// [A, B] separates the PNN cdf from the mixture cdf.
std::pair<PnnSpec, PnnParams> embed_mol_as_pnn(const MoLRef& ref, const Bounds& bounds);

/// -log nu(x) of a PNN evaluated from scratch in extended precision, with
/// no clamping. `raw` follows the PnnSpec layout: per layer the row-major
/// in x out weight matrix, then (hidden layers only) one bias per unit.
/// Difference quotients of this function are accurate to ~1e-13 at
/// h = 1e-5, well below the double-precision evaluator's rounding.
long double reference_loss(std::span<const std::size_t> widths, const Bounds& bounds,
                           std::span<const double> raw, long double x);

/// max over `points` equispaced x in [a, b] (endpoints included) of |f - g|.
double sup_gap(const RealFn& f, const RealFn& g, double a, double b, std::size_t points);

struct KsResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test of `samples` (values in [0, 1],
/// any order) against Unif[0, 1]. p from the asymptotic Kolmogorov
/// distribution with Stephens' small-sample correction.
KsResult ks_statistic(std::span<const double> samples);

/// P(K > lambda) for the Kolmogorov distribution, series truncated at 100
/// terms.
double kolmogorov_survival(double lambda);

}  // namespace nits::oracle
