#include "nits/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nits/error.hpp"

namespace nits::oracle {

double simpson(const RealFn& f, double a, double b, std::size_t panels) {
  if (!(a < b)) throw UsageError("simpson: need a < b");
  if (panels < 2 || panels % 2 != 0) throw UsageError("simpson: panel count must be even");
  const double h = (b - a) / static_cast<double>(panels);
  double odd = 0.0;
  double even = 0.0;
  for (std::size_t k = 1; k < panels; ++k) {
    const double v = f(a + static_cast<double>(k) * h);
    (k % 2 == 1 ? odd : even) += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

AdaptiveResult adaptive_simpson(const RealFn& f, double a, double b, double rel_tol,
                                std::size_t max_panels) {
  if (!(a < b)) throw UsageError("adaptive_simpson: need a < b");
  const double ends = f(a) + f(b);
  std::size_t panels = 2;
  double h = (b - a) / 2.0;
  double even = 0.0;
  double odd = f(a + h);
  double prev = h / 3.0 * (ends + 4.0 * odd);
  while (panels < max_panels) {
    even += odd;
    panels *= 2;
    h *= 0.5;
    odd = 0.0;
    for (std::size_t k = 1; k < panels; k += 2) odd += f(a + static_cast<double>(k) * h);
    const double next = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    if (std::abs(next - prev) <= rel_tol * std::abs(next)) return {next, panels, true};
    prev = next;
  }
  return {prev, panels, false};
}

double simpson_2d(const std::function<double(double, double)>& f, double ax, double bx,
                  double ay, double by, std::size_t panels) {
  return simpson(
      [&](double x) { return simpson([&](double y) { return f(x, y); }, ay, by, panels); }, ax,
      bx, panels);
}

double central_difference(const RealFn& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

namespace {

double logistic(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

void MoLRef::validate() const {
  const std::size_t k = weights.size();
  if (k == 0 || means.size() != k || scales.size() != k) {
    throw InvalidParameter("mixture of logistics needs matching, non-empty parameter lists");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(weights[i] > 0.0) || !(scales[i] > 0.0) || !std::isfinite(means[i])) {
      throw InvalidParameter("mixture weights and scales must be positive");
    }
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidParameter("mixture weights must sum to 1");
}

double mol_cdf(const MoLRef& ref, double x) {
  double c = 0.0;
  for (std::size_t i = 0; i < ref.components(); ++i) {
    c += ref.weights[i] * logistic((x - ref.means[i]) / ref.scales[i]);
  }
  return c;
}

double mol_pdf(const MoLRef& ref, double x) {
  double p = 0.0;
  for (std::size_t i = 0; i < ref.components(); ++i) {
    const double t = (x - ref.means[i]) / ref.scales[i];
    const double s = logistic(t);
    p += ref.weights[i] * s * logistic(-t) / ref.scales[i];
  }
  return p;
}

std::pair<PnnSpec, PnnParams> embed_mol_as_pnn(const MoLRef& ref, const Bounds& bounds) {
  ref.validate();
  const std::size_t k = ref.components();
  PnnSpec spec({1, k, 1}, bounds);
  std::vector<double> raw(spec.param_count());
  // Hidden weights A[0, j]: exp(-A) = 1 / s_j.
  for (std::size_t j = 0; j < k; ++j) raw[spec.weight_offset(0) + j] = std::log(ref.scales[j]);
  // Hidden biases: h_b = -(1 / s_j) * b_j, so b_j is the location mu_j.
  for (std::size_t j = 0; j < k; ++j) raw[spec.bias_offset(0) + j] = ref.means[j];
  // Final layer: softmax(log w) = w.
  for (std::size_t j = 0; j < k; ++j) raw[spec.weight_offset(1) + j] = std::log(ref.weights[j]);
  PnnParams params(spec, std::move(raw));
  return {std::move(spec), std::move(params)};
}

namespace {

struct Dual {
  long double v = 0.0L;
  long double d = 0.0L;
};

// F and dF/dx at x by forward-mode propagation.
Dual reference_forward(std::span<const std::size_t> widths, std::span<const double> raw,
                       long double x) {
  std::vector<Dual> a{{x, 1.0L}};
  std::size_t off = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_in = widths[l];
    const std::size_t n_out = widths[l + 1];
    const bool last = l + 1 == layers;
    std::vector<long double> w(n_in * n_out);
    if (last) {
      long double top = raw[off];
      for (std::size_t k = 0; k < n_in; ++k) top = std::max<long double>(top, raw[off + k]);
      long double z = 0.0L;
      for (std::size_t k = 0; k < n_in; ++k) z += std::exp(static_cast<long double>(raw[off + k]) - top);
      Dual f;
      for (std::size_t k = 0; k < n_in; ++k) {
        const long double s = std::exp(static_cast<long double>(raw[off + k]) - top) / z;
        f.v += s * a[k].v;
        f.d += s * a[k].d;
      }
      return f;
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(-static_cast<long double>(raw[off + k]));
    const std::size_t boff = off + n_in * n_out;
    std::vector<Dual> next(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      long double mean_w = 0.0L;
      Dual pre;
      for (std::size_t i = 0; i < n_in; ++i) {
        const long double wij = w[i * n_out + j];
        mean_w += wij;
        pre.v += wij * a[i].v;
        pre.d += wij * a[i].d;
      }
      mean_w /= static_cast<long double>(n_in);
      pre.v -= mean_w * static_cast<long double>(raw[boff + j]);
      const long double s = 1.0L / (1.0L + std::exp(-pre.v));
      const long double one_minus = 1.0L / (1.0L + std::exp(pre.v));  // no cancellation
      next[j] = {s, s * one_minus * pre.d};
    }
    a = std::move(next);
    off = boff + n_out;
  }
  return a.front();
}

}  // namespace

long double reference_loss(std::span<const std::size_t> widths, const Bounds& bounds,
                           std::span<const double> raw, long double x) {
  const Dual at_x = reference_forward(widths, raw, x);
  const long double z =
      reference_forward(widths, raw, bounds.hi).v - reference_forward(widths, raw, bounds.lo).v;
  return -std::log(at_x.d) + std::log(z);
}

double sup_gap(const RealFn& f, const RealFn& g, double a, double b, std::size_t points) {
  if (points < 2) throw UsageError("sup_gap needs at least two points");
  double gap = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    const double x = k + 1 == points
                         ? b
                         : a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
    gap = std::max(gap, std::abs(f(x) - g(x)));
  }
  return gap;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_statistic(std::span<const double> samples) {
  if (samples.empty()) throw UsageError("KS statistic of an empty sample");
  std::vector<double> u(samples.begin(), samples.end());
  for (double v : u) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("KS samples must lie in [0, 1]");
  }
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double above = static_cast<double>(i + 1) / n - u[i];
    const double below = u[i] - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  const double root = std::sqrt(n);
  const double lambda = (root + 0.12 + 0.11 / root) * d;
  return {d, kolmogorov_survival(lambda)};
}

}  // namespace nits::oracle
