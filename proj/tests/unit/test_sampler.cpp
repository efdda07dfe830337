#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nits/error.hpp"
#include "nits/model.hpp"
#include "nits/oracle.hpp"
#include "nits/rng.hpp"
#include "nits/sampler.hpp"

using namespace nits;
using namespace nits::sampler;

namespace {

const Bounds kBox{-3.0, 3.0};

double logistic_cdf(double x, double mu, double s) { return 1.0 / (1.0 + std::exp(-(x - mu) / s)); }

NitsModel perturbed(ModelConfig cfg, std::vector<Bounds> bounds, std::uint64_t seed) {
  NitsModel m(cfg, std::move(bounds), seed);
  WeightModel& wm = m.weight_model();
  std::vector<double> phi(wm.params().begin(), wm.params().end());
  Rng rng = make_stream(seed, 7);
  for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += 0.2 * standard_normal(rng) * wm.param_mask()[k];
  wm.set_params(phi);
  return m;
}

ModelConfig small(Masking masking = Masking::autoregressive) {
  ModelConfig c;
  c.hidden_dim = 10;
  c.residual_blocks = 1;
  c.masking = masking;
  return c;
}

}  // namespace

TEST_CASE("inversion config") {
  const auto cfg = InversionConfig::for_bounds(kBox);
  CHECK(cfg.tolerance == doctest::Approx(6e-10));
  CHECK(cfg.max_iters == 64);
  CHECK(required_iterations(kBox, cfg.tolerance) == 34);
  CHECK_THROWS_AS((InversionConfig{0.0, 64}).validate(kBox), InvalidParameter);
  CHECK_THROWS_AS((InversionConfig{1e-10, 10}).validate(kBox), InvalidParameter);
}

TEST_CASE("endpoints map to the bounds") {
  const auto cfg = InversionConfig::for_bounds(kBox);
  auto cdf = [](double x) { return logistic_cdf(x, 0.0, 1.0); };
  CHECK(std::abs(monotonic_inverse(cdf, 0.0, kBox, cfg).x - kBox.lo) <= cfg.tolerance);
  CHECK(std::abs(monotonic_inverse(cdf, 1.0, kBox, cfg).x - kBox.hi) <= cfg.tolerance);
  CHECK_THROWS_AS(monotonic_inverse(cdf, 1.5, kBox, cfg), DomainError);
}

TEST_CASE("analytic logistic quantile") {
  const Bounds wide{-60.0, 60.0};
  const auto cfg = InversionConfig::for_bounds(wide);
  const double mu = 0.4, s = 1.3;
  Rng rng = make_stream(1, 1);
  for (int t = 0; t < 200; ++t) {
    const double z = uniform_open(rng);
    const auto inv = monotonic_inverse([&](double x) { return logistic_cdf(x, mu, s); }, z, wide, cfg);
    CHECK(std::abs(inv.x - (mu + s * std::log(z / (1.0 - z)))) <= cfg.tolerance);
    CHECK(inv.bracket_hi - inv.bracket_lo <= cfg.tolerance);
    CHECK(inv.iterations <= required_iterations(wide, cfg.tolerance) + 2);
  }
}

TEST_CASE("round trip through a PNN cdf") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const pnn::Network net(spec, pnn::random_params(spec, 4, 0.6));
  const auto cfg = InversionConfig::for_bounds(kBox);
  Rng rng = make_stream(4, 4);
  for (int t = 0; t < 1000; ++t) {
    const double x = kBox.lo + kBox.width() * uniform01(rng);
    const auto inv = monotonic_inverse([&](double u) { return net.cdf(u); }, net.cdf(x), kBox, cfg);
    // In the far tail the cdf is flat to a few ulps, which blurs x by ulp / pdf.
    const double blur = 16 * 2.2e-16 / std::exp(net.log_pdf(x));
    CHECK(std::abs(inv.x - x) <= cfg.tolerance + blur);
  }
}

TEST_CASE("too few iterations raise a convergence error with the bracket") {
  const InversionConfig cfg{1e-3, 13};
  const Bounds b{0.0, 10.0};
  CHECK_THROWS_AS(cfg.validate(b), InvalidParameter);
  // Constant-width bracket cannot close when max_iters is honoured by a
  // caller that skips validation: exercise the error type directly.
  const ConvergenceError e("stuck", 1.0, 2.0);
  CHECK(e.bracket_lo() == 1.0);
  CHECK(e.bracket_hi() == 2.0);
}

TEST_CASE("sample_1d: support, determinism and KS uniformity") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const PnnParams p = pnn::random_params(spec, 9);
  const pnn::Network net(spec, p);
  const auto cfg = InversionConfig::for_bounds(kBox);
  Rng a = make_stream(3, 0), b = make_stream(3, 0);
  std::vector<double> pushed;
  for (int t = 0; t < 10000; ++t) {
    const double x = sample_1d(spec, p, a, cfg);
    CHECK(x == sample_1d(spec, p, b, cfg));
    CHECK(kBox.contains(x));
    pushed.push_back(net.cdf(x));
  }
  CHECK(oracle::ks_statistic(pushed).p_value > 0.01);
}

TEST_CASE("ancestral sampling in one dimension reduces to sample_1d") {
  const NitsModel m = perturbed(small(), {kBox}, 5);
  const Matrix xs = sample_ancestral(m, 50, 8, {});
  const auto theta = m.emit_theta(std::vector<double>{0.0});
  const auto cfg = InversionConfig::for_bounds(kBox);
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    Rng rng = make_stream(8, r);
    CHECK(xs(r, 0) == sample_1d(m.pnn_spec(0), m.theta_slice(theta, 0), rng, cfg));
  }
}

TEST_CASE("independent model: per-coordinate uniformity") {
  const NitsModel m = perturbed(small(Masking::independent), {kBox, {0.0, 5.0}}, 6);
  const Matrix xs = sample_ancestral(m, 4000, 2, {});
  const auto theta = m.emit_theta(std::vector<double>{0.0, 0.0});
  for (std::size_t i = 0; i < 2; ++i) {
    const pnn::Network net(m.pnn_spec(i), m.theta_slice(theta, i));
    std::vector<double> u;
    for (std::size_t r = 0; r < xs.rows(); ++r) u.push_back(net.cdf(xs(r, i)));
    CHECK(oracle::ks_statistic(u).p_value > 0.01);
  }
}

TEST_CASE("autoregressive: conditional uniformity and causality") {
  const NitsModel m = perturbed(small(), {kBox, kBox, kBox}, 7);
  const Matrix xs = sample_ancestral(m, 3000, 4, {});
  std::vector<double> u;
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    const auto theta = m.emit_theta(xs.row(r));
    u.push_back(pnn::Network(m.pnn_spec(2), m.theta_slice(theta, 2)).cdf(xs(r, 2)));
  }
  CHECK(oracle::ks_statistic(u).p_value > 0.01);

  // Coordinate i ignores later entries of the working point.
  const auto cfg = InversionConfig::for_bounds(kBox);
  std::vector<double> z{0.5, -1.0, 0.0};
  const double a = sample_coordinate(m, z, 1, 0.3, cfg).x;
  z[1] = 2.0;
  z[2] = -2.5;
  CHECK(sample_coordinate(m, z, 1, 0.3, cfg).x == a);
}

TEST_CASE("sampling is reproducible and independent of the thread count") {
  const NitsModel m = perturbed(small(), {kBox, kBox}, 8);
  SamplingOptions one, four;
  four.threads = 4;
  const Matrix a = sample_ancestral(m, 300, 11, one);
  CHECK(a == sample_ancestral(m, 300, 11, one));
  CHECK(a == sample_ancestral(m, 300, 11, four));
  CHECK(!(a == sample_ancestral(m, 300, 12, one)));
}

TEST_CASE("samples come back in data units") {
  const AffineMap map{{10.0}, {2.0}};
  const NitsModel m(small(), {kBox}, 3, map);
  const Matrix xs = sample_ancestral(m, 200, 1, {});
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    CHECK(xs(r, 0) >= 4.0);
    CHECK(xs(r, 0) <= 16.0);
  }
}
