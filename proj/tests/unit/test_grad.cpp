#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "nits/error.hpp"
#include "nits/grad.hpp"
#include "nits/model.hpp"
#include "nits/oracle.hpp"
#include "nits/pnn.hpp"
#include "nits/rng.hpp"

using namespace nits;

namespace {

const Bounds kBox{-3.0, 3.0};

std::vector<double> to_vec(const PnnParams& p) { return {p.values().begin(), p.values().end()}; }

// Components below `floor` are compared absolutely: the extended-precision
// loss still loses about 1e-17 to cancellation when the mass is small.
double max_rel_error(const PnnSpec& spec, std::vector<double> raw, double x, double floor = 1e-8) {
  const auto g = grad::loss_and_grad(spec, raw, x);
  double worst = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double keep = raw[k];
    const double h = 1e-5 * std::max(1.0, std::abs(keep));
    raw[k] = keep + h;
    const long double up = oracle::reference_loss(spec.widths(), spec.bounds(), raw, x);
    raw[k] = keep - h;
    const long double down = oracle::reference_loss(spec.widths(), spec.bounds(), raw, x);
    raw[k] = keep;
    const auto fd = static_cast<double>((up - down) / (2.0L * h));
    worst = std::max(worst, std::abs(g.grad[k] - fd) /
                                std::max({std::abs(g.grad[k]), std::abs(fd), floor}));
  }
  return worst;
}

}  // namespace

TEST_CASE("reference loss agrees with the evaluator") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto raw = to_vec(pnn::random_params(spec, s));
    for (double x : {-2.9, -0.5, 1.3}) {
      const double ref = static_cast<double>(oracle::reference_loss(spec.widths(), kBox, raw, x));
      CHECK(-pnn::log_pdf(spec, raw, x) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss is -log_pdf") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const auto raw = to_vec(pnn::random_params(spec, 3));
  CHECK(grad::loss_and_grad(spec, raw, 0.7).loss ==
        doctest::Approx(-pnn::log_pdf(spec, raw, 0.7)).epsilon(1e-14));
}

TEST_CASE("gradient matches finite differences on [1,8,8,1]") {
  const PnnSpec spec({1, 8, 8, 1}, kBox);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_stream(s, 5);
    const double x = kBox.lo + kBox.width() * uniform_open(rng);
    CHECK(max_rel_error(spec, to_vec(pnn::random_params(spec, s)), x) < 1e-4);
  }
}

TEST_CASE("gradient matches finite differences on deeper and wider nets") {
  for (const auto& widths : {std::vector<std::size_t>{1, 3, 1}, {1, 5, 4, 3, 1}, {1, 16, 16, 1}}) {
    const PnnSpec spec(widths, {-1.0, 2.0});
    for (std::uint64_t s = 0; s < 4; ++s) {
      CHECK(max_rel_error(spec, to_vec(pnn::random_params(spec, 50 + s)), 0.25 + 0.3 * s, 1e-7) < 1e-4);
    }
  }
}

TEST_CASE("gradient is finite at the bounds") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const auto raw = to_vec(pnn::random_params(spec, 8));
  for (double x : {kBox.lo, kBox.hi}) {
    const auto g = grad::loss_and_grad(spec, raw, x);
    for (double v : g.grad) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(grad::GradTape(spec, raw, 3.5), DomainError);
}

TEST_CASE("equal final raw weights give a zero-mean final-layer gradient") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  auto raw = to_vec(pnn::random_params(spec, 4));
  for (std::size_t k = spec.weight_offset(2); k < spec.param_count(); ++k) raw[k] = 0.3;
  const auto g = grad::loss_and_grad(spec, raw, -0.4);
  double sum = 0.0;
  for (std::size_t k = spec.weight_offset(2); k < spec.param_count(); ++k) sum += g.grad[k];
  CHECK(std::abs(sum) < 1e-12);
}

TEST_CASE("softmax shift direction has zero derivative in general") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const auto raw = to_vec(pnn::random_params(spec, 12));
  const auto g = grad::loss_and_grad(spec, raw, 1.0);
  double sum = 0.0, scale = 0.0;
  for (std::size_t k = spec.weight_offset(2); k < spec.param_count(); ++k) {
    sum += g.grad[k];
    scale += std::abs(g.grad[k]);
  }
  CHECK(std::abs(sum) <= 1e-12 * std::max(1.0, scale));
}

TEST_CASE("duplicated datum doubles the gradient and backward is idempotent") {
  const PnnSpec spec = PnnSpec::standard(kBox);
  const auto raw = to_vec(pnn::random_params(spec, 6));
  const grad::GradTape tape(spec, raw, 0.2);
  const auto once = tape.backward();
  const auto again = tape.backward();
  CHECK(once == again);
  std::vector<double> acc(raw.size(), 0.0);
  tape.backward_into(acc);
  tape.backward_into(acc);
  // Three per-point contributions are added onto a non-zero buffer, so
  // agreement is to rounding rather than bitwise.
  for (std::size_t k = 0; k < acc.size(); ++k) {
    CHECK(std::abs(acc[k] - 2.0 * once[k]) <= 1e-14 * std::max(1.0, std::abs(once[k])));
  }
}

TEST_CASE("chain_to_phi: linearity, mismatched tape, causal masking") {
  ModelConfig cfg;
  cfg.hidden_dim = 12;
  cfg.residual_blocks = 1;
  NitsModel model(cfg, {kBox, kBox, kBox}, 4);
  const WeightModel& wm = model.weight_model();
  const std::vector<double> x{0.1, -0.5, 1.0};
  WeightModel::Tape tape;
  const auto theta = wm.forward(x, tape);

  const auto zero = grad::chain_to_phi(wm, tape, std::vector<double>(theta.size(), 0.0));
  for (double v : zero) CHECK(v == 0.0);

  WeightModel other(wm.spec());
  CHECK_THROWS_AS(grad::chain_to_phi(other, tape, std::vector<double>(theta.size(), 0.0)),
                  UsageError);

  // Coordinate 1's loss reaches only its own output-bias slice.
  const std::size_t p = model.params_per_dim();
  std::vector<double> g_theta(theta.size(), 0.0);
  grad::GradTape(model.pnn_spec(0), model.theta_slice(theta, 0), x[0])
      .backward_into(std::span<double>(g_theta).subspan(0, p));
  const auto g_phi = grad::chain_to_phi(wm, tape, g_theta);
  for (std::size_t k = 0; k < g_phi.size(); ++k) {
    const bool own_bias = k >= wm.out_bias_offset() && k < wm.out_bias_offset() + p;
    if (!own_bias) CHECK(g_phi[k] == 0.0);
  }
}

TEST_CASE("end-to-end gradient through the weight model") {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.residual_blocks = 2;
  NitsModel model(cfg, {kBox, {-1.0, 4.0}}, 9);
  WeightModel& wm = model.weight_model();
  std::vector<double> phi(wm.params().begin(), wm.params().end());
  Rng rng = make_stream(9, 1);
  for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += 0.05 * standard_normal(rng) * wm.param_mask()[k];
  wm.set_params(phi);
  const std::vector<double> x{-0.7, 2.5};

  WeightModel::Tape tape;
  const auto theta = wm.forward(x, tape);
  std::vector<double> g_theta(theta.size(), 0.0);
  const std::size_t p = model.params_per_dim();
  for (std::size_t i = 0; i < 2; ++i) {
    grad::GradTape(model.pnn_spec(i), model.theta_slice(theta, i), x[i])
        .backward_into(std::span<double>(g_theta).subspan(i * p, p));
  }
  const auto g_phi = grad::chain_to_phi(wm, tape, g_theta);

  Rng pick = make_stream(9, 2);
  int checked = 0;
  while (checked < 200) {
    const std::size_t k = pick() % phi.size();
    if (wm.param_mask()[k] == 0.0) continue;
    const double keep = phi[k];
    const double h = 1e-5 * std::max(1.0, std::abs(keep));
    phi[k] = keep + h;
    wm.set_params(phi);
    const double up = -model.log_likelihood(x);
    phi[k] = keep - h;
    wm.set_params(phi);
    const double down = -model.log_likelihood(x);
    phi[k] = keep;
    wm.set_params(phi);
    const double fd = (up - down) / (2.0 * h);
    CHECK(std::abs(fd - g_phi[k]) / std::max({std::abs(fd), std::abs(g_phi[k]), 1e-6}) < 1e-3);
    ++checked;
  }
}
