#include "nits/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>

#include "nits/checkpoint.hpp"
#include "nits/data.hpp"
#include "nits/error.hpp"
#include "nits/grad.hpp"
#include "nits/model.hpp"
#include "nits/oracle.hpp"
#include "nits/pnn.hpp"
#include "nits/rng.hpp"
#include "nits/sampler.hpp"
#include "nits/train.hpp"

namespace nits::verify {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

const Bounds kUnitBox{-3.0, 3.0};
constexpr std::size_t kSeeds = 100;
constexpr double kGradFloor = 1e-8;

// 1. Partition by the integration trick against adaptive quadrature.
CheckResult check_partition() {
  const auto t0 = Clock::now();
  const PnnSpec spec = PnnSpec::standard(kUnitBox);
  double worst = 0.0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const PnnParams p = pnn::random_params(spec, s);
    const pnn::Network net(spec, p);
    const auto q = oracle::adaptive_simpson([&](double x) { return net.forward(x).dvalue; },
                                            kUnitBox.lo, kUnitBox.hi);
    worst = std::max(worst, std::abs(net.partition() - q.value) / q.value);
  }
  const double secs = since(t0);
  CheckResult r{1, "integration-trick exactness", worst < 1e-6 && secs < 10.0, worst, 1e-6, secs,
                "max |Z_trick - Z_quad| / Z_quad over 100 seeds; runtime < 10 s"};
  return r;
}

// 2. dF/dx > 0 at 1000 random points per seed.
CheckResult check_monotone() {
  const auto t0 = Clock::now();
  const PnnSpec spec = PnnSpec::standard(kUnitBox);
  std::size_t violations = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const pnn::Network net(spec, pnn::random_params(spec, s));
    Rng rng = make_stream(s, 2);
    std::vector<double> xs(1000);
    for (double& x : xs) x = kUnitBox.lo + kUnitBox.width() * uniform01(rng);
    std::sort(xs.begin(), xs.end());
    double prev = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
      const auto f = net.forward(x);
      if (!(f.dvalue > 0.0)) ++violations;
      if (f.value < prev) ++violations;
      prev = f.value;
    }
  }
  return {2, "monotonicity", violations == 0, static_cast<double>(violations), 0.0, since(t0),
          "count of dF/dx <= 0 or F decreasing over 100 seeds x 1000 points"};
}

// 3. pdf integrates to one; exact endpoints.
CheckResult check_normalization() {
  const auto t0 = Clock::now();
  const PnnSpec spec = PnnSpec::standard(kUnitBox);
  double worst_mass = 0.0;
  double worst_end = 0.0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const pnn::Network net(spec, pnn::random_params(spec, s));
    const double mass = oracle::simpson([&](double x) { return net.pdf(x); }, kUnitBox.lo,
                                        kUnitBox.hi, 10000);
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    worst_end = std::max({worst_end, std::abs(net.cdf(kUnitBox.lo)),
                          std::abs(net.cdf(kUnitBox.hi) - 1.0)});
  }
  const bool ok = worst_mass <= 1e-4 && worst_end <= 1e-12;
  return {3, "normalization", ok, worst_mass, 1e-4, since(t0),
          "max |int pdf - 1| (10k-panel Simpson); endpoint error " + fmt("%.3g", worst_end) +
              " vs 1e-12"};
}

// Relative error; components below `floor` are compared absolutely.
double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// 4. Analytic gradients against central differences.
CheckResult check_gradients() {
  const auto t0 = Clock::now();
  const PnnSpec spec = PnnSpec::standard(kUnitBox);
  double worst_pnn = 0.0;
  for (std::size_t s = 0; s < 20; ++s) {
    const PnnParams start = pnn::random_params(spec, 1000 + s);
    std::vector<double> raw(start.values().begin(), start.values().end());
    Rng rng = make_stream(s, 4);
    const double x = kUnitBox.lo + kUnitBox.width() * uniform_open(rng);
    const auto g = grad::loss_and_grad(spec, raw, x);
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const double keep = raw[k];
      const double h = 1e-5 * std::max(1.0, std::abs(keep));
      raw[k] = keep + h;
      const long double up = oracle::reference_loss(spec.widths(), kUnitBox, raw, x);
      raw[k] = keep - h;
      const long double down = oracle::reference_loss(spec.widths(), kUnitBox, raw, x);
      raw[k] = keep;
      const auto fd = static_cast<double>((up - down) / (2.0L * h));
      worst_pnn = std::max(worst_pnn, rel_err(g.grad[k], fd, kGradFloor));
    }
  }

  // End to end through the weight model of a 2D autoregressive model.
  ModelConfig cfg;
  cfg.hidden_dim = 32;
  cfg.residual_blocks = 2;
  NitsModel model(cfg, {kUnitBox, kUnitBox}, 11);
  WeightModel& wm = model.weight_model();
  {
    std::vector<double> phi(wm.params().begin(), wm.params().end());
    Rng rng = make_stream(11, 40);
    for (std::size_t k = 0; k < phi.size(); ++k) {
      phi[k] += 0.05 * standard_normal(rng) * wm.param_mask()[k];
    }
    wm.set_params(phi);
  }
  const std::vector<double> point{0.4, -1.1};
  auto loss_of = [&]() { return -model.log_likelihood(point); };
  std::vector<double> g_phi(wm.param_count(), 0.0);
  {
    WeightModel::Tape tape;
    const auto theta = wm.forward(point, tape);
    std::vector<double> g_theta(theta.size(), 0.0);
    const std::size_t p = model.params_per_dim();
    for (std::size_t i = 0; i < model.dims(); ++i) {
      grad::GradTape gt(model.pnn_spec(i), model.theta_slice(theta, i), point[i]);
      gt.backward_into(std::span<double>(g_theta).subspan(i * p, p));
    }
    g_phi = grad::chain_to_phi(wm, tape, g_theta);
  }
  std::vector<std::size_t> free_idx;
  for (std::size_t k = 0; k < wm.param_count(); ++k) {
    if (wm.param_mask()[k] != 0.0) free_idx.push_back(k);
  }
  Rng pick = make_stream(11, 41);
  double worst_e2e = 0.0;
  std::vector<double> phi(wm.params().begin(), wm.params().end());
  for (std::size_t t = 0; t < 200; ++t) {
    const std::size_t k = free_idx[pick() % free_idx.size()];
    const double keep = phi[k];
    const double h = 1e-5 * std::max(1.0, std::abs(keep));
    phi[k] = keep + h;
    wm.set_params(phi);
    const double up = loss_of();
    phi[k] = keep - h;
    wm.set_params(phi);
    const double down = loss_of();
    phi[k] = keep;
    wm.set_params(phi);
    worst_e2e = std::max(worst_e2e, rel_err(g_phi[k], (up - down) / (2.0 * h), 1e-6));
  }
  const double secs = since(t0);
  const bool ok = worst_pnn < 1e-4 && worst_e2e < 1e-3 && secs < 60.0;
  return {4, "gradient correctness", ok, worst_pnn, 1e-4, secs,
          "max relative error against extended-precision differences over all PNN params, 20 seeds; end-to-end " +
              fmt("%.3g", worst_e2e) + " vs 1e-3 on 200 phi coordinates"};
}

// 5. Inverse-transform sampling round trip.
CheckResult check_sampling() {
  const auto t0 = Clock::now();
  const PnnSpec spec = PnnSpec::standard(kUnitBox);
  const PnnParams p = pnn::random_params(spec, 5);
  const pnn::Network net(spec, p);
  const auto cfg = sampler::InversionConfig::for_bounds(kUnitBox);
  const std::size_t limit = sampler::required_iterations(kUnitBox, cfg.tolerance) + 2;
  Rng rng = make_stream(5, 5);
  std::vector<double> pushed(10000);
  std::size_t max_iters = 0;
  for (double& u : pushed) {
    const auto inv =
        sampler::monotonic_inverse([&](double x) { return net.cdf(x); }, uniform01(rng), kUnitBox, cfg);
    max_iters = std::max(max_iters, inv.iterations);
    u = net.cdf(inv.x);
  }
  const auto ks = oracle::ks_statistic(pushed);
  const bool ok = ks.p_value > 0.01 && max_iters <= limit;
  return {5, "inverse-transform sampling", ok, ks.p_value, 0.01, since(t0),
          "KS p-value of cdf(samples), 10k draws (must exceed); max bisection iterations " +
              std::to_string(max_iters) + " vs limit " + std::to_string(limit)};
}

oracle::MoLRef random_mol(std::uint64_t seed) {
  Rng rng = make_stream(seed, 6);
  const std::size_t k = 2 + rng() % 4;
  oracle::MoLRef ref;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    ref.weights.push_back(0.2 + uniform01(rng));
    ref.means.push_back(-1.0 + 2.0 * uniform01(rng));
    ref.scales.push_back(0.5 + 1.5 * uniform01(rng));
    total += ref.weights.back();
  }
  for (double& w : ref.weights) w /= total;
  return ref;
}

// 6. Two-layer PNNs approach a mixture of logistics as the support widens.
CheckResult check_mixture_limit(bool full) {
  const auto t0 = Clock::now();
  const std::size_t refs = full ? 10 : 3;
  const std::array<double, 4> widths{5.0, 10.0, 20.0, 40.0};
  double worst_final = 0.0;
  std::size_t non_decreasing = 0;
  for (std::size_t s = 0; s < refs; ++s) {
    const auto ref = random_mol(s);
    double prev = std::numeric_limits<double>::infinity();
    for (double b : widths) {
      const Bounds bounds{-b, b};
      const auto [spec, params] = oracle::embed_mol_as_pnn(ref, bounds);
      const pnn::Network net(spec, params);
      const double gap = oracle::sup_gap([&](double x) { return net.cdf(x); },
                                         [&](double x) { return oracle::mol_cdf(ref, x); }, -b, b,
                                         10000);
      if (!(gap < prev)) ++non_decreasing;
      prev = gap;
      if (b == widths.back()) worst_final = std::max(worst_final, gap);
    }
  }
  const bool ok = non_decreasing == 0 && worst_final < 1e-3;
  return {6, "mixture-of-logistics limit", ok, worst_final, 1e-3, since(t0),
          "max sup gap at B = 40 over " + std::to_string(refs) + " references; " +
              std::to_string(non_decreasing) + " non-decreasing steps over B in {5,10,20,40}"};
}

struct RecoveryCase {
  std::string name;
  std::size_t n;
  double tolerance;
  ModelConfig model;
  train::TrainConfig train;
};

std::vector<RecoveryCase> recovery_cases(std::size_t threads) {
  auto one_d = [&](std::string name) {
    RecoveryCase c{std::move(name), 5000, 0.05, {}, {}};
    c.train.batch_size = 100;
    c.train.learning_rate = 1e-2;
    c.train.patience = 10;
    c.train.max_epochs = 300;
    c.train.seed = 3;
    c.train.threads = threads;
    return c;
  };
  auto two_d = [&](std::string name) {
    RecoveryCase c{std::move(name), 10000, 0.10, {}, {}};
    c.model.hidden_dim = 64;
    c.model.residual_blocks = 2;
    c.train.batch_size = 128;
    c.train.learning_rate = 2e-3;
    c.train.patience = 10;
    c.train.max_epochs = 200;
    c.train.seed = 3;
    c.train.threads = threads;
    return c;
  };
  return {one_d("logistic"), one_d("gmm2"), two_d("two-moons-2d"), two_d("ring-2d")};
}

struct Recovered {
  std::string name;
  double gap = 0.0;
  double seconds = 0.0;
  double tolerance = 0.0;
  std::optional<NitsModel> model;
};

Recovered recover(const RecoveryCase& c) {
  const auto t0 = Clock::now();
  const auto synth = data::make_synthetic(c.name, c.n, 17);
  const auto std_data = data::standardize(synth.data);
  NitsModel init(c.model, std_data.data.bounds, c.train.seed, std_data.transform);
  auto fitted = train::fit(std::move(init), synth.data, c.train);
  const Matrix test = synth.data.select(synth.data.split.test);
  const auto nll = train::evaluate_nll(fitted.model, test, c.train.threads);
  double truth = 0.0;
  for (std::size_t r = 0; r < test.rows(); ++r) truth -= synth.log_density(test.row(r));
  truth /= static_cast<double>(test.rows());
  Recovered out{c.name, nll.mean_nats - truth, since(t0), c.tolerance, std::move(fitted.model)};
  if (nll.excluded > 0) out.gap = std::numeric_limits<double>::infinity();
  return out;
}

// 7. Density recovery against the generating log-density.
CheckResult check_recovery(std::size_t threads, std::vector<Recovered>& runs) {
  const auto t0 = Clock::now();
  bool ok = true;
  double worst_ratio = 0.0;
  std::string detail = "test NLL minus true NLL:";
  for (const auto& c : recovery_cases(threads)) {
    runs.push_back(recover(c));
    const auto& r = runs.back();
    const bool pass = std::abs(r.gap) < r.tolerance && r.seconds < 600.0;
    ok = ok && pass;
    worst_ratio = std::max(worst_ratio, std::abs(r.gap) / r.tolerance);
    detail += " " + r.name + " " + fmt("%.4f", r.gap) + "/" + fmt("%.2f", r.tolerance) + " (" +
              fmt("%.0f s", r.seconds) + ")";
  }
  return {7, "density recovery", ok, worst_ratio, 1.0, since(t0),
          detail + "; measured is the worst |gap|/tolerance ratio, each run < 600 s"};
}

// 8. Trained 2D models integrate to one over their box.
CheckResult check_joint_normalization(const std::vector<Recovered>& runs) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string detail = "nested Simpson, 500 x 500 panels:";
  std::size_t used = 0;
  for (const auto& r : runs) {
    if (!r.model || r.model->dims() != 2) continue;
    const NitsModel& m = *r.model;
    const auto& tr = m.transform();
    const double ax = tr.to_data(0, m.bounds()[0].lo), bx = tr.to_data(0, m.bounds()[0].hi);
    const double ay = tr.to_data(1, m.bounds()[1].lo), by = tr.to_data(1, m.bounds()[1].hi);
    const double mass = oracle::simpson_2d(
        [&](double x, double y) {
          const double pt[2] = {std::clamp(x, ax, bx), std::clamp(y, ay, by)};
          return std::exp(m.log_likelihood(pt));
        },
        ax, bx, ay, by, 500);
    worst = std::max(worst, std::abs(mass - 1.0));
    detail += " " + r.name + " " + fmt("%.6f", mass);
    ++used;
  }
  const bool ok = used > 0 && worst <= 1e-3;
  return {8, "joint normalization", ok, worst, 1e-3, since(t0), detail};
}

NitsModel random_2d_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.residual_blocks = 1;
  NitsModel model(cfg, {kUnitBox, kUnitBox}, seed);
  WeightModel& wm = model.weight_model();
  std::vector<double> phi(wm.params().begin(), wm.params().end());
  Rng rng = make_stream(seed, 9);
  for (std::size_t k = 0; k < phi.size(); ++k) {
    phi[k] += 0.1 * standard_normal(rng) * wm.param_mask()[k];
  }
  wm.set_params(phi);
  return model;
}

// 9. Discretized likelihood over a 256-level grid.
CheckResult check_discretized() {
  const auto t0 = Clock::now();
  const NitsModel model = random_2d_model(9);
  const std::size_t levels = 256;
  const double step = kUnitBox.width() / static_cast<double>(levels);
  const QuantizationGrid grid{kUnitBox.lo + 0.5 * step, step, levels};
  double worst_sum = 0.0;
  double worst_bin = 0.0;
  for (double ancestor : {-2.2, 0.3, 1.7}) {
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> x{ancestor, ancestor};
      double total = 0.0;
      for (std::size_t a = 0; a < levels; ++a) {
        x[i] = grid.first + static_cast<double>(a) * step;
        const double pmf = model.discretized_pmf(x, grid, i);
        total += pmf;
        const double lo = a == 0 ? kUnitBox.lo : x[i] - 0.5 * step;
        const double hi = a + 1 == levels ? kUnitBox.hi : x[i] + 0.5 * step;
        std::vector<double> probe = x;
        const auto q = oracle::adaptive_simpson(
            [&](double t) {
              probe[i] = t;
              return std::exp(model.conditional_log_pdfs(probe)[i]);
            },
            lo, hi, 1e-12);
        worst_bin = std::max(worst_bin, std::abs(pmf - q.value));
      }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  const bool ok = worst_sum <= 1e-10 && worst_bin <= 1e-8;
  return {9, "discretized likelihood", ok, worst_sum, 1e-10, since(t0),
          "max |sum pmf - 1|; max |pmf - bin quadrature| " + fmt("%.3g", worst_bin) +
              " vs 1e-8"};
}

// 10. Same seed and configuration give identical bytes.
CheckResult check_determinism(std::size_t threads) {
  const auto t0 = Clock::now();
  auto run = [&](std::size_t worker_threads) {
    const auto synth = data::make_synthetic("two-moons-2d", 600, 21);
    const auto std_data = data::standardize(synth.data);
    ModelConfig cfg;
    cfg.hidden_dim = 16;
    cfg.residual_blocks = 1;
    cfg.dropout_rate = 0.1;
    train::TrainConfig tc;
    tc.batch_size = 64;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 3;
    tc.seed = 21;
    tc.threads = worker_threads;
    auto fitted = train::fit(NitsModel(cfg, std_data.data.bounds, 21, std_data.transform),
                             synth.data, tc);
    sampler::SamplingOptions so;
    so.threads = worker_threads;
    std::ostringstream samples;
    data::write_csv(samples, sampler::sample_ancestral(fitted.model, 200, 22, so));
    return std::array<std::string, 3>{checkpoint::serialize(fitted.model), samples.str(),
                                      fitted.report.to_jsonl(false)};
  };
  const auto first = run(1);
  const auto second = run(1);
  const auto threaded = run(std::max<std::size_t>(threads, 2));
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    mismatches += first[k] != second[k];
    mismatches += first[k] != threaded[k];
  }
  return {10, "determinism", mismatches == 0, static_cast<double>(mismatches), 0.0, since(t0),
          "mismatching artifacts (checkpoint, samples, report) across repeated and threaded "
          "runs"};
}

}  // namespace

std::vector<CheckResult> run_checks(const VerifyOptions& options, const Reporter& report) {
  auto wanted = [&](int id) {
    return options.only.empty() ||
           std::find(options.only.begin(), options.only.end(), id) != options.only.end();
  };
  std::vector<CheckResult> out;
  auto record = [&](CheckResult r) {
    if (report) report(r);
    out.push_back(std::move(r));
  };
  auto guarded = [&](int id, const char* name, auto&& fn) {
    if (!wanted(id)) return;
    try {
      record(fn());
    } catch (const std::exception& e) {
      record({id, name, false, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0,
              std::string("error: ") + e.what()});
    }
  };
  guarded(1, "integration-trick exactness", check_partition);
  guarded(2, "monotonicity", check_monotone);
  guarded(3, "normalization", check_normalization);
  guarded(4, "gradient correctness", check_gradients);
  guarded(5, "inverse-transform sampling", check_sampling);
  guarded(6, "mixture-of-logistics limit", [&] { return check_mixture_limit(options.full); });
  std::vector<Recovered> runs;
  if (options.full) {
    guarded(7, "density recovery", [&] { return check_recovery(options.threads, runs); });
    if (wanted(8) && runs.empty()) {
      for (const auto& c : recovery_cases(options.threads)) {
        if (c.name.ends_with("-2d")) {
          try {
            runs.push_back(recover(c));
          } catch (const std::exception&) {
          }
        }
      }
    }
    guarded(8, "joint normalization", [&] { return check_joint_normalization(runs); });
  }
  guarded(9, "discretized likelihood", check_discretized);
  guarded(10, "determinism", [&] { return check_determinism(options.threads); });
  return out;
}

std::string format_line(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %2d %s: measured=%.4g threshold=%.4g (%.2f s)",
                r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.measured, r.threshold,
                r.seconds);
  return std::string(buf) + (r.detail.empty() ? "" : " -- " + r.detail);
}

}  // namespace nits::verify
