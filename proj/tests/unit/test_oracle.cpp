#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "nits/error.hpp"
#include "nits/oracle.hpp"
#include "nits/rng.hpp"

using namespace nits;
using namespace nits::oracle;

TEST_CASE("simpson is exact on cubics and accurate on sin") {
  CHECK(simpson([](double x) { return x * x; }, 0.0, 1.0, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(simpson([](double x) { return x * x * x - x; }, -1.0, 2.0, 4) ==
        doctest::Approx(2.25).epsilon(1e-14));
  CHECK(std::abs(simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi, 1000) - 2.0) < 1e-8);
  CHECK_THROWS_AS(simpson([](double) { return 1.0; }, 0.0, 1.0, 3), UsageError);
  CHECK_THROWS_AS(simpson([](double) { return 1.0; }, 1.0, 0.0, 2), UsageError);
}

TEST_CASE("adaptive simpson converges and reports panels") {
  const auto r = adaptive_simpson([](double x) { return std::exp(-x * x); }, -4.0, 4.0);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(std::sqrt(std::numbers::pi) * std::erf(4.0)).epsilon(1e-10));
  const auto capped = adaptive_simpson([](double x) { return std::sin(1.0 / x); }, 1e-4, 1.0, 1e-14, 64);
  CHECK(!capped.converged);
  CHECK(capped.panels == 64);
}

TEST_CASE("nested 2D simpson") {
  CHECK(simpson_2d([](double x, double y) { return x * y * y; }, 0.0, 1.0, 0.0, 3.0, 4) ==
        doctest::Approx(4.5).epsilon(1e-14));
}

TEST_CASE("mixture of logistics") {
  const MoLRef one{{1.0}, {0.0}, {1.0}};
  CHECK(mol_cdf(one, 0.0) == 0.5);
  CHECK(mol_pdf(one, 0.0) == 0.25);
  Rng rng = make_stream(1, 1);
  for (int t = 0; t < 5; ++t) {
    MoLRef ref;
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      ref.weights.push_back(0.1 + uniform01(rng));
      ref.means.push_back(-1.0 + 2.0 * uniform01(rng));
      ref.scales.push_back(0.5 + 1.5 * uniform01(rng));
      total += ref.weights.back();
    }
    for (double& w : ref.weights) w /= total;
    for (double x : {-3.0, -0.2, 0.9, 4.0}) {
      const double fd = central_difference([&](double u) { return mol_cdf(ref, u); }, x, 1e-5);
      CHECK(std::abs(fd - mol_pdf(ref, x)) < 1e-6);
      CHECK(mol_cdf(ref, x) > 0.0);
      CHECK(mol_cdf(ref, x) < 1.0);
    }
  }
  CHECK_THROWS_AS((MoLRef{{0.5, 0.6}, {0, 0}, {1, 1}}).validate(), InvalidParameter);
  CHECK_THROWS_AS((MoLRef{{1.0}, {0}, {-1}}).validate(), InvalidParameter);
}

TEST_CASE("embedding a mixture as a two-layer PNN") {
  const MoLRef ref{{0.2, 0.5, 0.3}, {-0.8, 0.1, 0.9}, {0.6, 1.4, 0.9}};
  const auto [spec, params] = embed_mol_as_pnn(ref, {-40.0, 40.0});
  CHECK(spec.widths() == std::vector<std::size_t>{1, 3, 1});
  const auto alpha = pnn::transform_final(params.values().subspan(spec.weight_offset(1), 3));
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(alpha[k] - ref.weights[k]) < 1e-12);
  // The unnormalized network is the mixture cdf itself.
  const pnn::Network net(spec, params);
  for (double x : {-2.0, 0.0, 1.5}) CHECK(net.value(x) == doctest::Approx(mol_cdf(ref, x)).epsilon(1e-14));

  double prev = INFINITY;
  for (double b : {5.0, 10.0, 20.0, 40.0}) {
    const auto [s, p] = embed_mol_as_pnn(ref, {-b, b});
    const pnn::Network n(s, p);
    const double gap = sup_gap([&](double x) { return n.cdf(x); }, [&](double x) { return mol_cdf(ref, x); },
                               -b, b, 10000);
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("sup gap scans both endpoints") {
  CHECK(sup_gap([](double x) { return x; }, [](double) { return 0.0; }, -1.0, 2.0, 7) == 2.0);
  CHECK_THROWS_AS(sup_gap([](double) { return 0.0; }, [](double) { return 0.0; }, 0, 1, 1), UsageError);
}

TEST_CASE("KS statistic") {
  CHECK(ks_statistic(std::vector<double>{0.5}).statistic == 0.5);
  const std::size_t n = 200;
  std::vector<double> grid;
  for (std::size_t i = 1; i <= n; ++i) grid.push_back((i - 0.5) / n);
  CHECK(ks_statistic(grid).statistic == doctest::Approx(0.5 / n).epsilon(1e-12));
  CHECK_THROWS_AS(ks_statistic(std::vector<double>{}), UsageError);
  CHECK_THROWS_AS(ks_statistic(std::vector<double>{1.2}), DomainError);

  Rng rng = make_stream(2024, 0);
  std::vector<double> u(10000);
  for (double& v : u) v = uniform01(rng);
  CHECK(ks_statistic(u).p_value > 0.01);

  std::vector<double> skewed = u;
  for (double& v : skewed) v = v * v;
  CHECK(ks_statistic(skewed).p_value < 1e-6);
}

TEST_CASE("Kolmogorov survival function") {
  CHECK(kolmogorov_survival(0.0) == 1.0);
  // Tabulated critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
  CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
}
