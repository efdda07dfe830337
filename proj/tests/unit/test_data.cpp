#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "nits/data.hpp"
#include "nits/error.hpp"

using namespace nits;
using namespace nits::data;

TEST_CASE("parse a small table") {
  std::istringstream in("x,y\n1,2\n 3.5 , -4e-1\n\n5,\"6\"\n");
  const Matrix m = read_csv(in, {true, ','});
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  CHECK(m(1, 0) == 3.5);
  CHECK(m(1, 1) == -0.4);
  CHECK(m(2, 1) == 6.0);

  std::istringstream semi("1;2\n3;4\n");
  CHECK(read_csv(semi, {false, ';'})(1, 1) == 4.0);
}

TEST_CASE("parse errors point at the cell") {
  std::istringstream bad("1,2\n3,abc\n");
  try {
    read_csv(bad);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 2);
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }
  std::istringstream ragged("1,2\n3\n");
  CHECK_THROWS_AS(read_csv(ragged), DataError);
  std::istringstream empty("a,b\n");
  CHECK_THROWS_AS(read_csv(empty, {true, ','}), DataError);
  std::istringstream nan("1,nan\n");
  CHECK_THROWS_AS(read_csv(nan), DataError);
  std::istringstream open("\"1,2\n");
  CHECK_THROWS_AS(read_csv(open), DataError);
}

TEST_CASE("write then read is exact") {
  Matrix m(2, 2);
  m(0, 0) = 1.0 / 3.0;
  m(0, 1) = -1e-300;
  m(1, 0) = 6.02214076e23;
  m(1, 1) = std::nextafter(1.0, 2.0);
  std::stringstream io;
  write_csv(io, m, {"a", "b"});
  CHECK(read_csv(io, {true, ','}) == m);
}

TEST_CASE("splits are deterministic, disjoint and covering") {
  const Split a = make_split(1000, 5);
  const Split b = make_split(1000, 5);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.train.size() == 800);
  CHECK(a.val.size() == 100);
  CHECK(a.test.size() == 100);
  std::vector<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(1000);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  CHECK(make_split(1000, 6).train != a.train);
  CHECK_THROWS_AS(make_split(10, 0, 0.9, 0.2), InvalidParameter);
}

TEST_CASE("bounds come from the training split with a margin") {
  Matrix m(3, 1);
  m(0, 0) = 0.0;
  m(1, 0) = 10.0;
  m(2, 0) = 100.0;
  const std::vector<std::size_t> idx{0, 1};
  const auto b = bounds_from(m, idx);
  CHECK(b[0].lo == -1.0);
  CHECK(b[0].hi == 11.0);
  Matrix flat(2, 1, 3.0);
  CHECK_THROWS_AS(bounds_from(flat, std::vector<std::size_t>{0, 1}), DataError);
}

TEST_CASE("standardization uses training moments") {
  Matrix m(4, 2);
  const double xs[4] = {1, 3, 5, 7};
  for (std::size_t r = 0; r < 4; ++r) {
    m(r, 0) = xs[r];
    m(r, 1) = 100.0 - 2.0 * xs[r];
  }
  Dataset ds{m, {}, {{0, 1, 2, 3}, {}, {}}, "t"};
  ds.bounds = bounds_from(ds.rows, ds.split.train);
  const auto s = standardize(ds);
  CHECK(s.transform.shift[0] == 4.0);
  CHECK(s.transform.scale[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(s.transform.shift[1] == 92.0);
  CHECK(s.transform.scale[1] == doctest::Approx(2.0 * std::sqrt(5.0)));
  double mean = 0.0, sq = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    mean += s.data.rows(r, 0) / 4;
    sq += s.data.rows(r, 0) * s.data.rows(r, 0) / 4;
  }
  CHECK(std::abs(mean) < 1e-15);
  CHECK(sq == doctest::Approx(1.0));
  CHECK(s.data.bounds[0].lo == doctest::Approx((ds.bounds[0].lo - 4.0) / std::sqrt(5.0)));

  // A pure shift moves only the means.
  Dataset shifted = ds;
  for (std::size_t r = 0; r < 4; ++r) shifted.rows(r, 0) += 1000.0;
  const auto t = standardize(shifted);
  CHECK(t.transform.shift[0] == 1004.0);
  CHECK(t.transform.scale[0] == doctest::Approx(s.transform.scale[0]));

  Dataset flat = ds;
  for (std::size_t r = 0; r < 4; ++r) flat.rows(r, 1) = 2.0;
  CHECK_THROWS_AS(standardize(flat), DataError);
}

TEST_CASE("synthetic generators") {
  CHECK(synthetic_names().size() == 4);
  for (const auto& name : synthetic_names()) {
    const auto a = make_synthetic(name, 500, 3);
    const auto b = make_synthetic(name, 500, 3);
    CHECK(a.data.rows == b.data.rows);
    CHECK(a.data.split.train == b.data.split.train);
    for (std::size_t r = 0; r < 5; ++r) CHECK(std::isfinite(a.log_density(a.data.rows.row(r))));
  }
  CHECK_THROWS_AS(make_synthetic("spiral", 100, 0), UsageError);
  CHECK_THROWS_AS(make_synthetic("gmm2", 2, 0), UsageError);

  // Standard logistic: mean 0, variance pi^2 / 3.
  const auto s = make_synthetic("logistic", 20000, 1);
  double mean = 0.0;
  for (std::size_t r = 0; r < s.data.size(); ++r) mean += s.data.rows(r, 0);
  mean /= static_cast<double>(s.data.size());
  CHECK(std::abs(mean) < 4.0 * std::sqrt(M_PI * M_PI / 3.0 / 20000.0));
  CHECK(s.log_density(std::vector<double>{0.0}) == doctest::Approx(std::log(0.25)));
}

TEST_CASE("dequantization adds bounded noise and refreshes bounds") {
  auto s = make_synthetic("gmm2", 200, 4);
  Matrix before = s.data.rows;
  for (std::size_t r = 0; r < before.rows(); ++r) before(r, 0) = std::round(before(r, 0));
  s.data.rows = before;
  const std::vector<std::size_t> cols{0};
  dequantize(s.data, cols, 1.0, 9);
  for (std::size_t r = 0; r < before.rows(); ++r) {
    CHECK(s.data.rows(r, 0) >= before(r, 0));
    CHECK(s.data.rows(r, 0) < before(r, 0) + 1.0);
  }
  CHECK_THROWS_AS(dequantize(s.data, cols, 0.0, 9), InvalidParameter);
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(dequantize(s.data, bad, 1.0, 9), UsageError);
}
