#include "nits/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include "nits/error.hpp"
#include "nits/rng.hpp"

namespace nits {

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) cols_ = values.size();
  if (values.size() != cols_) throw UsageError("row has the wrong number of columns");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

namespace data {

Matrix Dataset::select(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), dims());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = rows.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Split make_split(std::size_t n, std::uint64_t seed, double train_fraction, double val_fraction) {
  if (!(train_fraction > 0.0) || !(val_fraction >= 0.0) || train_fraction + val_fraction > 1.0) {
    throw InvalidParameter("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_stream(seed, 0x73706c74u);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

std::vector<Bounds> bounds_from(const Matrix& rows, std::span<const std::size_t> indices,
                                double margin) {
  if (indices.empty()) throw DataError("cannot derive bounds from an empty split");
  std::vector<Bounds> out;
  for (std::size_t c = 0; c < rows.cols(); ++c) {
    double lo = rows(indices[0], c);
    double hi = lo;
    for (std::size_t r : indices) {
      lo = std::min(lo, rows(r, c));
      hi = std::max(hi, rows(r, c));
    }
    const double range = hi - lo;
    if (!(range > 0.0)) {
      throw DataError("column " + std::to_string(c + 1) +
                          " is constant on the training split; drop it before fitting",
                      0, c + 1);
    }
    out.push_back({lo - margin * range, hi + margin * range});
  }
  return out;
}

Dataset make_dataset(Matrix rows, std::uint64_t split_seed, std::string provenance) {
  if (rows.empty()) throw DataError("dataset has no rows");
  Dataset ds;
  ds.split = make_split(rows.rows(), split_seed);
  ds.bounds = bounds_from(rows, ds.split.train);
  ds.rows = std::move(rows);
  ds.provenance = std::move(provenance);
  return ds;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits one record, honouring double-quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line, char delimiter,
                                      std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quoted field", line_no, fields.size() + 1);
  fields.push_back(cur);
  return fields;
}

}  // namespace

Matrix read_csv(std::istream& in, const CsvOptions& options) {
  Matrix out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_pending = options.has_header;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, options.delimiter, line_no);
    if (header_pending) {
      header_pending = false;
      width = fields.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                          " fields, found " + std::to_string(fields.size()),
                      line_no, std::min(fields.size(), width) + 1);
    }
    values.assign(width, 0.0);
    for (std::size_t c = 0; c < width; ++c) {
      const std::string_view cell = trim(fields[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                            ": not a finite number: '" + std::string(cell) + "'",
                        line_no, c + 1);
      }
      values[c] = v;
    }
    out.push_row(values);
  }
  if (out.empty()) throw DataError("CSV input contains no data rows");
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options,
                 std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return make_dataset(read_csv(in, options), split_seed, path.string());
}

void write_csv(std::ostream& out, const Matrix& rows, const std::vector<std::string>& header,
               char delimiter) {
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? std::string(1, delimiter) : "") << header[c];
    out << '\n';
  }
  char buf[40];
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", rows(r, c));
      if (c) out << delimiter;
      out << buf;
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Matrix& rows,
               const std::vector<std::string>& header, char delimiter) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_csv(out, rows, header, delimiter);
  if (!out) throw Error("failed to write " + path.string());
}

Standardized standardize(const Dataset& ds) {
  if (ds.split.train.empty()) throw DataError("cannot standardize with an empty training split");
  const std::size_t d = ds.dims();
  AffineMap map{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  const double n = static_cast<double>(ds.split.train.size());
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r : ds.split.train) mean += ds.rows(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r : ds.split.train) var += (ds.rows(r, c) - mean) * (ds.rows(r, c) - mean);
    var /= n;
    if (!(var > 0.0)) {
      throw DataError("column " + std::to_string(c + 1) +
                          " has zero variance on the training split; drop it before fitting",
                      0, c + 1);
    }
    map.shift[c] = mean;
    map.scale[c] = std::sqrt(var);
  }
  Standardized out{ds, map};
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out.data.rows(r, c) = map.to_model(c, ds.rows(r, c));
  }
  for (std::size_t c = 0; c < d; ++c) {
    out.data.bounds[c] = {map.to_model(c, ds.bounds[c].lo), map.to_model(c, ds.bounds[c].hi)};
  }
  out.data.provenance = ds.provenance + " (standardized)";
  return out;
}

void dequantize(Dataset& ds, std::span<const std::size_t> columns, double step,
                std::uint64_t seed) {
  if (!(step > 0.0)) throw InvalidParameter("dequantization step must be positive");
  Rng rng = make_stream(seed, 0x64657175u);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c : columns) {
      if (c >= ds.dims()) throw UsageError("dequantization column out of range");
      ds.rows(r, c) += step * uniform01(rng);
    }
  }
  ds.bounds = bounds_from(ds.rows, ds.split.train);
}

namespace {

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// Equal-weight isotropic Gaussian mixture in the plane.
struct PlanarMixture {
  std::vector<std::array<double, 2>> centers;
  double sd = 1.0;

  std::array<double, 2> draw(Rng& rng) const {
    const auto k = static_cast<std::size_t>(rng() % centers.size());
    const double e1 = standard_normal(rng);
    const double e2 = standard_normal(rng);
    return {centers[k][0] + sd * e1, centers[k][1] + sd * e2};
  }

  double log_density(std::span<const double> x) const {
    std::vector<double> terms(centers.size());
    const double norm = -kLogTwoPi - 2.0 * std::log(sd) - std::log(static_cast<double>(centers.size()));
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double dx = x[0] - centers[k][0];
      const double dy = x[1] - centers[k][1];
      terms[k] = norm - 0.5 * (dx * dx + dy * dy) / (sd * sd);
    }
    return log_sum_exp(terms);
  }
};

PlanarMixture two_moons() {
  PlanarMixture m;
  m.sd = 0.15;
  constexpr std::size_t per_moon = 16;
  for (std::size_t k = 0; k < per_moon; ++k) {
    const double t = std::numbers::pi * static_cast<double>(k) / static_cast<double>(per_moon - 1);
    m.centers.push_back({std::cos(t), std::sin(t)});
    m.centers.push_back({1.0 - std::cos(t), 0.5 - std::sin(t)});
  }
  return m;
}

PlanarMixture ring() {
  PlanarMixture m;
  m.sd = 0.25;
  constexpr std::size_t count = 24;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    m.centers.push_back({2.0 * std::cos(t), 2.0 * std::sin(t)});
  }
  return m;
}

double normal_log_pdf(double x, double mean, double sd) {
  const double t = (x - mean) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * t * t;
}

}  // namespace

const std::vector<std::string>& synthetic_names() {
  static const std::vector<std::string> names{"logistic", "gmm2", "two-moons-2d", "ring-2d"};
  return names;
}

Synthetic make_synthetic(std::string_view name, std::size_t n, std::uint64_t seed) {
  if (n < 3) throw UsageError("synthetic datasets need at least 3 points");
  Rng rng = make_stream(seed, 0x73796e74u);
  Matrix rows;
  LogDensity log_density;
  const std::string provenance = std::string(name) + " n=" + std::to_string(n) +
                                 " seed=" + std::to_string(seed);
  if (name == "logistic") {
    rows = Matrix(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
      const double u = uniform_open(rng);
      rows(r, 0) = std::log(u) - std::log1p(-u);
    }
    log_density = [](std::span<const double> x) {
      const double a = std::abs(x[0]);
      return -a - 2.0 * std::log1p(std::exp(-a));
    };
  } else if (name == "gmm2") {
    rows = Matrix(n, 1);
    for (std::size_t r = 0; r < n; ++r) {
      const double mean = uniform01(rng) < 0.5 ? -2.0 : 2.0;
      rows(r, 0) = mean + 0.5 * standard_normal(rng);
    }
    log_density = [](std::span<const double> x) {
      const double terms[2] = {std::log(0.5) + normal_log_pdf(x[0], -2.0, 0.5),
                               std::log(0.5) + normal_log_pdf(x[0], 2.0, 0.5)};
      return log_sum_exp(terms);
    };
  } else if (name == "two-moons-2d" || name == "ring-2d") {
    const PlanarMixture mix = name == "ring-2d" ? ring() : two_moons();
    rows = Matrix(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      const auto p = mix.draw(rng);
      rows(r, 0) = p[0];
      rows(r, 1) = p[1];
    }
    log_density = [mix](std::span<const double> x) { return mix.log_density(x); };
  } else {
    std::string known;
    for (const auto& s : synthetic_names()) known += (known.empty() ? "" : ", ") + s;
    throw UsageError("unknown synthetic dataset '" + std::string(name) + "' (known: " + known +
                     ")");
  }
  return Synthetic{make_dataset(std::move(rows), seed, provenance), std::move(log_density)};
}

}  // namespace data
}  // namespace nits
