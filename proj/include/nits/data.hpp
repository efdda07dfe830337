#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nits/matrix.hpp"
#include "nits/model.hpp"
#include "nits/pnn.hpp"

namespace nits::data {

/// Row indices of the three disjoint splits.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct Dataset {
  Matrix rows;
  /// Per-column support from the training split:
  /// [min - 0.1 * range, max + 0.1 * range].
  std::vector<Bounds> bounds;
  Split split;
  std::string provenance;

  std::size_t size() const noexcept { return rows.rows(); }
  std::size_t dims() const noexcept { return rows.cols(); }
  /// Rows selected by an index list, in that order.
  Matrix select(std::span<const std::size_t> indices) const;
};

/// Seeded Fisher-Yates shuffle of [0, n) cut into train/val/test. The
/// result depends only on (n, seed, fractions).
Split make_split(std::size_t n, std::uint64_t seed, double train_fraction = 0.8,
                 double val_fraction = 0.1);

/// Support [min - margin * range, max + margin * range] of the chosen rows.
/// Throws DataError for a constant column.
std::vector<Bounds> bounds_from(const Matrix& rows, std::span<const std::size_t> indices,
                                double margin = 0.1);

/// Wraps a matrix with an 80/10/10 split and training-split bounds.
Dataset make_dataset(Matrix rows, std::uint64_t split_seed, std::string provenance);

struct CsvOptions {
  bool has_header = false;
  char delimiter = ',';
};

/// Parses a rectangular numeric table. Errors carry the 1-based line and
/// column of the offending cell.
Matrix read_csv(std::istream& in, const CsvOptions& options = {});
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {},
                 std::uint64_t split_seed = 0);

/// Writes every value with 17 significant digits.
void write_csv(std::ostream& out, const Matrix& rows, const std::vector<std::string>& header = {},
               char delimiter = ',');
void write_csv(const std::filesystem::path& path, const Matrix& rows,
               const std::vector<std::string>& header = {}, char delimiter = ',');

struct Standardized {
  Dataset data;
  /// z = (x - mean) / sd with train-split moments (population sd).
  AffineMap transform;
};

/// Standardizes every column with the training split's mean and standard
/// deviation. Throws DataError for a zero-variance column.
Standardized standardize(const Dataset& ds);

/// Adds U[0, step) noise to the listed columns.
void dequantize(Dataset& ds, std::span<const std::size_t> columns, double step,
                std::uint64_t seed);

using LogDensity = std::function<double(std::span<const double>)>;

struct Synthetic {
  Dataset data;
  /// Exact log-density of the generating distribution.
  LogDensity log_density;
};

/// Names accepted by make_synthetic.
const std::vector<std::string>& synthetic_names();

/// logistic: standard logistic. gmm2: 0.5 N(-2, 0.5^2) + 0.5 N(2, 0.5^2).
/// two-moons-2d: 32 equal-weight isotropic Gaussians (sd 0.15) centred on
/// two interleaved half circles. ring-2d: 24 equal-weight isotropic
/// Gaussians (sd 0.25) on the circle of radius 2.
Synthetic make_synthetic(std::string_view name, std::size_t n, std::uint64_t seed);

}  // namespace nits::data
