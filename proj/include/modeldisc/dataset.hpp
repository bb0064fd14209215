#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace modeldisc {

/// A 1-D series in its original units, sorted by x.
struct RawSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string name;
};

/// raw = norm * scale + offset
struct AffineTransform {
  double scale = 1.0;
  double offset = 0.0;

  double forward(double raw) const { return (raw - offset) / scale; }
  double inverse(double norm) const { return norm * scale + offset; }
};

/// Standardized series plus its partition. x is mapped onto [0, 1] over the
/// full extent; y is z-scored with statistics of `train_idx` only. The test
/// set is the largest-x contiguous suffix and validation is the tail of the
/// remaining region.
struct Dataset {
  std::string name;
  std::vector<double> x_norm;
  std::vector<double> y_norm;
  AffineTransform x_transform;
  AffineTransform y_transform;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;

  std::size_t size() const { return x_norm.size(); }

  std::vector<double> train_x() const { return gather(x_norm, train_idx); }
  std::vector<double> train_y() const { return gather(y_norm, train_idx); }
  std::vector<double> val_x() const { return gather(x_norm, val_idx); }
  std::vector<double> val_y() const { return gather(y_norm, val_idx); }
  std::vector<double> test_x() const { return gather(x_norm, test_idx); }
  std::vector<double> test_y() const { return gather(y_norm, test_idx); }

  static std::vector<double> gather(const std::vector<double>& v,
                                    const std::vector<std::size_t>& idx);
};

/// Reads a two-column CSV with a header row. Extra columns are ignored with a
/// warning. Throws LoadError.
RawSeries load_csv(const std::filesystem::path& path);

/// Sorts by x and validates the series invariants. Throws LoadError.
RawSeries make_series(std::vector<double> x, std::vector<double> y, std::string name = {});

Dataset standardize_and_split(const RawSeries& series, double test_fraction,
                              double val_fraction);

std::vector<double> inverse_transform(const Dataset& ds, std::span<const double> y_norm_values);

/// Maps normalized abscissae back to original units.
std::vector<double> inverse_transform_x(const Dataset& ds, std::span<const double> x_norm_values);

}  // namespace modeldisc
