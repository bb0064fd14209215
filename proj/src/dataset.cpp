#include "modeldisc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_real(const std::string& cell, std::size_t line_no) {
  std::string t = trim(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw LoadError(LoadError::Kind::Parse,
                    "line " + std::to_string(line_no) + ": cannot parse '" + t + "' as a real");
  }
  if (used != t.size()) {
    throw LoadError(LoadError::Kind::Parse,
                    "line " + std::to_string(line_no) + ": trailing characters in '" + t + "'");
  }
  if (!std::isfinite(v)) {
    throw LoadError(LoadError::Kind::NonFiniteValue,
                    "line " + std::to_string(line_no) + ": non-finite value '" + t + "'");
  }
  return v;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

std::vector<double> Dataset::gather(const std::vector<double>& v,
                                    const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v.at(i));
  return out;
}

RawSeries make_series(std::vector<double> x, std::vector<double> y, std::string name) {
  if (x.size() != y.size()) {
    throw LoadError(LoadError::Kind::Parse, "x and y lengths differ");
  }
  if (x.size() < 2) {
    throw LoadError(LoadError::Kind::TooFewRows, "series needs at least 2 rows");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw LoadError(LoadError::Kind::NonFiniteValue,
                      "non-finite value at row " + std::to_string(i));
    }
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  RawSeries s;
  s.name = std::move(name);
  s.x.reserve(x.size());
  s.y.reserve(y.size());
  for (auto i : order) {
    s.x.push_back(x[i]);
    s.y.push_back(y[i]);
  }
  return s;
}

RawSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError(LoadError::Kind::Io, "cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw LoadError(LoadError::Kind::TooFewRows, path.string() + ": empty file");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  auto header = split_commas(line);
  if (header.size() < 2) {
    throw LoadError(LoadError::Kind::Parse, path.string() + ": header must name two columns");
  }
  if (header.size() > 2) {
    spdlog::warn("{}: ignoring {} extra column(s)", path.string(), header.size() - 2);
  }

  std::vector<double> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() < 2) {
      throw LoadError(LoadError::Kind::Parse,
                      "line " + std::to_string(line_no) + ": expected two columns");
    }
    xs.push_back(parse_real(cells[0], line_no));
    ys.push_back(parse_real(cells[1], line_no));
  }
  return make_series(std::move(xs), std::move(ys), path.stem().string());
}

Dataset standardize_and_split(const RawSeries& series, double test_fraction,
                              double val_fraction) {
  const std::size_t n = series.x.size();
  if (n != series.y.size() || n < 2) {
    throw LoadError(LoadError::Kind::TooFewRows, "series needs at least 2 rows");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0) ||
      !(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw LoadError(LoadError::Kind::Degenerate, "fractions must lie in [0, 1)");
  }
  const std::size_t n_test = fraction_count(test_fraction, n);
  const std::size_t n_rest = n - n_test;
  const std::size_t n_val = fraction_count(val_fraction, n_rest);
  if (n_rest < n_val + 2) {
    throw LoadError(LoadError::Kind::Degenerate, "split leaves fewer than 2 train points");
  }
  const std::size_t n_train = n_rest - n_val;

  Dataset ds;
  ds.name = series.name;
  const double x_min = series.x.front();
  const double x_max = series.x.back();
  if (!(x_max > x_min)) {
    throw LoadError(LoadError::Kind::Degenerate, "degenerate x range");
  }
  ds.x_transform = {x_max - x_min, x_min};

  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      ds.train_idx.push_back(i);
    } else if (i < n_rest) {
      ds.val_idx.push_back(i);
    } else {
      ds.test_idx.push_back(i);
    }
  }

  double mean = 0.0;
  for (auto i : ds.train_idx) mean += series.y[i];
  mean /= static_cast<double>(n_train);
  double var = 0.0;
  for (auto i : ds.train_idx) var += (series.y[i] - mean) * (series.y[i] - mean);
  var /= static_cast<double>(n_train);
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    throw LoadError(LoadError::Kind::Degenerate, "zero variance in train y");
  }
  ds.y_transform = {sd, mean};

  ds.x_norm.reserve(n);
  ds.y_norm.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x_norm.push_back(ds.x_transform.forward(series.x[i]));
    ds.y_norm.push_back(ds.y_transform.forward(series.y[i]));
  }
  return ds;
}

std::vector<double> inverse_transform(const Dataset& ds, std::span<const double> y_norm_values) {
  std::vector<double> out;
  out.reserve(y_norm_values.size());
  for (double v : y_norm_values) out.push_back(ds.y_transform.inverse(v));
  return out;
}

std::vector<double> inverse_transform_x(const Dataset& ds,
                                        std::span<const double> x_norm_values) {
  std::vector<double> out;
  out.reserve(x_norm_values.size());
  for (double v : x_norm_values) out.push_back(ds.x_transform.inverse(v));
  return out;
}

}  // namespace modeldisc
