#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "modeldisc/dataset.hpp"
#include "modeldisc/errors.hpp"
#include "test_util.hpp"

using namespace modeldisc;

TEST_CASE("load_csv sorts rows by x") {
  testutil::TempDir dir;
  testutil::write_file(dir / "s.csv", "x,y\n1,2\n0,1\n");
  const auto s = load_csv(dir / "s.csv");
  CHECK(s.x == std::vector<double>{0.0, 1.0});
  CHECK(s.y == std::vector<double>{1.0, 2.0});
  CHECK(s.name == "s");
}

TEST_CASE("load_csv rejects non-finite values") {
  testutil::TempDir dir;
  testutil::write_file(dir / "bad.csv", "a,b\n1,NaN\n2,3\n");
  try {
    load_csv(dir / "bad.csv");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::NonFiniteValue);
  }
}

TEST_CASE("load_csv error kinds") {
  testutil::TempDir dir;
  CHECK_THROWS_AS(load_csv(dir / "missing.csv"), LoadError);
  testutil::write_file(dir / "one.csv", "x,y\n1,2\n");
  try {
    load_csv(dir / "one.csv");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::TooFewRows);
  }
  testutil::write_file(dir / "junk.csv", "x,y\n1,2\n2,abc\n");
  try {
    load_csv(dir / "junk.csv");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.kind() == LoadError::Kind::Parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("load_csv tolerates CRLF, blank lines and extra columns") {
  testutil::TempDir dir;
  testutil::write_file(dir / "w.csv", "x,y,z\r\n0,1,9\r\n\r\n1,3,9\r\n");
  const auto s = load_csv(dir / "w.csv");
  CHECK(s.x.size() == 2);
  CHECK(s.y[1] == 3.0);
}

TEST_CASE("bundled airline series has 144 monthly rows") {
  const auto s = load_csv(std::filesystem::path(MODELDISC_SOURCE_DIR) / "data" / "airline.csv");
  CHECK(s.x.size() == 144);
  CHECK(s.y.front() == 112.0);
  CHECK(s.y.back() == 432.0);
}

TEST_CASE("zero variance in train y is degenerate") {
  const auto s = make_series({0.0, 10.0}, {5.0, 5.0});
  CHECK_THROWS_AS(standardize_and_split(s, 0.0, 0.0), LoadError);
}

TEST_CASE("degenerate x range") {
  const auto s = make_series({1.0, 1.0, 1.0}, {0.0, 1.0, 2.0});
  CHECK_THROWS_AS(standardize_and_split(s, 0.0, 0.0), LoadError);
}

TEST_CASE("hand z-score of a four point line") {
  const auto s = make_series({0, 1, 2, 3}, {0, 2, 4, 6});
  const auto ds = standardize_and_split(s, 0.25, 0.0);
  CHECK(ds.test_idx == std::vector<std::size_t>{3});
  CHECK(ds.train_idx == std::vector<std::size_t>{0, 1, 2});
  const auto ty = ds.train_y();
  CHECK(std::accumulate(ty.begin(), ty.end(), 0.0) == doctest::Approx(0.0));
  // train mean 2, population sd sqrt(8/3)
  CHECK(ds.y_transform.offset == doctest::Approx(2.0));
  CHECK(ds.y_transform.scale == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(ds.x_norm.front() == 0.0);
  CHECK(ds.x_norm.back() == 1.0);
}

TEST_CASE("validation takes a tenth of the non-test region") {
  std::vector<double> x(100), y(100);
  for (int i = 0; i < 100; ++i) {
    x[i] = i;
    y[i] = std::sin(i);
  }
  const auto ds = standardize_and_split(make_series(x, y), 0.0, 0.1);
  CHECK(ds.val_idx.size() == 10);
  CHECK(ds.val_idx.front() == 90);
}

TEST_CASE("affine transform examples") {
  AffineTransform id;
  CHECK(id.inverse(1.0) == 1.0);
  CHECK(id.inverse(2.0) == 2.0);
  AffineTransform t{2.0, 1.0};
  CHECK(t.inverse(0.0) == 1.0);
  CHECK(t.inverse(1.0) == 3.0);
}

TEST_CASE("property: split partitions indices and transforms invert") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_int_distribution<int> len(5, 200);
  std::uniform_real_distribution<double> frac(0.0, 0.4);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(rng);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    const auto s = make_series(x, y);
    for (std::size_t i = 1; i < s.x.size(); ++i) REQUIRE(s.x[i - 1] <= s.x[i]);
    Dataset ds;
    try {
      ds = standardize_and_split(s, frac(rng), frac(rng));
    } catch (const LoadError& e) {
      REQUIRE(e.kind() == LoadError::Kind::Degenerate);
      continue;
    }
    std::set<std::size_t> all;
    for (const auto* part : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) all.insert(part->begin(), part->end());
    REQUIRE(all.size() == static_cast<std::size_t>(n));
    REQUIRE(ds.train_idx.size() + ds.val_idx.size() + ds.test_idx.size() == static_cast<std::size_t>(n));
    // test is the largest-x contiguous suffix
    for (std::size_t k = 0; k < ds.test_idx.size(); ++k) {
      REQUIRE(ds.test_idx[k] == n - ds.test_idx.size() + k);
    }
    const auto yr = inverse_transform(ds, ds.y_norm);
    const auto xr = inverse_transform_x(ds, ds.x_norm);
    for (int i = 0; i < n; ++i) {
      // relative to the magnitudes that enter the affine map
      const double ys = std::max({1.0, std::abs(s.y[i]), ds.y_transform.scale, std::abs(ds.y_transform.offset)});
      const double xs = std::max({1.0, std::abs(s.x[i]), ds.x_transform.scale, std::abs(ds.x_transform.offset)});
      REQUIRE(std::abs(yr[i] - s.y[i]) <= 1e-12 * ys);
      REQUIRE(std::abs(xr[i] - s.x[i]) <= 1e-12 * xs);
    }
  }
}
