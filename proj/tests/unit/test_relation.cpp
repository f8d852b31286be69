#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rtnet/error.hpp"
#include "rtnet/gradcheck.hpp"
#include "rtnet/relation.hpp"

using namespace rtnet;
using namespace rtnet::relation;
using testutil::values;

namespace {

// Time-major (length x variates) random series.
std::vector<double> random_series(std::size_t length, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> s(length * n);
  for (auto& v : s) v = d(rng);
  return s;
}

}  // namespace

TEST_CASE("absolute cosine relation") {
  // x1 = x0, x2 = -x0, x3 unrelated.
  std::vector<double> s = {1, 1, -1, 0, 2, 2, -2, 1, 3, 3, -3, 0};
  auto w = cos_relation_matrix(s, 3, 4);
  CHECK(w[0 * 4 + 1] == doctest::Approx(1.0));
  CHECK(w[0 * 4 + 2] == doctest::Approx(1.0));
  CHECK(w[1 * 4 + 3] == doctest::Approx(2.0 / (std::sqrt(14.0) * 1.0)));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w[i * 4 + i] == 1.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(w[i * 4 + j] == w[j * 4 + i]);
  }
}

TEST_CASE("raw relation ignores sign flips and positive rescaling") {
  std::mt19937_64 rng(1);
  auto s = random_series(50, 4, rng);
  auto w = cos_relation_matrix(s, 50, 4);
  auto t = s;
  for (std::size_t r = 0; r < 50; ++r) {
    t[r * 4 + 1] *= -3.0;
    t[r * 4 + 3] *= 0.01;
  }
  auto w2 = cos_relation_matrix(t, 50, 4);
  for (std::size_t i = 0; i < 16; ++i) CHECK(w2[i] == doctest::Approx(w[i]).epsilon(1e-12));
}

TEST_CASE("relation errors") {
  std::vector<double> s = {1, 0, 2, 0, 3, 0};
  const std::string names[] = {"HUFL", "OT"};
  try {
    cos_relation_matrix(s, 3, 2, names);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("OT") != std::string::npos);
  }
  CHECK_THROWS_AS(cos_relation_matrix(std::vector<double>{1, 2}, 1, 2), DataError);
  CHECK_THROWS_AS(threshold_and_standardize(std::vector<double>{1}, 1, 91.0), ConfigError);
}

TEST_CASE("threshold then column-normalize") {
  std::vector<double> raw = {1.0, 0.984, 0.1, 0.984, 1.0, 0.2, 0.1, 0.2, 1.0};
  auto p = threshold_and_standardize(raw, 3, 45.0);
  CHECK(p[0] == doctest::Approx(1.0 / 1.984));
  CHECK(p[3] == doctest::Approx(0.984 / 1.984));
  CHECK(p[0] == doctest::Approx(0.5040).epsilon(1e-4));
  CHECK(p[3] == doctest::Approx(0.4960).epsilon(1e-4));
  CHECK(p[6] == 0.0);
  CHECK(p[8] == 1.0);

  auto all = threshold_and_standardize(raw, 3, 90.0);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      s += all[i * 3 + j];
      CHECK(all[i * 3 + j] > 0.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  std::vector<double> indep = {1, 0.01, 0.02, 0.01, 1, 0.03, 0.02, 0.03, 1};
  auto eye = threshold_and_standardize(indep, 3, 45.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(eye[i * 3 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("processed entries respect the threshold and columns sum to one") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_series(8, 5, rng);
    for (std::size_t r = 0; r < 8; ++r) s[r * 5 + 4] = s[r * 5 + 0] * 0.9 + 0.1 * s[r * 5 + 4];
    const double theta = 10.0 + 4.0 * trial;
    auto m = build(s, 8, 5, theta);
    const double cut = std::cos(theta * std::numbers::pi / 180.0);
    for (std::size_t j = 0; j < 5; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        sum += m.at(i, j);
        if (m.at(i, j) != 0.0) CHECK(m.raw_at(i, j) >= cut);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("applying the matrix") {
  std::mt19937_64 rng(3);
  auto x = testutil::randn({2, 5, 3}, rng);
  CHECK(values(apply_relation(x, RelationMatrix::identity(3))) == values(x));

  RelationMatrix perm = RelationMatrix::identity(3);
  perm.processed = {0, 1, 0, 0, 0, 1, 1, 0, 0};  // column i picks variate (i+2)%3
  auto y = apply_relation(x, perm);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.data()[r * 3 + i] == x.data()[r * 3 + (i + 2) % 3]);

  RelationMatrix mixed = RelationMatrix::identity(3);
  mixed.processed = {1, 0.5, 0, 0, 0.5, 0, 0, 0, 1};  // columns 0 and 2 keep only themselves
  auto z = apply_relation(x, mixed);
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(z.data()[r * 3 + 0] == x.data()[r * 3 + 0]);
    CHECK(z.data()[r * 3 + 2] == x.data()[r * 3 + 2]);
  }
  CHECK_THROWS_AS(apply_relation(Tensor::zeros({1, 2, 4}), mixed), DimensionError);

  auto in = Tensor::zeros({2, 4, 3});
  for (int point = 0; point < 10; ++point) {
    testutil::fill_randn(in, rng);
    GradCheckOptions opt;
    opt.seed = 40 + point;
    CHECK(check_gradients([&] { return apply_relation(in, mixed); }, {{"in", in}}, opt).max_rel_error < 1e-4);
  }
}

TEST_CASE("bic arithmetic and the gaussian proxy") {
  CHECK(bic_score(100, 5, -10.0) == doctest::Approx(5.0 * std::log(100.0) + 20.0));
  CHECK(bic_score(100, 5, -10.0) == doctest::Approx(43.026).epsilon(1e-4));
  CHECK(bic_score(500, 7, -3.0) > bic_score(500, 6, -3.0));

  std::vector<double> zeros(10, 0.0);
  CHECK(std::isfinite(bic_score(10, 2, gaussian_log_likelihood(zeros))));

  std::mt19937_64 rng(4);
  auto r = random_series(200, 1, rng);
  double ss = 0.0;
  for (double v : r) ss += v * v;
  const double s2 = ss / 200.0;
  double direct = 0.0;
  for (double v : r) direct += -0.5 * std::log(2.0 * std::numbers::pi * s2) - v * v / (2.0 * s2);
  CHECK(gaussian_log_likelihood(r) == doctest::Approx(direct).epsilon(1e-12));
}
