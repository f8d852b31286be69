#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rtnet/error.hpp"
#include "rtnet/gradcheck.hpp"
#include "rtnet/normalization.hpp"
#include "rtnet/ops.hpp"

using namespace rtnet;
using namespace rtnet::norm;
using testutil::randn;
using testutil::values;

TEST_CASE("norm kind names round-trip") {
  for (auto k : {NormKind::WN, NormKind::BN, NormKind::LN, NormKind::None}) CHECK(parse_norm_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_norm_kind("GN"), ConfigError);
}

TEST_CASE("batch norm standardizes per channel") {
  auto p = BatchNormParams::create(1);
  p.eps = 1e-12;
  auto y = batch_norm(Tensor::from({3, 1}, {1, 2, 3}), p, true);
  CHECK(y.data()[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(y.data()[1] == doctest::Approx(0.0));
  CHECK(y.data()[2] == doctest::Approx(1.2247448714).epsilon(1e-9));

  auto y2 = batch_norm(Tensor::from({3, 1}, {2, 4, 6}), p, true);
  for (int i = 0; i < 3; ++i) CHECK(y2.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-10));

  p.gamma.data()[0] = 2.0;
  p.beta.data()[0] = 1.0;
  auto y3 = batch_norm(Tensor::from({3, 1}, {1, 2, 3}), p, true);
  for (int i = 0; i < 3; ++i) CHECK(y3.data()[i] == doctest::Approx(2.0 * y.data()[i] + 1.0));
}

TEST_CASE("batch norm training output ignores per-batch affine rescaling") {
  std::mt19937_64 rng(2);
  auto p = BatchNormParams::create(3);
  p.eps = 1e-14;
  auto x = randn({4, 3, 5}, rng);
  auto a = batch_norm(x, p, true);
  auto z = x.clone();
  for (auto& v : z.data()) v = 7.0 * v - 3.0;
  auto b = batch_norm(z, p, true);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(b.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-10));
}

TEST_CASE("batch norm running statistics and eval mode") {
  auto p = BatchNormParams::create(1);
  batch_norm(Tensor::from({4, 1}, {1, 2, 3, 4}), p, true);
  CHECK(p.running_mean[0] == doctest::Approx(0.25));
  CHECK(p.running_var[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
  auto y = batch_norm(Tensor::from({1, 1}, {0.25}), p, false);
  CHECK(y.data()[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(batch_norm(Tensor::from({1, 1}, {0.25}), p, true), ConfigError);
  for (double v : p.running_var) CHECK(v >= 0.0);
}

TEST_CASE("layer norm standardizes each instance") {
  auto p = LayerNormParams::create(1);
  p.eps = 1e-12;
  auto y = layer_norm(Tensor::from({1, 1, 3}, {1, 2, 3}), p);
  CHECK(y.data()[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(y.data()[2] == doctest::Approx(1.2247448714).epsilon(1e-9));

  std::mt19937_64 rng(5);
  auto q = LayerNormParams::create(4);
  auto x = randn({3, 4, 6}, rng);
  auto base = layer_norm(x, q);
  auto shifted = x.clone();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < 24; ++k) shifted.data()[b * 24 + k] += 10.0 * (b + 1);
  auto moved = layer_norm(shifted, q);
  for (std::size_t i = 0; i < base.numel(); ++i) CHECK(moved.data()[i] == doctest::Approx(base.data()[i]).epsilon(1e-8));

  for (auto& g : q.gain.data()) g = 0.0;
  for (std::size_t c = 0; c < 4; ++c) q.bias.data()[c] = static_cast<double>(c);
  auto flat = layer_norm(x, q);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t t = 0; t < 6; ++t) CHECK(flat.data()[(b * 4 + c) * 6 + t] == static_cast<double>(c));

  CHECK_THROWS_AS(layer_norm(Tensor::from({2, 1}, {1, 2}), LayerNormParams::create(1)), ConfigError);
  CHECK_THROWS_AS(layer_norm(x, LayerNormParams::create(4), 3), ConfigError);

  // Grouped statistics: perturbing block 0 leaves block 1 untouched.
  auto g = LayerNormParams::create(4);
  auto lhs = layer_norm(x, g, 2);
  auto bumped = x.clone();
  for (std::size_t k = 0; k < 12; ++k) bumped.data()[k] *= 5.0;
  auto rhs = layer_norm(bumped, g, 2);
  for (std::size_t k = 12; k < 24; ++k) CHECK(rhs.data()[k] == lhs.data()[k]);
}

TEST_CASE("weight norm reparameterization") {
  WeightNormParam p{Tensor::from({1, 2}, {3, 4}), Tensor::from({1}, {2})};
  auto w = weight_norm_effective(p);
  CHECK(w.data()[0] == doctest::Approx(1.2));
  CHECK(w.data()[1] == doctest::Approx(1.6));

  std::mt19937_64 rng(6);
  auto weight = randn({5, 2, 3}, rng);
  auto from = WeightNormParam::from_weight(weight);
  auto same = weight_norm_effective(from);
  for (std::size_t i = 0; i < weight.numel(); ++i) CHECK(same.data()[i] == doctest::Approx(weight.data()[i]).epsilon(1e-13));

  auto scaled = from;
  scaled.v = from.v.clone();
  for (auto& v : scaled.v.data()) v *= 17.5;
  auto w2 = weight_norm_effective(scaled);
  for (std::size_t i = 0; i < weight.numel(); ++i) CHECK(w2.data()[i] == doctest::Approx(same.data()[i]).epsilon(1e-13));

  for (std::size_t o = 0; o < 5; ++o) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < 6; ++k) n2 += same.data()[o * 6 + k] * same.data()[o * 6 + k];
    CHECK(std::abs(std::sqrt(n2) - from.g.data()[o]) < 1e-12);
  }

  WeightNormParam zero{Tensor::from({2, 2}, {1, 1, 0, 0}), Tensor::from({2}, {1, 1})};
  try {
    weight_norm_effective(zero);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("a weight-normalized layer matches the plain layer with the same effective weight") {
  std::mt19937_64 rng(7);
  auto weight = randn({4, 2, 3}, rng);
  auto x = randn({2, 4, 10}, rng);
  auto b = randn({4}, rng);
  auto wn = WeightNormParam::from_weight(weight);
  for (auto& g : wn.g.data()) g *= 1.3;
  auto eff = weight_norm_effective(wn);
  auto plain = conv1d_grouped(x, eff.clone(), b, 1, 1, 2);
  auto via = conv1d_grouped(x, weight_norm_effective(wn), b, 1, 1, 2);
  CHECK(values(plain) == values(via));
}

TEST_CASE("finite differences: normalization layers") {
  std::mt19937_64 rng(10);
  auto x = Tensor::zeros({3, 2, 4});
  auto bn = BatchNormParams::create(2);
  auto ln = LayerNormParams::create(2);
  for (int point = 0; point < 10; ++point) {
    testutil::fill_randn(x, rng);
    testutil::fill_randn(bn.gamma, rng);
    testutil::fill_randn(bn.beta, rng);
    testutil::fill_randn(ln.gain, rng);
    testutil::fill_randn(ln.bias, rng);
    GradCheckOptions opt;
    opt.seed = 500 + point;
    auto r1 = check_gradients([&] { return batch_norm(x, bn, true); },
                              {{"x", x}, {"gamma", bn.gamma}, {"beta", bn.beta}}, opt);
    CHECK(r1.max_rel_error < 1e-4);
    auto r2 = check_gradients([&] { return batch_norm(x, bn, false); }, {{"x", x}, {"gamma", bn.gamma}}, opt);
    CHECK(r2.max_rel_error < 1e-4);
    auto r3 = check_gradients([&] { return layer_norm(x, ln); },
                              {{"x", x}, {"gain", ln.gain}, {"bias", ln.bias}}, opt);
    CHECK(r3.max_rel_error < 1e-4);
    auto r4 = check_gradients([&] { return layer_norm(x, ln, 2); },
                              {{"x", x}, {"gain", ln.gain}, {"bias", ln.bias}}, opt);
    CHECK(r4.max_rel_error < 1e-4);
  }
}
