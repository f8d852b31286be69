#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rtnet/data.hpp"
#include "rtnet/error.hpp"
#include "rtnet/gradcheck.hpp"
#include "rtnet/model.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/tape.hpp"
#include "rtnet/training.hpp"

using namespace rtnet;
using namespace rtnet::training;
using testutil::randn;
using testutil::values;

namespace {

// Two AR(1) channels with different persistence, standardized-ish scale.
data::TimeSeriesDataset ar1(std::size_t length, std::uint64_t seed, std::size_t n = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> v(length * n);
  std::vector<double> prev(n, 0.0);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      prev[i] = (0.9 - 0.2 * static_cast<double>(i)) * prev[i] + noise(rng);
      v[t * n + i] = prev[i];
    }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i));
  return data::make_dataset(std::move(v), std::move(names), 1467331200, 3600);
}

model::ModelConfig small_model(std::size_t n = 2) {
  model::ModelConfig c;
  c.input_length = 16;
  c.output_length = 4;
  c.variates = n;
  c.groups = n;
  c.channels = 2 * n;
  c.blocks = 2;
  c.dropout = 0.0;
  return c;
}

TrainConfig small_train() {
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 16;
  t.contrastive_batch_size = 8;
  t.head_batch_size = 16;
  t.lr = 1e-3;
  t.max_eval_windows = 64;
  return t;
}

}  // namespace

TEST_CASE("loss vector examples") {
  std::mt19937_64 rng(3);
  Tensor truth = randn({2, 4, 7}, rng);
  Tensor same = mse_loss_vector(truth.clone(), truth);
  CHECK(same.numel() == 7);
  for (double v : same.data()) CHECK(v == 0.0);
  Tensor shifted = truth.clone();
  for (auto& v : shifted.data()) v += 0.3;
  Tensor offset_loss = mse_loss_vector(shifted, truth);
  for (double v : offset_loss.data()) CHECK(v == doctest::Approx(0.09).epsilon(1e-12));
  CHECK_THROWS_AS(mse_loss_vector(randn({2, 4, 6}, rng), truth), DimensionError);
}

TEST_CASE("loss vector gradient") {
  std::mt19937_64 rng(4);
  Tensor pred = randn({2, 3, 4}, rng), truth = randn({2, 3, 4}, rng);
  auto r = check_gradients([&] { return mse_loss_vector(pred, truth); }, {{"pred", pred}});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("augmentation bounds") {
  std::mt19937_64 rng(5);
  Tensor x = randn({16, 3}, rng);
  for (auto kind : {AugmentKind::Scaling, AugmentKind::Jittering, AugmentKind::EntiretyScaling}) {
    Tensor same = augment(x, {kind, 0.0}, rng);
    CHECK(values(same) == values(x));
    CHECK(same.impl() != x.impl());
  }
  Tensor j = augment(x, {AugmentKind::Jittering, 0.2}, rng);
  for (std::size_t k = 0; k < x.numel(); ++k) CHECK(std::abs(j.data()[k] - x.data()[k]) <= 0.2);
  Tensor s = augment(x, {AugmentKind::Scaling, 0.2}, rng);
  for (std::size_t k = 0; k < x.numel(); ++k) {
    const double ratio = s.data()[k] / x.data()[k];
    CHECK(ratio >= 0.8);
    CHECK(ratio <= 1.2);
  }
  Tensor e = augment(x, {AugmentKind::EntiretyScaling, 0.2}, rng);
  const double r0 = e.data()[0] / x.data()[0];
  CHECK(r0 >= 0.8);
  CHECK(r0 <= 1.2);
  for (std::size_t k = 1; k < x.numel(); ++k) CHECK(e.data()[k] / x.data()[k] == doctest::Approx(r0).epsilon(1e-12));
  CHECK_THROWS_AS(augment(x, {AugmentKind::Scaling, -0.1}, rng), ConfigError);
}

TEST_CASE("augmentation kind is uniform") {
  std::mt19937_64 rng(6);
  int counts[3] = {0, 0, 0};
  for (int k = 0; k < 30000; ++k) ++counts[static_cast<int>(random_augment_kind(rng))];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("condition one arithmetic") {
  CHECK(condition1_gap(168, 1.0) == 168);
  CHECK(168 - condition1_gap(168, 4.0) == 126);
  CHECK(window_overlap(0, 42, 168) == 126);
  CHECK(window_overlap(0, 200, 168) == 0);
  CHECK(condition1_max_batch(101, 100, 1.0) == 2);
  CHECK(condition1_gap(10, 3.0) == 4);
}

TEST_CASE("condition one infeasible request") {
  std::mt19937_64 rng(7);
  // A series of 1000 rows hosts 101 input windows of length 900.
  const std::size_t windows = 101;
  CHECK_THROWS_AS(sample_condition1(windows, 2, 900, 1.0, rng), SamplerError);
  try {
    sample_condition1(windows, 2, 900, 1.0, rng);
  } catch (const SamplerError& e) {
    CHECK(std::string(e.what()).find("maximum feasible batch is 1") != std::string::npos);
  }
}

TEST_CASE("condition one batches respect the overlap bound") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick_len(4, 64), pick_windows(1, 600);
  std::uniform_real_distribution<double> pick_alpha(1.0, 8.0);
  std::size_t checked = 0;
  while (checked < 500) {
    const std::size_t L = pick_len(rng), W = pick_windows(rng);
    const double alpha = pick_alpha(rng);
    const std::size_t max_b = condition1_max_batch(W, L, alpha);
    std::uniform_int_distribution<std::size_t> pick_b(1, max_b);
    const std::size_t B = pick_b(rng);
    auto offs = sample_condition1(W, B, L, alpha, rng);
    REQUIRE(offs.size() == B);
    const double bound = static_cast<double>(L) * (1.0 - 1.0 / alpha) + 1e-9;
    for (std::size_t a = 0; a < B; ++a) {
      CHECK(offs[a] < W);
      for (std::size_t b = a + 1; b < B; ++b) {
        CHECK(offs[a] != offs[b]);
        CHECK(static_cast<double>(window_overlap(offs[a], offs[b], L)) <= bound);
      }
    }
    CHECK_THROWS_AS(sample_condition1(W, max_b + 1, L, alpha, rng), SamplerError);
    ++checked;
  }
}

TEST_CASE("similarity range") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 1000; ++k) {
    Tensor u = randn({5}, rng), v = randn({5}, rng);
    const double s = similarity(u.data(), v.data());
    CHECK(s >= 1.0);
    CHECK(s <= std::numbers::e + 1e-12);
  }
  std::vector<double> a{1, 2}, b{-2, -4};
  CHECK(similarity(a, b) == doctest::Approx(std::numbers::e));
  std::vector<double> c{2, -1};
  CHECK(similarity(a, c) == doctest::Approx(1.0));
}

TEST_CASE("contrastive loss closed forms") {
  std::mt19937_64 rng(10);
  Tensor one = randn({1, 6}, rng);
  CHECK(contrastive_loss(one, 1, 0, 1).item() == doctest::Approx(0.0).epsilon(1e-15));

  Tensor h = randn({1, 6}, rng);
  std::vector<double> twice(values(h));
  twice.insert(twice.end(), twice.begin(), twice.end());
  Tensor pair = Tensor::from({2, 6}, twice);
  CHECK(contrastive_loss(pair, 2, 0, 1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Orthogonal windows: each window sees only itself.
  Tensor ortho = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(contrastive_loss(ortho, 2, 0, 1).item() == doctest::Approx(std::log(std::numbers::e + 1.0) - 1.0));

  Tensor zero = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(contrastive_loss(zero, 2, 0, 1), NumericalError);
  CHECK_THROWS_AS(contrastive_loss(randn({3, 4}, rng), 2, 0, 1), DimensionError);
}

TEST_CASE("contrastive loss groups are independent") {
  std::mt19937_64 rng(11);
  Tensor reps = randn({6, 8}, rng);
  Tensor loss = contrastive_loss(reps, 3, 1, 2);
  for (std::size_t g = 0; g < 2; ++g) {
    std::vector<double> block;
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t k = 0; k < 4; ++k) block.push_back(reps.data()[r * 8 + g * 4 + k]);
    Tensor alone = Tensor::from({6, 4}, block);
    CHECK(loss.data()[g] == doctest::Approx(contrastive_loss(alone, 3, 1, 1).item()).epsilon(1e-13));
  }
}

TEST_CASE("contrastive loss is nonnegative") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> pick_b(1, 5), pick_i(0, 3), pick_f(1, 6);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t B = pick_b(rng), I = pick_i(rng), F = pick_f(rng);
    Tensor reps = randn({B * (1 + I), F}, rng);
    CHECK(contrastive_loss(reps, B, I, 1).item() >= -1e-12);
  }
}

TEST_CASE("contrastive loss finite differences") {
  std::mt19937_64 rng(13);
  Tensor reps = randn({12, 6}, rng);
  GradCheckOptions opts;
  auto r = check_gradients([&] { return contrastive_loss(reps, 3, 3, 2); }, {{"reps", reps}}, opts);
  CHECK(r.kinks_skipped * 20 <= r.checked);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("early stop examples") {
  std::vector<double> improving{5, 4, 3, 2, 1};
  for (std::size_t n = 1; n <= improving.size(); ++n)
    CHECK_FALSE(early_stop(std::span(improving).first(n), 1).stop);
  std::vector<double> worse{1.0, 1.1, 1.2};
  CHECK_FALSE(early_stop(std::span(worse).first(2), 2).stop);
  auto d = early_stop(worse, 2);
  CHECK(d.stop);
  CHECK(d.best_index == 0);
  std::vector<double> flat{2.0, 2.0};
  CHECK(early_stop(flat, 1).stop);
  CHECK_FALSE(early_stop(std::span(flat).first(1), 1).stop);
  CHECK_THROWS_AS(early_stop(flat, 0), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.alpha = 0.5;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.patience = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(parse_format("e2e") == Format::EndToEnd);
  CHECK(parse_format(to_string(Format::Contrastive)) == Format::Contrastive);
  CHECK_THROWS_AS(parse_format("bogus"), ConfigError);
}

TEST_CASE("one epoch reduces training loss on AR(1)") {
  auto ds = ar1(600, 21);
  auto val = ar1(200, 22);
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::RTNet net(small_model(), seed);
    EvalOptions opts;
    const double before = evaluate(net, ds, opts).mse;
    TrainConfig t = small_train();
    t.seed = seed;
    train_end_to_end(net, {&ds, &val}, t);
    const double after = evaluate(net, ds, opts).mse;
    if (after < before) ++wins;
  }
  CHECK(wins >= 3);
}

TEST_CASE("fixed seed gives identical histories") {
  auto ds = ar1(400, 23);
  auto val = ar1(150, 24);
  auto run = [&] {
    auto cfg = small_model();
    cfg.dropout = 0.1;
    model::RTNet net(cfg, 9);
    TrainConfig t = small_train();
    t.epochs = 2;
    t.patience = 5;
    return train_end_to_end(net, {&ds, &val}, t);
  };
  History a = run(), b = run();
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
    CHECK(a.epochs[e].val_mse == b.epochs[e].val_mse);
    CHECK(a.epochs[e].val_mae == b.epochs[e].val_mae);
  }
}

TEST_CASE("patience one stops after two evaluations when validation worsens") {
  // Training targets sit near 2 while validation is all zeros, so every
  // epoch drags predictions further from the validation truth.
  std::mt19937_64 rng(25);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> level(400 * 2), zeros(150 * 2, 0.0);
  for (auto& v : level) v = 2.0 + noise(rng);
  auto ds = data::make_dataset(level, {"a", "b"}, 0, 3600);
  auto val = data::make_dataset(zeros, {"a", "b"}, 0, 3600);
  model::RTNet net(small_model(), 2);
  TrainConfig t = small_train();
  t.epochs = 10;
  t.patience = 1;
  t.lr = 1e-2;
  std::size_t calls = 0;
  History h = train_end_to_end(net, {&ds, &val}, t, [&](const EpochRecord&) { ++calls; });
  REQUIRE(h.epochs.size() == 2);
  CHECK(h.epochs[1].val_mse > h.epochs[0].val_mse);
  CHECK(h.stopped_early);
  CHECK(h.best_epoch == 0);
  CHECK(calls == 2);
}

TEST_CASE("best validation parameters are restored") {
  auto ds = ar1(400, 27);
  auto val = ar1(150, 28);
  model::RTNet net(small_model(), 3);
  TrainConfig t = small_train();
  t.epochs = 4;
  t.patience = 4;
  t.max_eval_windows = 0;
  t.lr = 3e-3;
  History h = train_end_to_end(net, {&ds, &val}, t);
  double best = h.epochs[0].val_mse;
  for (auto& r : h.epochs) best = std::min(best, r.val_mse);
  CHECK(h.epochs[h.best_epoch].val_mse == best);
  EvalOptions opts;
  CHECK(evaluate(net, val, opts).mse == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("evaluation on raw scale") {
  auto ds = ar1(300, 29);
  data::Standardizer s;
  s.mean = {1.0, -2.0};
  s.std = {2.0, 0.5};
  model::RTNet net(small_model(), 4);
  EvalOptions std_opts, raw_opts;
  raw_opts.raw_scale = &s;
  auto a = evaluate(net, ds, std_opts), b = evaluate(net, ds, raw_opts);
  const double expect = (a.per_variate_mse[0] * 4.0 + a.per_variate_mse[1] * 0.25) / 2.0;
  CHECK(b.mse == doctest::Approx(expect).epsilon(1e-10));
  EvalOptions few;
  few.max_windows = 5;
  CHECK(evaluate(net, ds, few).windows == 5);
}

TEST_CASE("contrastive stage 1 loss falls and stage 2 leaves the backbone alone") {
  auto ds = ar1(800, 30);
  auto val = ar1(200, 31);
  model::RTNet net(small_model(), 5);
  TrainConfig t = small_train();
  t.epochs = 2;
  t.max_batches_per_epoch = 25;
  t.patience = 5;
  std::uint64_t frozen_sum = 0;
  std::size_t epochs_seen = 0;
  History h = train_contrastive(net, {&ds, &val}, t, [&](const EpochRecord&) {
    if (epochs_seen++ == 0) frozen_sum = net.backbone_checksum();
    CHECK(net.backbone_frozen());
  });
  REQUIRE(h.stage1_step_loss.size() == 50);
  CHECK(std::isfinite(h.stage1_step_loss.front()));
  CHECK(h.stage1_step_loss.front() >= 0.0);
  double first = 0, last = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    first += h.stage1_step_loss[k];
    last += h.stage1_step_loss[40 + k];
  }
  CHECK(last < first);
  CHECK(h.epochs.size() >= 1);
  CHECK(net.backbone_checksum() == frozen_sum);
}

TEST_CASE("stage 2 gradients never reach the backbone") {
  auto ds = ar1(200, 32);
  auto cfg = small_model();
  cfg.time_features = data::kTimeFeatures;
  cfg.time_mode = model::TimeMode::Decoupled;
  model::RTNet net(cfg, 6);
  net.freeze_backbone();
  std::vector<std::size_t> offs{0, 10, 20};
  auto batch = data::make_batch(ds, offs, cfg.input_length, cfg.output_length, marks_for(cfg));
  for (auto& p : net.parameters()) p.tensor.zero_grad();
  GradTape tape;
  Tensor total;
  {
    TapeScope scope(tape);
    Tensor pred = net.forward_contrastive({batch.inputs, batch.input_marks, batch.target_marks}, true);
    total = sum(mse_loss_vector(pred, batch.targets));
  }
  tape.backward(total);
  for (auto& p : net.backbone_parameters())
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) CHECK(g == 0.0);
  double head_norm = 0.0;
  for (auto& p : net.head_parameters())
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) head_norm += g * g;
  CHECK(head_norm > 0.0);
}

TEST_CASE("masking one loss entry isolates its head rows") {
  auto ds = ar1(200, 33, 3);
  auto cfg = small_model(3);
  cfg.time_features = data::kTimeFeatures;
  cfg.time_mode = model::TimeMode::Decoupled;
  model::RTNet net(cfg, 7);
  std::vector<std::size_t> offs{0, 7, 30, 41};
  auto batch = data::make_batch(ds, offs, cfg.input_length, cfg.output_length, marks_for(cfg));

  auto grads = [&](std::vector<double> mask) {
    for (auto& p : net.parameters()) p.tensor.zero_grad();
    GradTape tape;
    Tensor total;
    {
      TapeScope scope(tape);
      Tensor pred = net.forward({batch.inputs, batch.input_marks, batch.target_marks}, false);
      total = sum(mul(mse_loss_vector(pred, batch.targets), Tensor::from({3}, std::move(mask))));
    }
    tape.backward(total);
    std::map<std::string, std::vector<double>> out;
    for (auto& p : net.head_parameters()) {
      auto g = p.tensor.grad();
      out[p.name] = {g.begin(), g.end()};
    }
    return out;
  };
  auto full = grads({1, 1, 1});
  auto masked = grads({1, 0, 1});
  REQUIRE(!full.empty());
  for (auto& [name, g] : full) {
    const auto& m = masked[name];
    const std::size_t per = g.size() / 3;  // every head tensor is laid out group-major
    for (std::size_t k = 0; k < g.size(); ++k) {
      CAPTURE(name);
      CAPTURE(k);
      if (k / per == 1)
        CHECK(m[k] == 0.0);
      else
        CHECK(m[k] == doctest::Approx(g[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("history csv") {
  History h;
  h.epochs.push_back({0, {0.5, 0.25}, 0.4, 0.3});
  const auto path = (std::filesystem::temp_directory_path() / "rtnet_history_test.csv").string();
  write_history_csv(path, h, {"a", "b"});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "phase,epoch,train_loss_a,train_loss_b,val_mse,val_mae");
  CHECK(row == "e2e,0,0.5,0.25,0.40000000000000002,0.29999999999999999");
  std::filesystem::remove(path);
}
