#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rtnet/error.hpp"
#include "rtnet/gradcheck.hpp"
#include "rtnet/model.hpp"
#include "rtnet/model_json.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/tape.hpp"

using namespace rtnet;
using namespace rtnet::model;
using testutil::randn;
using testutil::values;

namespace {

ModelConfig toy(std::size_t n = 3, std::size_t groups = 3) {
  ModelConfig c;
  c.input_length = 16;
  c.output_length = 4;
  c.variates = n;
  c.channels = 2 * groups;
  c.blocks = 2;
  c.groups = groups;
  c.dropout = 0.0;
  return c;
}

void zero_all(ParamList params) {
  for (auto& p : params)
    for (auto& v : p.tensor.data()) v = 0.0;
}

ModelInput input_for(const ModelConfig& c, std::size_t B, std::mt19937_64& rng) {
  ModelInput in;
  in.inputs = randn({B, c.input_length, c.variates}, rng);
  if (c.time_features) {
    in.input_marks = randn({B, c.input_length, c.time_features}, rng, 0.3);
    in.target_marks = randn({B, c.output_length, c.time_features}, rng, 0.3);
  }
  return in;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.kernel = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.input_length = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.variates = 7;
  c.groups = 7;
  c.channels = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.channels = 56;
  CHECK_NOTHROW(c.validate());
  c.groups = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.time_mode = TimeMode::Decoupled;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.time_features = 6;
  CHECK_NOTHROW(c.validate());

  CHECK(parse_time_mode("w-o") == TimeMode::Decoupled);
  CHECK(parse_time_mode("w-i") == TimeMode::Concat);
  CHECK(parse_time_mode("without") == TimeMode::None);
  CHECK_THROWS_AS(parse_time_mode("sometimes"), ConfigError);
}

TEST_CASE("config JSON is strict and round-trips") {
  ModelConfig c = toy();
  c.norm = norm::NormKind::LN;
  c.time_mode = TimeMode::Concat;
  c.time_features = 6;
  auto back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  auto j = to_json(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
}

TEST_CASE("feature size follows the per-branch rows") {
  ModelConfig c;
  c.input_length = 168;
  c.channels = 16;
  c.blocks = 3;
  CHECK(c.feature_size() == 7 * 168 * 16 / 4);
  for (std::size_t b = 1; b <= 3; ++b) {
    c.blocks = b;
    // The deepest branch always ends with L_in * D values.
    CHECK(((c.channels << b) * (c.input_length >> b)) == 168 * 16);
  }
}

TEST_CASE("embedding keeps the length and assigns channels per variate") {
  ModelConfig c;
  c.variates = 7;
  c.groups = 7;
  c.channels = 56;
  c.blocks = 3;
  c.dropout = 0.0;
  RTNet net(c, 1);
  std::mt19937_64 rng(2);
  ModelInput in = input_for(c, 2, rng);
  Tensor e = net.embed_input(in);
  CHECK(e.shape() == Shape{2, 7, 168});
  auto f = net.cpn_forward(e, false, nullptr);
  REQUIRE(f.branches.size() == 3);
  CHECK(f.branches[0].shape() == Shape{2, 56 * 8, 21});
  CHECK(f.branches[1].shape() == Shape{2, 56 * 4, 21});
  CHECK(f.branches[2].shape() == Shape{2, 56 * 2, 21});
  CHECK(f.concat.shape() == Shape{2, 7 * 168 * 56 / 4});

  // An embedding with zero weights yields its bias on every step.
  std::mt19937_64 init(3);
  ConvUnit embed("e", 7, 56, 3, 1, 1, 7, norm::NormKind::None, false, init);
  ParamList ps;
  BufferList bs;
  embed.collect(ps, bs);
  for (auto& v : ps[0].tensor.data()) v = 0.0;
  Tensor out = embed.forward(e, false);
  CHECK(out.shape() == Shape{2, 56, 168});
  for (std::size_t ch = 0; ch < 56; ++ch)
    for (std::size_t t = 0; t < 168; ++t) CHECK(out.data()[ch * 168 + t] == ps[1].tensor.data()[ch]);
}

TEST_CASE("RTBlock shapes and the zero main path") {
  ModelConfig c;
  c.groups = 1;
  c.norm = norm::NormKind::None;
  c.dropout = 0.0;
  std::mt19937_64 rng(4);
  RTBlock block("b", 16, c, rng);
  auto x = randn({2, 16, 168}, rng);
  CHECK(block.forward(x, false, nullptr).shape() == Shape{2, 32, 84});

  ParamList ps;
  BufferList bs;
  block.collect(ps, bs);
  zero_all(ps);
  auto nonneg = relu(x);
  auto y = block.forward(nonneg, false, nullptr);
  auto shortcut = channel_upsample(maxpool1d(nonneg, 3, 2, 1), 2, 1);
  CHECK(values(y) == values(shortcut));

  RTBlock b1("s1", 16, c, rng), b2("s2", 32, c, rng), b3("s3", 64, c, rng);
  auto h = b3.forward(b2.forward(b1.forward(x, false, nullptr), false, nullptr), false, nullptr);
  CHECK(h.shape() == Shape{2, 128, 21});
  CHECK_THROWS_AS(b1.forward(randn({1, 16, 7}, rng), false, nullptr), ConfigError);
}

TEST_CASE("CPN branches read trailing slices and stay independent") {
  ModelConfig c;
  c.blocks = 3;
  c.dropout = 0.0;
  std::mt19937_64 rng(5);
  std::vector<CpnBranch> br;
  for (std::size_t i = 1; i <= 3; ++i) br.emplace_back(i, c, rng);
  CHECK(br[0].slice_length() == 168);
  CHECK(br[1].slice_length() == 84);
  CHECK(br[2].slice_length() == 42);
  CHECK(br[0].depth() == 3);
  CHECK(br[2].depth() == 1);

  RTNet net(c, 6);
  ModelInput in = input_for(c, 2, rng);
  auto base = net.cpn_forward(net.embed_input(in), false, nullptr);
  for (auto& b : base.branches) CHECK(b.dim(2) == 21);
  for (auto& p : net.backbone_parameters())
    if (p.name.rfind("cpn.2.", 0) == 0)
      for (auto& v : p.tensor.data()) v += 0.5;
  auto moved = net.cpn_forward(net.embed_input(in), false, nullptr);
  CHECK(values(moved.branches[0]) == values(base.branches[0]));
  CHECK(values(moved.branches[2]) == values(base.branches[2]));
  CHECK(values(moved.branches[1]) != values(base.branches[1]));

  // The shallow branch never sees the oldest half of the window.
  ModelInput early = in;
  early.inputs = in.inputs.clone();
  for (std::size_t t = 0; t < 84; ++t) early.inputs.data()[t] += 3.0;
  auto e = net.cpn_forward(net.embed_input(early), false, nullptr);
  CHECK(values(e.branches[1]) == values(moved.branches[1]));
  CHECK(values(e.branches[2]) == values(moved.branches[2]));
}

TEST_CASE("TimeNet keeps the prediction length and quadruples D") {
  ModelConfig c = toy();
  c.time_mode = TimeMode::Decoupled;
  c.time_features = 6;
  c.output_length = 24;
  std::mt19937_64 rng(7);
  TimeNet tn(c, rng);
  auto out = tn.forward(randn({3, 24, 6}, rng), false, nullptr);
  CHECK(out.shape() == Shape{3, 4 * c.channels, 24});
}

TEST_CASE("heads") {
  std::mt19937_64 rng(8);
  SUBCASE("univariate output shape and zero model") {
    ModelConfig c;
    c.input_length = 32;
    c.output_length = 24;
    c.norm = norm::NormKind::None;
    c.time_mode = TimeMode::Decoupled;
    c.time_features = 6;
    RTNet net(c, 1);
    auto in = input_for(c, 5, rng);
    CHECK(net.forward(in, false).shape() == Shape{5, 24, 1});
    zero_all(net.parameters());
    auto zero = net.forward(in, false);
    for (double v : zero.data()) CHECK(v == 0.0);
  }
  SUBCASE("disabled time branch leaves the AR output") {
    ModelConfig c = toy();
    RTNet net(c, 2);
    auto in = input_for(c, 2, rng);
    in.target_marks = randn({2, c.output_length, 6}, rng);
    auto a = net.forward(in, false);
    in.target_marks = randn({2, c.output_length, 6}, rng);
    CHECK(values(net.forward(in, false)) == values(a));
    CHECK(a.shape() == Shape{2, 4, 3});
  }
  SUBCASE("concat time mode widens the input") {
    ModelConfig c = toy();
    c.time_mode = TimeMode::Concat;
    c.time_features = 2;
    RTNet net(c, 3);
    auto in = input_for(c, 2, rng);
    CHECK(net.embed_input(in).shape() == Shape{2, 3 + 3 * 2, 16});
    CHECK(net.forward(in, false).shape() == Shape{2, 4, 3});
  }
}

TEST_CASE("contrastive head is detached from the backbone") {
  ModelConfig c = toy();
  c.time_mode = TimeMode::Decoupled;
  c.time_features = 6;
  RTNet net(c, 9);
  std::mt19937_64 rng(9);
  auto in = input_for(c, 2, rng);
  CHECK_THROWS_AS(net.forward_contrastive(in, true), ContractError);
  const auto before = net.backbone_checksum();
  net.freeze_backbone();
  GradTape tape;
  Tensor loss;
  {
    TapeScope s(tape);
    auto out = net.forward_contrastive(in, true);
    CHECK(out.shape() == Shape{2, 4, 3});
    loss = sum(mul(out, out));
  }
  tape.backward(loss);
  for (auto& p : net.backbone_parameters()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) CHECK(g == 0.0);
  }
  bool head_moved = false;
  for (auto& p : net.head_parameters())
    for (double g : p.tensor.grad()) head_moved |= g != 0.0;
  CHECK(head_moved);
  CHECK(net.backbone_checksum() == before);
}

TEST_CASE("grouped network with identity relation isolates variates") {
  for (auto kind : {norm::NormKind::WN, norm::NormKind::LN, norm::NormKind::None}) {
    ModelConfig c = toy();
    c.norm = kind;
    c.use_relation = true;
    RTNet net(c, 10);
    net.set_relation(relation::RelationMatrix::identity(3));
    std::mt19937_64 rng(11);
    auto in = input_for(c, 2, rng);
    auto base = net.forward(in, false);
    auto poked = in;
    poked.inputs = in.inputs.clone();
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t t = 0; t < 16; ++t) poked.inputs.data()[(b * 16 + t) * 3 + 1] += 1e3 * (t % 3 == 0 ? -1 : 1);
    auto moved = net.forward(poked, false);
    for (std::size_t r = 0; r < 8; ++r) {
      CHECK(moved.data()[r * 3 + 0] == base.data()[r * 3 + 0]);
      CHECK(moved.data()[r * 3 + 2] == base.data()[r * 3 + 2]);
    }
  }
}

TEST_CASE("zero relation weights cut the dependence exactly") {
  ModelConfig c = toy();
  c.use_relation = true;
  c.dropout = 0.1;
  RTNet net(c, 12);
  relation::RelationMatrix m = relation::RelationMatrix::identity(3);
  // Column 0 mixes variates 0 and 1; variate 2 never feeds variate 0.
  m.processed = {0.6, 0.0, 0.3, 0.4, 1.0, 0.0, 0.0, 0.0, 0.7};
  net.set_relation(m);
  std::mt19937_64 rng(13);
  auto in = input_for(c, 2, rng);
  std::mt19937_64 d1(5), d2(5);
  auto base = net.forward(in, true, &d1);
  auto poked = in;
  poked.inputs = in.inputs.clone();
  std::normal_distribution<double> wild(0.0, 1e6);
  for (std::size_t r = 0; r < 32; ++r) poked.inputs.data()[r * 3 + 2] = wild(rng);
  auto moved = net.forward(poked, true, &d2);
  for (std::size_t r = 0; r < 8; ++r) CHECK(moved.data()[r * 3 + 0] == base.data()[r * 3 + 0]);
}

TEST_CASE("input Jacobian blocks follow the relation column ratios") {
  ModelConfig c = toy();
  c.use_relation = true;
  c.norm = norm::NormKind::None;
  RTNet net(c, 14);
  relation::RelationMatrix m = relation::RelationMatrix::identity(3);
  m.processed = {0.5, 0.0, 0.2, 0.3, 1.0, 0.0, 0.2, 0.0, 0.8};
  net.set_relation(m);
  std::mt19937_64 rng(15);
  auto in = input_for(c, 1, rng);
  in.inputs.set_requires_grad(true);
  for (std::size_t i : {0u, 2u}) {
    in.inputs.zero_grad();
    GradTape tape;
    Tensor out;
    {
      TapeScope s(tape);
      out = net.forward(in, false);
    }
    std::vector<double> seed(out.numel(), 0.0);
    for (std::size_t t = 0; t < 4; ++t) seed[t * 3 + i] = 1.0 + 0.1 * t;
    const Tensor roots[] = {out};
    const std::vector<double> seeds[] = {seed};
    tape.backward(roots, seeds);
    auto g = in.inputs.grad();
    // d out_i / d x_j = w_ji * d out_i / d z_i for every time step.
    for (std::size_t t = 0; t < 16; ++t) {
      const double base = g[t * 3 + i] / m.at(i, i);
      for (std::size_t j = 0; j < 3; ++j) CHECK(g[t * 3 + j] == doctest::Approx(m.at(j, i) * base).epsilon(1e-12));
    }
  }
}

TEST_CASE("every trainable parameter receives a gradient") {
  for (auto mode : {TimeMode::None, TimeMode::Decoupled, TimeMode::Concat})
    for (auto kind : {norm::NormKind::WN, norm::NormKind::BN, norm::NormKind::LN, norm::NormKind::None}) {
      ModelConfig c = toy();
      c.time_mode = mode;
      c.time_features = mode == TimeMode::None ? 0 : 3;
      c.norm = kind;
      c.dropout = 0.1;
      RTNet net(c, 16);
      std::mt19937_64 rng(17);
      auto in = input_for(c, 3, rng);
      GradTape tape;
      Tensor loss;
      {
        TapeScope s(tape);
        auto out = net.forward(in, true, &rng);
        CHECK(out.shape() == Shape{3, 4, 3});
        loss = mean(mul(out, out));
      }
      tape.backward(loss);
      for (auto& p : net.parameters()) {
        INFO(p.name);
        CHECK(p.tensor.grad().size() == p.tensor.numel());
      }
    }
}

TEST_CASE("finite differences through the whole network") {
  for (auto kind : {norm::NormKind::WN, norm::NormKind::BN, norm::NormKind::LN}) {
    ModelConfig c = toy(2, 2);
    c.input_length = 8;
    c.output_length = 2;
    c.channels = 4;
    c.norm = kind;
    c.dropout = 0.2;
    c.time_mode = TimeMode::Decoupled;
    c.time_features = 2;
    c.use_relation = true;
    RTNet net(c, 18);
    auto rm = relation::RelationMatrix::identity(2);
    rm.processed = {0.7, 0.4, 0.3, 0.6};
    net.set_relation(rm);
    std::mt19937_64 rng(19);
    auto in = input_for(c, 3, rng);
    ParamList wrt = net.parameters();
    wrt.push_back({"inputs", in.inputs});
    std::mt19937_64 drop;
    for (int point = 0; point < 10; ++point) {
      for (auto& p : wrt)
        if (p.name.find(".g") == std::string::npos) testutil::fill_randn(p.tensor, rng, 0.5);
      GradCheckOptions opt;
      opt.seed = 900 + point;
      opt.max_coords_per_tensor = 4;
      auto r = check_gradients(
          [&] {
            drop.seed(21);
            return net.forward(in, true, &drop);
          },
          wrt, opt);
      INFO(norm::to_string(kind) << " worst " << r.worst);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.kinks_skipped * 20 <= r.checked);
    }
  }
}

TEST_CASE("checkpoints round-trip") {
  ModelConfig c = toy();
  c.norm = norm::NormKind::BN;
  c.use_relation = true;
  c.time_mode = TimeMode::Decoupled;
  c.time_features = 2;
  RTNet net(c, 20);
  net.set_relation(relation::RelationMatrix::identity(3));
  std::mt19937_64 rng(21);
  auto in = input_for(c, 4, rng);
  net.forward(in, true, &rng);  // moves the BN running statistics
  const auto path = (std::filesystem::temp_directory_path() / "rtnet_ckpt_test.json").string();
  save_checkpoint(path, net);
  RTNet back = load_checkpoint(path);
  CHECK(values(back.forward(in, false)) == values(net.forward(in, false)));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}
