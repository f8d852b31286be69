#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rtnet/cli.hpp"
#include "rtnet/error.hpp"
#include "rtnet/io.hpp"

using namespace rtnet;
using namespace rtnet::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Sandbox {
  fs::path root;
  Sandbox() {
    root = fs::temp_directory_path() / ("rtnet_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(root);
    write_csv();
    write_config();
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  std::string path(const std::string& name) const { return (root / name).string(); }

  void write_csv() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::ofstream out(path("data.csv"));
    out << "date,A,B,OT\n";
    double s[3] = {0, 0, 0};
    for (int t = 0; t < 24 * 40; ++t) {
      const int day = 1 + t / 24, hour = t % 24;
      char stamp[32];
      std::snprintf(stamp, sizeof stamp, "2016-%02d-%02d %02d:00:00", day <= 31 ? 7 : 8, day <= 31 ? day : day - 31,
                    hour);
      out << stamp;
      for (int i = 0; i < 3; ++i) {
        s[i] = 0.8 * s[i] + noise(rng);
        out << ',' << s[i] + std::sin(0.26 * t + i);
      }
      out << '\n';
    }
  }

  void write_config() {
    std::ofstream(path("cfg.json")) << R"({
      "task": "multivariate",
      "split": {"mode": "ratio"},
      "prediction_length": 4,
      "model": {"input_length": 16, "blocks": 2, "channels": 6},
      "train": {"epochs": 1, "max_batches_per_epoch": 3, "max_eval_windows": 8},
      "sweep": {"lengths": [16, 18, 32], "seeds": [1]},
      "pacf": {"max_lag": 6}
    })";
  }
};

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "rtnet");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

ParseResult parse(std::vector<std::string> args) {
  args.insert(args.begin(), "rtnet");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  return parse_args(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("parse a train invocation") {
  Sandbox box;
  auto r = parse({"train", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out", box.path("run")});
  REQUIRE(r.config);
  CHECK(r.config->command == "train");
  CHECK(r.config->data == box.path("data.csv"));
  CHECK(r.config->out == box.path("run"));
  CHECK_FALSE(r.config->seed);
  CHECK(r.config->warnings.empty());
}

TEST_CASE("usage errors exit with code 2") {
  Sandbox box;
  auto missing = parse({"train", "--out", box.path("run")});
  CHECK_FALSE(missing.config);
  CHECK(missing.exit_code == kUsage);
  CHECK(missing.message.find("--data") != std::string::npos);
  CHECK(missing.message.find("Usage") != std::string::npos);
  CHECK(parse({"train", "--data", box.path("data.csv"), "--out", "x", "--frobnicate"}).exit_code == kUsage);
  CHECK(parse({}).exit_code == kUsage);
  CHECK(parse({"eval", "--data", box.path("nope.csv"), "--checkpoint", box.path("cfg.json")}).exit_code == kUsage);
  CHECK(parse({"train", "--data", box.path("data.csv"), "--out", "x", "--fidelity", "huge"}).exit_code == kUsage);
  auto help = parse({"--help"});
  CHECK(help.exit_code == kOk);
  CHECK(help.message.find("experiment") != std::string::npos);
}

TEST_CASE("repeated seed keeps the last value with a warning") {
  Sandbox box;
  auto r = parse({"train", "--data", box.path("data.csv"), "--out", "x", "--seed", "7", "--seed", "9"});
  REQUIRE(r.config);
  CHECK(*r.config->seed == 9);
  REQUIRE(r.config->warnings.size() == 1);
  CHECK(r.config->warnings[0].find("last") != std::string::npos);
}

TEST_CASE("run spec parsing is strict") {
  CHECK_THROWS_AS(run_spec_from_json(json::parse(R"({"modle": {}})")), ConfigError);
  CHECK_THROWS_AS(run_spec_from_json(json::parse(R"({"model": {"depth": 3}})")), ConfigError);
  CHECK_THROWS_AS(run_spec_from_json(json::parse(R"({"sweep": {"length": [1]}})")), ConfigError);
  CHECK_THROWS_AS(run_spec_from_json(json::parse(R"({"prediction_length": 0})")), ConfigError);
  auto s = run_spec_from_json(json::parse(R"({"prediction_length": 12, "split": {"mode": "ratio", "train": 0.7,
                                              "val": 0.1, "test": 0.2}})"));
  CHECK(s.prediction_length == 12);
  CHECK(s.split.train_ratio == 0.7);
  CHECK(to_json(run_spec_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("train then eval prints only JSON on stdout") {
  Sandbox box;
  auto t = invoke({"train", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out",
                   box.path("run")});
  INFO(t.err);
  REQUIRE(t.code == kOk);
  CHECK(t.out.empty());
  for (const char* f : {"checkpoint.json", "history.csv", "run.json"}) CHECK(fs::exists(box.root / "run" / f));
  CHECK_FALSE(fs::exists(box.root / "run" / ".rtnet.lock"));

  auto e = invoke({"eval", "--data", box.path("data.csv"), "--checkpoint", box.path("run/checkpoint.json")});
  INFO(e.err);
  REQUIRE(e.code == kOk);
  const json j = json::parse(e.out);
  CHECK(j.contains("mse"));
  CHECK(j.contains("mae"));
  const json record = json::parse(io::read_file(box.path("run/run.json")));
  CHECK(j["mse"].get<double>() == doctest::Approx(record["test"]["mse"].get<double>()).epsilon(1e-12));
}

TEST_CASE("relate writes both matrices") {
  Sandbox box;
  auto r = invoke({"relate", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out",
                   box.path("rel")});
  INFO(r.err);
  REQUIRE(r.code == kOk);
  const auto raw = io::read_file(box.path("rel/relation_raw.csv"));
  CHECK(raw.rfind("variate,A,B,OT\nA,1,", 0) == 0);
  CHECK(fs::exists(box.root / "rel" / "relation_processed.csv"));
}

TEST_CASE("sweep, pacf and plot") {
  Sandbox box;
  auto s = invoke({"sweep", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out",
                   box.path("sw")});
  INFO(s.err);
  REQUIRE(s.code == kOk);
  const json j = json::parse(io::read_file(box.path("sw/sweep.json")));
  CHECK(j["rows"].size() == 2);
  CHECK(j["warnings"].size() == 1);

  fs::remove(box.root / "sw" / "sweep.svg");
  auto p = invoke({"plot", "--input", box.path("sw/sweep.csv"), "--out", box.path("plots")});
  CHECK(p.code == kOk);
  CHECK(io::read_file(box.path("plots/sweep.svg")).rfind("<svg", 0) == 0);

  auto q = invoke({"pacf", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out",
                   box.path("pacf")});
  REQUIRE(q.code == kOk);
  const json pj = json::parse(io::read_file(box.path("pacf/pacf.json")));
  CHECK(pj["phi"].size() == 6);
  CHECK(pj["column"] == "OT");
}

TEST_CASE("experiment command and failure codes") {
  Sandbox box;
  std::ofstream(box.path("exp.json")) << R"({
    "name": "cli",
    "data": ")" + box.path("data.csv") + R"(",
    "split": {"mode": "ratio"},
    "prediction_lengths": [4],
    "axis": "norm",
    "values": ["WN", "LN"],
    "seeds": [1],
    "model": {"input_length": 16, "blocks": 2, "channels": 4},
    "train": {"epochs": 1, "max_batches_per_epoch": 2, "max_eval_windows": 8}
  })";
  auto r = invoke({"experiment", "--config", box.path("exp.json"), "--out", box.path("exp")});
  INFO(r.err);
  CHECK(r.code == kOk);
  CHECK(fs::exists(box.root / "exp" / "report.json"));

  std::ofstream(box.path("bad.json")) << R"({"name": "bad", "axis": "input_length", "values": ["18"],
    "data": ")" + box.path("data.csv") + R"(", "split": {"mode": "ratio"},
    "model": {"blocks": 2, "channels": 4}, "train": {"epochs": 1}})";
  auto f = invoke({"experiment", "--config", box.path("bad.json"), "--out", box.path("bad")});
  CHECK(f.code == kFailure);
  CHECK(fs::exists(box.root / "bad" / "cells.csv"));

  std::ofstream(box.path("typo.json")) << R"({"nmae": "x"})";
  CHECK(invoke({"experiment", "--config", box.path("typo.json"), "--out", box.path("t")}).code == kUsage);
}

TEST_CASE("output directory lock") {
  Sandbox box;
  fs::create_directories(box.root / "locked");
  std::ofstream(box.root / "locked" / ".rtnet.lock") << "1\n";
  auto r = invoke({"pacf", "--config", box.path("cfg.json"), "--data", box.path("data.csv"), "--out",
                   box.path("locked")});
  CHECK(r.code == kFailure);
  CHECK(r.err.find(".rtnet.lock") != std::string::npos);
  {
    DirectoryLock held(box.path("other"));
    CHECK_THROWS_AS(DirectoryLock(box.path("other")), Error);
  }
  CHECK_NOTHROW(DirectoryLock(box.path("other")));
}

TEST_CASE("installed binary answers --version") {
  const std::string cmd = std::string("\"") + RTNET_BINARY_PATH + "\" --version > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  const std::string bad = std::string("\"") + RTNET_BINARY_PATH + "\" train > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
