#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtnet/data.hpp"
#include "rtnet/harness.hpp"

namespace rtnet::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

struct CliConfig {
  std::string command;  // relate, train, eval, sweep, pacf, experiment, plot
  std::string config;   // JSON file
  std::string data;
  std::string out;
  std::string checkpoint;  // eval
  std::string input;       // plot
  std::optional<std::uint64_t> seed;
  std::optional<harness::Fidelity> fidelity;
  std::optional<training::Format> format;
  bool compare_formats = false;  // experiment
  std::vector<std::string> warnings;
};

struct ParseResult {
  std::optional<CliConfig> config;  // empty when the process should exit
  int exit_code = kOk;
  std::string message;  // usage, help or error text
};

/// Never exits the process; usage problems come back as kUsage.
ParseResult parse_args(int argc, const char* const* argv);

/// Settings shared by relate, train, sweep and pacf, read from --config.
/// Every key is optional; unknown keys are rejected.
struct RunSpec {
  harness::Task task = harness::Task::Univariate;
  data::SplitSpec split = data::SplitSpec::months();
  std::size_t prediction_length = 24;
  harness::Fidelity fidelity = harness::Fidelity::Desk;
  training::Format format = training::Format::EndToEnd;
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json train = nlohmann::json::object();
  bool raw_scale = false;
  std::vector<std::size_t> sweep_lengths{48, 96, 168, 336};
  std::vector<std::uint64_t> sweep_seeds{1};
  std::size_t pacf_max_lag = 48;
  std::string pacf_column;  // empty: the target column
};

RunSpec run_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunSpec& spec);

/// Runs a parsed command. Machine-readable results go to `out`, logs to
/// `err`. Returns an ExitCode.
int dispatch(const CliConfig& config, std::ostream& out, std::ostream& err);

/// parse_args followed by dispatch.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Exclusive ".rtnet.lock" in a directory, released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::string path_;
};

}  // namespace rtnet::cli
