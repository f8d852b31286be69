#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtnet/data.hpp"
#include "rtnet/model.hpp"
#include "rtnet/training.hpp"

namespace rtnet::harness {

/// Desk shrinks the budget to fit a desktop CPU; Paper uses the published
/// hyper-parameter table verbatim.
enum class Fidelity { Desk, Paper };
enum class Task { Univariate, Multivariate };
/// The single setting an experiment varies.
enum class Axis { None, Norm, Relation, InputLength, TimeMode, Format };

std::string to_string(Fidelity f);
std::string to_string(Task t);
std::string to_string(Axis a);
Fidelity parse_fidelity(std::string_view s);
Task parse_task(std::string_view s);
Axis parse_axis(std::string_view s);

/// Splits standardized with training statistics, plus the raw relation
/// matrix of the standardized training split (multivariate only).
struct PreparedData {
  data::TimeSeriesDataset train, val, test;
  data::Standardizer scaler;
  std::vector<std::string> names;
  std::vector<double> relation_raw;
};

PreparedData prepare_data(const data::TimeSeriesDataset& raw, const data::SplitSpec& split, Task task);

model::ModelConfig default_model(Fidelity f, Task task, std::size_t variates, std::size_t prediction_length);
training::TrainConfig default_train(Fidelity f);

struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  training::Format format = training::Format::EndToEnd;
};

struct TrainedModel {
  std::unique_ptr<model::RTNet> net;
  training::History history;
  double seconds = 0.0;
};

/// Builds, wires the relation matrix and trains one model.
TrainedModel train_model(const PreparedData& data, const RunConfig& run);

/// Test-split metrics, standardized scale unless `raw_scale`.
training::Evaluation test_metrics(model::RTNet& net, const PreparedData& data, training::Format format,
                                  bool raw_scale, std::size_t max_windows = 0);

struct ExperimentSpec {
  std::string name = "experiment";
  std::string data;  // CSV path
  data::SplitSpec split = data::SplitSpec::months();
  Task task = Task::Univariate;
  std::vector<std::size_t> prediction_lengths{24};
  Fidelity fidelity = Fidelity::Desk;
  training::Format format = training::Format::EndToEnd;
  Axis axis = Axis::None;
  std::vector<std::string> values;  // axis settings, e.g. "WN", "BN", "LN"
  std::vector<std::uint64_t> seeds{1};
  nlohmann::json model = nlohmann::json::object();  // overrides on the fidelity defaults
  nlohmann::json train = nlohmann::json::object();
  std::size_t workers = 0;      // 0: RTNET_WORKERS or hardware concurrency
  bool raw_scale = false;       // report metrics in data units
  bool paper_grid = false;      // require the published prediction-length grids
  std::size_t max_test_windows = 0;

  void validate() const;
};

ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);

/// Model and training settings for one cell, before the seed is applied.
RunConfig cell_config(const ExperimentSpec& spec, std::size_t variates, const std::string& axis_value,
                      std::size_t prediction_length);

struct CellResult {
  std::string value;  // axis setting; empty when the axis is None
  std::size_t prediction_length = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double mse = 0.0, mae = 0.0;
  double seconds = 0.0;
  std::size_t epochs = 0;
  std::string error;
};

struct RowSummary {
  std::string value;
  std::size_t prediction_length = 0;
  std::size_t runs = 0, failed = 0;
  double mean_mse = 0.0, std_mse = 0.0;
  double mean_mae = 0.0, std_mae = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::string version;
  nlohmann::json spec;
  std::vector<CellResult> cells;
  std::vector<RowSummary> rows;
  double seconds = 0.0;

  bool all_failed() const;
  const RowSummary* row(const std::string& value, std::size_t prediction_length) const;
};

/// Trains every (value, prediction length, seed) cell; failures are
/// recorded per cell and the run continues.
ExperimentReport run_experiment(const ExperimentSpec& spec, const data::TimeSeriesDataset& raw);
ExperimentReport run_experiment(const ExperimentSpec& spec);

/// Paired end-to-end and contrastive runs over the same seeds.
ExperimentReport compare_formats(ExperimentSpec spec, const data::TimeSeriesDataset& raw);
ExperimentReport compare_formats(ExperimentSpec spec);

nlohmann::json to_json(const ExperimentReport& report);
std::string rows_csv(const ExperimentReport& report);
std::string cells_csv(const ExperimentReport& report);
std::string report_svg(const ExperimentReport& report);

/// report.json, report.csv, cells.csv and optionally report.svg under `dir`,
/// each written atomically.
void write_report(const ExperimentReport& report, const std::string& dir, bool svg = true);

}  // namespace rtnet::harness
