#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "rtnet/diagnostics.hpp"
#include "rtnet/error.hpp"
#include "rtnet/harness.hpp"
#include "rtnet/io.hpp"
#include "rtnet/json_util.hpp"
#include "rtnet/log.hpp"
#include "rtnet/model_json.hpp"
#include "rtnet/parallel.hpp"
#include "rtnet/relation.hpp"
#include "rtnet/svg.hpp"
#include "rtnet/training_json.hpp"
#include "rtnet/version.hpp"

namespace rtnet::harness {

namespace {

template <class E>
E lookup(std::string_view s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  std::string options;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    options += (options.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(s) + "' (expected " + options + ")");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Prediction lengths used for the hourly and the 15-minute datasets.
const std::set<std::size_t> kHourlyGrid{24, 48, 168, 336, 720};
const std::set<std::size_t> kQuarterGrid{24, 48, 96, 288, 672};

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

std::string to_string(Fidelity f) { return f == Fidelity::Desk ? "desk" : "paper"; }
std::string to_string(Task t) { return t == Task::Univariate ? "univariate" : "multivariate"; }
std::string to_string(Axis a) {
  switch (a) {
    case Axis::None: return "none";
    case Axis::Norm: return "norm";
    case Axis::Relation: return "relation";
    case Axis::InputLength: return "input_length";
    case Axis::TimeMode: return "time_mode";
    case Axis::Format: return "format";
  }
  return "?";
}

Fidelity parse_fidelity(std::string_view s) {
  return lookup<Fidelity>(s, {{"desk", Fidelity::Desk}, {"paper", Fidelity::Paper}}, "fidelity");
}
Task parse_task(std::string_view s) {
  return lookup<Task>(s, {{"univariate", Task::Univariate}, {"multivariate", Task::Multivariate}}, "task");
}
Axis parse_axis(std::string_view s) {
  return lookup<Axis>(s,
                      {{"none", Axis::None},
                       {"norm", Axis::Norm},
                       {"relation", Axis::Relation},
                       {"input_length", Axis::InputLength},
                       {"time_mode", Axis::TimeMode},
                       {"format", Axis::Format}},
                      "axis");
}

PreparedData prepare_data(const data::TimeSeriesDataset& raw, const data::SplitSpec& split, Task task) {
  const data::TimeSeriesDataset source = task == Task::Univariate ? raw.target_only() : raw;
  data::Splits s = data::split(source, split);
  PreparedData out;
  out.scaler = data::Standardizer::fit(s.train);
  out.scaler.transform(s.train);
  out.scaler.transform(s.val);
  out.scaler.transform(s.test);
  out.names = source.names;
  if (source.variates() > 1)
    out.relation_raw = relation::cos_relation_matrix(s.train.values, s.train.length(), s.train.variates(), out.names);
  out.train = std::move(s.train);
  out.val = std::move(s.val);
  out.test = std::move(s.test);
  return out;
}

model::ModelConfig default_model(Fidelity f, Task task, std::size_t variates, std::size_t prediction_length) {
  model::ModelConfig c;
  c.variates = variates;
  c.output_length = prediction_length;
  c.input_length = 168;
  c.blocks = 3;
  c.kernel = 3;
  c.dropout = 0.1;
  c.theta_degrees = 45.0;
  c.time_features = data::kTimeFeatures;
  c.time_mode = model::TimeMode::Decoupled;
  c.norm = norm::NormKind::WN;
  const bool grouped = task == Task::Multivariate && variates > 1;
  c.groups = grouped ? variates : 1;
  c.use_relation = grouped;
  if (f == Fidelity::Paper)
    c.channels = grouped ? 8 * variates : 16;
  else
    c.channels = grouped ? 4 * variates : 16;
  return c;
}

training::TrainConfig default_train(Fidelity f) {
  training::TrainConfig t;
  t.lr = 1e-4;
  t.batch_size = 16;
  t.contrastive_batch_size = 64;
  t.head_batch_size = 16;
  t.beta = 0.2;
  t.instances = 3;
  t.alpha = 4.0;
  t.patience = 3;
  if (f == Fidelity::Paper) {
    t.epochs = 20;
  } else {
    t.epochs = 6;
    t.lr = 1e-3;
    t.max_batches_per_epoch = 100;
    t.max_eval_windows = 256;
  }
  return t;
}

TrainedModel train_model(const PreparedData& data, const RunConfig& run) {
  run.model.validate();
  run.train.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel out;
  out.net = std::make_unique<model::RTNet>(run.model, run.train.seed);
  if (run.model.use_relation) {
    if (data.relation_raw.empty()) {
      out.net->set_relation(relation::RelationMatrix::identity(run.model.variates));
    } else {
      relation::RelationMatrix m;
      m.n = run.model.variates;
      m.raw = data.relation_raw;
      m.theta_degrees = run.model.theta_degrees;
      m.processed = relation::threshold_and_standardize(m.raw, m.n, m.theta_degrees);
      m.column_normalized = true;
      out.net->set_relation(std::move(m));
    }
  }
  const training::TrainData td{&data.train, &data.val};
  out.history = run.format == training::Format::EndToEnd ? training::train_end_to_end(*out.net, td, run.train)
                                                         : training::train_contrastive(*out.net, td, run.train);
  out.seconds = seconds_since(t0);
  return out;
}

training::Evaluation test_metrics(model::RTNet& net, const PreparedData& data, training::Format format,
                                  bool raw_scale, std::size_t max_windows) {
  training::EvalOptions opts;
  opts.format = format;
  opts.max_windows = max_windows;
  opts.raw_scale = raw_scale ? &data.scaler : nullptr;
  return training::evaluate(net, data.test, opts);
}

void ExperimentSpec::validate() const {
  auto fail = [&](const std::string& m) { throw ConfigError("experiment '" + name + "': " + m); };
  if (prediction_lengths.empty()) fail("no prediction lengths");
  for (auto L : prediction_lengths) {
    if (L == 0) fail("prediction lengths must be positive");
    if (paper_grid && !kHourlyGrid.count(L) && !kQuarterGrid.count(L))
      fail("prediction length " + std::to_string(L) + " is not on the published grids");
  }
  if (std::set<std::size_t>(prediction_lengths.begin(), prediction_lengths.end()).size() != prediction_lengths.size())
    fail("duplicate prediction lengths");
  if (seeds.empty()) fail("no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds must be distinct");
  if (axis == Axis::None && !values.empty()) fail("values given without an axis");
  if (axis != Axis::None && values.empty()) fail("axis " + to_string(axis) + " needs values");
  if (std::set<std::string>(values.begin(), values.end()).size() != values.size()) fail("duplicate axis values");
  if (!model.is_object() || !train.is_object()) fail("model and train must be JSON objects");
  if (model.contains("output_length")) fail("set prediction_lengths instead of model.output_length");
  if (model.contains("variates")) fail("model.variates follows the dataset");
  if (train.contains("seed")) fail("set seeds instead of train.seed");
}

ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  StrictObject o(j, "experiment");
  o.optional("name", s.name);
  o.optional("data", s.data);
  if (o.has("split")) {
    StrictObject sp(o.at("split"), "experiment.split");
    std::string mode = "months";
    sp.optional("mode", mode);
    if (mode == "months") {
      int tr = 12, va = 4, te = 4;
      sp.optional("train", tr);
      sp.optional("val", va);
      sp.optional("test", te);
      s.split = data::SplitSpec::months(tr, va, te);
    } else if (mode == "ratio") {
      double tr = 0.6, va = 0.2, te = 0.2;
      sp.optional("train", tr);
      sp.optional("val", va);
      sp.optional("test", te);
      s.split = data::SplitSpec::ratio(tr, va, te);
    } else {
      throw ConfigError("experiment.split.mode: expected months or ratio, got '" + mode + "'");
    }
    sp.finish();
  }
  if (o.has("task")) s.task = parse_task(o.required<std::string>("task"));
  o.optional("prediction_lengths", s.prediction_lengths);
  if (o.has("fidelity")) s.fidelity = parse_fidelity(o.required<std::string>("fidelity"));
  if (o.has("format")) s.format = training::parse_format(o.required<std::string>("format"));
  if (o.has("axis")) s.axis = parse_axis(o.required<std::string>("axis"));
  o.optional("values", s.values);
  o.optional("seeds", s.seeds);
  if (o.has("model")) s.model = o.at("model");
  if (o.has("train")) s.train = o.at("train");
  o.optional("workers", s.workers);
  o.optional("raw_scale", s.raw_scale);
  o.optional("paper_grid", s.paper_grid);
  o.optional("max_test_windows", s.max_test_windows);
  o.finish();
  s.validate();
  // Typos in the nested objects surface here rather than inside every cell.
  model::model_config_from_json(s.model);
  training::train_config_from_json(s.train, default_train(s.fidelity));
  return s;
}

nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json split;
  if (s.split.mode == data::SplitMode::Months)
    split = {{"mode", "months"}, {"train", s.split.train_months}, {"val", s.split.val_months},
             {"test", s.split.test_months}};
  else
    split = {{"mode", "ratio"}, {"train", s.split.train_ratio}, {"val", s.split.val_ratio},
             {"test", s.split.test_ratio}};
  return {{"name", s.name},
          {"data", s.data},
          {"split", split},
          {"task", to_string(s.task)},
          {"prediction_lengths", s.prediction_lengths},
          {"fidelity", to_string(s.fidelity)},
          {"format", training::to_string(s.format)},
          {"axis", to_string(s.axis)},
          {"values", s.values},
          {"seeds", s.seeds},
          {"model", s.model},
          {"train", s.train},
          {"workers", s.workers},
          {"raw_scale", s.raw_scale},
          {"paper_grid", s.paper_grid},
          {"max_test_windows", s.max_test_windows}};
}

RunConfig cell_config(const ExperimentSpec& spec, std::size_t variates, const std::string& value,
                      std::size_t prediction_length) {
  RunConfig run;
  run.model = model_config_from_json(spec.model, default_model(spec.fidelity, spec.task, variates, prediction_length));
  run.train = training::train_config_from_json(spec.train, default_train(spec.fidelity));
  run.format = spec.format;
  auto& m = run.model;
  switch (spec.axis) {
    case Axis::None: break;
    case Axis::Norm: m.norm = norm::parse_norm_kind(value); break;
    case Axis::Relation:
      if (value == "with") {
        m.groups = m.variates;
        m.use_relation = true;
        if (m.channels % m.groups) m.channels = 4 * m.groups;
      } else if (value == "without") {
        m.groups = 1;
        m.use_relation = false;
      } else {
        throw ConfigError("relation axis values are 'with' and 'without', got '" + value + "'");
      }
      break;
    case Axis::InputLength: {
      std::size_t used = 0;
      unsigned long L = 0;
      try {
        L = std::stoul(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size() || L == 0)
        throw ConfigError("input length '" + value + "' is not a positive integer");
      m.input_length = L;
      break;
    }
    case Axis::TimeMode:
      m.time_mode = model::parse_time_mode(value);
      m.time_features = m.time_mode == model::TimeMode::None ? 0 : data::kTimeFeatures;
      break;
    case Axis::Format: run.format = training::parse_format(value); break;
  }
  m.validate();
  return run;
}

bool ExperimentReport::all_failed() const {
  return std::none_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
}

const RowSummary* ExperimentReport::row(const std::string& value, std::size_t prediction_length) const {
  for (const auto& r : rows)
    if (r.value == value && r.prediction_length == prediction_length) return &r;
  return nullptr;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const data::TimeSeriesDataset& raw) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData prepared = prepare_data(raw, spec.split, spec.task);
  const std::vector<std::string> values = spec.axis == Axis::None ? std::vector<std::string>{""} : spec.values;

  ExperimentReport report;
  report.name = spec.name;
  report.version = kVersion;
  report.spec = to_json(spec);
  for (const auto& v : values)
    for (auto L : spec.prediction_lengths)
      for (auto seed : spec.seeds) {
        CellResult c;
        c.value = v;
        c.prediction_length = L;
        c.seed = seed;
        report.cells.push_back(c);
      }

  const std::size_t workers = worker_count(spec.workers);
  log::info(spec.name, ": ", report.cells.size(), " cells on ", workers, " worker(s)");
  parallel_for(report.cells.size(), workers, [&](std::size_t i) {
    CellResult& c = report.cells[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      RunConfig run = cell_config(spec, prepared.names.size(), c.value, c.prediction_length);
      run.train.seed = c.seed;
      auto trained = train_model(prepared, run);
      const auto ev = test_metrics(*trained.net, prepared, run.format, spec.raw_scale, spec.max_test_windows);
      c.mse = ev.mse;
      c.mae = ev.mae;
      c.epochs = trained.history.epochs.size();
      c.ok = std::isfinite(ev.mse) && std::isfinite(ev.mae);
      if (!c.ok) c.error = "non-finite test metrics";
    } catch (const std::exception& e) {
      c.error = e.what();
    }
    c.seconds = seconds_since(start);
    log::info(spec.name, ": ", c.value.empty() ? "" : c.value + " ", "pred ", c.prediction_length, " seed ", c.seed,
              c.ok ? " mse " + io::number(c.mse) : " failed: " + c.error, " (", c.seconds, " s)");
  });

  for (const auto& v : values)
    for (auto L : spec.prediction_lengths) {
      RowSummary row;
      row.value = v;
      row.prediction_length = L;
      std::vector<double> mse, mae;
      for (const auto& c : report.cells) {
        if (c.value != v || c.prediction_length != L) continue;
        if (c.ok) {
          mse.push_back(c.mse);
          mae.push_back(c.mae);
        } else {
          ++row.failed;
        }
      }
      row.runs = mse.size();
      std::tie(row.mean_mse, row.std_mse) = diagnostics::mean_std(mse);
      std::tie(row.mean_mae, row.std_mae) = diagnostics::mean_std(mae);
      if (mse.empty()) row.mean_mse = row.mean_mae = std::nan("");
      report.rows.push_back(row);
    }
  report.seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  if (spec.data.empty()) throw ConfigError("experiment '" + spec.name + "' names no data file");
  return run_experiment(spec, data::load_csv(spec.data));
}

ExperimentReport compare_formats(ExperimentSpec spec, const data::TimeSeriesDataset& raw) {
  if (spec.axis != Axis::None && spec.axis != Axis::Format)
    throw ConfigError("compare_formats varies the format; remove axis " + to_string(spec.axis));
  spec.axis = Axis::Format;
  spec.values = {training::to_string(training::Format::EndToEnd), training::to_string(training::Format::Contrastive)};
  return run_experiment(spec, raw);
}

ExperimentReport compare_formats(ExperimentSpec spec) {
  if (spec.data.empty()) throw ConfigError("experiment '" + spec.name + "' names no data file");
  const auto raw = data::load_csv(spec.data);
  return compare_formats(std::move(spec), raw);
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json cells = nlohmann::json::array(), rows = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"value", c.value},
                     {"prediction_length", c.prediction_length},
                     {"seed", c.seed},
                     {"ok", c.ok},
                     {"mse", c.ok ? number_or_null(c.mse) : nlohmann::json()},
                     {"mae", c.ok ? number_or_null(c.mae) : nlohmann::json()},
                     {"epochs", c.epochs},
                     {"seconds", c.seconds},
                     {"error", c.error}});
  for (const auto& w : r.rows)
    rows.push_back({{"value", w.value},
                    {"prediction_length", w.prediction_length},
                    {"runs", w.runs},
                    {"failed", w.failed},
                    {"mean_mse", number_or_null(w.mean_mse)},
                    {"std_mse", number_or_null(w.std_mse)},
                    {"mean_mae", number_or_null(w.mean_mae)},
                    {"std_mae", number_or_null(w.std_mae)}});
  return {{"schema", kReportSchema}, {"name", r.name}, {"version", r.version}, {"spec", r.spec},
          {"rows", rows},            {"cells", cells}, {"seconds", r.seconds}};
}

std::string rows_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "value,prediction_length,runs,failed,mean_mse,std_mse,mean_mae,std_mae\n";
  for (const auto& w : r.rows)
    out << io::csv_cell(w.value) << ',' << w.prediction_length << ',' << w.runs << ',' << w.failed << ','
        << io::number(w.mean_mse) << ',' << io::number(w.std_mse) << ',' << io::number(w.mean_mae) << ','
        << io::number(w.std_mae) << '\n';
  return out.str();
}

std::string cells_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "value,prediction_length,seed,ok,mse,mae,epochs,seconds,error\n";
  for (const auto& c : r.cells)
    out << io::csv_cell(c.value) << ',' << c.prediction_length << ',' << c.seed << ',' << c.ok << ','
        << (c.ok ? io::number(c.mse) : "") << ',' << (c.ok ? io::number(c.mae) : "") << ',' << c.epochs << ','
        << io::number(c.seconds) << ',' << io::csv_cell(c.error) << '\n';
  return out.str();
}

std::string report_svg(const ExperimentReport& r) {
  std::vector<std::string> values;
  std::vector<std::size_t> lengths;
  for (const auto& w : r.rows) {
    if (std::find(values.begin(), values.end(), w.value) == values.end()) values.push_back(w.value);
    if (std::find(lengths.begin(), lengths.end(), w.prediction_length) == lengths.end())
      lengths.push_back(w.prediction_length);
  }
  if (r.spec.value("axis", "none") == "input_length") {
    std::vector<svg::Series> series;
    for (auto L : lengths) {
      svg::Series s;
      s.name = "pred " + std::to_string(L);
      for (const auto& w : r.rows)
        if (w.prediction_length == L && w.runs > 0) {
          s.x.push_back(std::stod(w.value));
          s.y.push_back(w.mean_mse);
          s.err.push_back(w.std_mse);
        }
      series.push_back(std::move(s));
    }
    return svg::line_plot(r.name, "input length", "MSE", series);
  }
  std::vector<std::string> categories;
  for (const auto& v : values) categories.push_back(v.empty() ? "all" : v);
  std::vector<svg::BarGroup> groups;
  for (auto L : lengths) {
    svg::BarGroup g;
    g.name = "pred " + std::to_string(L);
    for (const auto& v : values) {
      const RowSummary* w = r.row(v, L);
      g.values.push_back(w ? w->mean_mse : std::nan(""));
      g.err.push_back(w ? w->std_mse : 0.0);
    }
    groups.push_back(std::move(g));
  }
  return svg::bar_chart(r.name, "MSE", categories, groups);
}

void write_report(const ExperimentReport& r, const std::string& dir, bool svg) {
  const std::filesystem::path base(dir);
  io::write_file_atomic((base / "report.json").string(), to_json(r).dump(2) + "\n");
  io::write_file_atomic((base / "report.csv").string(), rows_csv(r));
  io::write_file_atomic((base / "cells.csv").string(), cells_csv(r));
  if (svg && !r.all_failed()) io::write_file_atomic((base / "report.svg").string(), report_svg(r));
}

}  // namespace rtnet::harness
