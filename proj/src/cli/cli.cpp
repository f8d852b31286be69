#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rtnet/cli.hpp"
#include "rtnet/diagnostics.hpp"
#include "rtnet/error.hpp"
#include "rtnet/io.hpp"
#include "rtnet/json_util.hpp"
#include "rtnet/log.hpp"
#include "rtnet/model_json.hpp"
#include "rtnet/parallel.hpp"
#include "rtnet/relation.hpp"
#include "rtnet/svg.hpp"
#include "rtnet/training_json.hpp"
#include "rtnet/version.hpp"

namespace rtnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ParseResult parse_args(int argc, const char* const* argv) {
  CLI::App app{"RTNet time-series forecasting engine", "rtnet"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CliConfig cfg;
  std::uint64_t seed = 0;
  std::string fidelity, format;
  std::vector<std::pair<CLI::App*, CLI::Option*>> seed_options;

  auto add = [&](const char* name, const char* about) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("--config", cfg.config, "JSON configuration file")->check(CLI::ExistingFile);
    auto* s = sub->add_option("--seed", seed, "master seed (last one wins)")
                  ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    seed_options.emplace_back(sub, s);
    sub->add_option("--fidelity", fidelity, "desk or paper budget")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--format", format, "e2e or contrastive")->check(CLI::IsMember({"e2e", "contrastive"}));
    return sub;
  };
  auto need = [&](CLI::App* sub, const char* flag, std::string& target, const char* about, bool required) {
    auto* o = sub->add_option(flag, target, about);
    if (required) o->required();
    return o;
  };

  auto* relate = add("relate", "compute the cos-relation matrix of the training split");
  need(relate, "--data", cfg.data, "CSV dataset", true)->check(CLI::ExistingFile);
  need(relate, "--out", cfg.out, "output directory", true);

  auto* train = add("train", "train one model and checkpoint it");
  need(train, "--data", cfg.data, "CSV dataset", true)->check(CLI::ExistingFile);
  need(train, "--out", cfg.out, "output directory", true);

  auto* eval = add("eval", "score a checkpoint on the test split; prints JSON");
  need(eval, "--data", cfg.data, "CSV dataset", true)->check(CLI::ExistingFile);
  need(eval, "--checkpoint", cfg.checkpoint, "checkpoint.json written by train", true)->check(CLI::ExistingFile);

  auto* sweep = add("sweep", "input-length sweep");
  need(sweep, "--data", cfg.data, "CSV dataset", true)->check(CLI::ExistingFile);
  need(sweep, "--out", cfg.out, "output directory", true);

  auto* pacf = add("pacf", "partial autocorrelation of one column");
  need(pacf, "--data", cfg.data, "CSV dataset", true)->check(CLI::ExistingFile);
  need(pacf, "--out", cfg.out, "output directory", true);

  auto* experiment = add("experiment", "run an ablation experiment spec");
  experiment->get_option("--config")->required();
  need(experiment, "--data", cfg.data, "CSV dataset (overrides the experiment file)", false)->check(CLI::ExistingFile);
  need(experiment, "--out", cfg.out, "output directory", true);
  experiment->add_flag("--compare-formats", cfg.compare_formats, "pair end-to-end and contrastive runs");

  auto* plot = add("plot", "render a sweep or report CSV as SVG");
  need(plot, "--input", cfg.input, "sweep.csv or report.csv", true)->check(CLI::ExistingFile);
  need(plot, "--out", cfg.out, "output directory", true);

  ParseResult result;
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    result.exit_code = app.exit(e, out, err) == 0 ? kOk : kUsage;
    result.message = out.str() + err.str();
    if (result.exit_code == kUsage) result.message += app.help();
    return result;
  }

  for (auto* sub : app.get_subcommands()) cfg.command = sub->get_name();
  for (auto& [sub, opt] : seed_options) {
    if (sub->get_name() != cfg.command || opt->count() == 0) continue;
    cfg.seed = seed;
    if (opt->count() > 1)
      cfg.warnings.push_back("--seed given " + std::to_string(opt->count()) + " times; using the last value " +
                             std::to_string(seed));
  }
  if (!fidelity.empty()) cfg.fidelity = harness::parse_fidelity(fidelity);
  if (!format.empty()) cfg.format = training::parse_format(format);
  result.config = cfg;
  return result;
}

RunSpec run_spec_from_json(const json& j) {
  RunSpec s;
  StrictObject o(j, "config");
  if (o.has("task")) s.task = harness::parse_task(o.required<std::string>("task"));
  if (o.has("split")) {
    // Reuse the experiment parser for the split block.
    s.split = harness::spec_from_json(json{{"split", o.at("split")}}).split;
  }
  o.optional("prediction_length", s.prediction_length);
  if (o.has("fidelity")) s.fidelity = harness::parse_fidelity(o.required<std::string>("fidelity"));
  if (o.has("format")) s.format = training::parse_format(o.required<std::string>("format"));
  if (o.has("model")) s.model = o.at("model");
  if (o.has("train")) s.train = o.at("train");
  o.optional("raw_scale", s.raw_scale);
  if (o.has("sweep")) {
    StrictObject sw(o.at("sweep"), "config.sweep");
    sw.optional("lengths", s.sweep_lengths);
    sw.optional("seeds", s.sweep_seeds);
    sw.finish();
  }
  if (o.has("pacf")) {
    StrictObject pc(o.at("pacf"), "config.pacf");
    pc.optional("max_lag", s.pacf_max_lag);
    pc.optional("column", s.pacf_column);
    pc.finish();
  }
  o.finish();
  if (s.prediction_length == 0) throw ConfigError("config.prediction_length must be positive");
  if (s.model.contains("output_length")) throw ConfigError("config: set prediction_length, not model.output_length");
  if (s.model.contains("variates")) throw ConfigError("config: model.variates follows the dataset");
  model::model_config_from_json(s.model);
  training::train_config_from_json(s.train, harness::default_train(s.fidelity));
  return s;
}

json to_json(const RunSpec& s) {
  harness::ExperimentSpec e;
  e.split = s.split;
  return {{"task", harness::to_string(s.task)},
          {"split", harness::to_json(e)["split"]},
          {"prediction_length", s.prediction_length},
          {"fidelity", harness::to_string(s.fidelity)},
          {"format", training::to_string(s.format)},
          {"model", s.model},
          {"train", s.train},
          {"raw_scale", s.raw_scale},
          {"sweep", {{"lengths", s.sweep_lengths}, {"seeds", s.sweep_seeds}}},
          {"pacf", {{"max_lag", s.pacf_max_lag}, {"column", s.pacf_column}}}};
}

DirectoryLock::DirectoryLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".rtnet.lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string why = errno == EEXIST ? "another rtnet process is using it (delete " + path_ +
                                                  " if that process is gone)"
                                            : std::strerror(errno);
    path_.clear();
    throw Error("cannot lock " + dir + ": " + why);
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  if (path_.empty()) return;
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

struct Context {
  const CliConfig& cli;
  std::ostream& out;
  std::ostream& err;
};

RunSpec load_spec(const CliConfig& cli) {
  RunSpec s;
  if (!cli.config.empty()) s = run_spec_from_json(json::parse(io::read_file(cli.config)));
  if (cli.fidelity) s.fidelity = *cli.fidelity;
  if (cli.format) s.format = *cli.format;
  if (cli.seed) s.train["seed"] = *cli.seed;
  return s;
}

harness::RunConfig resolve(const RunSpec& s, std::size_t variates, std::size_t input_length = 0) {
  harness::RunConfig run;
  auto base = harness::default_model(s.fidelity, s.task, variates, s.prediction_length);
  run.model = model::model_config_from_json(s.model, base);
  if (input_length) run.model.input_length = input_length;
  run.train = training::train_config_from_json(s.train, harness::default_train(s.fidelity));
  run.format = s.format;
  run.model.validate();
  return run;
}

std::string matrix_csv(const std::vector<double>& m, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "variate";
  for (const auto& n : names) out << ',' << io::csv_cell(n);
  out << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << io::csv_cell(names[i]);
    for (std::size_t j = 0; j < names.size(); ++j) out << ',' << io::number(m[i * names.size() + j]);
    out << '\n';
  }
  return out.str();
}

json evaluation_json(const training::Evaluation& ev, const std::vector<std::string>& names, bool raw) {
  json per = json::object();
  for (std::size_t i = 0; i < names.size() && i < ev.per_variate_mse.size(); ++i) per[names[i]] = ev.per_variate_mse[i];
  return {{"mse", ev.mse},
          {"mae", ev.mae},
          {"windows", ev.windows},
          {"per_variate_mse", per},
          {"scale", raw ? "raw" : "standardized"}};
}

int cmd_relate(Context& c) {
  DirectoryLock lock(c.cli.out);
  RunSpec s = load_spec(c.cli);
  const auto raw = data::load_csv(c.cli.data);
  const auto prepared = harness::prepare_data(raw, s.split, harness::Task::Multivariate);
  if (prepared.names.size() < 2) throw DataError(c.cli.data + ": the relation matrix needs at least two variates");
  const double theta = s.model.value("theta_degrees", 45.0);
  const auto processed = relation::threshold_and_standardize(prepared.relation_raw, prepared.names.size(), theta);
  const fs::path dir(c.cli.out);
  io::write_file_atomic((dir / "relation_raw.csv").string(), matrix_csv(prepared.relation_raw, prepared.names));
  io::write_file_atomic((dir / "relation_processed.csv").string(), matrix_csv(processed, prepared.names));
  json j = {{"variates", prepared.names},
            {"theta_degrees", theta},
            {"train_rows", prepared.train.length()},
            {"raw", prepared.relation_raw},
            {"processed", processed}};
  io::write_file_atomic((dir / "relation.json").string(), j.dump(2) + "\n");
  log::info("relation matrix of ", prepared.names.size(), " variates written to ", c.cli.out);
  return kOk;
}

int cmd_train(Context& c) {
  DirectoryLock lock(c.cli.out);
  RunSpec s = load_spec(c.cli);
  const auto raw = data::load_csv(c.cli.data);
  const auto prepared = harness::prepare_data(raw, s.split, s.task);
  const auto run = resolve(s, prepared.names.size());
  log::info("training ", training::to_string(run.format), " on ", prepared.train.length(), " rows, ",
            prepared.names.size(), " variate(s)");
  auto trained = harness::train_model(prepared, run);
  const auto ev = harness::test_metrics(*trained.net, prepared, run.format, s.raw_scale);

  const fs::path dir(c.cli.out);
  model::save_checkpoint((dir / "checkpoint.json").string(), *trained.net);
  training::write_history_csv((dir / "history.csv").string(), trained.history, prepared.names);
  json record = {{"version", kVersion},
                 {"data", c.cli.data},
                 {"spec", to_json(s)},
                 {"model", model::to_json(run.model)},
                 {"train", training::to_json(run.train)},
                 {"format", training::to_string(run.format)},
                 {"scaler", prepared.scaler.to_json(prepared.names)},
                 {"history", training::to_json(trained.history)},
                 {"test", evaluation_json(ev, prepared.names, s.raw_scale)},
                 {"seconds", trained.seconds}};
  io::write_file_atomic((dir / "run.json").string(), record.dump(2) + "\n");
  log::info("test mse ", ev.mse, " mae ", ev.mae, " (", trained.seconds, " s); outputs in ", c.cli.out);
  return kOk;
}

int cmd_eval(Context& c) {
  const fs::path ckpt(c.cli.checkpoint);
  const fs::path record_path = ckpt.parent_path() / "run.json";
  if (!fs::exists(record_path)) throw DataError("no run.json next to " + c.cli.checkpoint);
  const json record = json::parse(io::read_file(record_path.string()));
  RunSpec s = run_spec_from_json(record.at("spec"));
  if (c.cli.format) s.format = *c.cli.format;
  auto net = model::load_checkpoint(c.cli.checkpoint);

  const auto raw = data::load_csv(c.cli.data);
  const auto source = s.task == harness::Task::Univariate ? raw.target_only() : raw;
  auto splits = data::split(source, s.split);
  const auto scaler = data::Standardizer::from_json(record.at("scaler"));
  if (scaler.mean.size() != source.variates() || net.config().variates != source.variates())
    throw DataError(c.cli.data + " has " + std::to_string(source.variates()) + " variate(s); the checkpoint expects " +
                    std::to_string(net.config().variates));
  scaler.transform(splits.test);
  training::EvalOptions opts;
  opts.format = s.format;
  opts.raw_scale = s.raw_scale ? &scaler : nullptr;
  const auto ev = training::evaluate(net, splits.test, opts);
  c.out << evaluation_json(ev, source.names, s.raw_scale).dump() << std::endl;
  return kOk;
}

int cmd_sweep(Context& c) {
  DirectoryLock lock(c.cli.out);
  RunSpec s = load_spec(c.cli);
  const auto raw = data::load_csv(c.cli.data);
  const auto prepared = harness::prepare_data(raw, s.split, s.task);
  const std::size_t n = prepared.names.size();
  auto runner = [&](std::size_t L, std::uint64_t seed) {
    auto run = resolve(s, n, L);
    run.train.seed = seed;
    auto trained = harness::train_model(prepared, run);
    const auto ev = harness::test_metrics(*trained.net, prepared, run.format, s.raw_scale);
    log::info("sweep: length ", L, " seed ", seed, " mse ", ev.mse);
    return diagnostics::Metrics{ev.mse, ev.mae};
  };
  auto check = [&](std::size_t L) -> std::string {
    try {
      resolve(s, n, L);
      return {};
    } catch (const ConfigError& e) {
      return e.what();
    }
  };
  const auto result = diagnostics::input_length_sweep(s.sweep_lengths, s.sweep_seeds, runner, check, worker_count());
  for (const auto& w : result.warnings) log::info("warning: ", w);

  const fs::path dir(c.cli.out);
  io::write_file_atomic((dir / "sweep.csv").string(), diagnostics::sweep_csv(result));
  json rows = json::array(), cells = json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"input_length", r.length}, {"runs", r.runs}, {"mean_mse", r.mean_mse}, {"std_mse", r.std_mse},
                    {"mean_mae", r.mean_mae}, {"std_mae", r.std_mae}});
  for (const auto& cell : result.cells)
    cells.push_back({{"input_length", cell.length}, {"seed", cell.seed}, {"ok", cell.ok}, {"mse", cell.mse},
                     {"mae", cell.mae}, {"seconds", cell.seconds}, {"error", cell.error}});
  json j = {{"version", kVersion},
            {"spec", to_json(s)},
            {"rows", rows},
            {"cells", cells},
            {"best_length", result.best_length},
            {"near_optimal_within_5pct", result.near_optimal},
            {"warnings", result.warnings}};
  io::write_file_atomic((dir / "sweep.json").string(), j.dump(2) + "\n");
  svg::Series series{"mean MSE", {}, {}, {}};
  for (const auto& r : result.rows) {
    series.x.push_back(static_cast<double>(r.length));
    series.y.push_back(r.mean_mse);
    series.err.push_back(r.std_mse);
  }
  io::write_file_atomic((dir / "sweep.svg").string(),
                        svg::line_plot("MSE versus input length", "input length", "MSE", {series}));
  log::info("best input length ", result.best_length);
  return kOk;
}

int cmd_pacf(Context& c) {
  DirectoryLock lock(c.cli.out);
  RunSpec s = load_spec(c.cli);
  const auto raw = data::load_csv(c.cli.data);
  std::size_t col = raw.target_index;
  if (!s.pacf_column.empty()) {
    auto it = std::find(raw.names.begin(), raw.names.end(), s.pacf_column);
    if (it == raw.names.end()) throw ConfigError("no column named '" + s.pacf_column + "' in " + c.cli.data);
    col = static_cast<std::size_t>(it - raw.names.begin());
  }
  const auto train = data::split(raw, s.split).train;
  const auto series = train.column(col);
  const auto r = diagnostics::pacf(series, s.pacf_max_lag);
  std::ostringstream csv;
  csv << "lag,phi,significant\n";
  for (std::size_t k = 1; k <= r.max_lag(); ++k)
    csv << k << ',' << io::number(r.at(k)) << ',' << (std::abs(r.at(k)) > r.confidence_band) << '\n';
  const fs::path dir(c.cli.out);
  io::write_file_atomic((dir / "pacf.csv").string(), csv.str());
  json j = {{"column", raw.names[col]},
            {"n", r.n},
            {"confidence_band", r.confidence_band},
            {"phi", r.phi},
            {"significant_lags", r.significant_lags()}};
  io::write_file_atomic((dir / "pacf.json").string(), j.dump(2) + "\n");
  log::info("pacf of ", raw.names[col], " over ", r.n, " training rows; ", r.significant_lags().size(),
            " significant lag(s)");
  return kOk;
}

int cmd_experiment(Context& c) {
  DirectoryLock lock(c.cli.out);
  auto spec = harness::spec_from_json(json::parse(io::read_file(c.cli.config)));
  if (!c.cli.data.empty()) spec.data = c.cli.data;
  if (c.cli.seed) spec.seeds = {*c.cli.seed};
  if (c.cli.fidelity) spec.fidelity = *c.cli.fidelity;
  if (c.cli.format) spec.format = *c.cli.format;
  const auto report = c.cli.compare_formats ? harness::compare_formats(spec) : harness::run_experiment(spec);
  harness::write_report(report, c.cli.out);
  for (const auto& r : report.rows)
    log::info(r.value.empty() ? "" : r.value + " ", "pred ", r.prediction_length, ": mse ", r.mean_mse, " +- ",
              r.std_mse, " over ", r.runs, " run(s)", r.failed ? ", " + std::to_string(r.failed) + " failed" : "");
  if (report.all_failed()) {
    c.err << "rtnet: error: every cell failed; see " << (fs::path(c.cli.out) / "cells.csv").string() << '\n';
    return kFailure;
  }
  return kOk;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

int cmd_plot(Context& c) {
  DirectoryLock lock(c.cli.out);
  std::istringstream in(io::read_file(c.cli.input));
  std::string line;
  if (!std::getline(in, line)) throw DataError(c.cli.input + ": empty file");
  const auto header = split_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(c.cli.input + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  auto number = [&](const std::string& text, std::size_t row) {
    try {
      return std::stod(text);
    } catch (const std::exception&) {
      throw DataError(c.cli.input + ": line " + std::to_string(row) + ": '" + text + "' is not a number");
    }
  };
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_line(line));
  const fs::path dir(c.cli.out);

  if (!header.empty() && header[0] == "input_length") {
    const std::size_t cl = column("input_length"), cm = column("mean_mse"), cs = column("std_mse");
    svg::Series s{"mean MSE", {}, {}, {}};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != header.size()) throw DataError(c.cli.input + ": line " + std::to_string(r + 2) + ": wrong cell count");
      s.x.push_back(number(rows[r][cl], r + 2));
      s.y.push_back(number(rows[r][cm], r + 2));
      s.err.push_back(number(rows[r][cs], r + 2));
    }
    io::write_file_atomic((dir / "sweep.svg").string(),
                          svg::line_plot("MSE versus input length", "input length", "MSE", {s}));
    return kOk;
  }
  if (!header.empty() && header[0] == "value") {
    const std::size_t cv = column("value"), cp = column("prediction_length"), cm = column("mean_mse"),
                      cs = column("std_mse");
    std::vector<std::string> categories, lengths;
    for (const auto& r : rows) {
      if (r.size() != header.size()) throw DataError(c.cli.input + ": wrong cell count");
      if (std::find(categories.begin(), categories.end(), r[cv]) == categories.end()) categories.push_back(r[cv]);
      if (std::find(lengths.begin(), lengths.end(), r[cp]) == lengths.end()) lengths.push_back(r[cp]);
    }
    std::vector<svg::BarGroup> groups;
    for (const auto& L : lengths) {
      svg::BarGroup g{"pred " + L, std::vector<double>(categories.size(), std::nan("")),
                      std::vector<double>(categories.size(), 0.0)};
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r][cp] != L) continue;
        const auto k = static_cast<std::size_t>(
            std::find(categories.begin(), categories.end(), rows[r][cv]) - categories.begin());
        if (!rows[r][cm].empty() && rows[r][cm] != "nan") g.values[k] = number(rows[r][cm], r + 2);
        if (!rows[r][cs].empty() && rows[r][cs] != "nan") g.err[k] = number(rows[r][cs], r + 2);
      }
      groups.push_back(std::move(g));
    }
    for (auto& cat : categories)
      if (cat.empty()) cat = "all";
    io::write_file_atomic((dir / "report.svg").string(), svg::bar_chart("experiment", "MSE", categories, groups));
    return kOk;
  }
  throw DataError(c.cli.input + ": expected a sweep.csv or report.csv header");
}

}  // namespace

int dispatch(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  Context c{cli, out, err};
  for (const auto& w : cli.warnings) err << "rtnet: warning: " << w << '\n';
  try {
    if (cli.command == "relate") return cmd_relate(c);
    if (cli.command == "train") return cmd_train(c);
    if (cli.command == "eval") return cmd_eval(c);
    if (cli.command == "sweep") return cmd_sweep(c);
    if (cli.command == "pacf") return cmd_pacf(c);
    if (cli.command == "experiment") return cmd_experiment(c);
    if (cli.command == "plot") return cmd_plot(c);
    err << "rtnet: error: unknown command '" << cli.command << "'\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "rtnet: configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    err << "rtnet: configuration error: malformed JSON: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "rtnet: error: " << e.what() << '\n';
    return kFailure;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  ParseResult parsed;
  try {
    parsed = parse_args(argc, argv);
  } catch (const ConfigError& e) {
    err << "rtnet: " << e.what() << '\n';
    return kUsage;
  }
  if (!parsed.config) {
    (parsed.exit_code == kOk ? out : err) << parsed.message;
    return parsed.exit_code;
  }
  return dispatch(*parsed.config, out, err);
}

}  // namespace rtnet::cli
