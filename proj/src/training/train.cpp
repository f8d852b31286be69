#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "rtnet/adam.hpp"
#include "rtnet/error.hpp"
#include "rtnet/log.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/tape.hpp"
#include "rtnet/training.hpp"

namespace rtnet::training {

namespace {

// Independent streams derived from the master seed.
enum Stream : std::uint64_t { kShuffle = 1, kDropout = 2, kAugment = 3, kSampler = 4 };

std::mt19937_64 stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

model::ModelInput to_input(data::WindowBatch& b) {
  return {b.inputs, b.input_marks, b.target_marks};
}

struct Snapshot {
  std::vector<std::vector<double>> params, buffers;

  static Snapshot take(model::RTNet& net) {
    Snapshot s;
    for (auto& p : net.parameters()) s.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    for (auto& b : net.buffers()) s.buffers.push_back(*b.values);
    return s;
  }

  void restore(model::RTNet& net) const {
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(this->params[i].begin(), this->params[i].end(), params[i].tensor.data().begin());
    auto bufs = net.buffers();
    for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].values = buffers[i];
  }
};

void check_data(const model::RTNet& net, const TrainData& data) {
  if (!data.train || !data.val) throw ConfigError("training needs train and validation splits");
  const auto& cfg = net.config();
  if (data.train->variates() != cfg.variates)
    throw DimensionError("dataset has " + std::to_string(data.train->variates()) + " variates, model expects " +
                         std::to_string(cfg.variates));
  if (cfg.time_mode != model::TimeMode::None && cfg.time_features != data::kTimeFeatures)
    throw ConfigError("calendar marks carry " + std::to_string(data::kTimeFeatures) + " features, model expects " +
                      std::to_string(cfg.time_features));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t windows, std::size_t batch, std::size_t cap,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> order(windows);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  if (windows < batch) {
    out.push_back(order);
  } else {
    for (std::size_t s = 0; s + batch <= windows; s += batch)  // the trailing partial batch is dropped
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                       order.begin() + static_cast<std::ptrdiff_t>(s + batch));
  }
  if (cap && out.size() > cap) out.resize(cap);
  return out;
}

void check_finite(const Tensor& loss, const char* phase, std::size_t epoch, std::size_t step) {
  for (double v : loss.data())
    if (!std::isfinite(v))
      throw NumericalError(std::string(phase) + " diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
}

// One supervised phase shared by end-to-end training and contrastive stage 2.
void supervised_phase(model::RTNet& net, const TrainData& data, const TrainConfig& cfg, Format format,
                      std::size_t batch_size, ParamList params, History& history, const EpochCallback& on_epoch) {
  const auto& mcfg = net.config();
  const data::Marks marks = marks_for(mcfg);
  const std::size_t windows = data::window_count(data.train->length(), mcfg.input_length, mcfg.output_length);
  data::window_count(data.val->length(), mcfg.input_length, mcfg.output_length);

  Adam opt(params, {cfg.lr});
  auto shuffle_rng = stream(cfg.seed, kShuffle);
  auto dropout_rng = stream(cfg.seed, kDropout);
  EvalOptions eval_opts;
  eval_opts.format = format;
  eval_opts.max_windows = cfg.max_eval_windows;
  eval_opts.batch_size = cfg.eval_batch_size;

  Snapshot best = Snapshot::take(net);
  std::vector<double> val_history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss.assign(mcfg.variates, 0.0);
    const auto batches = epoch_batches(windows, batch_size, cfg.max_batches_per_epoch, shuffle_rng);
    for (std::size_t step = 0; step < batches.size(); ++step) {
      auto batch = data::make_batch(*data.train, batches[step], mcfg.input_length, mcfg.output_length, marks);
      opt.zero_grad();
      GradTape tape;
      Tensor loss_vec, total;
      {
        TapeScope scope(tape);
        auto in = to_input(batch);
        Tensor pred = format == Format::EndToEnd ? net.forward(in, true, &dropout_rng)
                                                 : net.forward_contrastive(in, true, &dropout_rng);
        loss_vec = mse_loss_vector(pred, batch.targets);
        total = sum(loss_vec);
      }
      check_finite(loss_vec, "training", epoch, step);
      tape.backward(total);
      opt.step();
      for (std::size_t i = 0; i < mcfg.variates; ++i)
        rec.train_loss[i] += loss_vec.data()[i] / static_cast<double>(batches.size());
    }
    const Evaluation ev = evaluate(net, *data.val, eval_opts);
    rec.val_mse = ev.mse;
    rec.val_mae = ev.mae;
    history.epochs.push_back(rec);
    val_history.push_back(ev.mse);
    if (on_epoch) on_epoch(rec);
    log::debug("epoch ", epoch, " val mse ", ev.mse, " mae ", ev.mae);

    const auto decision = early_stop(val_history, cfg.patience);
    if (decision.best_index == val_history.size() - 1) best = Snapshot::take(net);
    history.best_epoch = decision.best_index;
    if (decision.stop) {
      history.stopped_early = true;
      break;
    }
  }
  best.restore(net);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (epochs == 0) fail("epochs must be positive");
  if (batch_size == 0 || contrastive_batch_size == 0 || head_batch_size == 0 || eval_batch_size == 0)
    fail("batch sizes must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (patience == 0) fail("patience must be at least 1");
  if (!(alpha >= 1.0)) fail("alpha must be at least 1");
  if (!(beta >= 0.0)) fail("beta must be non-negative");
}

std::string to_string(Format f) { return f == Format::EndToEnd ? "e2e" : "contrastive"; }

Format parse_format(std::string_view name) {
  if (name == "e2e" || name == "E") return Format::EndToEnd;
  if (name == "contrastive" || name == "C") return Format::Contrastive;
  throw ConfigError("unknown format '" + std::string(name) + "' (expected e2e or contrastive)");
}

data::Marks marks_for(const model::ModelConfig& cfg) {
  switch (cfg.time_mode) {
    case model::TimeMode::Decoupled: return data::Marks::Target;
    case model::TimeMode::Concat: return data::Marks::Input;
    case model::TimeMode::None: break;
  }
  return data::Marks::None;
}

Evaluation evaluate(model::RTNet& net, const data::TimeSeriesDataset& split, const EvalOptions& options) {
  const auto& cfg = net.config();
  auto offsets = data::make_windows(split, cfg.input_length, cfg.output_length);
  if (options.max_windows && offsets.size() > options.max_windows) {
    std::vector<std::size_t> picked(options.max_windows);
    const std::size_t last = offsets.size() - 1;
    for (std::size_t k = 0; k < picked.size(); ++k)
      picked[k] = picked.size() == 1 ? 0 : k * last / (picked.size() - 1);
    offsets = std::move(picked);
  }
  const std::size_t n = cfg.variates;
  if (options.raw_scale && options.raw_scale->mean.size() != n)
    throw DimensionError("raw-scale standardizer does not match the variate count");
  Evaluation ev;
  ev.per_variate_mse.assign(n, 0.0);
  double se = 0.0, ae = 0.0;
  std::size_t count = 0;
  NoGradScope no_grad;
  for (std::size_t s = 0; s < offsets.size(); s += options.batch_size) {
    const std::size_t e = std::min(offsets.size(), s + options.batch_size);
    auto batch = data::make_batch(split, std::span(offsets).subspan(s, e - s), cfg.input_length, cfg.output_length,
                                  marks_for(cfg));
    auto in = to_input(batch);
    Tensor pred = options.format == Format::EndToEnd ? net.forward(in, false) : net.forward_contrastive(in, false);
    const double* p = pred.data().data();
    const double* y = batch.targets.data().data();
    for (std::size_t k = 0; k < pred.numel(); ++k) {
      double pv = p[k], yv = y[k];
      if (options.raw_scale) {
        pv = options.raw_scale->inverse_value(pv, k % n);
        yv = options.raw_scale->inverse_value(yv, k % n);
      }
      const double d = pv - yv;
      se += d * d;
      ae += std::abs(d);
      ev.per_variate_mse[k % n] += d * d;
    }
    count += pred.numel();
  }
  ev.windows = offsets.size();
  ev.mse = se / static_cast<double>(count);
  ev.mae = ae / static_cast<double>(count);
  for (auto& v : ev.per_variate_mse) v /= static_cast<double>(count / n);
  return ev;
}

History train_end_to_end(model::RTNet& net, const TrainData& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  check_data(net, data);
  History history;
  supervised_phase(net, data, cfg, Format::EndToEnd, cfg.batch_size, net.parameters(), history, on_epoch);
  return history;
}

History train_contrastive(model::RTNet& net, const TrainData& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  cfg.validate();
  check_data(net, data);
  const auto& mcfg = net.config();
  const data::Marks marks = marks_for(mcfg);
  const data::Marks rep_marks = marks == data::Marks::Input ? marks : data::Marks::None;
  const std::size_t windows = data::window_count(data.train->length(), mcfg.input_length, mcfg.output_length);
  const std::size_t B = cfg.contrastive_batch_size, per = 1 + cfg.instances;
  std::size_t steps = std::max<std::size_t>(1, windows / B);
  if (cfg.max_batches_per_epoch) steps = std::min(steps, cfg.max_batches_per_epoch);

  History history;
  Adam opt(net.backbone_parameters(), {cfg.lr});
  auto sampler_rng = stream(cfg.seed, kSampler);
  auto augment_rng = stream(cfg.seed, kAugment);
  auto dropout_rng = stream(cfg.seed, kDropout);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss.assign(mcfg.groups, 0.0);
    for (std::size_t step = 0; step < steps; ++step) {
      auto offsets = sample_condition1(windows, B, mcfg.input_length, cfg.alpha, sampler_rng);
      auto batch = data::make_batch(*data.train, offsets, mcfg.input_length, mcfg.output_length, rep_marks);
      const std::size_t window_size = mcfg.input_length * mcfg.variates;
      Tensor inputs = Tensor::zeros({B * per, mcfg.input_length, mcfg.variates});
      Tensor input_marks;
      if (rep_marks == data::Marks::Input)
        input_marks = Tensor::zeros({B * per, mcfg.input_length, data::kTimeFeatures});
      for (std::size_t m = 0; m < B; ++m) {
        Tensor original = Tensor::from({window_size}, std::vector<double>(
                                                          batch.inputs.data().begin() + m * window_size,
                                                          batch.inputs.data().begin() + (m + 1) * window_size));
        for (std::size_t i = 0; i < per; ++i) {
          Tensor inst = i == 0 ? original
                               : augment(original, {random_augment_kind(augment_rng), cfg.beta}, augment_rng);
          std::copy(inst.data().begin(), inst.data().end(), inputs.data().begin() + (m * per + i) * window_size);
          if (input_marks.defined()) {
            const std::size_t mk = mcfg.input_length * data::kTimeFeatures;
            std::copy_n(batch.input_marks.data().begin() + m * mk, mk, input_marks.data().begin() + (m * per + i) * mk);
          }
        }
      }
      opt.zero_grad();
      GradTape tape;
      Tensor loss_vec, total;
      {
        TapeScope scope(tape);
        Tensor reps = net.representations({inputs, input_marks, {}}, true, &dropout_rng);
        loss_vec = contrastive_loss(reps, B, cfg.instances, mcfg.groups);
        total = sum(loss_vec);
      }
      check_finite(loss_vec, "contrastive stage", epoch, step);
      tape.backward(total);
      opt.step();
      history.stage1_step_loss.push_back(total.item());
      for (std::size_t g = 0; g < mcfg.groups; ++g)
        rec.train_loss[g] += loss_vec.data()[g] / static_cast<double>(steps);
    }
    history.stage1.push_back(rec);
    log::debug("stage 1 epoch ", epoch, " loss ", history.stage1_step_loss.back());
  }

  net.freeze_backbone();
  supervised_phase(net, data, cfg, Format::Contrastive, cfg.head_batch_size, net.head_parameters(), history,
                   on_epoch);
  return history;
}

void write_history_csv(const std::string& path, const History& history, const std::vector<std::string>& names) {
  const std::filesystem::path target(path), tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << "phase,epoch";
    for (const auto& n : names) out << ",train_loss_" << n;
    out << ",val_mse,val_mae\n";
    out << std::setprecision(17);
    auto row = [&](const char* phase, const EpochRecord& r, bool has_val) {
      out << phase << ',' << r.epoch;
      for (std::size_t i = 0; i < names.size(); ++i) {
        out << ',';
        if (i < r.train_loss.size()) out << r.train_loss[i];
      }
      if (has_val)
        out << ',' << r.val_mse << ',' << r.val_mae << '\n';
      else
        out << ",,\n";
    };
    for (const auto& r : history.stage1) row("contrastive", r, false);
    for (const auto& r : history.epochs) row(history.stage1.empty() ? "e2e" : "head", r, true);
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace rtnet::training
