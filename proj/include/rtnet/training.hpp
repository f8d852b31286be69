#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtnet/data.hpp"
#include "rtnet/model.hpp"
#include "rtnet/tensor.hpp"

namespace rtnet::training {

/// Entry i: mean squared error over batch and horizon of variate i.
/// pred, truth (B, L_out, N) -> (N). Differentiable in pred.
Tensor mse_loss_vector(const Tensor& pred, const Tensor& truth);

enum class AugmentKind { Scaling, Jittering, EntiretyScaling };

struct AugmentSpec {
  AugmentKind kind = AugmentKind::Scaling;
  double beta = 0.2;  // supremum of |beta'|
};

/// Scaling: x * (1 + b_i); Jittering: x + b_i; EntiretyScaling: x * (1 + b)
/// with one b for the whole window; every b ~ U(-beta, beta).
Tensor augment(const Tensor& window, const AugmentSpec& spec, std::mt19937_64& rng);
AugmentKind random_augment_kind(std::mt19937_64& rng);

/// Smallest offset gap keeping pairwise input overlap <= L_in (1 - 1/alpha).
std::size_t condition1_gap(std::size_t input_length, double alpha);
/// Largest batch that fits among `window_count` consecutive offsets.
std::size_t condition1_max_batch(std::size_t window_count, std::size_t input_length, double alpha);
/// Overlap in rows between two input windows.
std::size_t window_overlap(std::size_t a, std::size_t b, std::size_t input_length);

/// B distinct offsets in [0, window_count) whose input windows pairwise
/// overlap by at most L_in (1 - 1/alpha). Rejection sampling first, then an
/// evenly spaced sweep from a random start. Throws SamplerError stating the
/// largest feasible B when the request cannot be met.
std::vector<std::size_t> sample_condition1(std::size_t window_count, std::size_t batch, std::size_t input_length,
                                           double alpha, std::mt19937_64& rng);

/// exp(|cos(u, v)|), in [1, e].
double similarity(std::span<const double> u, std::span<const double> v);

/// Representations (B (1 + I), F): row m (1 + I) is window m, the next I
/// rows its augmented instances. F splits into `groups` contiguous blocks,
/// one per variate group. Returns the per-group loss (groups), each the
/// mean over windows m of
///   -log[(e + sum_i sim(h_m, h_mi)) / sum_j (sim(h_m, h_j) + sum_i sim(h_m, h_ji))]
/// with sim(h_m, h_m) taken as the constant e. Differentiable in reps.
Tensor contrastive_loss(const Tensor& reps, std::size_t windows, std::size_t instances, std::size_t groups);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;              // end-to-end
  std::size_t contrastive_batch_size = 64;  // stage 1
  std::size_t head_batch_size = 16;         // stage 2
  double lr = 1e-4;
  std::size_t patience = 3;
  double alpha = 4.0;
  std::size_t instances = 3;  // augmented copies per window
  double beta = 0.2;
  std::uint64_t seed = 1;
  std::size_t max_batches_per_epoch = 0;  // 0: every batch
  std::size_t max_eval_windows = 0;       // 0: every window; otherwise evenly spaced
  std::size_t eval_batch_size = 64;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::vector<double> train_loss;  // per variate (per group in stage 1)
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;       // end-to-end, or stage 2
  std::vector<EpochRecord> stage1;       // contrastive stage, no validation
  std::vector<double> stage1_step_loss;  // summed loss per stage-1 step
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_index = 0;
};

/// Stop once `patience` evaluations have passed without a strict
/// improvement on the best value so far.
EarlyStopDecision early_stop(std::span<const double> val_history, std::size_t patience);

/// Standardized splits plus what the model needs to see from them.
struct TrainData {
  const data::TimeSeriesDataset* train = nullptr;
  const data::TimeSeriesDataset* val = nullptr;
};

enum class Format { EndToEnd, Contrastive };
std::string to_string(Format f);
Format parse_format(std::string_view name);

struct Evaluation {
  double mse = 0.0, mae = 0.0;
  std::vector<double> per_variate_mse;
  std::size_t windows = 0;
};

struct EvalOptions {
  Format format = Format::EndToEnd;
  std::size_t max_windows = 0;
  std::size_t batch_size = 64;
  // When set, predictions and targets are mapped back to the raw scale.
  const data::Standardizer* raw_scale = nullptr;
};

data::Marks marks_for(const model::ModelConfig& cfg);

Evaluation evaluate(model::RTNet& net, const data::TimeSeriesDataset& split, const EvalOptions& options);

/// Called after every epoch; return false to abort training.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on the summed loss vector, one validation per epoch, early stopping;
/// the best-validation parameters are restored before returning.
History train_end_to_end(model::RTNet& net, const TrainData& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

/// Stage 1: contrastive loss over CPN parameters on Condition-1 batches with
/// augmented instances. Stage 2: frozen backbone, head (and TimeNet) trained
/// on the loss vector with early stopping.
History train_contrastive(model::RTNet& net, const TrainData& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

/// CSV: epoch, train_loss_<name>..., val_mse, val_mae.
void write_history_csv(const std::string& path, const History& history, const std::vector<std::string>& names);

}  // namespace rtnet::training
