#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet::diagnostics {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Mean squared and mean absolute error over all elements.
Metrics metrics(std::span<const double> pred, std::span<const double> truth);
Metrics metrics(const Tensor& pred, const Tensor& truth);

struct PacfResult {
  std::vector<double> phi;  // phi[k - 1] is the lag-k partial autocorrelation
  std::size_t n = 0;
  double confidence_band = 0.0;  // 1.96 / sqrt(n)

  std::size_t max_lag() const { return phi.size(); }
  double at(std::size_t lag) const { return phi.at(lag - 1); }
  /// Lags whose |phi_kk| exceeds the band.
  std::vector<std::size_t> significant_lags() const;
};

/// Sample autocovariances gamma_0..gamma_max_lag with the 1/n estimator.
std::vector<double> autocovariance(std::span<const double> series, std::size_t max_lag);

/// Durbin-Levinson on the biased autocovariances.
PacfResult pacf(std::span<const double> series, std::size_t max_lag);

struct SweepCell {
  std::size_t length = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double mse = 0.0, mae = 0.0;
  double seconds = 0.0;
  std::string error;
};

struct SweepRow {
  std::size_t length = 0;
  std::size_t runs = 0;  // successful seeds
  double mean_mse = 0.0, std_mse = 0.0;
  double mean_mae = 0.0, std_mae = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // admissible lengths with at least one run, in request order
  std::vector<SweepCell> cells;
  std::size_t best_length = 0;
  /// Lengths whose mean MSE is within 5% of the best; a descriptive proxy
  /// for the fluctuation band, not a statistical test.
  std::vector<std::size_t> near_optimal;
  std::vector<std::string> warnings;
};

/// Trains and scores one (length, seed) cell; throws on failure.
using SweepRunner = std::function<Metrics(std::size_t length, std::uint64_t seed)>;
/// Empty string when the length is usable, otherwise the reason.
using LengthCheck = std::function<std::string(std::size_t length)>;

/// Runs every admissible (length, seed) cell on up to `workers` threads.
/// Inadmissible lengths and failing cells become warnings.
SweepResult input_length_sweep(std::span<const std::size_t> lengths, std::span<const std::uint64_t> seeds,
                               const SweepRunner& run, const LengthCheck& admissible, std::size_t workers = 1);

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
std::pair<double, double> mean_std(std::span<const double> values);

std::string sweep_csv(const SweepResult& result);

}  // namespace rtnet::diagnostics
