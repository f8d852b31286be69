#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rtnet/diagnostics.hpp"
#include "rtnet/error.hpp"
#include "rtnet/io.hpp"
#include "rtnet/parallel.hpp"

namespace rtnet::diagnostics {

Metrics metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " targets");
  if (pred.empty()) throw DimensionError("metrics: empty input");
  Metrics m;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - truth[k];
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  return m;
}

Metrics metrics(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw DimensionError("metrics: shape " + shape_str(pred.shape()) + " vs " + shape_str(truth.shape()));
  return metrics(pred.data(), truth.data());
}

std::vector<std::size_t> PacfResult::significant_lags() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < phi.size(); ++k)
    if (std::abs(phi[k]) > confidence_band) out.push_back(k + 1);
  return out;
}

std::vector<double> autocovariance(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n <= max_lag) throw DataError("autocovariance: series shorter than the lag");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> gamma(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = k; t < n; ++t) s += (series[t] - mean) * (series[t - k] - mean);
    gamma[k] = s / static_cast<double>(n);
  }
  return gamma;
}

PacfResult pacf(std::span<const double> series, std::size_t max_lag) {
  if (max_lag == 0) throw ConfigError("pacf: max_lag must be positive");
  if (series.size() <= max_lag + 1)
    throw DataError("pacf: need more than " + std::to_string(max_lag + 1) + " samples, got " +
                    std::to_string(series.size()));
  for (double v : series)
    if (!std::isfinite(v)) throw DataError("pacf: series holds a non-finite value");
  const auto gamma = autocovariance(series, max_lag);
  if (!(gamma[0] > 0.0)) throw DataError("pacf: series has zero variance");

  PacfResult r;
  r.n = series.size();
  r.confidence_band = 1.96 / std::sqrt(static_cast<double>(r.n));
  std::vector<double> prev, cur;  // phi_{k-1, j} and phi_{k, j}, j = 1..k
  double v = gamma[0];
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double num = gamma[k];
    for (std::size_t j = 1; j < k; ++j) num -= prev[j - 1] * gamma[k - j];
    const double kk = std::clamp(num / v, -1.0, 1.0);
    cur.assign(k, 0.0);
    for (std::size_t j = 1; j < k; ++j) cur[j - 1] = prev[j - 1] - kk * prev[k - j - 1];
    cur[k - 1] = kk;
    v *= 1.0 - kk * kk;
    r.phi.push_back(kk);
    prev.swap(cur);
    if (!(v > 0.0)) {
      // Perfectly predictable series: later partial correlations vanish.
      r.phi.resize(max_lag, 0.0);
      break;
    }
  }
  return r;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

SweepResult input_length_sweep(std::span<const std::size_t> lengths, std::span<const std::uint64_t> seeds,
                               const SweepRunner& run, const LengthCheck& admissible, std::size_t workers) {
  if (lengths.empty()) throw ConfigError("sweep: no input lengths");
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  SweepResult result;
  std::vector<std::size_t> usable;
  for (std::size_t L : lengths) {
    if (std::find(usable.begin(), usable.end(), L) != usable.end()) continue;
    const std::string why = admissible ? admissible(L) : std::string();
    if (!why.empty()) {
      result.warnings.push_back("input length " + std::to_string(L) + " skipped: " + why);
      continue;
    }
    usable.push_back(L);
  }
  for (std::size_t L : usable)
    for (auto s : seeds) {
      SweepCell cell;
      cell.length = L;
      cell.seed = s;
      result.cells.push_back(cell);
    }

  parallel_for(result.cells.size(), workers, [&](std::size_t i) {
    SweepCell& cell = result.cells[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Metrics m = run(cell.length, cell.seed);
      cell.mse = m.mse;
      cell.mae = m.mae;
      cell.ok = std::isfinite(m.mse) && std::isfinite(m.mae);
      if (!cell.ok) cell.error = "non-finite metrics";
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  for (const auto& c : result.cells)
    if (!c.ok)
      result.warnings.push_back("input length " + std::to_string(c.length) + ", seed " + std::to_string(c.seed) +
                                " failed: " + c.error);
  for (std::size_t L : usable) {
    std::vector<double> mse, mae;
    for (const auto& c : result.cells)
      if (c.length == L && c.ok) {
        mse.push_back(c.mse);
        mae.push_back(c.mae);
      }
    if (mse.empty()) continue;
    SweepRow row;
    row.length = L;
    row.runs = mse.size();
    std::tie(row.mean_mse, row.std_mse) = mean_std(mse);
    std::tie(row.mean_mae, row.std_mae) = mean_std(mae);
    result.rows.push_back(row);
  }
  if (result.rows.empty()) throw Error("sweep: every cell failed");
  const auto best = std::min_element(result.rows.begin(), result.rows.end(),
                                     [](const SweepRow& a, const SweepRow& b) { return a.mean_mse < b.mean_mse; });
  result.best_length = best->length;
  for (const auto& r : result.rows)
    if (r.mean_mse <= best->mean_mse * 1.05) result.near_optimal.push_back(r.length);
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "input_length,runs,mean_mse,std_mse,mean_mae,std_mae,best,near_optimal\n";
  for (const auto& r : result.rows) {
    const bool near =
        std::find(result.near_optimal.begin(), result.near_optimal.end(), r.length) != result.near_optimal.end();
    out << r.length << ',' << r.runs << ',' << io::number(r.mean_mse) << ',' << io::number(r.std_mse) << ','
        << io::number(r.mean_mae) << ',' << io::number(r.std_mae) << ',' << (r.length == result.best_length)
        << ',' << near << '\n';
  }
  return out.str();
}

}  // namespace rtnet::diagnostics
