#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rtnet/tensor.hpp"

namespace rtnet::data {

/// Seconds since 1970-01-01 00:00:00, read as naive wall-clock time.
using Instant = std::int64_t;

/// Parses "YYYY-MM-DD HH:MM:SS" (also "T" as separator, or without seconds).
Instant parse_datetime(std::string_view text);
std::string format_datetime(Instant t);

struct TimeSeriesDataset {
  std::vector<Instant> timestamps;
  std::vector<double> values;  // row-major, length x variates
  std::vector<std::string> names;
  std::size_t target_index = 0;

  std::size_t length() const { return timestamps.size(); }
  std::size_t variates() const { return names.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * names.size() + col]; }

  /// Rows [begin, end) as a new dataset.
  TimeSeriesDataset rows(std::size_t begin, std::size_t end) const;
  /// Keeps only the target column (univariate task).
  TimeSeriesDataset target_only() const;
  /// Column `col` as a contiguous vector.
  std::vector<double> column(std::size_t col) const;
};

/// Builds a dataset from a time-major value matrix with evenly spaced
/// timestamps; the last name is the target.
TimeSeriesDataset make_dataset(std::vector<double> values, std::vector<std::string> names, Instant start,
                               std::int64_t interval_seconds);

/// Reads a CSV with a "date" column followed by numeric columns.
/// Errors name the offending line (the header is line 1).
TimeSeriesDataset load_csv(const std::string& path);
TimeSeriesDataset parse_csv(std::istream& in, const std::string& source = "<stream>");

enum class SplitMode { Months, Ratio };

struct SplitSpec {
  SplitMode mode = SplitMode::Ratio;
  int train_months = 12, val_months = 4, test_months = 4;
  double train_ratio = 0.6, val_ratio = 0.2, test_ratio = 0.2;

  static SplitSpec months(int train = 12, int val = 4, int test = 4);
  static SplitSpec ratio(double train = 0.6, double val = 0.2, double test = 0.2);
};

struct Splits {
  TimeSeriesDataset train, val, test;
  // Row boundaries in the source: train [0, train_end), val [train_end,
  // val_end), test [val_end, test_end).
  std::size_t train_end = 0, val_end = 0, test_end = 0;
};

Splits split(const TimeSeriesDataset& ds, const SplitSpec& spec);

/// Per-variate z-score fitted on the training split.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation

  /// Throws DataError for a zero-variance variate unless guard_eps > 0, in
  /// which case its scale becomes guard_eps.
  static Standardizer fit(const TimeSeriesDataset& train, double guard_eps = 0.0);

  void transform(TimeSeriesDataset& ds) const;
  void inverse(TimeSeriesDataset& ds) const;
  double inverse_value(double v, std::size_t variate) const { return v * std[variate] + mean[variate]; }

  nlohmann::json to_json(const std::vector<std::string>& names) const;
  static Standardizer from_json(const nlohmann::json& j);
};

/// Number of windows of L_in + L_out rows; DataError naming the minimum
/// length when there are none.
std::size_t window_count(std::size_t length, std::size_t input_length, std::size_t output_length);

/// Offsets o such that input rows are [o, o+L_in), target rows
/// [o+L_in, o+L_in+L_out).
std::vector<std::size_t> make_windows(const TimeSeriesDataset& ds, std::size_t input_length,
                                      std::size_t output_length);

constexpr std::size_t kTimeFeatures = 6;

/// rows x 6 features in [-0.5, 0.5]: hour-of-day, day-of-week (Monday = 0),
/// day-of-month, day-of-year, ISO week-of-year, month-of-year.
std::vector<double> time_features(std::span<const Instant> timestamps);

enum class Marks { None, Target, Input };

struct WindowBatch {
  std::vector<std::size_t> offsets;
  Tensor inputs;        // (B, L_in, N)
  Tensor targets;       // (B, L_out, N)
  Tensor target_marks;  // (B, L_out, 6) when requested
  Tensor input_marks;   // (B, L_in, 6) when requested
};

/// Assembles a batch from one split. Rows never leave `ds`.
WindowBatch make_batch(const TimeSeriesDataset& ds, std::span<const std::size_t> offsets, std::size_t input_length,
                       std::size_t output_length, Marks marks);

}  // namespace rtnet::data
