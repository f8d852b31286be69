#include "rtnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rtnet/error.hpp"

namespace rtnet::data {

namespace {

using namespace std::chrono;

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

Instant add_months(Instant t, int months) {
  const sys_seconds tp{seconds{t}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const auto tod = tp - day;
  year_month_day shifted = ymd + std::chrono::months{months};
  if (!shifted.ok()) shifted = shifted.year() / shifted.month() / last;
  return (sys_days{shifted} + tod).time_since_epoch().count();
}

}  // namespace

Instant parse_datetime(std::string_view text) {
  text = trim(text);
  auto bad = [&]() -> DataError { return DataError("bad datetime '" + std::string(text) + "'"); };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y, mo, d, h = 0, mi = 0, s = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) || !parse_int(text.substr(8, 2), d))
    throw bad();
  if (text.size() > 10) {
    if (text[10] != ' ' && text[10] != 'T') throw bad();
    auto rest = text.substr(11);
    if (rest.size() != 5 && rest.size() != 8) throw bad();
    if (rest[2] != ':' || !parse_int(rest.substr(0, 2), h) || !parse_int(rest.substr(3, 2), mi)) throw bad();
    if (rest.size() == 8 && (rest[5] != ':' || !parse_int(rest.substr(6, 2), s))) throw bad();
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw bad();
  return (sys_days{ymd}.time_since_epoch() + hours{h} + minutes{mi} + seconds{s}).count();
}

std::string format_datetime(Instant t) {
  const sys_seconds tp{seconds{t}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss<seconds> tod{tp - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(tod.hours().count()), static_cast<long long>(tod.minutes().count()),
                static_cast<long long>(tod.seconds().count()));
  return buf;
}

TimeSeriesDataset TimeSeriesDataset::rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length()) throw DataError("row range out of bounds");
  TimeSeriesDataset out;
  out.names = names;
  out.target_index = target_index;
  out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                        timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  const std::size_t n = variates();
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * n),
                    values.begin() + static_cast<std::ptrdiff_t>(end * n));
  return out;
}

TimeSeriesDataset TimeSeriesDataset::target_only() const {
  TimeSeriesDataset out;
  out.timestamps = timestamps;
  out.names = {names[target_index]};
  out.target_index = 0;
  out.values = column(target_index);
  return out;
}

std::vector<double> TimeSeriesDataset::column(std::size_t col) const {
  std::vector<double> c(length());
  for (std::size_t r = 0; r < length(); ++r) c[r] = at(r, col);
  return c;
}

TimeSeriesDataset make_dataset(std::vector<double> values, std::vector<std::string> names, Instant start,
                               std::int64_t interval_seconds) {
  if (names.empty() || values.size() % names.size() != 0) throw DataError("values do not fill whole rows");
  if (interval_seconds <= 0) throw DataError("sampling interval must be positive");
  TimeSeriesDataset ds;
  const std::size_t rows = values.size() / names.size();
  ds.timestamps.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) ds.timestamps[r] = start + static_cast<Instant>(r) * interval_seconds;
  ds.values = std::move(values);
  ds.names = std::move(names);
  ds.target_index = ds.names.size() - 1;
  return ds;
}

TimeSeriesDataset parse_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> DataError {
    return DataError(source + ": line " + std::to_string(line_no) + ": " + what);
  };
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw DataError(source + ": file is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "date") throw fail("header must start with a 'date' column and a value column");
  TimeSeriesDataset ds;
  std::set<std::string> unique;
  for (std::size_t c = 1; c < header.size(); ++c) {
    std::string name(header[c]);
    if (name.empty()) throw fail("empty column name in header");
    if (!unique.insert(name).second) throw fail("duplicate column name '" + name + "'");
    ds.names.push_back(std::move(name));
  }
  ds.target_index = ds.names.size() - 1;
  const std::size_t n = ds.names.size();

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != n + 1)
      throw fail("expected " + std::to_string(n + 1) + " cells, found " + std::to_string(cells.size()));
    Instant t;
    try {
      t = parse_datetime(cells[0]);
    } catch (const DataError& e) {
      throw fail(e.what());
    }
    if (!ds.timestamps.empty()) {
      if (t <= ds.timestamps.back()) throw fail("timestamps are not strictly increasing");
      if (ds.timestamps.size() >= 2 &&
          t - ds.timestamps.back() != ds.timestamps[1] - ds.timestamps[0])
        throw fail("sampling interval changes (missing or extra rows)");
    }
    ds.timestamps.push_back(t);
    for (std::size_t c = 1; c <= n; ++c) {
      if (cells[c].empty()) throw fail("missing value in column '" + ds.names[c - 1] + "'");
      double v;
      auto [p, ec] = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      if (ec != std::errc() || p != cells[c].data() + cells[c].size() || !std::isfinite(v))
        throw fail("non-numeric value '" + std::string(cells[c]) + "' in column '" + ds.names[c - 1] + "'");
      ds.values.push_back(v);
    }
  }
  if (ds.timestamps.empty()) throw DataError(source + ": no data rows");
  return ds;
}

TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_csv(in, path);
}

SplitSpec SplitSpec::months(int train, int val, int test) {
  SplitSpec s;
  s.mode = SplitMode::Months;
  s.train_months = train;
  s.val_months = val;
  s.test_months = test;
  return s;
}

SplitSpec SplitSpec::ratio(double train, double val, double test) {
  SplitSpec s;
  s.mode = SplitMode::Ratio;
  s.train_ratio = train;
  s.val_ratio = val;
  s.test_ratio = test;
  return s;
}

Splits split(const TimeSeriesDataset& ds, const SplitSpec& spec) {
  Splits out;
  const std::size_t len = ds.length();
  if (spec.mode == SplitMode::Ratio) {
    if (!(spec.train_ratio > 0 && spec.val_ratio > 0 && spec.test_ratio > 0) ||
        std::abs(spec.train_ratio + spec.val_ratio + spec.test_ratio - 1.0) > 1e-9)
      throw ConfigError("split ratios must be positive and sum to 1");
    out.train_end = static_cast<std::size_t>(std::floor(spec.train_ratio * static_cast<double>(len)));
    out.val_end = out.train_end + static_cast<std::size_t>(std::floor(spec.val_ratio * static_cast<double>(len)));
    out.test_end = len;
  } else {
    if (spec.train_months <= 0 || spec.val_months <= 0 || spec.test_months <= 0)
      throw ConfigError("split months must be positive");
    if (len == 0) throw DataError("cannot split an empty dataset");
    const Instant t0 = ds.timestamps.front();
    const Instant b1 = add_months(t0, spec.train_months);
    const Instant b2 = add_months(t0, spec.train_months + spec.val_months);
    const Instant b3 = add_months(t0, spec.train_months + spec.val_months + spec.test_months);
    const std::int64_t step = len >= 2 ? ds.timestamps[1] - ds.timestamps[0] : 1;
    if (ds.timestamps.back() + step < b3)
      throw DataError("dataset spans " + format_datetime(t0) + " .. " + format_datetime(ds.timestamps.back()) +
                      ", shorter than the requested " +
                      std::to_string(spec.train_months + spec.val_months + spec.test_months) + " months");
    auto first_at = [&](Instant b) {
      return static_cast<std::size_t>(std::lower_bound(ds.timestamps.begin(), ds.timestamps.end(), b) -
                                      ds.timestamps.begin());
    };
    out.train_end = first_at(b1);
    out.val_end = first_at(b2);
    out.test_end = first_at(b3);
  }
  if (out.train_end == 0 || out.val_end == out.train_end || out.test_end == out.val_end)
    throw DataError("split leaves an empty partition (" + std::to_string(len) + " rows)");
  out.train = ds.rows(0, out.train_end);
  out.val = ds.rows(out.train_end, out.val_end);
  out.test = ds.rows(out.val_end, out.test_end);
  return out;
}

Standardizer Standardizer::fit(const TimeSeriesDataset& train, double guard_eps) {
  const std::size_t n = train.variates(), len = train.length();
  if (len == 0) throw DataError("cannot standardize with an empty training split");
  Standardizer s;
  s.mean.assign(n, 0.0);
  s.std.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < len; ++r) sum += train.at(r, c);
    const double m = sum / static_cast<double>(len);
    double ss = 0.0;
    for (std::size_t r = 0; r < len; ++r) ss += (train.at(r, c) - m) * (train.at(r, c) - m);
    s.mean[c] = m;
    s.std[c] = std::sqrt(ss / static_cast<double>(len));
    if (!(s.std[c] > 0.0)) {
      if (guard_eps > 0.0)
        s.std[c] = guard_eps;
      else
        throw DataError("variate '" + train.names[c] + "' has zero variance in the training split");
    }
  }
  return s;
}

void Standardizer::transform(TimeSeriesDataset& ds) const {
  const std::size_t n = ds.variates();
  if (n != mean.size()) throw DimensionError("standardizer fitted on a different variate count");
  for (std::size_t i = 0; i < ds.values.size(); ++i) ds.values[i] = (ds.values[i] - mean[i % n]) / std[i % n];
}

void Standardizer::inverse(TimeSeriesDataset& ds) const {
  const std::size_t n = ds.variates();
  if (n != mean.size()) throw DimensionError("standardizer fitted on a different variate count");
  for (std::size_t i = 0; i < ds.values.size(); ++i) ds.values[i] = ds.values[i] * std[i % n] + mean[i % n];
}

nlohmann::json Standardizer::to_json(const std::vector<std::string>& names) const {
  return {{"names", names}, {"mean", mean}, {"std", std}, {"statistics", "train split, population std"}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) throw DataError("standardizer sidecar is inconsistent");
  return s;
}

std::size_t window_count(std::size_t length, std::size_t input_length, std::size_t output_length) {
  const std::size_t need = input_length + output_length;
  if (input_length == 0 || output_length == 0) throw ConfigError("window lengths must be positive");
  if (length < need)
    throw DataError("split has " + std::to_string(length) + " rows; windows need at least " + std::to_string(need));
  return length - need + 1;
}

std::vector<std::size_t> make_windows(const TimeSeriesDataset& ds, std::size_t input_length,
                                      std::size_t output_length) {
  std::vector<std::size_t> offsets(window_count(ds.length(), input_length, output_length));
  for (std::size_t i = 0; i < offsets.size(); ++i) offsets[i] = i;
  return offsets;
}

std::vector<double> time_features(std::span<const Instant> timestamps) {
  std::vector<double> f;
  f.reserve(timestamps.size() * kTimeFeatures);
  for (Instant t : timestamps) {
    const sys_seconds tp{seconds{t}};
    const sys_days day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss<seconds> tod{tp - day};
    const weekday wd{day};
    const unsigned monday0 = (wd.c_encoding() + 6) % 7;
    const int doy = (day - sys_days{ymd.year() / January / 1}).count() + 1;

    // ISO week: the week holding this date's Thursday, counted in that
    // Thursday's year.
    const sys_days thursday = day - days{monday0} + days{3};
    const year_month_day th{thursday};
    const int iso_week = (thursday - sys_days{th.year() / January / 1}).count() / 7 + 1;

    f.push_back(static_cast<double>(tod.hours().count()) / 23.0 - 0.5);
    f.push_back(static_cast<double>(monday0) / 6.0 - 0.5);
    f.push_back((static_cast<double>(static_cast<unsigned>(ymd.day())) - 1.0) / 30.0 - 0.5);
    f.push_back((static_cast<double>(doy) - 1.0) / 365.0 - 0.5);
    f.push_back((static_cast<double>(iso_week) - 1.0) / 52.0 - 0.5);
    f.push_back((static_cast<double>(static_cast<unsigned>(ymd.month())) - 1.0) / 11.0 - 0.5);
  }
  return f;
}

WindowBatch make_batch(const TimeSeriesDataset& ds, std::span<const std::size_t> offsets, std::size_t input_length,
                       std::size_t output_length, Marks marks) {
  if (offsets.empty()) throw DataError("empty batch");
  const std::size_t B = offsets.size(), n = ds.variates(), span = input_length + output_length;
  WindowBatch wb;
  wb.offsets.assign(offsets.begin(), offsets.end());
  wb.inputs = Tensor::zeros({B, input_length, n});
  wb.targets = Tensor::zeros({B, output_length, n});
  if (marks == Marks::Target) wb.target_marks = Tensor::zeros({B, output_length, kTimeFeatures});
  if (marks == Marks::Input) wb.input_marks = Tensor::zeros({B, input_length, kTimeFeatures});
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t o = offsets[b];
    if (o + span > ds.length())
      throw DataError("window at offset " + std::to_string(o) + " runs past the end of its split");
    std::copy_n(ds.values.begin() + static_cast<std::ptrdiff_t>(o * n), input_length * n,
                wb.inputs.data().begin() + static_cast<std::ptrdiff_t>(b * input_length * n));
    std::copy_n(ds.values.begin() + static_cast<std::ptrdiff_t>((o + input_length) * n), output_length * n,
                wb.targets.data().begin() + static_cast<std::ptrdiff_t>(b * output_length * n));
    if (marks == Marks::Target) {
      auto f = time_features(std::span(ds.timestamps).subspan(o + input_length, output_length));
      std::copy(f.begin(), f.end(), wb.target_marks.data().begin() + static_cast<std::ptrdiff_t>(b * f.size()));
    }
    if (marks == Marks::Input) {
      auto f = time_features(std::span(ds.timestamps).subspan(o, input_length));
      std::copy(f.begin(), f.end(), wb.input_marks.data().begin() + static_cast<std::ptrdiff_t>(b * f.size()));
    }
  }
  return wb;
}

}  // namespace rtnet::data
