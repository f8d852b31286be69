#include "rtnet/relation.hpp"

#include <cmath>
#include <numbers>

#include "rtnet/error.hpp"
#include "rtnet/tape.hpp"

namespace rtnet::relation {

RelationMatrix RelationMatrix::identity(std::size_t n) {
  RelationMatrix m;
  m.n = n;
  m.raw.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.raw[i * n + i] = 1.0;
  m.processed = m.raw;
  m.theta_degrees = 0.0;
  m.column_normalized = true;
  return m;
}

std::vector<double> cos_relation_matrix(std::span<const double> series, std::size_t length, std::size_t variates,
                                        std::span<const std::string> names) {
  if (length < 2) throw DataError("relation matrix needs at least 2 samples per variate");
  if (series.size() != length * variates) throw DimensionError("relation matrix: series size mismatch");
  std::vector<double> norms(variates, 0.0);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t j = 0; j < variates; ++j) norms[j] += series[t * variates + j] * series[t * variates + j];
  for (std::size_t j = 0; j < variates; ++j) {
    norms[j] = std::sqrt(norms[j]);
    if (!(norms[j] > 0.0)) {
      const std::string label = j < names.size() ? "'" + names[j] + "'" : "#" + std::to_string(j);
      throw DataError("relation matrix: variate " + label + " has zero norm");
    }
  }
  std::vector<double> w(variates * variates, 0.0);
  for (std::size_t i = 0; i < variates; ++i) {
    w[i * variates + i] = 1.0;
    for (std::size_t j = i + 1; j < variates; ++j) {
      double d = 0.0;
      for (std::size_t t = 0; t < length; ++t) d += series[t * variates + i] * series[t * variates + j];
      const double c = std::min(1.0, std::abs(d) / (norms[i] * norms[j]));
      w[i * variates + j] = c;
      w[j * variates + i] = c;
    }
  }
  return w;
}

std::vector<double> threshold_and_standardize(std::span<const double> raw, std::size_t n, double theta_degrees) {
  if (!(theta_degrees >= 0.0 && theta_degrees <= 90.0))
    throw ConfigError("relation threshold angle must lie in [0, 90] degrees");
  if (raw.size() != n * n) throw DimensionError("relation matrix must be N x N");
  const double cut = theta_degrees == 90.0 ? 0.0 : std::cos(theta_degrees * std::numbers::pi / 180.0);
  std::vector<double> p(raw.begin(), raw.end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && p[i * n + j] < cut) p[i * n + j] = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i * n + j];
    if (!(s > 0.0)) throw InternalError("relation column " + std::to_string(j) + " sums to zero");
    for (std::size_t i = 0; i < n; ++i) p[i * n + j] /= s;
  }
  return p;
}

RelationMatrix build(std::span<const double> series, std::size_t length, std::size_t variates, double theta_degrees,
                     std::span<const std::string> names) {
  RelationMatrix m;
  m.n = variates;
  m.raw = cos_relation_matrix(series, length, variates, names);
  m.processed = threshold_and_standardize(m.raw, variates, theta_degrees);
  m.theta_degrees = theta_degrees;
  m.column_normalized = true;
  return m;
}

Tensor apply_relation(const Tensor& input, const RelationMatrix& matrix) {
  if (input.rank() != 3 || input.dim(2) != matrix.n)
    throw DimensionError("apply_relation: input " + shape_str(input.shape()) + " does not end in N=" +
                         std::to_string(matrix.n));
  const std::size_t rows = input.dim(0) * input.dim(1), n = matrix.n;
  const std::vector<double> w = matrix.processed;
  Tensor out = Tensor::zeros(input.shape());
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (w[j * n + i] != 0.0) s += x[r * n + j] * w[j * n + i];
      y[r * n + i] = s;
    }
  if (detail::should_record({&input})) {
    auto xi = input.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {input}, [xi, yi, w, rows, n]() {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i) {
          const double g = yi->grad[r * n + i];
          for (std::size_t j = 0; j < n; ++j)
            if (w[j * n + i] != 0.0) xi->grad[r * n + j] += g * w[j * n + i];
        }
    });
  }
  return out;
}

double bic_score(std::size_t m, std::size_t k, double log_likelihood) {
  if (m < 1) throw ConfigError("bic_score: m must be at least 1");
  return std::log(static_cast<double>(m)) * static_cast<double>(k) - 2.0 * log_likelihood;
}

double gaussian_log_likelihood(std::span<const double> residuals) {
  if (residuals.empty()) throw DataError("gaussian_log_likelihood: no residuals");
  double ss = 0.0;
  for (double r : residuals) ss += r * r;
  const double m = static_cast<double>(residuals.size());
  const double s2 = std::max(ss / m, 1e-12);
  return -0.5 * m * (std::log(2.0 * std::numbers::pi * s2) + 1.0);
}

}  // namespace rtnet::relation
