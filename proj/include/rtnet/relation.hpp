#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet::relation {

/// N x N absolute-cosine relation between variates, row-major.
struct RelationMatrix {
  std::size_t n = 0;
  std::vector<double> raw;        // |cos(x_i, x_j)|, symmetric, unit diagonal
  std::vector<double> processed;  // thresholded, columns summing to 1
  double theta_degrees = 90.0;
  bool column_normalized = false;

  double raw_at(std::size_t i, std::size_t j) const { return raw[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return processed[i * n + j]; }

  static RelationMatrix identity(std::size_t n);
};

/// Raw matrix from a time-major series (length rows x variates columns).
/// `names` only decorate error messages.
std::vector<double> cos_relation_matrix(std::span<const double> series, std::size_t length, std::size_t variates,
                                        std::span<const std::string> names = {});

/// Zeroes raw entries below cos(theta), then divides every column by its sum.
std::vector<double> threshold_and_standardize(std::span<const double> raw, std::size_t n, double theta_degrees);

/// Convenience: both steps, packed into a RelationMatrix.
RelationMatrix build(std::span<const double> series, std::size_t length, std::size_t variates,
                     double theta_degrees, std::span<const std::string> names = {});

/// input (B, L, N) post-multiplied by the processed matrix: output variate i
/// is sum_j input_j * w_ji. Zero weights are skipped entirely, so a variate
/// with w_ji = 0 cannot influence variate i in any way.
Tensor apply_relation(const Tensor& input, const RelationMatrix& matrix);

/// ln(m) * k - 2 * log_likelihood.
double bic_score(std::size_t m, std::size_t k, double log_likelihood);

/// Gaussian log-likelihood of residuals at the maximum-likelihood variance,
/// -(m/2) * (ln(2 pi s2) + 1), with s2 floored at 1e-12.
double gaussian_log_likelihood(std::span<const double> residuals);

}  // namespace rtnet::relation
