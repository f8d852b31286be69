#include <algorithm>
#include <cmath>
#include <numbers>

#include "rtnet/error.hpp"
#include "rtnet/tape.hpp"
#include "rtnet/training.hpp"

namespace rtnet::training {

Tensor mse_loss_vector(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape() || pred.rank() != 3)
    throw DimensionError("mse_loss_vector: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(truth.shape()));
  const std::size_t n = pred.dim(2), rows = pred.dim(0) * pred.dim(1);
  Tensor out = Tensor::zeros({n});
  const double* p = pred.data().data();
  const double* y = truth.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[r * n + i] - y[r * n + i];
      out.data()[i] += d * d;
    }
  for (auto& v : out.data()) v /= static_cast<double>(rows);
  if (detail::should_record({&pred})) {
    auto pi = pred.impl_ptr(), yi = truth.impl_ptr(), oi = out.impl_ptr();
    detail::record_op(out, {pred}, [pi, yi, oi, n, rows]() {
      const double scale = 2.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i)
          pi->grad[r * n + i] += scale * (pi->data[r * n + i] - yi->data[r * n + i]) * oi->grad[i];
    });
  }
  return out;
}

AugmentKind random_augment_kind(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  return static_cast<AugmentKind>(pick(rng));
}

Tensor augment(const Tensor& window, const AugmentSpec& spec, std::mt19937_64& rng) {
  if (!(spec.beta >= 0.0)) throw ConfigError("augmentation beta must be non-negative");
  Tensor out = window.detach();
  if (spec.beta == 0.0) return out;
  std::uniform_real_distribution<double> u(-spec.beta, spec.beta);
  switch (spec.kind) {
    case AugmentKind::Scaling:
      for (auto& v : out.data()) v *= 1.0 + u(rng);
      break;
    case AugmentKind::Jittering:
      for (auto& v : out.data()) v += u(rng);
      break;
    case AugmentKind::EntiretyScaling: {
      const double b = u(rng);
      for (auto& v : out.data()) v *= 1.0 + b;
      break;
    }
  }
  return out;
}

std::size_t condition1_gap(std::size_t input_length, double alpha) {
  if (!(alpha >= 1.0)) throw ConfigError("alpha must be at least 1");
  const double gap = static_cast<double>(input_length) / alpha;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(gap - 1e-9)));
}

std::size_t condition1_max_batch(std::size_t window_count, std::size_t input_length, double alpha) {
  if (window_count == 0) return 0;
  return (window_count - 1) / condition1_gap(input_length, alpha) + 1;
}

std::size_t window_overlap(std::size_t a, std::size_t b, std::size_t input_length) {
  const std::size_t d = a > b ? a - b : b - a;
  return d >= input_length ? 0 : input_length - d;
}

std::vector<std::size_t> sample_condition1(std::size_t window_count, std::size_t batch, std::size_t input_length,
                                           double alpha, std::mt19937_64& rng) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  const std::size_t gap = condition1_gap(input_length, alpha);
  const std::size_t max_batch = condition1_max_batch(window_count, input_length, alpha);
  if (batch > max_batch)
    throw SamplerError("cannot place " + std::to_string(batch) + " windows of length " +
                       std::to_string(input_length) + " among " + std::to_string(window_count) +
                       " offsets with alpha=" + std::to_string(alpha) + "; the maximum feasible batch is " +
                       std::to_string(max_batch));
  std::uniform_int_distribution<std::size_t> draw(0, window_count - 1);
  std::vector<std::size_t> chosen;
  chosen.reserve(batch);
  for (std::size_t attempt = 0; attempt < 100 * batch && chosen.size() < batch; ++attempt) {
    const std::size_t o = draw(rng);
    const bool ok = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      return (o > c ? o - c : c - o) >= gap;
    });
    if (ok) chosen.push_back(o);
  }
  if (chosen.size() == batch) return chosen;

  // Evenly spaced sweep; feasible because batch <= max_batch.
  const std::size_t step = batch == 1 ? 0 : (window_count - 1) / (batch - 1);
  const std::size_t slack = (window_count - 1) - step * (batch - 1);
  std::uniform_int_distribution<std::size_t> start_at(0, slack);
  const std::size_t start = start_at(rng);
  chosen.clear();
  for (std::size_t k = 0; k < batch; ++k) chosen.push_back(start + k * step);
  return chosen;
}

namespace {

struct PairTerms {
  double s, c, nu, nv;
};

PairTerms pair_terms(const double* u, const double* v, std::size_t n, double nu, double nv) {
  double d = 0.0;
  for (std::size_t k = 0; k < n; ++k) d += u[k] * v[k];
  const double c = std::clamp(d / (nu * nv), -1.0, 1.0);
  return {std::exp(std::abs(c)), c, nu, nv};
}

// Adds w * d sim(u, v) / du to gu and w * d sim(u, v) / dv to gv.
void pair_grad(const double* u, const double* v, std::size_t n, const PairTerms& t, double w, double* gu,
               double* gv) {
  if (t.c == 0.0 || w == 0.0) return;
  const double k = w * t.s * (t.c > 0.0 ? 1.0 : -1.0);
  const double inv = 1.0 / (t.nu * t.nv);
  const double cu = t.c / (t.nu * t.nu), cv = t.c / (t.nv * t.nv);
  for (std::size_t q = 0; q < n; ++q) {
    gu[q] += k * (v[q] * inv - cu * u[q]);
    gv[q] += k * (u[q] * inv - cv * v[q]);
  }
}

}  // namespace

double similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("similarity: length mismatch");
  double nu = 0.0, nv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericalError("similarity of a zero vector");
  return pair_terms(u.data(), v.data(), u.size(), std::sqrt(nu), std::sqrt(nv)).s;
}

Tensor contrastive_loss(const Tensor& reps, std::size_t windows, std::size_t instances, std::size_t groups) {
  const std::size_t per = 1 + instances, rows = windows * per;
  if (windows == 0 || groups == 0) throw ConfigError("contrastive_loss: need at least one window and group");
  if (reps.rank() != 2 || reps.dim(0) != rows || reps.dim(1) % groups != 0)
    throw DimensionError("contrastive_loss: representations " + shape_str(reps.shape()) + " do not hold " +
                         std::to_string(rows) + " rows in " + std::to_string(groups) + " groups");
  const std::size_t F = reps.dim(1), fg = F / groups;
  const double* R = reps.data().data();
  const bool record = detail::should_record({&reps});

  std::vector<double> norms(rows * groups);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t g = 0; g < groups; ++g) {
      double ss = 0.0;
      for (std::size_t k = 0; k < fg; ++k) ss += R[r * F + g * fg + k] * R[r * F + g * fg + k];
      if (!(ss > 0.0))
        throw NumericalError("contrastive_loss: representation of window " + std::to_string(r / per) +
                             ", instance " + std::to_string(r % per) + ", group " + std::to_string(g) +
                             " has zero norm");
      norms[r * groups + g] = std::sqrt(ss);
    }

  Tensor out = Tensor::zeros({groups});
  std::vector<double> dR(record ? rows * F : 0, 0.0);
  std::vector<PairTerms> terms(rows);
  const double e = std::numbers::e;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t m = 0; m < windows; ++m) {
      const std::size_t a = m * per;
      const double* u = R + a * F + g * fg;
      double num = e, den = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        if (r == a) {
          den += e;
          continue;
        }
        terms[r] = pair_terms(u, R + r * F + g * fg, fg, norms[a * groups + g], norms[r * groups + g]);
        den += terms[r].s;
        if (r > a && r < a + per) num += terms[r].s;
      }
      out.data()[g] += (std::log(den) - std::log(num)) / static_cast<double>(windows);
      if (!record) continue;
      for (std::size_t r = 0; r < rows; ++r) {
        if (r == a) continue;
        const bool own = r > a && r < a + per;
        const double w = (1.0 / den - (own ? 1.0 / num : 0.0)) / static_cast<double>(windows);
        pair_grad(u, R + r * F + g * fg, fg, terms[r], w, dR.data() + a * F + g * fg, dR.data() + r * F + g * fg);
      }
    }
  }
  if (record) {
    auto ri = reps.impl_ptr(), oi = out.impl_ptr();
    detail::record_op(out, {reps}, [ri, oi, dR = std::move(dR), rows, F, fg]() {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < F; ++f) ri->grad[r * F + f] += oi->grad[f / fg] * dR[r * F + f];
    });
  }
  return out;
}

EarlyStopDecision early_stop(std::span<const double> val_history, std::size_t patience) {
  if (patience == 0) throw ConfigError("patience must be at least 1");
  EarlyStopDecision d;
  for (std::size_t i = 1; i < val_history.size(); ++i)
    if (val_history[i] < val_history[d.best_index]) d.best_index = i;
  d.stop = !val_history.empty() && val_history.size() - 1 - d.best_index >= patience;
  return d;
}

}  // namespace rtnet::training
