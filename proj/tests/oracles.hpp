#pragma once

// Monte-Carlo and closed-form oracles shared by the unit tests and the
// acceptance runner. They simulate the processes directly from the schedule
// tables and never call the code under test.

#include <cmath>
#include <random>
#include <vector>

#include "mdfl/diffusion.hpp"

namespace mdfl::testing {

struct MomentCheck {
  double empirical = 0, expected = 0, tolerance = 0;
  bool ok() const { return std::abs(empirical - expected) <= tolerance; }
};

struct MarginalResult {
  MomentCheck mean, var;
};

/// Empirical mean/variance of sqrt(ab) x0 + sqrt(1-ab) eps built from `sample`,
/// a callable (x0, eps) -> value, for one scalar x0.
template <typename F>
MarginalResult forward_marginal(F sample, double x0, double alpha_bar, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double s = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sample(x0, normal(rng));
    s += v;
    ss += v * v;
  }
  const double m = s / static_cast<double>(n);
  const double var = ss / static_cast<double>(n) - m * m;
  MarginalResult r;
  r.mean = {m, std::sqrt(alpha_bar) * x0, 4.0 * std::sqrt((1.0 - alpha_bar) / static_cast<double>(n))};
  r.var = {var, 1.0 - alpha_bar, 0.05 * (1.0 - alpha_bar)};
  return r;
}

/// Simulates scalar chains z_i = sqrt(alpha_i) z_{i-1} + sqrt(beta_i) eps_i
/// from z_0 and returns (z_{t-1}, z_t) pairs.
inline void simulate_chain(const NoiseSchedule& sched, double z0, std::size_t t, std::size_t n, std::uint64_t seed,
                           std::vector<double>& prev, std::vector<double>& last) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  prev.resize(n);
  last.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    double z = z0, before = z0;
    for (std::size_t i = 1; i <= t; ++i) {
      before = z;
      z = std::sqrt(1.0 - sched.beta[i]) * z + std::sqrt(sched.beta[i]) * normal(rng);
    }
    prev[c] = before;
    last[c] = z;
  }
}

struct PosteriorOracle {
  MomentCheck residual_mean;  // E[z_{t-1} - mu(z_t)] within the bucket, expected 0
  MomentCheck residual_var;   // Var[z_{t-1} - mu(z_t)] within the bucket, expected beta~
  std::size_t in_bucket = 0;
};

/// Bayes oracle for q(z_{t-1} | z_t, z0): simulate chains, keep those whose
/// z_t lands in a narrow bucket, and compare the residual of z_{t-1} around
/// the candidate mean `mu(z_t)` with N(0, var). Tolerance: 3 standard errors.
template <typename Mu>
PosteriorOracle posterior_oracle(const NoiseSchedule& sched, double z0, std::size_t t, double bucket_center_sd,
                                 Mu mu, double var, std::size_t chains, std::uint64_t seed) {
  std::vector<double> prev, last;
  simulate_chain(sched, z0, t, chains, seed, prev, last);
  const double sd_t = std::sqrt(1.0 - sched.alpha_bar[t]);
  const double center = std::sqrt(sched.alpha_bar[t]) * z0 + bucket_center_sd * sd_t;
  const double half = 0.05 * sd_t;
  double s = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < chains; ++i) {
    if (std::abs(last[i] - center) > half) continue;
    const double r = prev[i] - mu(last[i]);
    s += r;
    ss += r * r;
    ++n;
  }
  PosteriorOracle o;
  o.in_bucket = n;
  const double m = s / static_cast<double>(n);
  const double v = ss / static_cast<double>(n) - m * m;
  o.residual_mean = {m, 0.0, 3.0 * std::sqrt(var / static_cast<double>(n))};
  o.residual_var = {v, var, 3.0 * var * std::sqrt(2.0 / static_cast<double>(n - 1))};
  return o;
}

/// Cohen's kappa from observed and chance agreement, computed by explicit
/// probability sums rather than marginal-product shortcuts.
inline double kappa_oracle(const std::vector<std::vector<long>>& confusion) {
  const std::size_t k = confusion.size();
  double total = 0;
  for (const auto& row : confusion) {
    for (auto v : row) total += static_cast<double>(v);
  }
  double observed = 0, chance = 0;
  for (std::size_t i = 0; i < k; ++i) {
    observed += static_cast<double>(confusion[i][i]) / total;
    double p_true = 0, p_pred = 0;
    for (std::size_t j = 0; j < k; ++j) {
      p_true += static_cast<double>(confusion[i][j]) / total;
      p_pred += static_cast<double>(confusion[j][i]) / total;
    }
    chance += p_true * p_pred;
  }
  if (chance >= 1.0) return observed >= 1.0 ? 1.0 : 0.0;
  return (observed - chance) / (1.0 - chance);
}

}  // namespace mdfl::testing
