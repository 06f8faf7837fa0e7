#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "mdfl/autograd.hpp"
#include "mdfl/tensor.hpp"

namespace mdfl {

/// Tables are indexed by step t = 0..T. Entry 0 holds the conventions
/// beta_0 = 0, alpha_0 = 1, alpha_bar_0 = 1.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  /// Linear beta from beta_start to beta_end over T steps.
  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end);
  /// Arbitrary betas in [0,1) for t = 1..T. Zeros are allowed so degenerate
  /// schedules can be built in tests.
  static NoiseSchedule from_betas(const std::vector<double>& betas);
};

inline NoiseSchedule build_schedule(std::size_t steps = 500, double beta_start = 1e-4, double beta_end = 0.02) {
  return NoiseSchedule::linear(steps, beta_start, beta_end);
}

/// CSV with header t,beta,alpha,alpha_bar and one row per step 1..T.
void write_schedule_csv(std::ostream& out, const NoiseSchedule& sched);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps; t = 0 returns x0.
template <typename T>
Tensor<T> forward_noise(const Tensor<T>& x0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& sched);

inline const std::vector<std::size_t> kDefaultFuseSteps{0, 50, 100, 200, 400};

/// Noised copies of a [B,H,W,C] batch concatenated on channels, one block per step.
struct FusedStack {
  Tensor<float> data;  // [B,H,W,C*S]
  std::vector<std::size_t> steps;
  std::vector<std::uint64_t> eps_seeds;  // one per sample
};

/// Standard-normal noise for (sample seed, step). Independent of the other
/// steps in the list, so a single-step stack reuses the fused stack's noise.
template <typename T>
Tensor<T> step_noise(const Shape& shape, std::uint64_t sample_seed, std::size_t step);

/// Draws one seed per sample from `rng`, then fuses.
FusedStack fuse_steps(const Tensor<float>& x0, const std::vector<std::size_t>& steps, const NoiseSchedule& sched,
                      std::mt19937_64& rng);
FusedStack fuse_steps(const Tensor<float>& x0, const std::vector<std::size_t>& steps, const NoiseSchedule& sched,
                      std::vector<std::uint64_t> eps_seeds);

/// x0 [B,H,W,C] repeated S times on channels; the reconstruction target.
Tensor<float> replicate_channels(const Tensor<float>& x0, std::size_t times);

template <typename T>
struct PosteriorParams {
  Tensor<T> mean;
  double var = 0.0;
};

/// q(z_{t-1} | z_t, z_0) for 1 <= t <= T.
template <typename T>
PosteriorParams<T> posterior_params(const Tensor<T>& z0, const Tensor<T>& zt, std::size_t t,
                                    const NoiseSchedule& sched);

/// q(z_s | z_t, z_0) for 0 <= s < t; the strided sampler's transition.
/// When 1 - alpha_bar_t vanishes the mean is z0 and the variance 0.
template <typename T>
PosteriorParams<T> posterior_between(const Tensor<T>& z0, const Tensor<T>& zt, std::size_t t, std::size_t s,
                                     const NoiseSchedule& sched);

/// Half mean squared error.
template <typename T>
Var<T> denoise_loss(Var<T> model_out, Var<T> target);
template <typename T>
T denoise_loss(const Tensor<T>& model_out, const Tensor<T>& target);

template <typename T>
using Denoiser = std::function<Tensor<T>(const Tensor<T>& zt, std::size_t t)>;

struct SampleOptions {
  std::size_t stride = 1;
  bool clamp = true;  // clamp the x0 estimate to [clamp_lo, clamp_hi]
  double clamp_lo = -1.0;
  double clamp_hi = 2.0;
};

/// Ancestral sampling z_T ~ N(0,I) -> z_{T-stride} -> ... -> z_0. The last
/// stride is shortened when it does not divide T; the final transition
/// returns the posterior mean. `on_step(t, z)` sees every visited state,
/// including z_T and the final z_0.
template <typename T>
Tensor<T> reverse_sample(const Denoiser<T>& denoiser, const NoiseSchedule& sched, const Shape& shape,
                         std::mt19937_64& rng, const SampleOptions& options = {},
                         const std::function<void(std::size_t, const Tensor<T>&)>& on_step = {});

}  // namespace mdfl
