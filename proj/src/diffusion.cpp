#include "mdfl/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mdfl/errors.hpp"
#include "mdfl/ops.hpp"
#include "mdfl/rng.hpp"

namespace mdfl {

NoiseSchedule NoiseSchedule::from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ValidationError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.T = betas.size();
  s.beta.assign(1, 0.0);
  s.alpha.assign(1, 1.0);
  s.alpha_bar.assign(1, 1.0);
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ValidationError("beta must lie in [0,1), got " + std::to_string(b));
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
  }
  return s;
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    std::ostringstream msg;
    msg << "schedule needs 0 < beta_start <= beta_end < 1, got " << beta_start << ", " << beta_end;
    throw ValidationError(msg.str());
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return from_betas(betas);
}

void write_schedule_csv(std::ostream& out, const NoiseSchedule& sched) {
  out << "t,beta,alpha,alpha_bar\n" << std::setprecision(17);
  for (std::size_t t = 1; t <= sched.T; ++t) {
    out << t << ',' << sched.beta[t] << ',' << sched.alpha[t] << ',' << sched.alpha_bar[t] << '\n';
  }
}

namespace {

void check_step(std::size_t t, const NoiseSchedule& sched, const char* op) {
  if (t > sched.T) {
    throw ValidationError(std::string(op) + ": step " + std::to_string(t) + " exceeds T = " + std::to_string(sched.T));
  }
}

}  // namespace

template <typename T>
Tensor<T> forward_noise(const Tensor<T>& x0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& sched) {
  require_same_shape(x0.shape(), eps.shape(), "forward_noise");
  check_step(t, sched, "forward_noise");
  if (t == 0) return x0;
  const double a = std::sqrt(sched.alpha_bar[t]), b = std::sqrt(1.0 - sched.alpha_bar[t]);
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
  return out;
}

template <typename T>
Tensor<T> step_noise(const Shape& shape, std::uint64_t sample_seed, std::size_t step) {
  std::mt19937_64 rng(derive_seed({sample_seed, step}));
  return Tensor<T>::randn(shape, rng);
}

FusedStack fuse_steps(const Tensor<float>& x0, const std::vector<std::size_t>& steps, const NoiseSchedule& sched,
                      std::mt19937_64& rng) {
  if (x0.rank() != 4) throw ShapeError("fuse_steps expects [B,H,W,C], got " + shape_str(x0.shape()));
  std::vector<std::uint64_t> seeds(x0.dim(0));
  for (auto& s : seeds) s = rng();
  return fuse_steps(x0, steps, sched, std::move(seeds));
}

FusedStack fuse_steps(const Tensor<float>& x0, const std::vector<std::size_t>& steps, const NoiseSchedule& sched,
                      std::vector<std::uint64_t> eps_seeds) {
  if (x0.rank() != 4) throw ShapeError("fuse_steps expects [B,H,W,C], got " + shape_str(x0.shape()));
  if (steps.empty()) throw ValidationError("fuse_steps: empty step list");
  if (!std::is_sorted(steps.begin(), steps.end())) throw ValidationError("fuse_steps: steps must be ascending");
  for (auto t : steps) check_step(t, sched, "fuse_steps");
  const std::size_t batch = x0.dim(0), c = x0.dim(3), pixels = x0.dim(1) * x0.dim(2), per = pixels * c;
  const std::size_t ns = steps.size();
  if (eps_seeds.size() != batch) throw ValidationError("fuse_steps: one eps seed per sample required");

  FusedStack out;
  out.steps = steps;
  out.data = Tensor<float>({batch, x0.dim(1), x0.dim(2), c * ns});
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor<float> sample({x0.dim(1), x0.dim(2), c},
                               std::vector<float>(x0.ptr() + b * per, x0.ptr() + (b + 1) * per));
    for (std::size_t si = 0; si < ns; ++si) {
      const auto t = steps[si];
      const Tensor<float> noised =
          t == 0 ? sample : forward_noise(sample, t, step_noise<float>(sample.shape(), eps_seeds[b], t), sched);
      float* dst = out.data.ptr() + b * per * ns;
      for (std::size_t p = 0; p < pixels; ++p) {
        std::copy_n(noised.ptr() + p * c, c, dst + p * c * ns + si * c);
      }
    }
  }
  out.eps_seeds = std::move(eps_seeds);
  return out;
}

Tensor<float> replicate_channels(const Tensor<float>& x0, std::size_t times) {
  const std::size_t c = x0.shape().back(), pixels = x0.size() / c;
  Shape shape = x0.shape();
  shape.back() = c * times;
  Tensor<float> out(shape);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t s = 0; s < times; ++s) std::copy_n(x0.ptr() + p * c, c, out.ptr() + (p * times + s) * c);
  }
  return out;
}

template <typename T>
PosteriorParams<T> posterior_between(const Tensor<T>& z0, const Tensor<T>& zt, std::size_t t, std::size_t s,
                                     const NoiseSchedule& sched) {
  require_same_shape(z0.shape(), zt.shape(), "posterior");
  check_step(t, sched, "posterior");
  if (t == 0 || s >= t) {
    throw ValidationError("posterior needs 0 <= s < t, got s=" + std::to_string(s) + " t=" + std::to_string(t));
  }
  const double ab_t = sched.alpha_bar[t], ab_s = sched.alpha_bar[s];
  const double one_minus_t = 1.0 - ab_t;
  PosteriorParams<T> p;
  p.mean = Tensor<T>(z0.shape());
  if (one_minus_t <= 1e-15) {
    p.mean = z0;
    p.var = 0.0;
    return p;
  }
  const double alpha_ts = ab_t / ab_s;  // product of alpha over (s, t]
  const double c0 = std::sqrt(ab_s) * (1.0 - alpha_ts) / one_minus_t;
  const double ct = std::sqrt(alpha_ts) * (1.0 - ab_s) / one_minus_t;
  for (std::size_t i = 0; i < z0.size(); ++i) p.mean[i] = static_cast<T>(c0 * z0[i] + ct * zt[i]);
  p.var = std::max(0.0, (1.0 - ab_s) / one_minus_t * (1.0 - alpha_ts));
  return p;
}

template <typename T>
PosteriorParams<T> posterior_params(const Tensor<T>& z0, const Tensor<T>& zt, std::size_t t,
                                    const NoiseSchedule& sched) {
  if (t == 0) throw ValidationError("posterior_params: no posterior below step 1");
  return posterior_between(z0, zt, t, t - 1, sched);
}

template <typename T>
Var<T> denoise_loss(Var<T> model_out, Var<T> target) {
  return half_mse(model_out, target);
}

template <typename T>
T denoise_loss(const Tensor<T>& model_out, const Tensor<T>& target) {
  require_same_shape(model_out.shape(), target.shape(), "denoise_loss");
  double s = 0;
  for (std::size_t i = 0; i < model_out.size(); ++i) {
    const double d = static_cast<double>(model_out[i]) - static_cast<double>(target[i]);
    s += d * d;
  }
  return static_cast<T>(0.5 * s / static_cast<double>(model_out.size()));
}

template <typename T>
Tensor<T> reverse_sample(const Denoiser<T>& denoiser, const NoiseSchedule& sched, const Shape& shape,
                         std::mt19937_64& rng, const SampleOptions& options,
                         const std::function<void(std::size_t, const Tensor<T>&)>& on_step) {
  if (options.stride == 0) throw ValidationError("reverse_sample: stride must be positive");
  Tensor<T> z = Tensor<T>::randn(shape, rng);
  if (on_step) on_step(sched.T, z);
  std::size_t t = sched.T;
  while (t > 0) {
    const std::size_t s = t > options.stride ? t - options.stride : 0;
    Tensor<T> x0 = denoiser(z, t);
    require_same_shape(x0.shape(), shape, "reverse_sample denoiser");
    if (options.clamp) {
      for (auto& v : x0.data()) {
        v = static_cast<T>(std::clamp(static_cast<double>(v), options.clamp_lo, options.clamp_hi));
      }
    }
    auto post = posterior_between(x0, z, t, s, sched);
    if (s > 0 && post.var > 0) {
      std::normal_distribution<double> normal;
      const double sd = std::sqrt(post.var);
      for (auto& v : post.mean.data()) v = static_cast<T>(v + sd * normal(rng));
    }
    z = std::move(post.mean);
    if (!z.all_finite()) {
      throw TrainingError("reverse_sample: non-finite state at step " + std::to_string(s) + " (from t=" +
                          std::to_string(t) + ", posterior var " + std::to_string(post.var) + ")");
    }
    t = s;
    if (on_step) on_step(t, z);
  }
  return z;
}

#define MDFL_INSTANTIATE(T)                                                                                   \
  template Tensor<T> forward_noise(const Tensor<T>&, std::size_t, const Tensor<T>&, const NoiseSchedule&);    \
  template Tensor<T> step_noise(const Shape&, std::uint64_t, std::size_t);                                    \
  template PosteriorParams<T> posterior_params(const Tensor<T>&, const Tensor<T>&, std::size_t,              \
                                               const NoiseSchedule&);                                        \
  template PosteriorParams<T> posterior_between(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t, \
                                                const NoiseSchedule&);                                       \
  template Var<T> denoise_loss(Var<T>, Var<T>);                                                               \
  template T denoise_loss(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> reverse_sample(const Denoiser<T>&, const NoiseSchedule&, const Shape&, std::mt19937_64&, \
                                    const SampleOptions&, const std::function<void(std::size_t, const Tensor<T>&)>&);

MDFL_INSTANTIATE(float)
MDFL_INSTANTIATE(double)

}  // namespace mdfl
