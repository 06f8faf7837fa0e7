#pragma once

#include <vector>

#include "mdfl/autograd.hpp"

namespace mdfl {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: theta -= lr * wd * theta
};

/// Bias-corrected Adam with decoupled weight decay over the trainable
/// members of a parameter list.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamOptions options);

  void zero_grad();
  /// Applies one update at learning rate `lr`. If any gradient is non-finite
  /// nothing changes, the skip counter grows and false is returned.
  bool step(double lr);

  std::size_t steps() const { return steps_; }
  std::size_t skipped() const { return skipped_; }
  const ParamList<T>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  void set_steps(std::size_t n) { steps_ = n; }
  void set_skipped(std::size_t n) { skipped_ = n; }

 private:
  ParamList<T> params_;
  AdamOptions options_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t steps_ = 0;
  std::size_t skipped_ = 0;
};

/// Step decay: base_lr * gamma^floor(epoch / step).
double lr_at(std::size_t epoch, double base_lr, std::size_t step = 50, double gamma = 0.9);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace mdfl
