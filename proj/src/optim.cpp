#include "mdfl/optim.hpp"

#include <cmath>

namespace mdfl {

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamOptions options) : options_(options) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    params_.push_back(p);
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
bool Adam<T>::step(double lr) {
  for (auto* p : params_) {
    if (!p->grad.all_finite()) {
      ++skipped_;
      return false;
    }
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double decay = lr * options_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& value = params_[i]->value;
    const auto& grad = params_[i]->grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + options_.eps);
      const double theta = value[j];
      value[j] = static_cast<T>(theta - decay * theta - lr * update);
    }
  }
  return true;
}

double lr_at(std::size_t epoch, double base_lr, std::size_t step, double gamma) {
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace mdfl
