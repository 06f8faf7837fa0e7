#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl {

/// A trainable tensor with its accumulated gradient. `name` is the
/// checkpoint key and must be unique within a model.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

/// Raised by a tape in checked mode when an op produces NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation for reverse-mode differentiation.
///
/// Each recorded node stores its value and a closure that, given the
/// gradient of the node, accumulates gradients into its parents. A tape is
/// single-use: build, call backward() once, discard.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradient.
  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is kept and readable through grad().
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a Param; backward() adds its gradient into param.grad.
  /// Non-trainable params are recorded as constants.
  Var<T> param(Param<T>& p);

  /// Records an op output. The closure runs only if some parent needs gradient.
  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> parents, Backward backward);
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> parents,
                Backward backward) {
    return record(op, std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds g into the gradient of v (no-op for nodes without gradient).
  void accumulate(Var<T> v, const Tensor<T>& g);
  /// Mutable zero-initialized gradient buffer of v; v must require grad.
  Tensor<T>& grad_buffer(Var<T> v);
  /// Gradient of v after backward(), or nullptr if none flowed.
  const Tensor<T>* grad(Var<T> v) const;

  /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  void backward(Var<T> root);

  /// When enabled, record() throws NonFiniteError naming the op.
  void set_check_finite(bool on) { check_finite_ = on; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    Param<T>* param = nullptr;
  };
  Var<T> push(Node node);

  std::deque<Node> nodes_;
  bool check_finite_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mdfl
