#include "mdfl/autograd.hpp"

namespace mdfl {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(Param<T>& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::span<const Var<T>> parents,
                       Backward backward) {
  if (check_finite_ && !value.all_finite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.valid() && nodes_[p.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var<T> v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, const Tensor<T>& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  require_same_shape(n.value.shape(), g.shape(), "gradient accumulation");
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad.add_(g);
  }
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? nullptr : &n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  if (nodes_[root.id()].value.size() != 1) {
    throw ShapeError("backward: root must hold a single element, got " +
                     shape_str(nodes_[root.id()].value.shape()));
  }
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Tensor<T>(nodes_[root.id()].value.shape(), T{1});
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param) n.param->grad.add_(n.grad);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mdfl
