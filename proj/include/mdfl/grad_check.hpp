#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdfl/autograd.hpp"

namespace mdfl {

/// Builds a graph from the recorded input Vars and returns its output.
using GradCheckFn = std::function<Var<double>(std::span<const Var<double>> inputs)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;      // location of the worst coordinate, e.g. "input 1 [17]"
  std::size_t checked = 0;  // number of coordinates compared
};

/// Compares reverse-mode gradients against central finite differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of every input and
/// every listed parameter.
///
/// The scalar objective is sum(out * R) for a fixed pseudo-random R in
/// [0.5, 1.5]; plain sums make normalized ops (softmax) constant. Relative
/// error uses max(|analytic|, |numeric|, 1e-8) as the denominator.
/// Throws NonFiniteError naming `name` and the offending op if any
/// intermediate is NaN/Inf.
GradCheckReport grad_check(const std::string& name, const GradCheckFn& op,
                           std::vector<Tensor<double>> inputs, ParamList<double> params = {},
                           double eps = 1e-4);

}  // namespace mdfl
