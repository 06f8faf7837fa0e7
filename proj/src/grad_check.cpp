#include "mdfl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdfl/ops.hpp"

namespace mdfl {

namespace {

struct Evaluation {
  double value = 0.0;
  std::vector<Tensor<double>> input_grads;
};

class Objective {
 public:
  Objective(std::string name, const GradCheckFn& op) : name_(std::move(name)), op_(op) {}

  Evaluation run(const std::vector<Tensor<double>>& inputs, bool with_grad) {
    Tape<double> tape;
    tape.set_check_finite(true);
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    Evaluation ev;
    try {
      Var<double> out = op_(vars);
      if (projection_.empty()) {
        std::mt19937_64 rng(0x5eed);
        projection_ = Tensor<double>::uniform(out.shape(), rng, 0.5, 1.5);
      }
      Var<double> loss = sum(mul(out, tape.constant(projection_)));
      ev.value = loss.value()[0];
      if (with_grad) {
        tape.backward(loss);
        for (const auto& v : vars) {
          const Tensor<double>* g = tape.grad(v);
          ev.input_grads.push_back(g ? *g : Tensor<double>(v.shape()));
        }
      }
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("grad_check(" + name_ + "): " + e.what());
    }
    return ev;
  }

 private:
  std::string name_;
  const GradCheckFn& op_;
  Tensor<double> projection_;
};

}  // namespace

GradCheckReport grad_check(const std::string& name, const GradCheckFn& op,
                           std::vector<Tensor<double>> inputs, ParamList<double> params, double eps) {
  Objective objective(name, op);
  for (auto* p : params) p->zero_grad();
  Evaluation base = objective.run(inputs, true);
  std::vector<Tensor<double>> param_grads;
  for (auto* p : params) param_grads.push_back(p->grad);

  GradCheckReport report;
  auto compare = [&](double analytic, double numeric, const std::string& where) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (report.worst.empty() || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = where;
    }
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i][j];
      inputs[i][j] = orig + eps;
      const double up = objective.run(inputs, false).value;
      inputs[i][j] = orig - eps;
      const double down = objective.run(inputs, false).value;
      inputs[i][j] = orig;
      compare(base.input_grads[i][j], (up - down) / (2 * eps),
              "input " + std::to_string(i) + " [" + std::to_string(j) + "]");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<double>& p = *params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double orig = p.value[j];
      p.value[j] = orig + eps;
      const double up = objective.run(inputs, false).value;
      p.value[j] = orig - eps;
      const double down = objective.run(inputs, false).value;
      p.value[j] = orig;
      compare(param_grads[i][j], (up - down) / (2 * eps), p.name + " [" + std::to_string(j) + "]");
    }
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace mdfl
