#pragma once

// Finite-difference gradient checking used across the unit tests. The checker
// evaluates a scalar-valued function of one or more leaf tensors, compares
// the analytic gradient from backward() against central differences, and
// reports the worst relative error.

#include <cmath>
#include <functional>
#include <vector>

#include "vidctl/core/autograd.hpp"
#include "vidctl/core/rng.hpp"

namespace vidctl::testing {

using core::Tensor;
using core::Var;

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

inline std::vector<Var<double>> wrap_leaves(const std::vector<Tensor<double>>& inputs,
                                            bool requires_grad) {
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(core::make_leaf<double>(t, requires_grad));
  return leaves;
}

// f maps the leaves (already wrapped as Vars) to a scalar Var. The check
// perturbs every element of every input with central differences.
inline GradCheckResult gradcheck(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  std::vector<Var<double>> leaves = wrap_leaves(inputs, true);
  Var<double> out = f(leaves);
  if (out->value.numel() != 1) throw std::logic_error("gradcheck: function must return a scalar");
  core::backward(out);

  GradCheckResult res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& x = inputs[li];
    const Tensor<double>& analytic = leaves[li]->grad;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double orig = x[i];
      x[i] = orig + eps;
      const double fp = f(wrap_leaves(inputs, false))->value[0];
      x[i] = orig - eps;
      const double fm = f(wrap_leaves(inputs, false))->value[0];
      x[i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      const double a = analytic.defined() ? analytic[i] : 0.0;
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
    }
  }
  return res;
}

inline Tensor<double> random_tensor(core::Shape shape, core::Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace vidctl::testing
