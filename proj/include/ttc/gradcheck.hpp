#pragma once

#include <functional>
#include <vector>

#include "ttc/tape.hpp"

namespace ttc::ad {

// A differentiable scalar program: builds the forward graph on the given
// tape from the pre-registered leaves and returns the loss tensor.
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_input = -1;
  int worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients against central finite differences
// (f(x+eps*e) - f(x-eps*e)) / (2 eps), per coordinate of every input with
// requires_grad set. Relative error uses denominator max(|a|, |b|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace ttc::ad
