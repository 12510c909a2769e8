#include "ttc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ttc::ad {

namespace {

double eval_forward(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Tensor> bound;
  bound.reserve(inputs.size());
  for (const Tensor& in : inputs) bound.push_back(tape.leaf(in, false));
  return f(tape, bound).item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
  Tape tape;
  std::vector<Tensor> bound;
  bound.reserve(inputs.size());
  for (const Tensor& in : inputs) bound.push_back(tape.leaf(in, in.requires_grad));
  const Tensor loss = f(tape, bound);
  const GradientMap grads = tape.backward(loss);

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad) continue;
    const Tensor analytic = grads.grad(bound[i]);
    for (int j = 0; j < inputs[i].size(); ++j) {
      const double saved = probe[i].values[static_cast<std::size_t>(j)];
      probe[i].values[static_cast<std::size_t>(j)] = saved + eps;
      const double fp = eval_forward(f, probe);
      probe[i].values[static_cast<std::size_t>(j)] = saved - eps;
      const double fm = eval_forward(f, probe);
      probe[i].values[static_cast<std::size_t>(j)] = saved;

      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.values[static_cast<std::size_t>(j)];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = static_cast<int>(i);
        report.worst_coord = j;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ttc::ad
