#pragma once

#include <functional>

#include "vlplab/tensor.hpp"

namespace vlplab {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;   // over coordinates outside the absolute floor
  double max_abs_err = 0.0;
  int64_t worst_index = -1;
  int64_t n_checked = 0;
};

// Compares an analytic gradient against central finite differences of a pure
// scalar function f. The oracle side uses only forward evaluations of f, so
// it stays independent of whatever backward pass produced analytic_grad.
// A coordinate passes if |g_a - g_fd| <= abs_floor or the relative error
// (against max(|g_a|, |g_fd|)) is <= rel_tol. Throws NonFinite if any
// evaluation is NaN/Inf.
GradCheckReport finite_diff_grad_check(const std::function<double(const Tensor&)>& f,
                                       const Tensor& params, const Tensor& analytic_grad,
                                       double eps = 1e-5, double rel_tol = 1e-4,
                                       double abs_floor = 1e-7);

}  // namespace vlplab
