#include "vlplab/gradcheck.hpp"

#include <cmath>

namespace vlplab {

GradCheckReport finite_diff_grad_check(const std::function<double(const Tensor&)>& f,
                                       const Tensor& params, const Tensor& analytic_grad,
                                       double eps, double rel_tol, double abs_floor) {
  if (!params.same_dims(analytic_grad))
    throw Error(Errc::DimMismatch, "gradient dims must equal parameter dims");
  GradCheckReport rep;
  rep.pass = true;
  rep.n_checked = params.numel();
  Tensor p = params;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double orig = p.at(i);
    p.at(i) = orig + eps;
    const double fp = f(p);
    p.at(i) = orig - eps;
    const double fm = f(p);
    p.at(i) = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error(Errc::NonFinite, "function evaluation produced NaN/Inf during grad check");
    const double g_fd = (fp - fm) / (2.0 * eps);
    const double g_a = analytic_grad.at(i);
    const double abs_err = std::abs(g_a - g_fd);
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
    if (abs_err <= abs_floor) continue;
    const double rel = abs_err / std::max(std::abs(g_a), std::abs(g_fd));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
    if (rel > rel_tol) rep.pass = false;
  }
  return rep;
}

}  // namespace vlplab
