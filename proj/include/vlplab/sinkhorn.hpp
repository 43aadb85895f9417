#pragma once

#include <vector>

#include "vlplab/tensor.hpp"

namespace vlplab {

struct SinkhornConfig {
  double epsilon = 0.05;
  int n_iters = 3;
  double tol = 1e-6;
};

// Balanced soft cluster assignments: rows sum to 1, columns to N/K.
struct AssignmentMatrix {
  Tensor q;  // N x K, nonnegative
  int iterations_run = 0;
  double row_residual = 0.0;  // max |rowsum - 1| before the final renormalization
  double col_residual = 0.0;  // max |colsum - N/K|
  bool converged = false;
  std::vector<double> residual_history;  // max(row,col) residual after each iteration
};

// Alternating column/row normalization of exp(sims/epsilon), run n_iters
// times or until both marginal residuals drop below tol. A final pass
// renormalizes rows to sum exactly 1. Assignments carry no gradient.
AssignmentMatrix sinkhorn_normalize(const Tensor& sims, double epsilon, int n_iters, double tol);

inline AssignmentMatrix sinkhorn_normalize(const Tensor& sims, const SinkhornConfig& cfg) {
  return sinkhorn_normalize(sims, cfg.epsilon, cfg.n_iters, cfg.tol);
}

// lam * q + (1 - lam) * I; q must be square (prototypes are batch samples).
Tensor mix_with_identity(const Tensor& q, double lam);

}  // namespace vlplab
