#include "vlplab/sinkhorn.hpp"

#include <algorithm>
#include <cmath>

namespace vlplab {

AssignmentMatrix sinkhorn_normalize(const Tensor& sims, double epsilon, int n_iters, double tol) {
  if (sims.rank() != 2) throw Error(Errc::ShapeMismatch, "sinkhorn_normalize expects a matrix");
  sims.require_finite("sinkhorn_normalize input");
  if (epsilon <= 0.0) throw Error(Errc::BadConfig, "sinkhorn epsilon must be > 0");
  if (n_iters < 1) throw Error(Errc::BadConfig, "sinkhorn n_iters must be >= 1");

  const int64_t n = sims.rows(), k = sims.cols();
  const double col_target = static_cast<double>(n) / static_cast<double>(k);

  // Subtract the global max before exponentiating. A global shift of sims is
  // absorbed by the row/column scalings, so the balanced result is unchanged,
  // and exp can no longer overflow.
  double mx = sims.at(0);
  for (int64_t i = 1; i < sims.numel(); ++i) mx = std::max(mx, sims.at(i));
  Tensor q(sims.dims());
  for (int64_t i = 0; i < q.numel(); ++i) q.at(i) = std::exp((sims.at(i) - mx) / epsilon);

  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += q.at(i, j);
    if (s <= 0.0)
      throw Error(Errc::NumericUnderflow,
                  "exp(sims/epsilon) underflowed row " + std::to_string(i) +
                      " to zero; epsilon too small");
  }
  for (int64_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += q.at(i, j);
    if (s <= 0.0)
      throw Error(Errc::NumericUnderflow,
                  "exp(sims/epsilon) underflowed column " + std::to_string(j) +
                      " to zero; epsilon too small");
  }

  AssignmentMatrix out;
  auto residuals = [&](double& row_r, double& col_r) {
    row_r = 0.0;
    col_r = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < k; ++j) s += q.at(i, j);
      row_r = std::max(row_r, std::abs(s - 1.0));
    }
    for (int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += q.at(i, j);
      col_r = std::max(col_r, std::abs(s - col_target));
    }
  };

  for (int it = 0; it < n_iters; ++it) {
    // columns to N/K
    for (int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += q.at(i, j);
      const double f = col_target / s;
      for (int64_t i = 0; i < n; ++i) q.at(i, j) *= f;
    }
    // rows to 1
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < k; ++j) s += q.at(i, j);
      const double f = 1.0 / s;
      for (int64_t j = 0; j < k; ++j) q.at(i, j) *= f;
    }
    out.iterations_run = it + 1;
    double row_r, col_r;
    residuals(row_r, col_r);
    out.residual_history.push_back(std::max(row_r, col_r));
    if (row_r < tol && col_r < tol) {
      out.converged = true;
      break;
    }
  }

  residuals(out.row_residual, out.col_residual);
  // Final renormalization: rows sum exactly 1 regardless of convergence.
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += q.at(i, j);
    for (int64_t j = 0; j < k; ++j) q.at(i, j) /= s;
  }
  out.q = std::move(q);
  return out;
}

Tensor mix_with_identity(const Tensor& q, double lam) {
  if (q.rank() != 2 || q.rows() != q.cols())
    throw Error(Errc::NotSquare, "mix_with_identity needs a square assignment matrix, got " +
                                     q.dims_str());
  if (lam < 0.0 || lam > 1.0) throw Error(Errc::BadConfig, "lam must be in [0,1]");
  Tensor out = scale(q, lam);
  const double one_minus = 1.0 - lam;
  for (int64_t i = 0; i < q.rows(); ++i) out.at(i, i) += one_minus;
  return out;
}

}  // namespace vlplab
