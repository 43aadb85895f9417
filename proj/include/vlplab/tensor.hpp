#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlplab/errors.hpp"

namespace vlplab {

// Dense row-major tensor of 64-bit reals. Values are immutable by convention
// once an operation has returned them; all numeric ops are pure functions.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> dims);
  Tensor(std::vector<int64_t> dims, std::vector<double> data);

  static Tensor zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<int64_t> dims, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor identity(int64_t n);

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
  int64_t dim(int64_t i) const { return dims_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2-D helpers; most of the artifact lives on matrices.
  int64_t rows() const { return dims_.size() >= 1 ? dims_[0] : 0; }
  int64_t cols() const { return dims_.size() >= 2 ? dims_[1] : 1; }

  double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * cols() + j)]; }
  double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * cols() + j)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double item() const;  // value of a 1-element tensor

  bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }
  bool all_finite() const;
  // Throws NonFinite when any entry is NaN/Inf; `who` names the producer.
  void require_finite(const std::string& who) const;

  std::string dims_str() const;

 private:
  std::vector<int64_t> dims_;
  std::vector<double> data_;
};

// ---- elementwise / shape kernels (pure; no autodiff here) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor transpose(const Tensor& m);

// c = a @ b for a: N x K, b: K x M (dgemm-backed).
Tensor matmul(const Tensor& a, const Tensor& b);
// Accumulating variants used by backward passes: c += alpha * op(a) @ op(b).
void matmul_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, double alpha, Tensor& c);

double sum(const Tensor& a);
double dot(const double* a, const double* b, int64_t n);

// ---- the tensorlab spec operations (forward math; see tape.hpp for grads) ----

// Each output row has unit Euclidean norm. Throws ZeroRow if a row norm
// is below 1e-30.
Tensor l2_normalize_rows(const Tensor& m);
// Column counterpart (feature-wise); throws ZeroColumn.
Tensor l2_normalize_cols(const Tensor& m);

// Entry (i,j) = cos(a_i, b_j). Throws DimMismatch / ZeroRow.
Tensor cosine_sim_matrix(const Tensor& a, const Tensor& b);

// Row softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& m);

// Mean over rows of -sum_j targets[i][j] * log_softmax(logits)[i][j].
// Fused log-softmax; targets rows must be probability distributions
// (BadTargets otherwise).
double cross_entropy_rows(const Tensor& logits, const Tensor& targets);
void check_target_rows(const Tensor& targets);

}  // namespace vlplab
