#include "vlplab/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vlplab {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::ZeroRow: return "ZeroRow";
    case Errc::ZeroColumn: return "ZeroColumn";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NotSquare: return "NotSquare";
    case Errc::BadTargets: return "BadTargets";
    case Errc::NonFinite: return "NonFinite";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NumericUnderflow: return "NumericUnderflow";
    case Errc::ViewCountMismatch: return "ViewCountMismatch";
    case Errc::PredictorMissing: return "PredictorMissing";
    case Errc::MomentumMissing: return "MomentumMissing";
    case Errc::BadConfig: return "BadConfig";
    case Errc::EmptyCaptionList: return "EmptyCaptionList";
    case Errc::CorruptRecord: return "CorruptRecord";
    case Errc::MissingImageFile: return "MissingImageFile";
    case Errc::NoClasses: return "NoClasses";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

namespace {

int64_t product(const std::vector<int64_t>& dims) {
  int64_t p = 1;
  for (int64_t d : dims) {
    if (d <= 0) throw Error(Errc::BadConfig, "tensor dims must be positive");
    p *= d;
  }
  return p;
}

void require_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw Error(Errc::ShapeMismatch, std::string(who) + " expects a matrix");
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)) {
  data_.assign(static_cast<size_t>(product(dims_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (product(dims_) != static_cast<int64_t>(data_.size()))
    throw Error(Errc::ShapeMismatch, "data length does not match dims product");
}

Tensor Tensor::full(std::vector<int64_t> dims, double v) {
  Tensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::identity(int64_t n) {
  Tensor t({n, n});
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw Error(Errc::ShapeMismatch, "item() on tensor with " + dims_str());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& who) const {
  if (!all_finite()) throw Error(Errc::NonFinite, who + " produced NaN/Inf");
}

std::string Tensor::dims_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ")";
  return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b)) throw Error(Errc::DimMismatch, "add " + a.dims_str() + " vs " + b.dims_str());
  Tensor out(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b)) throw Error(Errc::DimMismatch, "sub " + a.dims_str() + " vs " + b.dims_str());
  Tensor out(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b)) throw Error(Errc::DimMismatch, "mul " + a.dims_str() + " vs " + b.dims_str());
  Tensor out(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * c;
  return out;
}

Tensor transpose(const Tensor& m) {
  require_matrix(m, "transpose");
  Tensor out({m.cols(), m.rows()});
  for (int64_t i = 0; i < m.rows(); ++i)
    for (int64_t j = 0; j < m.cols(); ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows())
    throw Error(Errc::DimMismatch, "matmul " + a.dims_str() + " @ " + b.dims_str());
  Tensor c({a.rows(), b.cols()});
  matmul_acc(a, false, b, false, 1.0, c);
  return c;
}

void matmul_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, double alpha, Tensor& c) {
  const int64_t m = ta ? a.cols() : a.rows();
  const int64_t k = ta ? a.rows() : a.cols();
  const int64_t kb = tb ? b.cols() : b.rows();
  const int64_t n = tb ? b.rows() : b.cols();
  if (k != kb || c.rows() != m || c.cols() != n)
    throw Error(Errc::DimMismatch, "matmul_acc shape mismatch");
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a.data(),
              static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 1.0, c.data(),
              static_cast<int>(c.cols()));
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i);
  return s;
}

double dot(const double* a, const double* b, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

Tensor l2_normalize_rows(const Tensor& m) {
  require_matrix(m, "l2_normalize_rows");
  Tensor out(m.dims());
  const int64_t d = m.cols();
  for (int64_t i = 0; i < m.rows(); ++i) {
    double nrm = std::sqrt(dot(m.data() + i * d, m.data() + i * d, d));
    if (nrm < 1e-30) throw Error(Errc::ZeroRow, "row " + std::to_string(i) + " has zero norm");
    for (int64_t j = 0; j < d; ++j) out.at(i, j) = m.at(i, j) / nrm;
  }
  return out;
}

Tensor l2_normalize_cols(const Tensor& m) {
  require_matrix(m, "l2_normalize_cols");
  Tensor out(m.dims());
  for (int64_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m.rows(); ++i) s += m.at(i, j) * m.at(i, j);
    double nrm = std::sqrt(s);
    if (nrm < 1e-30) throw Error(Errc::ZeroColumn, "column " + std::to_string(j) + " has zero norm");
    for (int64_t i = 0; i < m.rows(); ++i) out.at(i, j) = m.at(i, j) / nrm;
  }
  return out;
}

Tensor cosine_sim_matrix(const Tensor& a, const Tensor& b) {
  require_matrix(a, "cosine_sim_matrix");
  require_matrix(b, "cosine_sim_matrix");
  if (a.cols() != b.cols())
    throw Error(Errc::DimMismatch, "cosine_sim_matrix " + a.dims_str() + " vs " + b.dims_str());
  return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

Tensor softmax_rows(const Tensor& m) {
  require_matrix(m, "softmax_rows");
  m.require_finite("softmax_rows input");
  Tensor out(m.dims());
  for (int64_t i = 0; i < m.rows(); ++i) {
    double mx = m.at(i, 0);
    for (int64_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < m.cols(); ++j) {
      out.at(i, j) = std::exp(m.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (int64_t j = 0; j < m.cols(); ++j) out.at(i, j) /= z;
  }
  return out;
}

void check_target_rows(const Tensor& targets) {
  for (int64_t i = 0; i < targets.rows(); ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < targets.cols(); ++j) {
      double t = targets.at(i, j);
      if (t < 0.0)
        throw Error(Errc::BadTargets, "negative mass in target row " + std::to_string(i));
      s += t;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw Error(Errc::BadTargets, "target row " + std::to_string(i) + " sums to " +
                                        std::to_string(s));
  }
}

double cross_entropy_rows(const Tensor& logits, const Tensor& targets) {
  if (!logits.same_dims(targets))
    throw Error(Errc::DimMismatch,
                "cross_entropy_rows " + logits.dims_str() + " vs " + targets.dims_str());
  logits.require_finite("cross_entropy_rows logits");
  check_target_rows(targets);
  const int64_t n = logits.rows(), m = logits.cols();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < m; ++j) z += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(z);
    double row = 0.0;
    for (int64_t j = 0; j < m; ++j) row += targets.at(i, j) * (lse - logits.at(i, j));
    total += row;
  }
  return total / static_cast<double>(n);
}

}  // namespace vlplab
