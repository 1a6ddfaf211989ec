#include "csrb/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace csrb {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVec = Eigen::VectorXd;
using MatMap = Eigen::Map<const EMat>;
using MatMapMut = Eigen::Map<EMat>;
using VecMap = Eigen::Map<const EVec>;
using VecMapMut = Eigen::Map<EVec>;

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

MatMap mat_of(const Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

VecMap vec_of(const Tensor& t) {
  return VecMap(t.data(), static_cast<Eigen::Index>(t.size()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                       b.shape_str() + " do not chain");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw DimensionError("tensor data length does not match shape " + shape_str());
  cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols});
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape()); }

std::size_t Tensor::rows() const {
  if (is_matrix()) return shape_[0];
  if (is_vector()) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (is_matrix()) return shape_[1];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw DimensionError("item() on tensor of size " + std::to_string(data_.size()));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

Tensor matvec(const Tensor& W, const Tensor& v) {
  if (!W.is_matrix() || !v.is_vector() || W.cols() != v.size()) shape_fail("matvec", W, v);
  Tensor out({W.rows()});
  VecMapMut(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      mat_of(W) * vec_of(v);
  return out;
}

Tensor matvec_t(const Tensor& W, const Tensor& v) {
  if (!W.is_matrix() || !v.is_vector() || W.rows() != v.size()) shape_fail("matvec_t", W, v);
  Tensor out({W.cols()});
  VecMapMut(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      mat_of(W).transpose() * vec_of(v);
  return out;
}

Tensor matmul(const Tensor& A, const Tensor& B) {
  if (!A.is_matrix() || !B.is_matrix() || A.cols() != B.rows()) shape_fail("matmul", A, B);
  Tensor out({A.rows(), B.cols()});
  MatMapMut(out.data(), static_cast<Eigen::Index>(out.rows()),
            static_cast<Eigen::Index>(out.cols()))
      .noalias() = mat_of(A) * mat_of(B);
  return out;
}

Tensor matmul_tn(const Tensor& A, const Tensor& B) {
  if (!A.is_matrix() || !B.is_matrix() || A.rows() != B.rows()) shape_fail("matmul_tn", A, B);
  Tensor out({A.cols(), B.cols()});
  MatMapMut(out.data(), static_cast<Eigen::Index>(out.rows()),
            static_cast<Eigen::Index>(out.cols()))
      .noalias() = mat_of(A).transpose() * mat_of(B);
  return out;
}

Tensor matmul_nt(const Tensor& A, const Tensor& B) {
  if (!A.is_matrix() || !B.is_matrix() || A.cols() != B.cols()) shape_fail("matmul_nt", A, B);
  Tensor out({A.rows(), B.rows()});
  MatMapMut(out.data(), static_cast<Eigen::Index>(out.rows()),
            static_cast<Eigen::Index>(out.cols()))
      .noalias() = mat_of(A) * mat_of(B).transpose();
  return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (!u.is_vector() || !v.is_vector()) shape_fail("outer", u, v);
  Tensor out({u.size(), v.size()});
  for (std::size_t r = 0; r < u.size(); ++r)
    for (std::size_t c = 0; c < v.size(); ++c) out.at(r, c) = u[r] * v[c];
  return out;
}

Tensor rowdot(const Tensor& A, const Tensor& B) {
  if (!A.same_shape(B) || !A.is_matrix()) shape_fail("rowdot", A, B);
  Tensor out({A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) s += A.at(r, c) * B.at(r, c);
    out[r] = s;
  }
  return out;
}

void add_inplace(Tensor& acc, const Tensor& t) {
  if (!acc.same_shape(t)) shape_fail("add_inplace", acc, t);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t[i];
}

Tensor transpose(const Tensor& A) {
  if (!A.is_matrix()) throw DimensionError("transpose: not a matrix " + A.shape_str());
  Tensor out({A.cols(), A.rows()});
  MatMapMut(out.data(), static_cast<Eigen::Index>(out.rows()),
            static_cast<Eigen::Index>(out.cols())) = mat_of(A).transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("div", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / b[i];
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

Tensor rowscale(const Tensor& d, const Tensor& M) {
  if (!d.is_vector() || !M.is_matrix() || d.size() != M.rows()) shape_fail("rowscale", d, M);
  Tensor out(M.shape());
  for (std::size_t r = 0; r < M.rows(); ++r) {
    double s = d[r];
    for (std::size_t c = 0; c < M.cols(); ++c) out.at(r, c) = s * M.at(r, c);
  }
  return out;
}

Tensor col_broadcast_add(const Tensor& M, const Tensor& v) {
  if (!M.is_matrix() || !v.is_vector() || v.size() != M.rows())
    shape_fail("col_broadcast_add", M, v);
  Tensor out(M.shape());
  for (std::size_t r = 0; r < M.rows(); ++r)
    for (std::size_t c = 0; c < M.cols(); ++c) out.at(r, c) = M.at(r, c) + v[r];
  return out;
}

Tensor row_sum(const Tensor& M) {
  if (!M.is_matrix()) throw DimensionError("row_sum: not a matrix " + M.shape_str());
  Tensor out({M.rows()});
  for (std::size_t r = 0; r < M.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < M.cols(); ++c) s += M.at(r, c);
    out[r] = s;
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_fail("dot", a, b);
  return vec_of(a).dot(vec_of(b));
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

double l1norm(const Tensor& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::abs(v[i]);
  return s;
}

Tensor row_l1(const Tensor& W) {
  if (!W.is_matrix()) throw DimensionError("row_l1: not a matrix " + W.shape_str());
  Tensor out({W.rows()});
  for (std::size_t r = 0; r < W.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < W.cols(); ++c) s += std::abs(W.at(r, c));
    out[r] = s;
  }
  return out;
}

Tensor col_l1(const Tensor& M) {
  if (!M.is_matrix()) throw DimensionError("col_l1: not a matrix " + M.shape_str());
  Tensor out({M.cols()});
  for (std::size_t r = 0; r < M.rows(); ++r)
    for (std::size_t c = 0; c < M.cols(); ++c) out[c] += std::abs(M.at(r, c));
  return out;
}

double stable_log1p_sum_exp(const std::vector<double>& weights,
                            const std::vector<double>& exponents) {
  if (weights.size() != exponents.size())
    throw DimensionError("stable_log1p_sum_exp: weight/exponent length mismatch");
  double m = 0.0;  // implicit exp(0) from the leading 1
  bool any = false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    any = true;
    double t = exponents[i] + std::log(weights[i]);
    if (t > m) m = t;
  }
  if (!any) return 0.0;
  double s = std::exp(-m);  // the 1 shifted by m
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    s += std::exp(exponents[i] + std::log(weights[i]) - m);
  }
  return m + std::log(s);
}

double logsumexp(const Tensor& v) {
  double m = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace csrb
