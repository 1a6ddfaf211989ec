#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace csrb {

/// Thrown when operand shapes do not chain.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown when a computation produces or encounters NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major f64 tensor. Rank 0 (scalar), 1 (vector) and 2 (matrix)
/// cover everything this project computes on; immutable by convention once
/// built (ops return fresh tensors).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return shape_.empty(); }
  bool is_vector() const { return shape_.size() == 1; }
  bool is_matrix() const { return shape_.size() == 2; }
  std::size_t rows() const;
  std::size_t cols() const;

  double item() const;
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }
  const std::vector<double>& vec_data() const { return data_; }

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::size_t cols_ = 0;  // cached for at()
};

// Value-level kernels. These are the single implementation the Tape also
// dispatches to, so tape and plain evaluation agree bitwise.

Tensor matvec(const Tensor& W, const Tensor& v);    // W v
Tensor matvec_t(const Tensor& W, const Tensor& v);  // W^T v
Tensor matmul(const Tensor& A, const Tensor& B);    // A B
Tensor matmul_tn(const Tensor& A, const Tensor& B); // A^T B
Tensor matmul_nt(const Tensor& A, const Tensor& B); // A B^T
Tensor transpose(const Tensor& A);
Tensor outer(const Tensor& u, const Tensor& v);     // u v^T
Tensor rowdot(const Tensor& A, const Tensor& B);    // per-row dot -> vector(rows)
void add_inplace(Tensor& acc, const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor div(const Tensor& a, const Tensor& b);  // elementwise
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor rowscale(const Tensor& d, const Tensor& M);  // diag(d) M

Tensor col_broadcast_add(const Tensor& M, const Tensor& v);  // M + v 1^T
Tensor row_sum(const Tensor& M);  // per-row sums -> vector(rows)

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double l1norm(const Tensor& v);
Tensor row_l1(const Tensor& W);  // per-row l1 norms -> vector(rows)
Tensor col_l1(const Tensor& M);  // per-column l1 norms -> vector(cols)

// log(1 + sum_i w_i * exp(t_i)), w_i >= 0, overflow-safe for |t| up to ~1e4.
// Zero-weight terms are dropped before the max shift so they contribute
// nothing (value or stability-wise).
double stable_log1p_sum_exp(const std::vector<double>& weights,
                            const std::vector<double>& exponents);
double logsumexp(const Tensor& v);

}  // namespace csrb
