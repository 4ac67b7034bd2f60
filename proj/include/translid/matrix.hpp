#ifndef TRANSLID_MATRIX_HPP
#define TRANSLID_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace translid {

using Vec = std::vector<double>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Activation { kTanh, kSigmoid, kRelu };

// Dense row-major matrix of 64-bit floats. All compute in the toolkit is
// double precision; 32-bit floats appear only inside the feature file format.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);
  Matrix(int rows, int cols, std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const {
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  void fill(double v);
  bool all_finite() const;
  std::string shape_str() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double activate_scalar(Activation kind, double x);
// Derivative expressed through the activation output y (valid for tanh,
// sigmoid and relu).
double activation_grad_from_output(Activation kind, double y);
Matrix activate(Activation kind, const Matrix& x);
Vec activate(Activation kind, const Vec& x);

Vec log_softmax(const Vec& x);
double logsumexp(const Vec& x);

inline double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a >= b) return a + std::log1p(std::exp(b - a));
  return b + std::log1p(std::exp(a - b));
}

// Vector kernels used throughout the layer code.
Vec matvec(const Matrix& a, const Vec& x);             // A x
void matvec_acc(const Matrix& a, const Vec& x, Vec& y);    // y += A x
void matvec_t_acc(const Matrix& a, const Vec& x, Vec& y);  // y += A^T x
void outer_acc(Matrix& a, const Vec& u, const Vec& v);     // A += u v^T
void axpy(double alpha, const Vec& x, Vec& y);
double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& x);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
// returned in descending order; eigenvectors are the matching columns,
// unit-norm with a sign convention (largest-magnitude component positive).
void symmetric_eig(const Matrix& a, Matrix* eigvecs, Vec* eigvals);

// Cholesky factor L (lower) of a symmetric positive-definite matrix.
Matrix cholesky_lower(const Matrix& a);
// Solve L y = b and L^T x = y for triangular L.
Vec solve_lower(const Matrix& l, const Vec& b);
Vec solve_lower_transposed(const Matrix& l, const Vec& b);

}  // namespace translid

#endif  // TRANSLID_MATRIX_HPP
