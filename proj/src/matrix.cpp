#include "translid/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) {
    throw std::invalid_argument(msg("Matrix: negative shape ", rows, "x", cols));
  }
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument(msg("Matrix: ", data_.size(),
                                    " values for shape ", rows, "x", cols));
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Matrix::shape_str() const {
  return msg(rows_, "x", cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument(msg("matmul: incompatible shapes ",
                                    a.shape_str(), " and ", b.shape_str()));
  }
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double* out_row = out.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.row(k);
      for (int j = 0; j < b.cols(); ++j) {
        out_row[j] += aik * b_row[j];
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      out(j, i) = a(i, j);
    }
  }
  return out;
}

double activate_scalar(Activation kind, double x) {
  switch (kind) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
  }
  return 0.0;
}

double activation_grad_from_output(Activation kind, double y) {
  switch (kind) {
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kSigmoid:
      return y * (1.0 - y);
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

Matrix activate(Activation kind, const Matrix& x) {
  Matrix out = x;
  double* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) p[i] = activate_scalar(kind, p[i]);
  return out;
}

Vec activate(Activation kind, const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate_scalar(kind, x[i]);
  return out;
}

double logsumexp(const Vec& x) {
  if (x.empty()) {
    throw std::invalid_argument("logsumexp: empty input");
  }
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

Vec log_softmax(const Vec& x) {
  const double lse = logsumexp(x);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

Vec matvec(const Matrix& a, const Vec& x) {
  Vec y(a.rows(), 0.0);
  matvec_acc(a, x, y);
  return y;
}

void matvec_acc(const Matrix& a, const Vec& x, Vec& y) {
  if (x.size() != static_cast<std::size_t>(a.cols()) ||
      y.size() != static_cast<std::size_t>(a.rows())) {
    throw std::invalid_argument(msg("matvec: shapes ", a.shape_str(), " * ",
                                    x.size(), " -> ", y.size()));
  }
  const int rows = a.rows();
  const int cols = a.cols();
  for (int i = 0; i < rows; ++i) {
    const double* row = a.row(i);
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

void matvec_t_acc(const Matrix& a, const Vec& x, Vec& y) {
  if (x.size() != static_cast<std::size_t>(a.rows()) ||
      y.size() != static_cast<std::size_t>(a.cols())) {
    throw std::invalid_argument(msg("matvec_t: shapes ", a.shape_str(), "^T * ",
                                    x.size(), " -> ", y.size()));
  }
  const int rows = a.rows();
  const int cols = a.cols();
  for (int i = 0; i < rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = a.row(i);
    for (int j = 0; j < cols; ++j) y[j] += xi * row[j];
  }
}

void outer_acc(Matrix& a, const Vec& u, const Vec& v) {
  if (u.size() != static_cast<std::size_t>(a.rows()) ||
      v.size() != static_cast<std::size_t>(a.cols())) {
    throw std::invalid_argument(msg("outer: shapes ", u.size(), " x ", v.size(),
                                    " -> ", a.shape_str()));
  }
  for (int i = 0; i < a.rows(); ++i) {
    const double ui = u[i];
    if (ui == 0.0) continue;
    double* row = a.row(i);
    for (int j = 0; j < a.cols(); ++j) row[j] += ui * v[j];
  }
}

void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument(msg("axpy: sizes ", x.size(), " vs ", y.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(msg("dot: sizes ", a.size(), " vs ", b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(const Vec& x) { return std::sqrt(dot(x, x)); }

void symmetric_eig(const Matrix& a, Matrix* eigvecs, Vec* eigvals) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument(msg("symmetric_eig: non-square ", a.shape_str()));
  }
  const int n = a.rows();
  Matrix m = a;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v(i, i) = 1.0;

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return m(x, x) > m(y, y); });

  eigvals->resize(n);
  *eigvecs = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    const int src = order[j];
    (*eigvals)[j] = m(src, src);
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      if (std::abs(v(i, src)) > best) {
        best = std::abs(v(i, src));
        arg = i;
      }
    }
    const double sign = v(arg, src) >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) (*eigvecs)(i, j) = sign * v(i, src);
  }
}

Matrix cholesky_lower(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument(msg("cholesky: non-square ", a.shape_str()));
  }
  const int n = a.rows();
  Matrix l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = a(i, j);
      for (int k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      if (i == j) {
        if (acc <= 0.0) {
          throw NumericError(msg("cholesky: matrix not positive definite at pivot ", i));
        }
        l(i, j) = std::sqrt(acc);
      } else {
        l(i, j) = acc / l(j, j);
      }
    }
  }
  return l;
}

Vec solve_lower(const Matrix& l, const Vec& b) {
  const int n = l.rows();
  Vec x(b);
  for (int i = 0; i < n; ++i) {
    double acc = x[i];
    for (int k = 0; k < i; ++k) acc -= l(i, k) * x[k];
    x[i] = acc / l(i, i);
  }
  return x;
}

Vec solve_lower_transposed(const Matrix& l, const Vec& b) {
  const int n = l.rows();
  Vec x(b);
  for (int i = n - 1; i >= 0; --i) {
    double acc = x[i];
    for (int k = i + 1; k < n; ++k) acc -= l(k, i) * x[k];
    x[i] = acc / l(i, i);
  }
  return x;
}

}  // namespace translid
