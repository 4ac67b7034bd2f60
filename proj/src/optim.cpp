#include "translid/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace translid {

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2,
           double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw std::invalid_argument("Adam: lr must be positive");
  for (Param* p : params)
    slots_.push_back({p, Matrix(p->value.rows(), p->value.cols()),
                      Matrix(p->value.rows(), p->value.cols())});
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (Slot& slot : slots_) {
    if (slot.p->frozen) continue;
    double* value = slot.p->value.data();
    const double* grad = slot.p->grad.data();
    double* m = slot.m.data();
    double* v = slot.v.data();
    const std::size_t n = slot.p->value.size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad[k] * grad[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params) {
    if (p->frozen) continue;
    for (std::size_t k = 0; k < p->grad.size(); ++k) {
      const double g = p->grad.data()[k];
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params) {
      if (p->frozen) continue;
      for (std::size_t k = 0; k < p->grad.size(); ++k)
        p->grad.data()[k] *= scale;
    }
  }
  return norm;
}

}  // namespace translid
