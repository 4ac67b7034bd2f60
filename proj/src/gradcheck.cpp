#include "translid/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

double grad_check(const std::function<double()>& loss,
                  const std::vector<Param*>& params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument(msg("grad_check: eps ", eps, " outside [1e-7, 1e-3]"));
  }
  double max_rel_err = 0.0;
  for (Param* p : params) {
    if (p->frozen) continue;
    double* values = p->value.data();
    const double* grads = p->grad.data();
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double f_plus = loss();
      values[i] = saved - eps;
      const double f_minus = loss();
      values[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericError(msg("grad_check: non-finite loss at ", p->name,
                               "[", i, "]"));
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = grads[i];
      const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > max_rel_err) max_rel_err = rel;
    }
  }
  return max_rel_err;
}

}  // namespace translid
