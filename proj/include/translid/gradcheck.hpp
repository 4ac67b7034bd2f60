#ifndef TRANSLID_GRADCHECK_HPP
#define TRANSLID_GRADCHECK_HPP

#include <functional>
#include <vector>

#include "translid/param.hpp"

namespace translid {

// Central-difference verification of analytic gradients.
//
// The caller computes the loss once with a backward pass so that every param
// holds its analytic gradient, then passes a forward-only loss closure here.
// Each non-frozen coordinate is perturbed by +/- eps and the relative error
// |g_a - g_n| / max(1e-8, |g_a| + |g_n|) is maximised over coordinates.
// Frozen params are excluded from the comparison.
double grad_check(const std::function<double()>& loss,
                  const std::vector<Param*>& params, double eps);

}  // namespace translid

#endif  // TRANSLID_GRADCHECK_HPP
