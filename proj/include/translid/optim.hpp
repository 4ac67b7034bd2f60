#ifndef TRANSLID_OPTIM_HPP
#define TRANSLID_OPTIM_HPP

#include <vector>

#include "translid/param.hpp"

namespace translid {

// Adam with bias correction. Frozen params are skipped entirely, so a frozen
// block stays bit-identical no matter how many steps run.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Slot {
    Param* p;
    Matrix m;
    Matrix v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Scales all non-frozen grads so their global L2 norm is at most max_norm;
// returns the pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(const std::vector<Param*>& params, double max_norm);

}  // namespace translid

#endif  // TRANSLID_OPTIM_HPP
