#ifndef TRANSLID_BACKEND_HPP
#define TRANSLID_BACKEND_HPP

#include <optional>
#include <vector>

#include "translid/param.hpp"
#include "translid/rng.hpp"

namespace translid {

// Supervised linear projection onto the top discriminant directions. Rows of
// `projection` solve the generalized eigenproblem S_b v = lambda S_w v with
// S_w ridge-regularized by delta*I, delta = 1e-6 * trace(S_w) / F.
struct LdaModel {
  Matrix projection;  // r x F
  Vec mean;           // F (global mean, subtracted before projecting)

  int rank() const { return projection.rows(); }
  int in_dim() const { return projection.cols(); }
};

LdaModel lda_fit(const std::vector<Vec>& embeddings,
                 const std::vector<int>& labels, int num_classes, int r);
Vec lda_apply(const LdaModel& m, const Vec& x);

// x / ||x||_2. Throws std::invalid_argument on the zero vector.
Vec length_normalize(const Vec& x);

// (Mixture of) multinomial logistic regression. M = 1 is plain LR with no
// gate. M > 1 mixes expert softmaxes with an input-dependent softmax gate:
//   log P(y | x) = logsumexp_m [ log gate_m(x) + log softmax(W_m x + b_m)_y ].
// Parameters live in Param tensors so the training objective can be
// finite-difference checked and the model serialized as named tensors.
struct LrModel {
  std::vector<Param> expert_w;   // M tensors, each N x d
  std::vector<Param> expert_b;   // M tensors, each N x 1
  std::optional<Param> gate_w;   // M x d, only when M > 1
  std::optional<Param> gate_b;   // M x 1, only when M > 1

  int num_experts() const { return static_cast<int>(expert_w.size()); }
  int num_classes() const { return expert_w.front().value.rows(); }
  int feat_dim() const { return expert_w.front().value.cols(); }
  std::vector<Param*> params();

  static LrModel make(int num_classes, int feat_dim, int num_experts, Rng& rng);
};

// Mean L2-regularized multinomial cross-entropy over the batch (weights
// penalized, biases not). With grad_scale != 0, accumulates scaled gradients
// into the model's Param tensors.
double lr_objective(LrModel& m, const std::vector<Vec>& feats,
                    const std::vector<int>& labels, double l2,
                    double grad_scale = 0.0);

// Full-batch gradient descent with a backtracking (step-halving) line search;
// each epoch performs one monotone descent step. Deterministic for a fixed
// rng state (the rng only seeds the M > 1 symmetry-breaking init).
LrModel lr_fit(const std::vector<Vec>& feats, const std::vector<int>& labels,
               int num_classes, int num_experts, double l2, int epochs,
               Rng& rng);

// Log-posteriors over the N classes; exp sums to 1.
Vec lr_score(const LrModel& m, const Vec& x);

}  // namespace translid

#endif  // TRANSLID_BACKEND_HPP
