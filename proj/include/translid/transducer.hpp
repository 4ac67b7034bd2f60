#ifndef TRANSLID_TRANSDUCER_HPP
#define TRANSLID_TRANSDUCER_HPP

#include <cstdint>
#include <vector>

#include "translid/nets.hpp"

namespace translid {

inline constexpr int kBlankId = 0;

// Feed-forward joint: z = tanh(Q h_enc + V h_pred + b_z), logits = W_y z + b_y,
// logp = log_softmax(logits). Class 0 is the blank symbol; classes 1..K are
// real tokens.
class JointNet {
 public:
  JointNet(int enc_dim, int pred_dim, int joint_dim, int vocab_tokens, Rng& rng);

  int enc_dim() const { return q_.value.cols(); }
  int pred_dim() const { return v_.value.cols(); }
  int joint_dim() const { return q_.value.rows(); }
  int vocab_tokens() const { return wy_.value.rows() - 1; }
  int num_classes() const { return wy_.value.rows(); }

  struct Fwd {
    Vec z, logits, logp;
  };
  Fwd forward(const Vec& h_enc, const Vec& h_pred) const;

  // Gradient arriving directly at z (used when z itself is pooled downstream).
  // Accumulates Q/V/b_z grads and adds the input gradients onto dh_enc/dh_pred.
  void backward_from_z(const Vec& h_enc, const Vec& h_pred, const Vec& z,
                       const Vec& dz, Vec& dh_enc, Vec& dh_pred);

  Param& q() { return q_; }
  Param& v() { return v_; }
  Param& bz() { return bz_; }
  Param& wy() { return wy_; }
  Param& by() { return by_; }
  const Param& q() const { return q_; }
  const Param& v() const { return v_; }
  const Param& bz() const { return bz_; }
  const Param& wy() const { return wy_; }
  const Param& by() const { return by_; }
  std::vector<Param*> params();

 private:
  Param q_;   // J x E
  Param v_;   // J x P
  Param bz_;  // J x 1
  Param wy_;  // (K+1) x J
  Param by_;  // (K+1) x 1
};

// Dense log-probability grid over encoder steps t, label positions u and the
// K+1 output classes. Each (t, u) slice is a normalized log-softmax.
struct Lattice {
  int t_len = 0;        // encoder length T'
  int u_len = 0;        // label length U
  int num_classes = 0;  // K+1

  std::vector<double> logp;  // [t][u][k], row-major

  Lattice() = default;
  Lattice(int t_len_, int u_len_, int num_classes_)
      : t_len(t_len_),
        u_len(u_len_),
        num_classes(num_classes_),
        logp(static_cast<std::size_t>(t_len_) * (u_len_ + 1) * num_classes_) {}

  std::size_t cell(int t, int u) const {
    return static_cast<std::size_t>(t) * (u_len + 1) + u;
  }
  double& at(int t, int u, int k) { return logp[cell(t, u) * num_classes + k]; }
  double at(int t, int u, int k) const {
    return logp[cell(t, u) * num_classes + k];
  }
};

// Evaluates the joint at every (t, u) cell. When z_cache is given it is
// resized to (T'·(U+1)) rows of joint_dim and receives the per-cell z vectors
// for the backward pass.
Lattice joint_lattice(const JointNet& jn, const std::vector<Vec>& enc,
                      const std::vector<Vec>& pred, Matrix* z_cache = nullptr);

// log P(y|x): forward DP over the alignment lattice in log domain.
double rnnt_log_prob(const Lattice& lat, const std::vector<int>& labels);

// Brute-force oracle: explicitly sums every monotone alignment path. Guarded
// to T'·(U+1) <= 20 cells. path_count, when given, receives the number of
// enumerated paths.
double enumerate_paths_log_prob(const Lattice& lat,
                                const std::vector<int>& labels,
                                std::uint64_t* path_count = nullptr);

// Gradient of loss = -log P(y|x) with respect to the lattice *logits*,
// flattened in Lattice::logp layout. log_prob_out, when given, receives
// log P(y|x).
std::vector<double> rnnt_lattice_grad(const Lattice& lat,
                                      const std::vector<int>& labels,
                                      double* log_prob_out = nullptr);

// Scatters lattice logit gradients (times scale) into the joint parameters
// and the per-step encoder / prediction output gradients.
void joint_lattice_backward(JointNet& jn, const std::vector<Vec>& enc,
                            const std::vector<Vec>& pred, const Matrix& z_cache,
                            const std::vector<double>& d_logits, double scale,
                            std::vector<Vec>& dh_enc, std::vector<Vec>& dh_pred);

struct TransducerDims {
  int feat_dim = 20;
  int enc_hidden = 64;
  int enc_layers = 2;
  int enc_dim = 64;
  int subsample = 2;
  int vocab_tokens = 12;
  int embed_dim = 32;
  int pred_hidden = 64;
  int pred_dim = 64;
  int joint_dim = 64;
};

struct TransducerModel {
  Encoder encoder;
  PredictionNet prediction;
  JointNet joint;

  TransducerModel(const TransducerDims& dims, Rng& rng);

  std::vector<Param*> params();
};

// Transducer loss -ln P(y|x) for one utterance. With grad_scale != 0 the
// analytic backward pass also runs, accumulating grad_scale times the loss
// gradient into every non-frozen parameter.
double rnnt_loss(TransducerModel& m, const Matrix& frames,
                 const std::vector<int>& labels, double grad_scale = 0.0);

// Alignment produced by greedy decoding: one (t, u) pair per joint
// evaluation. pred_states holds the visited prediction outputs (index u), so
// pair i aligns enc[pairs[i].t] with pred_states[pairs[i].u]; z[i] is the
// joint hidden vector of that evaluation.
struct DecodeTrace {
  struct Pair {
    int t;
    int u;
  };
  std::vector<int> tokens;
  std::vector<Pair> pairs;
  std::vector<int> per_frame_emits;  // size T'
  std::vector<Vec> pred_states;      // size tokens.size() + 1
  std::vector<Vec> z;                // size pairs.size()

  int num_pairs() const { return static_cast<int>(pairs.size()); }
};

// Greedy decoding with at most tau emissions per encoder step. After the
// tau-th emission the frame advances without a forced blank evaluation, so
// T' <= pairs <= tau·T' and tau = 1 gives exactly one pair per frame.
DecodeTrace greedy_decode(const PredictionNet& pn, const JointNet& jn,
                          const std::vector<Vec>& enc, int tau);

}  // namespace translid

#endif  // TRANSLID_TRANSDUCER_HPP
