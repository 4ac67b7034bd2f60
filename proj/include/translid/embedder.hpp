#ifndef TRANSLID_EMBEDDER_HPP
#define TRANSLID_EMBEDDER_HPP

#include <optional>
#include <string>
#include <vector>

#include "translid/transducer.hpp"

namespace translid {

// Which transducer stream feeds the utterance-level embedding.
enum class StreamVariant {
  kEncoderOnly,
  kPredictionOnly,
  kJointZ,
  kEarlyFused,  // h_enc + lambda * h_pred per aligned pair
  kLateDual,    // two branches fused after the FC stacks
};

StreamVariant parse_variant(const std::string& name);
std::string variant_name(StreamVariant v);

// Trainable flags per component block. At least one must be trainable.
struct FreezeMask {
  bool train_encoder = true;
  bool train_prediction = true;
  bool train_joint = true;
  bool train_head = true;
};

// [mean; stddev] pooling over a frame sequence. The reduction is
// order-independent (values are sorted before summation), so any permutation
// of the frames yields a bit-identical result. Population standard deviation
// with a 1e-8 variance floor inside the sqrt.
struct StatsPoolCache {
  Vec mean;
  Vec stddev;
  int count = 0;
};
Vec stats_pool(const std::vector<Vec>& seq, StatsPoolCache* cache = nullptr);
std::vector<Vec> stats_pool_backward(const StatsPoolCache& cache,
                                     const std::vector<Vec>& seq,
                                     const Vec& d_pooled);

// Early additive fusion h_v = h_enc_t + lambda * h_pred_u per aligned pair.
// lambda = 0 reproduces the per-pair encoder vectors exactly.
std::vector<Vec> early_fuse(const DecodeTrace& trace, const std::vector<Vec>& enc,
                            double lambda);

struct LanguageEmbedding {
  std::string utt_id;
  int label = -1;  // -1 when unknown
  Vec values;
};

// Transducer plus utterance head(s): stream selection, pooling, the FC stack
// with its embedding tap, and the language posterior output layer. Late-dual
// adds a second disjoint branch whose FC2 pre-activations are fused with
// weight alpha before the shared output layer.
class LidModel {
 public:
  LidModel(const TransducerDims& dims, StreamVariant variant, int num_langs,
           int head_dim, double lambda, double alpha, int tau, Rng& rng);

  StreamVariant variant() const { return variant_; }
  int num_langs() const { return out_.out_dim(); }
  int head_dim() const { return head_main_.hidden_dim(); }
  int tau() const { return tau_; }
  double lambda() const { return lambda_; }
  double alpha() const { return alpha_; }

  TransducerModel& transducer() { return trans_; }
  const TransducerModel& transducer() const { return trans_; }
  FcStack& head_main() { return head_main_; }
  FcStack* head_pred() { return head_pred_ ? &*head_pred_ : nullptr; }
  LinearLayer& output_layer() { return out_; }

  struct Fwd {
    Encoder::Tape enc_tape;
    std::vector<Vec> enc;
    DecodeTrace trace;
    PredictionNet::Tape pred_tape;
    std::vector<Vec> pred_states;  // differentiable re-forward over the tokens
    std::vector<Vec> stream;       // pooled stream (encoder branch for late)
    std::vector<Vec> stream_pred;  // late-dual prediction branch stream
    StatsPoolCache pool;
    StatsPoolCache pool_pred;
    Vec pooled;
    Vec pooled_pred;
    FcStack::Fwd head;
    FcStack::Fwd head_pred;
    Vec fused;  // FC2 pre-activation feeding the output layer
    Vec h2;     // tanh(fused)
    Vec embedding;
    Vec logits;
    Vec log_post;
  };

  // Runs decode (where the variant needs it) and the head. The decode path is
  // treated as a constant structure: gradients flow only through the gathered
  // vectors, never through the argmax decisions.
  Fwd forward(const Matrix& frames) const;
  void backward(Fwd& fwd, const Vec& d_logits, double scale);

  // Cross-entropy -log P(lang | x). With grad_scale != 0 the backward pass
  // accumulates scaled gradients into every non-frozen parameter. When
  // correct_out is given it receives whether the posterior argmax hit lang.
  double ce_loss(const Matrix& frames, int lang, double grad_scale = 0.0,
                 bool* correct_out = nullptr);

  LanguageEmbedding extract(const FeatureSequence& feats) const;

  void apply_freeze(const FreezeMask& mask);

  std::vector<Param*> params();
  std::vector<Param*> head_params();

 private:
  StreamVariant variant_;
  double lambda_;
  double alpha_;
  int tau_;
  TransducerModel trans_;
  FcStack head_main_;
  std::optional<FcStack> head_pred_;
  LinearLayer out_;
};

}  // namespace translid

#endif  // TRANSLID_EMBEDDER_HPP
