#ifndef TRANSLID_NETS_HPP
#define TRANSLID_NETS_HPP

#include <string>
#include <vector>

#include "translid/feature.hpp"
#include "translid/layers.hpp"

namespace translid {

// Acoustic stream: mean-pool subsampling by factor s, a stack of LSTM layers,
// and a linear projection to the encoder output dimension E. T input frames
// map to T' = ceil(T / s) output vectors.
class Encoder {
 public:
  Encoder(int feat_dim, int hidden_dim, int num_layers, int out_dim,
          int subsample, Rng& rng);

  int feat_dim() const { return feat_dim_; }
  int output_dim() const { return proj_.out_dim(); }
  int subsample() const { return subsample_; }

  struct Tape {
    std::vector<Vec> pooled;
    std::vector<LstmLayer::Tape> lstm;
    std::vector<Vec> proj_in;
  };

  std::vector<Vec> forward(const Matrix& frames, Tape* tape = nullptr) const;
  std::vector<Vec> forward(const FeatureSequence& feats, Tape* tape = nullptr) const {
    return forward(feats.frames, tape);
  }
  // Accumulates parameter grads from per-step output grads. Input frames are
  // data, so no dx is returned.
  void backward(const Tape& tape, const std::vector<Vec>& d_out);

  std::vector<Param*> params();

 private:
  int feat_dim_;
  int subsample_;
  std::vector<LstmLayer> layers_;
  LinearLayer proj_;
};

// Linguistic stream: embeds previously emitted tokens and runs them through
// an LSTM plus projection. Output u=0 is a learned start-of-sequence vector;
// output u>=1 conditions on tokens[0..u-1].
class PredictionNet {
 public:
  PredictionNet(int vocab_tokens, int embed_dim, int hidden_dim, int out_dim,
                Rng& rng);

  int vocab_tokens() const { return vocab_tokens_; }
  int output_dim() const { return proj_.out_dim(); }

  struct Tape {
    std::vector<int> tokens;
    std::vector<Vec> embeds;
    LstmLayer::Tape lstm;
  };

  // tokens must be non-blank ids in 1..K. Returns tokens.size() + 1 vectors.
  std::vector<Vec> forward(const std::vector<int>& tokens, Tape* tape = nullptr) const;
  void backward(const Tape& tape, const std::vector<Vec>& d_out);

  // Incremental interface for greedy decoding.
  struct DecodeState {
    LstmState lstm;
  };
  DecodeState decode_state() const { return DecodeState{lstm_.zero_state()}; }
  Vec sos_output() const;
  Vec consume(int token, DecodeState* state) const;

  std::vector<Param*> params();

 private:
  void check_token(int token) const;

  int vocab_tokens_;
  Param embed_;  // K x d, token id k stored at row k-1
  LstmLayer lstm_;
  LinearLayer proj_;
  Param sos_;  // out_dim x 1
};

// Two fully-connected layers; a1 (the first layer's pre-activation output) is
// the embedding tap, a2 is the pre-activation output of the second layer.
class FcStack {
 public:
  FcStack(const std::string& name, int in_dim, int hidden_dim, Rng& rng);

  int in_dim() const { return fc1_.in_dim(); }
  int hidden_dim() const { return fc1_.out_dim(); }

  struct Fwd {
    Vec a1, h1, a2;
  };

  Fwd forward(const Vec& x) const;
  // da2 is the grad on the second pre-activation; returns dx.
  Vec backward(const Fwd& fwd, const Vec& x, const Vec& da2);

  LinearLayer& fc1() { return fc1_; }
  LinearLayer& fc2() { return fc2_; }
  std::vector<Param*> params();

 private:
  LinearLayer fc1_;
  LinearLayer fc2_;
};

}  // namespace translid

#endif  // TRANSLID_NETS_HPP
