#ifndef TRANSLID_LAYERS_HPP
#define TRANSLID_LAYERS_HPP

#include <string>
#include <vector>

#include "translid/param.hpp"
#include "translid/rng.hpp"

namespace translid {

class LinearLayer {
 public:
  LinearLayer(const std::string& name, int in_dim, int out_dim, Rng& rng);

  int in_dim() const { return w_.value.cols(); }
  int out_dim() const { return w_.value.rows(); }

  Vec forward(const Vec& x) const;
  // Accumulates dW and db from (x, dy); returns dx.
  Vec backward(const Vec& x, const Vec& dy);

  Param& w() { return w_; }
  Param& b() { return b_; }
  const Param& w() const { return w_; }
  const Param& b() const { return b_; }
  std::vector<Param*> params();

 private:
  Param w_;  // out x in
  Param b_;  // out x 1
};

struct LstmState {
  Vec h, c;
};

// Single unidirectional LSTM layer, gates stacked (i, f, g, o). State is
// owned by the caller and reset between utterances.
class LstmLayer {
 public:
  LstmLayer(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  int input_dim() const { return in_; }
  int hidden_dim() const { return hid_; }
  LstmState zero_state() const;

  struct StepCache {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o;  // post-activation gate values
    Vec c, tanh_c, h;
  };
  struct Tape {
    std::vector<StepCache> steps;
  };

  // Advances *state; returns the new hidden output. Fills *cache when given.
  Vec step(const Vec& x, LstmState* state, StepCache* cache = nullptr) const;

  std::vector<Vec> forward(const std::vector<Vec>& xs, Tape* tape = nullptr) const;

  // dh holds dLoss/dh_t per step. Accumulates parameter grads, returns dx per
  // step.
  std::vector<Vec> backward(const Tape& tape, const std::vector<Vec>& dh);

  std::vector<Param*> params();

 private:
  int in_;
  int hid_;
  Param wx_;  // 4H x in
  Param wh_;  // 4H x H
  Param b_;   // 4H x 1
};

}  // namespace translid

#endif  // TRANSLID_LAYERS_HPP
