#include "translid/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

LinearLayer::LinearLayer(const std::string& name, int in_dim, int out_dim, Rng& rng)
    : w_(name + ".w", out_dim, in_dim), b_(name + ".b", out_dim, 1) {
  xavier_init(w_, rng);
}

Vec LinearLayer::forward(const Vec& x) const {
  if (x.size() != static_cast<std::size_t>(in_dim())) {
    throw std::invalid_argument(msg(w_.name, ": input size ", x.size(),
                                    " vs expected ", in_dim()));
  }
  Vec y(out_dim());
  for (int i = 0; i < out_dim(); ++i) y[i] = b_.value(i, 0);
  matvec_acc(w_.value, x, y);
  return y;
}

Vec LinearLayer::backward(const Vec& x, const Vec& dy) {
  if (!w_.frozen) outer_acc(w_.grad, dy, x);
  if (!b_.frozen) {
    for (int i = 0; i < out_dim(); ++i) b_.grad(i, 0) += dy[i];
  }
  Vec dx(in_dim(), 0.0);
  matvec_t_acc(w_.value, dy, dx);
  return dx;
}

std::vector<Param*> LinearLayer::params() { return {&w_, &b_}; }

LstmLayer::LstmLayer(const std::string& name, int input_dim, int hidden_dim, Rng& rng)
    : in_(input_dim),
      hid_(hidden_dim),
      wx_(name + ".wx", 4 * hidden_dim, input_dim),
      wh_(name + ".wh", 4 * hidden_dim, hidden_dim),
      b_(name + ".b", 4 * hidden_dim, 1) {
  xavier_init(wx_, rng);
  xavier_init(wh_, rng);
}

LstmState LstmLayer::zero_state() const {
  return LstmState{Vec(hid_, 0.0), Vec(hid_, 0.0)};
}

Vec LstmLayer::step(const Vec& x, LstmState* state, StepCache* cache) const {
  if (x.size() != static_cast<std::size_t>(in_)) {
    throw std::invalid_argument(msg(wx_.name, ": input size ", x.size(),
                                    " vs expected ", in_));
  }
  Vec gates(4 * hid_);
  for (int i = 0; i < 4 * hid_; ++i) gates[i] = b_.value(i, 0);
  matvec_acc(wx_.value, x, gates);
  matvec_acc(wh_.value, state->h, gates);

  Vec i_gate(hid_), f_gate(hid_), g_gate(hid_), o_gate(hid_);
  for (int j = 0; j < hid_; ++j) {
    i_gate[j] = activate_scalar(Activation::kSigmoid, gates[j]);
    f_gate[j] = activate_scalar(Activation::kSigmoid, gates[hid_ + j]);
    g_gate[j] = activate_scalar(Activation::kTanh, gates[2 * hid_ + j]);
    o_gate[j] = activate_scalar(Activation::kSigmoid, gates[3 * hid_ + j]);
  }

  Vec c_new(hid_), tanh_c(hid_), h_new(hid_);
  for (int j = 0; j < hid_; ++j) {
    c_new[j] = f_gate[j] * state->c[j] + i_gate[j] * g_gate[j];
    tanh_c[j] = std::tanh(c_new[j]);
    h_new[j] = o_gate[j] * tanh_c[j];
  }

  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = state->h;
    cache->c_prev = state->c;
    cache->i = i_gate;
    cache->f = f_gate;
    cache->g = g_gate;
    cache->o = o_gate;
    cache->c = c_new;
    cache->tanh_c = tanh_c;
    cache->h = h_new;
  }
  state->c = std::move(c_new);
  state->h = h_new;
  return h_new;
}

std::vector<Vec> LstmLayer::forward(const std::vector<Vec>& xs, Tape* tape) const {
  LstmState state = zero_state();
  std::vector<Vec> ys;
  ys.reserve(xs.size());
  if (tape != nullptr) tape->steps.resize(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    StepCache* cache = tape != nullptr ? &tape->steps[t] : nullptr;
    ys.push_back(step(xs[t], &state, cache));
  }
  return ys;
}

std::vector<Vec> LstmLayer::backward(const Tape& tape, const std::vector<Vec>& dh) {
  const std::size_t n = tape.steps.size();
  if (dh.size() != n) {
    throw std::invalid_argument(msg("LstmLayer::backward: ", dh.size(),
                                    " output grads for ", n, " steps"));
  }
  std::vector<Vec> dx(n);
  Vec dh_rec(hid_, 0.0);
  Vec dc_rec(hid_, 0.0);
  const bool train_wx = !wx_.frozen;
  const bool train_wh = !wh_.frozen;
  const bool train_b = !b_.frozen;

  Vec da(4 * hid_);
  for (std::size_t s = n; s-- > 0;) {
    const StepCache& st = tape.steps[s];
    Vec dh_total = dh[s];
    axpy(1.0, dh_rec, dh_total);

    for (int j = 0; j < hid_; ++j) {
      const double dh_j = dh_total[j];
      const double do_j = dh_j * st.tanh_c[j];
      double dc_j = dc_rec[j] + dh_j * st.o[j] * (1.0 - st.tanh_c[j] * st.tanh_c[j]);
      const double di_j = dc_j * st.g[j];
      const double dg_j = dc_j * st.i[j];
      const double df_j = dc_j * st.c_prev[j];
      dc_rec[j] = dc_j * st.f[j];
      da[j] = di_j * st.i[j] * (1.0 - st.i[j]);
      da[hid_ + j] = df_j * st.f[j] * (1.0 - st.f[j]);
      da[2 * hid_ + j] = dg_j * (1.0 - st.g[j] * st.g[j]);
      da[3 * hid_ + j] = do_j * st.o[j] * (1.0 - st.o[j]);
    }

    if (train_wx) outer_acc(wx_.grad, da, st.x);
    if (train_wh) outer_acc(wh_.grad, da, st.h_prev);
    if (train_b) {
      for (int i = 0; i < 4 * hid_; ++i) b_.grad(i, 0) += da[i];
    }

    dx[s].assign(in_, 0.0);
    matvec_t_acc(wx_.value, da, dx[s]);
    dh_rec.assign(hid_, 0.0);
    matvec_t_acc(wh_.value, da, dh_rec);
  }
  return dx;
}

std::vector<Param*> LstmLayer::params() { return {&wx_, &wh_, &b_}; }

}  // namespace translid
