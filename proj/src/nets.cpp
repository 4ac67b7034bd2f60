#include "translid/nets.hpp"

#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

Encoder::Encoder(int feat_dim, int hidden_dim, int num_layers, int out_dim,
                 int subsample, Rng& rng)
    : feat_dim_(feat_dim),
      subsample_(subsample),
      proj_([&] {
        Rng r = rng.substream("enc.proj");
        return LinearLayer("enc.proj", hidden_dim, out_dim, r);
      }()) {
  if (subsample < 1) {
    throw std::invalid_argument(msg("Encoder: subsample factor ", subsample));
  }
  if (num_layers < 1) {
    throw std::invalid_argument(msg("Encoder: num_layers ", num_layers));
  }
  for (int l = 0; l < num_layers; ++l) {
    Rng r = rng.substream(msg("enc.lstm", l));
    const int in = l == 0 ? feat_dim : hidden_dim;
    layers_.emplace_back(msg("enc.lstm", l), in, hidden_dim, r);
  }
}

std::vector<Vec> Encoder::forward(const Matrix& frames, Tape* tape) const {
  const int t_in = frames.rows();
  if (t_in < 1) {
    throw std::invalid_argument("Encoder: empty feature sequence");
  }
  if (frames.cols() != feat_dim_) {
    throw std::invalid_argument(msg("Encoder: feature dim ", frames.cols(),
                                    " vs expected ", feat_dim_));
  }
  const int t_out = (t_in + subsample_ - 1) / subsample_;
  std::vector<Vec> pooled(t_out, Vec(feat_dim_, 0.0));
  for (int g = 0; g < t_out; ++g) {
    const int begin = g * subsample_;
    const int end = std::min(t_in, begin + subsample_);
    for (int t = begin; t < end; ++t) {
      const double* row = frames.row(t);
      for (int d = 0; d < feat_dim_; ++d) pooled[g][d] += row[d];
    }
    const double inv = 1.0 / (end - begin);
    for (int d = 0; d < feat_dim_; ++d) pooled[g][d] *= inv;
  }

  if (tape != nullptr) {
    tape->pooled = pooled;
    tape->lstm.assign(layers_.size(), LstmLayer::Tape{});
  }
  std::vector<Vec> seq = std::move(pooled);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    seq = layers_[l].forward(seq, tape != nullptr ? &tape->lstm[l] : nullptr);
  }
  if (tape != nullptr) tape->proj_in = seq;

  std::vector<Vec> out;
  out.reserve(seq.size());
  for (const Vec& h : seq) out.push_back(proj_.forward(h));
  return out;
}

void Encoder::backward(const Tape& tape, const std::vector<Vec>& d_out) {
  std::vector<Vec> d_seq(d_out.size());
  for (std::size_t t = 0; t < d_out.size(); ++t) {
    d_seq[t] = proj_.backward(tape.proj_in[t], d_out[t]);
  }
  for (std::size_t l = layers_.size(); l-- > 0;) {
    d_seq = layers_[l].backward(tape.lstm[l], d_seq);
  }
}

std::vector<Param*> Encoder::params() {
  std::vector<Param*> out;
  for (LstmLayer& l : layers_) {
    for (Param* p : l.params()) out.push_back(p);
  }
  for (Param* p : proj_.params()) out.push_back(p);
  return out;
}

PredictionNet::PredictionNet(int vocab_tokens, int embed_dim, int hidden_dim,
                             int out_dim, Rng& rng)
    : vocab_tokens_(vocab_tokens),
      embed_("pred.embed", vocab_tokens, embed_dim),
      lstm_([&] {
        Rng r = rng.substream("pred.lstm");
        return LstmLayer("pred.lstm", embed_dim, hidden_dim, r);
      }()),
      proj_([&] {
        Rng r = rng.substream("pred.proj");
        return LinearLayer("pred.proj", hidden_dim, out_dim, r);
      }()),
      sos_("pred.sos", out_dim, 1) {
  if (vocab_tokens < 1) {
    throw std::invalid_argument(msg("PredictionNet: vocab ", vocab_tokens));
  }
  Rng r_embed = rng.substream("pred.embed");
  xavier_init(embed_, r_embed);
  Rng r_sos = rng.substream("pred.sos");
  xavier_init(sos_, r_sos);
}

void PredictionNet::check_token(int token) const {
  if (token < 1 || token > vocab_tokens_) {
    throw std::invalid_argument(msg("PredictionNet: token id ", token,
                                    " outside 1..", vocab_tokens_,
                                    " (0 is the blank symbol)"));
  }
}

Vec PredictionNet::sos_output() const {
  Vec out(proj_.out_dim());
  for (int i = 0; i < proj_.out_dim(); ++i) out[i] = sos_.value(i, 0);
  return out;
}

std::vector<Vec> PredictionNet::forward(const std::vector<int>& tokens,
                                        Tape* tape) const {
  std::vector<Vec> embeds;
  embeds.reserve(tokens.size());
  for (int tok : tokens) {
    check_token(tok);
    const double* row = embed_.value.row(tok - 1);
    embeds.emplace_back(row, row + embed_.value.cols());
  }

  std::vector<Vec> out;
  out.reserve(tokens.size() + 1);
  out.push_back(sos_output());
  std::vector<Vec> hidden =
      lstm_.forward(embeds, tape != nullptr ? &tape->lstm : nullptr);
  for (const Vec& h : hidden) out.push_back(proj_.forward(h));

  if (tape != nullptr) {
    tape->tokens = tokens;
    tape->embeds = std::move(embeds);
  }
  return out;
}

void PredictionNet::backward(const Tape& tape, const std::vector<Vec>& d_out) {
  if (d_out.size() != tape.tokens.size() + 1) {
    throw std::invalid_argument(msg("PredictionNet::backward: ", d_out.size(),
                                    " grads for ", tape.tokens.size(), " tokens"));
  }
  if (!sos_.frozen) {
    for (int i = 0; i < sos_.value.rows(); ++i) sos_.grad(i, 0) += d_out[0][i];
  }
  const std::size_t u_len = tape.tokens.size();
  if (u_len == 0) return;

  std::vector<Vec> dh(u_len);
  for (std::size_t u = 0; u < u_len; ++u) {
    dh[u] = proj_.backward(tape.lstm.steps[u].h, d_out[u + 1]);
  }
  std::vector<Vec> d_embed = lstm_.backward(tape.lstm, dh);
  if (!embed_.frozen) {
    for (std::size_t u = 0; u < u_len; ++u) {
      double* row = embed_.grad.row(tape.tokens[u] - 1);
      for (int d = 0; d < embed_.grad.cols(); ++d) row[d] += d_embed[u][d];
    }
  }
}

Vec PredictionNet::consume(int token, DecodeState* state) const {
  check_token(token);
  const double* row = embed_.value.row(token - 1);
  Vec x(row, row + embed_.value.cols());
  Vec h = lstm_.step(x, &state->lstm);
  return proj_.forward(h);
}

std::vector<Param*> PredictionNet::params() {
  std::vector<Param*> out{&embed_};
  for (Param* p : lstm_.params()) out.push_back(p);
  for (Param* p : proj_.params()) out.push_back(p);
  out.push_back(&sos_);
  return out;
}

FcStack::FcStack(const std::string& name, int in_dim, int hidden_dim, Rng& rng)
    : fc1_([&] {
        Rng r = rng.substream(name + ".fc1");
        return LinearLayer(name + ".fc1", in_dim, hidden_dim, r);
      }()),
      fc2_([&] {
        Rng r = rng.substream(name + ".fc2");
        return LinearLayer(name + ".fc2", hidden_dim, hidden_dim, r);
      }()) {}

FcStack::Fwd FcStack::forward(const Vec& x) const {
  Fwd fwd;
  fwd.a1 = fc1_.forward(x);
  fwd.h1 = activate(Activation::kTanh, fwd.a1);
  fwd.a2 = fc2_.forward(fwd.h1);
  return fwd;
}

Vec FcStack::backward(const Fwd& fwd, const Vec& x, const Vec& da2) {
  Vec dh1 = fc2_.backward(fwd.h1, da2);
  Vec da1(dh1.size());
  for (std::size_t i = 0; i < dh1.size(); ++i) {
    da1[i] = dh1[i] * (1.0 - fwd.h1[i] * fwd.h1[i]);
  }
  return fc1_.backward(x, da1);
}

std::vector<Param*> FcStack::params() {
  std::vector<Param*> out;
  for (Param* p : fc1_.params()) out.push_back(p);
  for (Param* p : fc2_.params()) out.push_back(p);
  return out;
}

}  // namespace translid
