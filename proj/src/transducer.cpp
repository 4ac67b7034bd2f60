#include "translid/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

namespace {

void check_labels(const std::vector<int>& labels, int u_len, int vocab_tokens) {
  if (static_cast<int>(labels.size()) != u_len) {
    throw std::invalid_argument(msg("transducer: ", labels.size(),
                                    " labels for a lattice with U = ", u_len));
  }
  for (int y : labels) {
    if (y == kBlankId) {
      throw std::invalid_argument("transducer: label sequence contains the blank id");
    }
    if (y < 1 || y > vocab_tokens) {
      throw std::invalid_argument(msg("transducer: label id ", y,
                                      " outside 1..", vocab_tokens));
    }
  }
}

int argmax_lowest(const Vec& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

JointNet::JointNet(int enc_dim, int pred_dim, int joint_dim, int vocab_tokens,
                   Rng& rng)
    : q_("joint.q", joint_dim, enc_dim),
      v_("joint.v", joint_dim, pred_dim),
      bz_("joint.bz", joint_dim, 1),
      wy_("joint.wy", vocab_tokens + 1, joint_dim),
      by_("joint.by", vocab_tokens + 1, 1) {
  if (vocab_tokens < 1) {
    throw std::invalid_argument(msg("JointNet: vocab ", vocab_tokens));
  }
  Rng rq = rng.substream("joint.q");
  Rng rv = rng.substream("joint.v");
  Rng rw = rng.substream("joint.wy");
  xavier_init(q_, rq);
  xavier_init(v_, rv);
  xavier_init(wy_, rw);
}

JointNet::Fwd JointNet::forward(const Vec& h_enc, const Vec& h_pred) const {
  if (static_cast<int>(h_enc.size()) != enc_dim() ||
      static_cast<int>(h_pred.size()) != pred_dim()) {
    throw std::invalid_argument(msg("JointNet: input dims (", h_enc.size(), ", ",
                                    h_pred.size(), ") vs (", enc_dim(), ", ",
                                    pred_dim(), ")"));
  }
  Fwd fwd;
  fwd.z.assign(joint_dim(), 0.0);
  for (int j = 0; j < joint_dim(); ++j) fwd.z[j] = bz_.value(j, 0);
  matvec_acc(q_.value, h_enc, fwd.z);
  matvec_acc(v_.value, h_pred, fwd.z);
  for (double& v : fwd.z) v = std::tanh(v);
  fwd.logits.assign(num_classes(), 0.0);
  for (int k = 0; k < num_classes(); ++k) fwd.logits[k] = by_.value(k, 0);
  matvec_acc(wy_.value, fwd.z, fwd.logits);
  fwd.logp = log_softmax(fwd.logits);
  return fwd;
}

void JointNet::backward_from_z(const Vec& h_enc, const Vec& h_pred, const Vec& z,
                               const Vec& dz, Vec& dh_enc, Vec& dh_pred) {
  Vec dz_pre(joint_dim());
  for (int j = 0; j < joint_dim(); ++j) dz_pre[j] = dz[j] * (1.0 - z[j] * z[j]);
  if (!q_.frozen) outer_acc(q_.grad, dz_pre, h_enc);
  if (!v_.frozen) outer_acc(v_.grad, dz_pre, h_pred);
  if (!bz_.frozen) {
    for (int j = 0; j < joint_dim(); ++j) bz_.grad(j, 0) += dz_pre[j];
  }
  matvec_t_acc(q_.value, dz_pre, dh_enc);
  matvec_t_acc(v_.value, dz_pre, dh_pred);
}

std::vector<Param*> JointNet::params() { return {&q_, &v_, &bz_, &wy_, &by_}; }

Lattice joint_lattice(const JointNet& jn, const std::vector<Vec>& enc,
                      const std::vector<Vec>& pred, Matrix* z_cache) {
  const int t_len = static_cast<int>(enc.size());
  const int u_states = static_cast<int>(pred.size());
  if (t_len < 1) throw std::invalid_argument("joint_lattice: empty encoder sequence");
  if (u_states < 1) {
    throw std::invalid_argument("joint_lattice: empty prediction sequence");
  }
  const int jdim = jn.joint_dim();
  const int classes = jn.num_classes();

  // Per-step projections so each cell costs only an add, tanh and the output
  // affinity.
  std::vector<Vec> qe(t_len);
  for (int t = 0; t < t_len; ++t) qe[t] = matvec(jn.q().value, enc[t]);
  std::vector<Vec> vp(u_states);
  for (int u = 0; u < u_states; ++u) {
    vp[u] = matvec(jn.v().value, pred[u]);
    for (int i = 0; i < jdim; ++i) vp[u][i] += jn.bz().value(i, 0);
  }

  Lattice lat(t_len, u_states - 1, classes);
  if (z_cache != nullptr) {
    *z_cache = Matrix(t_len * u_states, jdim);
  }
  Vec z(jdim);
  Vec logits(classes);
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u < u_states; ++u) {
      for (int i = 0; i < jdim; ++i) z[i] = std::tanh(qe[t][i] + vp[u][i]);
      if (z_cache != nullptr) {
        double* row = z_cache->row(t * u_states + u);
        std::copy(z.begin(), z.end(), row);
      }
      for (int k = 0; k < classes; ++k) logits[k] = jn.by().value(k, 0);
      matvec_acc(jn.wy().value, z, logits);
      Vec lp = log_softmax(logits);
      double* cell = &lat.at(t, u, 0);
      std::copy(lp.begin(), lp.end(), cell);
    }
  }
  return lat;
}

namespace {

// Forward scores: alpha[t][u] = log-prob of consuming the first t encoder
// steps and first u labels. alpha(0,0) = 0.
std::vector<double> forward_scores(const Lattice& lat,
                                   const std::vector<int>& labels) {
  const int t_len = lat.t_len;
  const int u_states = lat.u_len + 1;
  std::vector<double> alpha(static_cast<std::size_t>(t_len) * u_states, kNegInf);
  alpha[0] = 0.0;
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u < u_states; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) {
        a = alpha[(t - 1) * u_states + u] + lat.at(t - 1, u, kBlankId);
      }
      if (u > 0) {
        a = logsumexp2(a, alpha[t * u_states + (u - 1)] +
                              lat.at(t, u - 1, labels[u - 1]));
      }
      alpha[t * u_states + u] = a;
    }
  }
  return alpha;
}

// Completion scores: beta[t][u] = log-prob of finishing from (t, u), final
// blank included.
std::vector<double> backward_scores(const Lattice& lat,
                                    const std::vector<int>& labels) {
  const int t_len = lat.t_len;
  const int u_states = lat.u_len + 1;
  std::vector<double> beta(static_cast<std::size_t>(t_len) * u_states, kNegInf);
  beta[(t_len - 1) * u_states + lat.u_len] = lat.at(t_len - 1, lat.u_len, kBlankId);
  for (int t = t_len - 1; t >= 0; --t) {
    for (int u = lat.u_len; u >= 0; --u) {
      if (t == t_len - 1 && u == lat.u_len) continue;
      double b = kNegInf;
      if (t + 1 < t_len) {
        b = lat.at(t, u, kBlankId) + beta[(t + 1) * u_states + u];
      }
      if (u < lat.u_len) {
        b = logsumexp2(b, lat.at(t, u, labels[u]) + beta[t * u_states + (u + 1)]);
      }
      beta[t * u_states + u] = b;
    }
  }
  return beta;
}

}  // namespace

double rnnt_log_prob(const Lattice& lat, const std::vector<int>& labels) {
  check_labels(labels, lat.u_len, lat.num_classes - 1);
  std::vector<double> alpha = forward_scores(lat, labels);
  const int u_states = lat.u_len + 1;
  return alpha[(lat.t_len - 1) * u_states + lat.u_len] +
         lat.at(lat.t_len - 1, lat.u_len, kBlankId);
}

namespace {

void enumerate_from(const Lattice& lat, const std::vector<int>& labels, int t,
                    int u, double acc, std::vector<double>& path_logps) {
  if (t == lat.t_len - 1 && u == lat.u_len) {
    path_logps.push_back(acc + lat.at(t, u, kBlankId));
    return;
  }
  if (t + 1 < lat.t_len) {
    enumerate_from(lat, labels, t + 1, u, acc + lat.at(t, u, kBlankId),
                   path_logps);
  }
  if (u < lat.u_len) {
    enumerate_from(lat, labels, t, u + 1, acc + lat.at(t, u, labels[u]),
                   path_logps);
  }
}

}  // namespace

double enumerate_paths_log_prob(const Lattice& lat,
                                const std::vector<int>& labels,
                                std::uint64_t* path_count) {
  check_labels(labels, lat.u_len, lat.num_classes - 1);
  const long cells = static_cast<long>(lat.t_len) * (lat.u_len + 1);
  if (cells > 20) {
    throw std::invalid_argument(msg("enumerate_paths: ", cells,
                                    " lattice cells exceed the limit of 20"));
  }
  std::vector<double> path_logps;
  enumerate_from(lat, labels, 0, 0, 0.0, path_logps);
  if (path_count != nullptr) *path_count = path_logps.size();
  return logsumexp(path_logps);
}

std::vector<double> rnnt_lattice_grad(const Lattice& lat,
                                      const std::vector<int>& labels,
                                      double* log_prob_out) {
  check_labels(labels, lat.u_len, lat.num_classes - 1);
  const int t_len = lat.t_len;
  const int u_states = lat.u_len + 1;
  const int classes = lat.num_classes;
  std::vector<double> alpha = forward_scores(lat, labels);
  std::vector<double> beta = backward_scores(lat, labels);
  const double log_p =
      alpha[(t_len - 1) * u_states + lat.u_len] + lat.at(t_len - 1, lat.u_len, kBlankId);
  if (!std::isfinite(log_p)) {
    throw NumericError(msg("transducer: non-finite sequence log-prob ", log_p));
  }
  if (log_prob_out != nullptr) *log_prob_out = log_p;

  std::vector<double> d_logits(lat.logp.size(), 0.0);
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u < u_states; ++u) {
      const double a = alpha[t * u_states + u];
      if (a == kNegInf) continue;

      // d log P / d logp for the two transitions leaving this cell.
      double d_blank = 0.0;
      if (t + 1 < t_len) {
        const double b = beta[(t + 1) * u_states + u];
        if (b != kNegInf) {
          d_blank = std::exp(a + lat.at(t, u, kBlankId) + b - log_p);
        }
      } else if (u == lat.u_len) {
        d_blank = std::exp(a + lat.at(t, u, kBlankId) - log_p);
      }
      double d_emit = 0.0;
      if (u < lat.u_len) {
        const double b = beta[t * u_states + (u + 1)];
        if (b != kNegInf) {
          d_emit = std::exp(a + lat.at(t, u, labels[u]) + b - log_p);
        }
      }
      if (d_blank == 0.0 && d_emit == 0.0) continue;

      // Loss is -log P; fold the softmax Jacobian row into the logits.
      const double d_lp_blank = -d_blank;
      const double d_lp_emit = -d_emit;
      const double sum_dlp = d_lp_blank + d_lp_emit;
      double* cell = &d_logits[lat.cell(t, u) * classes];
      const double* lp = &lat.logp[lat.cell(t, u) * classes];
      for (int k = 0; k < classes; ++k) cell[k] = -std::exp(lp[k]) * sum_dlp;
      cell[kBlankId] += d_lp_blank;
      if (u < lat.u_len) cell[labels[u]] += d_lp_emit;
    }
  }
  return d_logits;
}

void joint_lattice_backward(JointNet& jn, const std::vector<Vec>& enc,
                            const std::vector<Vec>& pred, const Matrix& z_cache,
                            const std::vector<double>& d_logits, double scale,
                            std::vector<Vec>& dh_enc, std::vector<Vec>& dh_pred) {
  const int t_len = static_cast<int>(enc.size());
  const int u_states = static_cast<int>(pred.size());
  const int jdim = jn.joint_dim();
  const int classes = jn.num_classes();

  // Batched accumulation: per-cell work touches only W_y/b_y; the Q, V, b_z
  // and input gradients reduce over per-t and per-u sums of dz_pre.
  std::vector<Vec> s_t(t_len, Vec(jdim, 0.0));
  std::vector<Vec> r_u(u_states, Vec(jdim, 0.0));
  Vec dlog(classes);
  Vec dz(jdim);
  const bool train_wy = !jn.wy().frozen;
  const bool train_by = !jn.by().frozen;
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u < u_states; ++u) {
      const std::size_t cell = static_cast<std::size_t>(t) * u_states + u;
      const double* src = &d_logits[cell * classes];
      bool live = false;
      for (int k = 0; k < classes; ++k) {
        dlog[k] = scale * src[k];
        if (dlog[k] != 0.0) live = true;
      }
      if (!live) continue;
      const double* z = z_cache.row(static_cast<int>(cell));

      std::fill(dz.begin(), dz.end(), 0.0);
      for (int k = 0; k < classes; ++k) {
        const double d = dlog[k];
        if (d == 0.0) continue;
        const double* wrow = jn.wy().value.row(k);
        for (int j = 0; j < jdim; ++j) dz[j] += d * wrow[j];
        if (train_wy) {
          double* grow = jn.wy().grad.row(k);
          for (int j = 0; j < jdim; ++j) grow[j] += d * z[j];
        }
        if (train_by) jn.by().grad(k, 0) += d;
      }
      Vec& st = s_t[t];
      Vec& ru = r_u[u];
      for (int j = 0; j < jdim; ++j) {
        const double dpre = dz[j] * (1.0 - z[j] * z[j]);
        st[j] += dpre;
        ru[j] += dpre;
      }
    }
  }

  for (int t = 0; t < t_len; ++t) {
    if (!jn.q().frozen) outer_acc(jn.q().grad, s_t[t], enc[t]);
    matvec_t_acc(jn.q().value, s_t[t], dh_enc[t]);
    if (!jn.bz().frozen) {
      for (int j = 0; j < jdim; ++j) jn.bz().grad(j, 0) += s_t[t][j];
    }
  }
  for (int u = 0; u < u_states; ++u) {
    if (!jn.v().frozen) outer_acc(jn.v().grad, r_u[u], pred[u]);
    matvec_t_acc(jn.v().value, r_u[u], dh_pred[u]);
  }
}

TransducerModel::TransducerModel(const TransducerDims& dims, Rng& rng)
    : encoder([&] {
        Rng r = rng.substream("encoder");
        return Encoder(dims.feat_dim, dims.enc_hidden, dims.enc_layers,
                       dims.enc_dim, dims.subsample, r);
      }()),
      prediction([&] {
        Rng r = rng.substream("prediction");
        return PredictionNet(dims.vocab_tokens, dims.embed_dim, dims.pred_hidden,
                             dims.pred_dim, r);
      }()),
      joint([&] {
        Rng r = rng.substream("joint");
        return JointNet(dims.enc_dim, dims.pred_dim, dims.joint_dim,
                        dims.vocab_tokens, r);
      }()) {}

std::vector<Param*> TransducerModel::params() {
  std::vector<Param*> out;
  for (Param* p : encoder.params()) out.push_back(p);
  for (Param* p : prediction.params()) out.push_back(p);
  for (Param* p : joint.params()) out.push_back(p);
  return out;
}

double rnnt_loss(TransducerModel& m, const Matrix& frames,
                 const std::vector<int>& labels, double grad_scale) {
  const bool with_grad = grad_scale != 0.0;
  Encoder::Tape enc_tape;
  std::vector<Vec> enc =
      m.encoder.forward(frames, with_grad ? &enc_tape : nullptr);
  PredictionNet::Tape pred_tape;
  std::vector<Vec> pred =
      m.prediction.forward(labels, with_grad ? &pred_tape : nullptr);

  Matrix z_cache;
  Lattice lat = joint_lattice(m.joint, enc, pred, with_grad ? &z_cache : nullptr);
  if (!with_grad) {
    return -rnnt_log_prob(lat, labels);
  }

  double log_p = 0.0;
  std::vector<double> d_logits = rnnt_lattice_grad(lat, labels, &log_p);
  std::vector<Vec> dh_enc(enc.size(), Vec(m.joint.enc_dim(), 0.0));
  std::vector<Vec> dh_pred(pred.size(), Vec(m.joint.pred_dim(), 0.0));
  joint_lattice_backward(m.joint, enc, pred, z_cache, d_logits, grad_scale,
                         dh_enc, dh_pred);
  m.encoder.backward(enc_tape, dh_enc);
  m.prediction.backward(pred_tape, dh_pred);
  return -log_p;
}

DecodeTrace greedy_decode(const PredictionNet& pn, const JointNet& jn,
                          const std::vector<Vec>& enc, int tau) {
  if (tau < 1) {
    throw std::invalid_argument(msg("greedy_decode: tau ", tau, " must be >= 1"));
  }
  const int t_len = static_cast<int>(enc.size());
  if (t_len < 1) {
    throw std::invalid_argument("greedy_decode: empty encoder sequence");
  }

  DecodeTrace trace;
  trace.per_frame_emits.assign(t_len, 0);
  PredictionNet::DecodeState state = pn.decode_state();
  Vec cur_pred = pn.sos_output();
  trace.pred_states.push_back(cur_pred);

  for (int t = 0; t < t_len; ++t) {
    int emits = 0;
    while (true) {
      const int u = static_cast<int>(trace.tokens.size());
      trace.pairs.push_back(DecodeTrace::Pair{t, u});
      JointNet::Fwd fwd = jn.forward(enc[t], cur_pred);
      trace.z.push_back(std::move(fwd.z));
      const int k = argmax_lowest(fwd.logp);
      if (k == kBlankId) break;
      trace.tokens.push_back(k);
      cur_pred = pn.consume(k, &state);
      trace.pred_states.push_back(cur_pred);
      if (++emits == tau) break;
    }
    trace.per_frame_emits[t] = emits;
  }
  return trace;
}

}  // namespace translid
