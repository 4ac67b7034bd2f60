#include "translid/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

StreamVariant parse_variant(const std::string& name) {
  if (name == "encoder-only") return StreamVariant::kEncoderOnly;
  if (name == "prediction-only") return StreamVariant::kPredictionOnly;
  if (name == "joint-z") return StreamVariant::kJointZ;
  if (name == "early-fused") return StreamVariant::kEarlyFused;
  if (name == "late-dual") return StreamVariant::kLateDual;
  throw ConfigError(msg("unknown stream variant \"", name,
                        "\" (expected encoder-only, prediction-only, joint-z, "
                        "early-fused or late-dual)"));
}

std::string variant_name(StreamVariant v) {
  switch (v) {
    case StreamVariant::kEncoderOnly: return "encoder-only";
    case StreamVariant::kPredictionOnly: return "prediction-only";
    case StreamVariant::kJointZ: return "joint-z";
    case StreamVariant::kEarlyFused: return "early-fused";
    case StreamVariant::kLateDual: return "late-dual";
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

Vec stats_pool(const std::vector<Vec>& seq, StatsPoolCache* cache) {
  if (seq.empty()) throw std::invalid_argument("stats_pool: empty sequence");
  const int dim = static_cast<int>(seq[0].size());
  const int count = static_cast<int>(seq.size());
  for (const Vec& v : seq) {
    if (static_cast<int>(v.size()) != dim) {
      throw std::invalid_argument(msg("stats_pool: ragged frame dims ", v.size(),
                                      " vs ", dim));
    }
  }

  Vec pooled(2 * dim);
  Vec column(count);
  for (int j = 0; j < dim; ++j) {
    for (int v = 0; v < count; ++v) column[v] = seq[v][j];
    // Canonical order makes the reduction exactly permutation-invariant.
    std::sort(column.begin(), column.end());
    double sum = 0.0, sum_sq = 0.0;
    for (int v = 0; v < count; ++v) {
      sum += column[v];
      sum_sq += column[v] * column[v];
    }
    const double mean = sum / count;
    const double var = sum_sq / count - mean * mean;
    pooled[j] = mean;
    pooled[dim + j] = std::sqrt(var + 1e-8);
  }
  if (cache != nullptr) {
    cache->mean.assign(pooled.begin(), pooled.begin() + dim);
    cache->stddev.assign(pooled.begin() + dim, pooled.end());
    cache->count = count;
  }
  return pooled;
}

std::vector<Vec> stats_pool_backward(const StatsPoolCache& cache,
                                     const std::vector<Vec>& seq,
                                     const Vec& d_pooled) {
  const int dim = static_cast<int>(cache.mean.size());
  const int count = cache.count;
  std::vector<Vec> dx(count, Vec(dim));
  for (int j = 0; j < dim; ++j) {
    const double d_mean = d_pooled[j];
    const double d_std = d_pooled[dim + j];
    const double mean = cache.mean[j];
    const double inv_count = 1.0 / count;
    const double std_scale = d_std / (count * cache.stddev[j]);
    for (int v = 0; v < count; ++v) {
      dx[v][j] = d_mean * inv_count + std_scale * (seq[v][j] - mean);
    }
  }
  return dx;
}

std::vector<Vec> early_fuse(const DecodeTrace& trace, const std::vector<Vec>& enc,
                            double lambda) {
  if (!trace.pred_states.empty() && !enc.empty() &&
      trace.pred_states[0].size() != enc[0].size()) {
    throw ConfigError(msg("early fusion needs matching stream dims, got encoder ",
                          enc[0].size(), " and prediction ",
                          trace.pred_states[0].size()));
  }
  std::vector<Vec> out;
  out.reserve(trace.pairs.size());
  for (const DecodeTrace::Pair& p : trace.pairs) {
    Vec v = enc[p.t];
    if (lambda != 0.0) axpy(lambda, trace.pred_states[p.u], v);
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

bool any_trainable(const std::vector<Param*>& params) {
  for (const Param* p : params) {
    if (!p->frozen) return true;
  }
  return false;
}

int head_input_dim(StreamVariant variant, const TransducerDims& dims) {
  switch (variant) {
    case StreamVariant::kEncoderOnly: return 2 * dims.enc_dim;
    case StreamVariant::kPredictionOnly: return 2 * dims.pred_dim;
    case StreamVariant::kJointZ: return 2 * dims.joint_dim;
    case StreamVariant::kEarlyFused:
      if (dims.enc_dim != dims.pred_dim) {
        throw ConfigError(msg("early fusion needs matching stream dims, got "
                              "encoder ", dims.enc_dim, " and prediction ",
                              dims.pred_dim));
      }
      return 2 * dims.enc_dim;
    case StreamVariant::kLateDual: return 2 * dims.enc_dim;
  }
  throw std::invalid_argument("head_input_dim: unknown variant");
}

}  // namespace

LidModel::LidModel(const TransducerDims& dims, StreamVariant variant,
                   int num_langs, int head_dim, double lambda, double alpha,
                   int tau, Rng& rng)
    : variant_(variant),
      lambda_(lambda),
      alpha_(alpha),
      tau_(tau),
      trans_(dims, rng),
      head_main_([&] {
        Rng r = rng.substream("head");
        return FcStack("head", head_input_dim(variant, dims), head_dim, r);
      }()),
      out_([&] {
        Rng r = rng.substream("out");
        return LinearLayer("out", head_dim, num_langs, r);
      }()) {
  if (num_langs < 2) throw ConfigError(msg("LidModel: ", num_langs, " languages"));
  if (tau < 1) throw ConfigError(msg("LidModel: tau ", tau, " must be >= 1"));
  if (lambda < 0.0 || alpha < 0.0) {
    throw ConfigError(msg("LidModel: fusion weights must be >= 0, got lambda ",
                          lambda, " alpha ", alpha));
  }
  if (variant == StreamVariant::kLateDual) {
    Rng r = rng.substream("head_pred");
    head_pred_.emplace("head_pred", 2 * dims.pred_dim, head_dim, r);
  }
}

LidModel::Fwd LidModel::forward(const Matrix& frames) const {
  Fwd f;
  f.enc = trans_.encoder.forward(frames, &f.enc_tape);
  if (variant_ != StreamVariant::kEncoderOnly) {
    f.trace = greedy_decode(trans_.prediction, trans_.joint, f.enc, tau_);
    f.pred_states = trans_.prediction.forward(f.trace.tokens, &f.pred_tape);
  }
  switch (variant_) {
    case StreamVariant::kEncoderOnly:
      f.stream = f.enc;
      break;
    case StreamVariant::kPredictionOnly:
      f.stream = f.pred_states;
      break;
    case StreamVariant::kJointZ:
      f.stream = f.trace.z;
      break;
    case StreamVariant::kEarlyFused:
      f.stream = early_fuse(f.trace, f.enc, lambda_);
      break;
    case StreamVariant::kLateDual:
      f.stream = f.enc;
      f.stream_pred = f.pred_states;
      break;
  }

  f.pooled = stats_pool(f.stream, &f.pool);
  f.head = head_main_.forward(f.pooled);
  if (variant_ == StreamVariant::kLateDual) {
    f.pooled_pred = stats_pool(f.stream_pred, &f.pool_pred);
    f.head_pred = head_pred_->forward(f.pooled_pred);
    f.fused = f.head.a2;
    if (alpha_ != 0.0) axpy(alpha_, f.head_pred.a2, f.fused);
    f.embedding = f.fused;
  } else {
    f.fused = f.head.a2;
    f.embedding = f.head.a1;
  }
  f.h2 = activate(Activation::kTanh, f.fused);
  f.logits = out_.forward(f.h2);
  f.log_post = log_softmax(f.logits);
  return f;
}

void LidModel::backward(Fwd& f, const Vec& d_logits, double scale) {
  Vec dl(d_logits.size());
  for (std::size_t i = 0; i < d_logits.size(); ++i) dl[i] = scale * d_logits[i];
  Vec dh2 = out_.backward(f.h2, dl);
  Vec dfused(dh2.size());
  for (std::size_t i = 0; i < dh2.size(); ++i)
    dfused[i] = dh2[i] * (1.0 - f.h2[i] * f.h2[i]);

  std::vector<Vec> d_stream;
  std::vector<Vec> d_stream_pred;
  if (variant_ == StreamVariant::kLateDual) {
    Vec da2_pred(dfused.size());
    for (std::size_t i = 0; i < dfused.size(); ++i)
      da2_pred[i] = alpha_ * dfused[i];
    Vec d_pooled_pred =
        head_pred_->backward(f.head_pred, f.pooled_pred, da2_pred);
    Vec d_pooled = head_main_.backward(f.head, f.pooled, dfused);
    d_stream = stats_pool_backward(f.pool, f.stream, d_pooled);
    d_stream_pred = stats_pool_backward(f.pool_pred, f.stream_pred, d_pooled_pred);
  } else {
    Vec d_pooled = head_main_.backward(f.head, f.pooled, dfused);
    d_stream = stats_pool_backward(f.pool, f.stream, d_pooled);
  }

  const bool enc_live = any_trainable(trans_.encoder.params());
  const bool pred_live = any_trainable(trans_.prediction.params());
  switch (variant_) {
    case StreamVariant::kEncoderOnly:
      if (enc_live) trans_.encoder.backward(f.enc_tape, d_stream);
      break;
    case StreamVariant::kPredictionOnly:
      if (pred_live) trans_.prediction.backward(f.pred_tape, d_stream);
      break;
    case StreamVariant::kJointZ: {
      std::vector<Vec> dh_enc(f.enc.size(), Vec(f.enc[0].size(), 0.0));
      std::vector<Vec> dh_pred(f.pred_states.size(),
                               Vec(f.pred_states[0].size(), 0.0));
      for (int i = 0; i < f.trace.num_pairs(); ++i) {
        const DecodeTrace::Pair& p = f.trace.pairs[i];
        trans_.joint.backward_from_z(f.enc[p.t], f.pred_states[p.u],
                                     f.trace.z[i], d_stream[i], dh_enc[p.t],
                                     dh_pred[p.u]);
      }
      if (enc_live) trans_.encoder.backward(f.enc_tape, dh_enc);
      if (pred_live) trans_.prediction.backward(f.pred_tape, dh_pred);
      break;
    }
    case StreamVariant::kEarlyFused: {
      std::vector<Vec> dh_enc(f.enc.size(), Vec(f.enc[0].size(), 0.0));
      std::vector<Vec> dh_pred(f.pred_states.size(),
                               Vec(f.pred_states[0].size(), 0.0));
      for (int i = 0; i < f.trace.num_pairs(); ++i) {
        const DecodeTrace::Pair& p = f.trace.pairs[i];
        axpy(1.0, d_stream[i], dh_enc[p.t]);
        axpy(lambda_, d_stream[i], dh_pred[p.u]);
      }
      if (enc_live) trans_.encoder.backward(f.enc_tape, dh_enc);
      if (pred_live) trans_.prediction.backward(f.pred_tape, dh_pred);
      break;
    }
    case StreamVariant::kLateDual:
      if (enc_live) trans_.encoder.backward(f.enc_tape, d_stream);
      if (pred_live) trans_.prediction.backward(f.pred_tape, d_stream_pred);
      break;
  }
}

double LidModel::ce_loss(const Matrix& frames, int lang, double grad_scale,
                         bool* correct_out) {
  if (lang < 0 || lang >= num_langs()) {
    throw std::invalid_argument(msg("ce_loss: language id ", lang,
                                    " outside 0..", num_langs() - 1));
  }
  Fwd f = forward(frames);
  const double loss = -f.log_post[lang];
  if (correct_out != nullptr) {
    int best = 0;
    for (int k = 1; k < num_langs(); ++k) {
      if (f.log_post[k] > f.log_post[best]) best = k;
    }
    *correct_out = best == lang;
  }
  if (grad_scale != 0.0) {
    Vec d_logits(num_langs());
    for (int k = 0; k < num_langs(); ++k) {
      d_logits[k] = std::exp(f.log_post[k]) - (k == lang ? 1.0 : 0.0);
    }
    backward(f, d_logits, grad_scale);
  }
  return loss;
}

LanguageEmbedding LidModel::extract(const FeatureSequence& feats) const {
  Fwd f = forward(feats.frames);
  LanguageEmbedding emb;
  emb.utt_id = feats.utt_id;
  emb.label = feats.lang_id;
  emb.values = std::move(f.embedding);
  return emb;
}

void LidModel::apply_freeze(const FreezeMask& mask) {
  if (!mask.train_encoder && !mask.train_prediction && !mask.train_joint &&
      !mask.train_head) {
    throw ConfigError("freeze mask leaves no component trainable");
  }
  freeze_all(trans_.encoder.params(), !mask.train_encoder);
  freeze_all(trans_.prediction.params(), !mask.train_prediction);
  freeze_all(trans_.joint.params(), !mask.train_joint);
  freeze_all(head_params(), !mask.train_head);
}

std::vector<Param*> LidModel::params() {
  std::vector<Param*> out = trans_.params();
  for (Param* p : head_params()) out.push_back(p);
  return out;
}

std::vector<Param*> LidModel::head_params() {
  std::vector<Param*> out;
  for (Param* p : head_main_.params()) out.push_back(p);
  if (head_pred_) {
    for (Param* p : head_pred_->params()) out.push_back(p);
  }
  for (Param* p : out_.params()) out.push_back(p);
  return out;
}

}  // namespace translid
