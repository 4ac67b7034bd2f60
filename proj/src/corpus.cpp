#include "translid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

namespace {

// Normalized exp over raw logits.
Vec softmax_row(const Vec& logits) {
  Vec out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

int sample_categorical(const Vec& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < static_cast<int>(probs.size()); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return static_cast<int>(probs.size()) - 1;  // guard against rounding
}

Vec column_means(const Matrix& frames) {
  Vec mean(frames.cols(), 0.0);
  for (int t = 0; t < frames.rows(); ++t)
    for (int j = 0; j < frames.cols(); ++j) mean[j] += frames(t, j);
  for (double& v : mean) v /= frames.rows();
  return mean;
}

}  // namespace

std::vector<LanguageSpec> gen_language_specs(int n_langs, int num_tokens,
                                             int feat_dim, double divergence,
                                             Rng& rng,
                                             const LanguageSpecOptions& opt) {
  if (n_langs < 2)
    throw std::invalid_argument(msg("need >= 2 languages, got ", n_langs));
  if (num_tokens < 4)
    throw std::invalid_argument(msg("need >= 4 tokens, got ", num_tokens));
  if (feat_dim < 1)
    throw std::invalid_argument(msg("feature dim must be >= 1, got ", feat_dim));
  if (opt.dur_min < 1 || opt.dur_max < opt.dur_min)
    throw std::invalid_argument(msg("bad duration range [", opt.dur_min, ", ",
                                    opt.dur_max, "]"));
  if (divergence < 0.0)
    throw std::invalid_argument("divergence must be non-negative");

  // One shared emission table.
  Rng emit_rng = rng.substream("corpus.emissions");
  std::vector<TokenEmission> table(num_tokens);
  for (TokenEmission& e : table) {
    e.mean.resize(feat_dim);
    e.std.resize(feat_dim);
    for (int j = 0; j < feat_dim; ++j) {
      e.mean[j] = opt.mean_scale * emit_rng.gaussian();
      e.std[j] = emit_rng.uniform(opt.std_min, opt.std_max);
    }
  }

  // Shared base logits for transitions and the initial distribution.
  Rng base_rng = rng.substream("corpus.base");
  Matrix base_trans(num_tokens, num_tokens);
  for (std::size_t k = 0; k < base_trans.size(); ++k)
    base_trans.data()[k] = base_rng.gaussian();
  Vec base_init(num_tokens);
  for (double& v : base_init) v = base_rng.gaussian();

  std::vector<LanguageSpec> specs;
  for (int lang = 0; lang < n_langs; ++lang) {
    Rng lang_rng = rng.substream(msg("corpus.lang", lang));
    LanguageSpec spec;
    spec.lang_id = lang;
    spec.dur_min = opt.dur_min;
    spec.dur_max = opt.dur_max;
    spec.transition = Matrix(num_tokens, num_tokens);
    Vec logits(num_tokens);
    for (int r = 0; r < num_tokens; ++r) {
      for (int c = 0; c < num_tokens; ++c)
        logits[c] = base_trans(r, c) + divergence * lang_rng.gaussian();
      Vec row = softmax_row(logits);
      for (int c = 0; c < num_tokens; ++c) spec.transition(r, c) = row[c];
    }
    for (int c = 0; c < num_tokens; ++c)
      logits[c] = base_init[c] + divergence * lang_rng.gaussian();
    spec.initial = softmax_row(logits);
    spec.emissions = table;
    if (opt.emission_divergence > 0.0) {
      for (TokenEmission& e : spec.emissions)
        for (int j = 0; j < feat_dim; ++j)
          e.mean[j] += opt.emission_divergence * lang_rng.gaussian();
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

FeatureSequence synth_utterance(const LanguageSpec& spec, int target_frames,
                                Rng& rng) {
  const int num_tokens = static_cast<int>(spec.emissions.size());
  if (num_tokens == 0) throw std::invalid_argument("spec has no emission table");
  if (target_frames < spec.dur_max)
    throw std::invalid_argument(msg("target frames ", target_frames,
                                    " below the max token duration ",
                                    spec.dur_max));

  std::vector<int> tokens;
  std::vector<int> durations;
  int total = 0;
  int current = -1;
  while (total < target_frames) {
    if (current < 0) {
      current = sample_categorical(spec.initial, rng);
    } else {
      Vec row(num_tokens);
      for (int c = 0; c < num_tokens; ++c) row[c] = spec.transition(current, c);
      current = sample_categorical(row, rng);
    }
    const int dur =
        spec.dur_min + rng.uniform_int(spec.dur_max - spec.dur_min + 1);
    tokens.push_back(current + 1);  // token ids are 1-based; 0 is blank
    durations.push_back(dur);
    total += dur;
  }

  FeatureSequence feats;
  feats.lang_id = spec.lang_id;
  feats.frames = Matrix(target_frames, static_cast<int>(spec.emissions[0].mean.size()));
  int t = 0;
  for (std::size_t i = 0; i < tokens.size() && t < target_frames; ++i) {
    const TokenEmission& e = spec.emissions[tokens[i] - 1];
    bool survived = false;
    for (int d = 0; d < durations[i] && t < target_frames; ++d, ++t) {
      survived = true;
      for (int j = 0; j < feats.frames.cols(); ++j)
        feats.frames(t, j) = e.mean[j] + e.std[j] * rng.gaussian();
    }
    if (survived) feats.tokens.push_back(tokens[i]);
  }
  return feats;
}

FeatureSequence apply_domain_shift(const FeatureSequence& feats,
                                   const DomainShift& shift, Rng& rng) {
  if (shift.rate < 0.5 || shift.rate > 2.0)
    throw std::invalid_argument(msg("rate factor ", shift.rate,
                                    " outside [0.5, 2]"));
  if (shift.noise_mult < 0.0)
    throw std::invalid_argument("noise multiplier must be non-negative");
  const int t_in = feats.frames.rows();
  const int dim = feats.frames.cols();
  if (!shift.offset.empty() && static_cast<int>(shift.offset.size()) != dim)
    throw std::invalid_argument(msg("offset dim ", shift.offset.size(),
                                    " != feature dim ", dim));

  // Per-coordinate std of the input frames scales the additive noise.
  Vec mean = column_means(feats.frames);
  Vec base_std(dim, 0.0);
  if (shift.noise_mult > 0.0) {
    for (int t = 0; t < t_in; ++t)
      for (int j = 0; j < dim; ++j) {
        const double d = feats.frames(t, j) - mean[j];
        base_std[j] += d * d;
      }
    for (int j = 0; j < dim; ++j) base_std[j] = std::sqrt(base_std[j] / t_in);
  }

  const int t_out = std::max(1, static_cast<int>(std::lround(shift.rate * t_in)));
  FeatureSequence out;
  out.utt_id = feats.utt_id;
  out.lang_id = feats.lang_id;
  out.tokens = feats.tokens;
  out.frames = Matrix(t_out, dim);
  for (int t = 0; t < t_out; ++t) {
    const int src = std::min(t_in - 1, static_cast<int>(t / shift.rate));
    for (int j = 0; j < dim; ++j) {
      double v = feats.frames(src, j);
      if (!shift.offset.empty()) v += shift.offset[j];
      if (shift.noise_mult > 0.0)
        v += shift.noise_mult * base_std[j] * rng.gaussian();
      out.frames(t, j) = v;
    }
  }
  return out;
}

FeatureSequence spec_augment(const FeatureSequence& feats, int n_time_masks,
                             int max_t, int n_freq_masks, int max_f, Rng& rng) {
  const int t_len = feats.frames.rows();
  const int dim = feats.frames.cols();
  if (n_time_masks < 0 || n_freq_masks < 0)
    throw std::invalid_argument("mask counts must be non-negative");
  if (n_time_masks > 0 && max_t >= t_len)
    throw std::invalid_argument(msg("max time mask ", max_t,
                                    " must be below the frame count ", t_len));
  if (n_freq_masks > 0 && max_f >= dim)
    throw std::invalid_argument(msg("max frequency mask ", max_f,
                                    " must be below the feature dim ", dim));

  FeatureSequence out = feats;
  Vec mean = column_means(feats.frames);
  for (int m = 0; m < n_time_masks; ++m) {
    const int width = rng.uniform_int(max_t + 1);
    if (width == 0) continue;
    const int start = rng.uniform_int(t_len - width + 1);
    for (int t = start; t < start + width; ++t)
      for (int j = 0; j < dim; ++j) out.frames(t, j) = mean[j];
  }
  for (int m = 0; m < n_freq_masks; ++m) {
    const int width = rng.uniform_int(max_f + 1);
    if (width == 0) continue;
    const int start = rng.uniform_int(dim - width + 1);
    for (int j = start; j < start + width; ++j)
      for (int t = 0; t < t_len; ++t) out.frames(t, j) = mean[j];
  }
  return out;
}

FeatureSequence crop_fixed(const FeatureSequence& feats, int n_frames, Rng& rng) {
  if (n_frames < 1)
    throw std::invalid_argument(msg("crop length must be >= 1, got ", n_frames));
  const int t_len = feats.frames.rows();
  if (t_len <= n_frames) return feats;
  const int start = rng.uniform_int(t_len - n_frames + 1);
  FeatureSequence out;
  out.utt_id = feats.utt_id;
  out.lang_id = feats.lang_id;
  // The transcript no longer matches the cropped span, so it is dropped;
  // crops only feed transcript-free LID evaluation.
  out.frames = Matrix(n_frames, feats.frames.cols());
  for (int t = 0; t < n_frames; ++t)
    for (int j = 0; j < feats.frames.cols(); ++j)
      out.frames(t, j) = feats.frames(start + t, j);
  return out;
}

}  // namespace translid
