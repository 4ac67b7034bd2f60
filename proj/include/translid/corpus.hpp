#ifndef TRANSLID_CORPUS_HPP
#define TRANSLID_CORPUS_HPP

#include <vector>

#include "translid/feature.hpp"
#include "translid/rng.hpp"

namespace translid {

struct TokenEmission {
  Vec mean;  // D
  Vec std;   // D, diagonal
};

// Per-language Markov token source rendered to Gaussian frames. The emission
// table is shared across languages by default, so languages differ only in
// their token transition statistics (phonotactics).
struct LanguageSpec {
  int lang_id = 0;
  Matrix transition;  // K x K row-stochastic; row = current token - 1
  Vec initial;        // K, stochastic
  int dur_min = 2;    // frames a token holds, inclusive uniform range
  int dur_max = 6;
  std::vector<TokenEmission> emissions;  // K entries, token id = index + 1
};

struct LanguageSpecOptions {
  int dur_min = 2;
  int dur_max = 6;
  double mean_scale = 1.0;   // token mean entries ~ mean_scale * N(0,1)
  double std_min = 0.3;      // per-dim emission std ~ U[std_min, std_max]
  double std_max = 0.7;
  // > 0 adds per-language offsets to the emission means (ablation only; the
  // default keeps the table shared so classification must use phonotactics).
  double emission_divergence = 0.0;
};

// Transition rows are softmax(base + divergence * perturbation): base logits
// are shared, perturbations are per-language, so divergence = 0 makes every
// language identical (chance-level control) and larger values separate them.
std::vector<LanguageSpec> gen_language_specs(int n_langs, int num_tokens,
                                             int feat_dim, double divergence,
                                             Rng& rng,
                                             const LanguageSpecOptions& opt = {});

// Samples a token chain, holds each token for a uniform duration, renders
// Gaussian frames, and truncates to exactly target_frames. The transcript
// keeps every token with at least one surviving frame.
FeatureSequence synth_utterance(const LanguageSpec& spec, int target_frames,
                                Rng& rng);

// Channel/style perturbation for the cross-domain test condition.
struct DomainShift {
  Vec offset;               // per-coordinate additive channel offset (empty = 0)
  double noise_mult = 0.0;  // additive noise std = noise_mult * per-coord std
  double rate = 1.0;        // output frame count ~ rate * T, in [0.5, 2]
};

FeatureSequence apply_domain_shift(const FeatureSequence& feats,
                                   const DomainShift& shift, Rng& rng);

// Masks random time spans and feature-coordinate bands to the utterance mean
// of each coordinate (computed before any masking).
FeatureSequence spec_augment(const FeatureSequence& feats, int n_time_masks,
                             int max_t, int n_freq_masks, int max_f, Rng& rng);

// Uniform-random contiguous crop of exactly n_frames when the utterance is
// long enough; shorter utterances pass through unchanged.
FeatureSequence crop_fixed(const FeatureSequence& feats, int n_frames, Rng& rng);

}  // namespace translid

#endif  // TRANSLID_CORPUS_HPP
