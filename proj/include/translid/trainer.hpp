#ifndef TRANSLID_TRAINER_HPP
#define TRANSLID_TRAINER_HPP

#include <vector>

#include "translid/corpus.hpp"
#include "translid/embedder.hpp"

namespace translid {

struct TrainOptions {
  int epochs = 3;
  int utts_per_epoch = 0;  // 0 = the whole training split each epoch
  int val_utts = 0;        // 0 = the whole validation split
  int batch_size = 8;
  double lr = 1e-3;
  double min_lr = 1e-8;
  int plateau_patience = 2;  // halve the lr after this many stagnant epochs
  double grad_clip = 5.0;    // global-norm clip; <= 0 disables
  bool augment = true;
  int time_masks = 2;
  int max_t = 20;
  int freq_masks = 2;
  int max_f = 4;
  bool verbose = false;
};

struct TrainLog {
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> val_loss;    // after each epoch
  std::vector<double> val_metric;  // token accuracy (rnnt) / accuracy (lid)
  std::vector<double> lr;          // effective lr after each epoch
};

// Transducer loss normalized per lattice transition (T' + U), so utterances
// of different lengths contribute comparable magnitudes.
double rnnt_utterance_loss(TransducerModel& model, const FeatureSequence& utt,
                           double grad_scale = 0.0);
double rnnt_validation_loss(TransducerModel& model,
                            const std::vector<FeatureSequence>& val,
                            int limit = 0);
// 1 - token error rate (Levenshtein / reference length), averaged over
// utterances and clamped to [0, 1].
double greedy_token_accuracy(TransducerModel& model,
                             const std::vector<FeatureSequence>& val, int tau,
                             int limit = 0);

TrainLog train_rnnt(TransducerModel& model,
                    const std::vector<FeatureSequence>& train,
                    const std::vector<FeatureSequence>& val,
                    const TrainOptions& opt, Rng& rng);

double lid_validation(LidModel& model, const std::vector<FeatureSequence>& val,
                      double* accuracy_out = nullptr, int limit = 0);

TrainLog train_lid(LidModel& model, const std::vector<FeatureSequence>& train,
                   const std::vector<FeatureSequence>& val,
                   const FreezeMask& mask, const TrainOptions& opt, Rng& rng);

}  // namespace translid

#endif  // TRANSLID_TRAINER_HPP
