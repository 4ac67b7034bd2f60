#include "translid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "translid/errors.hpp"
#include "translid/optim.hpp"

namespace translid {

namespace {

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  return order;
}

FeatureSequence maybe_augment(const FeatureSequence& utt,
                              const TrainOptions& opt, Rng& rng) {
  if (!opt.augment || (opt.time_masks <= 0 && opt.freq_masks <= 0)) return utt;
  const int max_t = std::min(opt.max_t, utt.frames.rows() - 1);
  const int max_f = std::min(opt.max_f, utt.frames.cols() - 1);
  const int n_t = max_t > 0 ? opt.time_masks : 0;
  const int n_f = max_f > 0 ? opt.freq_masks : 0;
  if (n_t == 0 && n_f == 0) return utt;
  return spec_augment(utt, n_t, std::max(max_t, 1), n_f, std::max(max_f, 1),
                      rng);
}

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  std::vector<int> prev(m + 1), cur(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Shared plateau-decay epoch loop: `epoch_fn` trains one epoch and returns
// its mean train loss; `val_fn` returns (val loss, val metric).
template <typename EpochFn, typename ValFn>
TrainLog run_epochs(const TrainOptions& opt, Adam& adam, const char* tag,
                    EpochFn&& epoch_fn, ValFn&& val_fn) {
  TrainLog log;
  double best_val = std::numeric_limits<double>::infinity();
  int stagnant = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double train_loss = epoch_fn(epoch);
    const auto [val_loss, val_metric] = val_fn();
    log.train_loss.push_back(train_loss);
    log.val_loss.push_back(val_loss);
    log.val_metric.push_back(val_metric);
    if (val_loss < best_val - 1e-6) {
      best_val = val_loss;
      stagnant = 0;
    } else if (++stagnant >= opt.plateau_patience) {
      adam.set_lr(std::max(adam.lr() * 0.5, opt.min_lr));
      stagnant = 0;
    }
    log.lr.push_back(adam.lr());
    if (opt.verbose)
      std::fprintf(stderr, "%s epoch %d: train %.4f val %.4f metric %.4f lr %.2e\n",
                  tag, epoch + 1, train_loss, val_loss, val_metric, adam.lr());
  }
  return log;
}

}  // namespace

double rnnt_utterance_loss(TransducerModel& model, const FeatureSequence& utt,
                           double grad_scale) {
  const int s = model.encoder.subsample();
  const int t_states = (utt.frames.rows() + s - 1) / s;
  const double norm = t_states + static_cast<double>(utt.tokens.size());
  return rnnt_loss(model, utt.frames, utt.tokens, grad_scale / norm) / norm;
}

double rnnt_validation_loss(TransducerModel& model,
                            const std::vector<FeatureSequence>& val,
                            int limit) {
  if (val.empty()) throw std::invalid_argument("empty validation split");
  const int count = limit > 0 ? std::min<int>(limit, val.size())
                              : static_cast<int>(val.size());
  double total = 0.0;
  for (int i = 0; i < count; ++i)
    total += rnnt_utterance_loss(model, val[i]);
  return total / count;
}

double greedy_token_accuracy(TransducerModel& model,
                             const std::vector<FeatureSequence>& val, int tau,
                             int limit) {
  if (val.empty()) throw std::invalid_argument("empty validation split");
  const int count = limit > 0 ? std::min<int>(limit, val.size())
                              : static_cast<int>(val.size());
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    const FeatureSequence& utt = val[i];
    std::vector<Vec> enc = model.encoder.forward(utt.frames);
    DecodeTrace trace = greedy_decode(model.prediction, model.joint, enc, tau);
    const double ref = std::max<std::size_t>(utt.tokens.size(), 1);
    const double ter = edit_distance(trace.tokens, utt.tokens) / ref;
    total += std::max(0.0, 1.0 - ter);
  }
  return total / count;
}

TrainLog train_rnnt(TransducerModel& model,
                    const std::vector<FeatureSequence>& train,
                    const std::vector<FeatureSequence>& val,
                    const TrainOptions& opt, Rng& rng) {
  if (train.empty()) throw std::invalid_argument("empty training split");
  for (const FeatureSequence& utt : train)
    if (utt.tokens.empty())
      throw ConfigError(msg("utterance \"", utt.utt_id,
                            "\" has no transcript; transducer training needs "
                            "token labels"));
  std::vector<Param*> params = model.params();
  Adam adam(params, opt.lr);
  Rng shuffle_rng = rng.substream("rnnt.shuffle");
  Rng aug_rng = rng.substream("rnnt.augment");

  auto epoch_fn = [&](int) {
    std::vector<int> order =
        shuffled_indices(static_cast<int>(train.size()), shuffle_rng);
    const int count = opt.utts_per_epoch > 0
                          ? std::min<int>(opt.utts_per_epoch, order.size())
                          : static_cast<int>(order.size());
    double epoch_loss = 0.0;
    for (int begin = 0; begin < count; begin += opt.batch_size) {
      const int end = std::min(begin + opt.batch_size, count);
      zero_grads(params);
      for (int i = begin; i < end; ++i) {
        FeatureSequence aug = maybe_augment(train[order[i]], opt, aug_rng);
        epoch_loss += rnnt_utterance_loss(model, aug, 1.0 / (end - begin));
      }
      clip_grad_norm(params, opt.grad_clip);
      adam.step();
    }
    return epoch_loss / count;
  };
  auto val_fn = [&] {
    const double loss = rnnt_validation_loss(model, val, opt.val_utts);
    const double acc = greedy_token_accuracy(model, val, 3, opt.val_utts);
    return std::pair<double, double>(loss, acc);
  };
  return run_epochs(opt, adam, "rnnt", epoch_fn, val_fn);
}

double lid_validation(LidModel& model, const std::vector<FeatureSequence>& val,
                      double* accuracy_out, int limit) {
  if (val.empty()) throw std::invalid_argument("empty validation split");
  const int count = limit > 0 ? std::min<int>(limit, val.size())
                              : static_cast<int>(val.size());
  double total = 0.0;
  int correct = 0;
  for (int i = 0; i < count; ++i) {
    bool hit = false;
    total += model.ce_loss(val[i].frames, val[i].lang_id, 0.0, &hit);
    correct += hit ? 1 : 0;
  }
  if (accuracy_out) *accuracy_out = static_cast<double>(correct) / count;
  return total / count;
}

TrainLog train_lid(LidModel& model, const std::vector<FeatureSequence>& train,
                   const std::vector<FeatureSequence>& val,
                   const FreezeMask& mask, const TrainOptions& opt, Rng& rng) {
  if (train.empty()) throw std::invalid_argument("empty training split");
  for (const FeatureSequence& utt : train)
    if (utt.lang_id < 0 || utt.lang_id >= model.num_langs())
      throw ConfigError(msg("utterance \"", utt.utt_id, "\" has language id ",
                            utt.lang_id, ", outside [0, ", model.num_langs(),
                            ")"));
  model.apply_freeze(mask);
  std::vector<Param*> params = model.params();
  Adam adam(params, opt.lr);
  Rng shuffle_rng = rng.substream("lid.shuffle");
  Rng aug_rng = rng.substream("lid.augment");

  auto epoch_fn = [&](int) {
    std::vector<int> order =
        shuffled_indices(static_cast<int>(train.size()), shuffle_rng);
    const int count = opt.utts_per_epoch > 0
                          ? std::min<int>(opt.utts_per_epoch, order.size())
                          : static_cast<int>(order.size());
    double epoch_loss = 0.0;
    for (int begin = 0; begin < count; begin += opt.batch_size) {
      const int end = std::min(begin + opt.batch_size, count);
      zero_grads(params);
      for (int i = begin; i < end; ++i) {
        const FeatureSequence& utt = train[order[i]];
        FeatureSequence aug = maybe_augment(utt, opt, aug_rng);
        epoch_loss +=
            model.ce_loss(aug.frames, utt.lang_id, 1.0 / (end - begin));
      }
      clip_grad_norm(params, opt.grad_clip);
      adam.step();
    }
    return epoch_loss / count;
  };
  auto val_fn = [&] {
    double acc = 0.0;
    const double loss = lid_validation(model, val, &acc, opt.val_utts);
    return std::pair<double, double>(loss, acc);
  };
  return run_epochs(opt, adam, "lid", epoch_fn, val_fn);
}

}  // namespace translid
