#include "translid/metrics.hpp"

#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

namespace {

void check_trials(const TrialSet& trials, int num_langs) {
  if (num_langs < 2)
    throw std::invalid_argument(msg("need >= 2 languages, got ", num_langs));
  for (const Trial& t : trials) {
    if (static_cast<int>(t.scores.size()) != num_langs)
      throw std::invalid_argument(msg("trial ", t.utt_id, " has ",
                                      t.scores.size(), " scores, expected ",
                                      num_langs));
    if (t.true_lang < 0 || t.true_lang >= num_langs)
      throw std::invalid_argument(msg("trial ", t.utt_id, " true language ",
                                      t.true_lang, " outside [0, ", num_langs,
                                      ")"));
  }
}

}  // namespace

int decide(const Vec& scores) {
  if (scores.empty()) throw std::invalid_argument("empty score vector");
  int best = 0;
  for (int k = 1; k < static_cast<int>(scores.size()); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

Matrix confusion(const TrialSet& trials, int num_langs) {
  check_trials(trials, num_langs);
  Matrix counts(num_langs, num_langs);
  for (const Trial& t : trials) counts(t.true_lang, decide(t.scores)) += 1.0;
  return counts;
}

double accuracy(const TrialSet& trials, int num_langs) {
  if (trials.empty()) throw std::invalid_argument("no trials");
  Matrix counts = confusion(trials, num_langs);
  double correct = 0.0;
  for (int k = 0; k < num_langs; ++k) correct += counts(k, k);
  return correct / static_cast<double>(trials.size());
}

double cavg(const TrialSet& trials, int num_langs, double p_target) {
  Matrix counts = confusion(trials, num_langs);
  std::vector<double> totals(num_langs, 0.0);
  for (int t = 0; t < num_langs; ++t)
    for (int d = 0; d < num_langs; ++d) totals[t] += counts(t, d);
  for (int t = 0; t < num_langs; ++t)
    if (totals[t] == 0.0)
      throw std::invalid_argument(msg("language ", t, " has no trials"));

  double total_cost = 0.0;
  for (int lt = 0; lt < num_langs; ++lt) {
    const double p_miss = 1.0 - counts(lt, lt) / totals[lt];
    double fa = 0.0;
    for (int ln = 0; ln < num_langs; ++ln) {
      if (ln == lt) continue;
      fa += counts(ln, lt) / totals[ln];
    }
    total_cost += p_target * p_miss + (1.0 - p_target) / (num_langs - 1) * fa;
  }
  return total_cost / num_langs;
}

}  // namespace translid
