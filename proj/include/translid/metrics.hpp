#ifndef TRANSLID_METRICS_HPP
#define TRANSLID_METRICS_HPP

#include <string>
#include <vector>

#include "translid/matrix.hpp"

namespace translid {

struct Trial {
  std::string utt_id;
  int true_lang = -1;
  Vec scores;  // one score per language, any monotone scale
};
using TrialSet = std::vector<Trial>;

// Argmax with ties broken by the lowest index.
int decide(const Vec& scores);

// Confusion counts: rows = true language, columns = decided language.
Matrix confusion(const TrialSet& trials, int num_langs);
double accuracy(const TrialSet& trials, int num_langs);

// Average detection cost with hard argmax decisions:
//   Cavg = (1/N) sum_Lt [ p_target * P_miss(Lt)
//                         + (1-p_target)/(N-1) * sum_{Ln != Lt} P_fa(Lt, Ln) ]
// where P_miss(Lt) is the fraction of Lt trials not decided Lt and
// P_fa(Lt, Ln) the fraction of Ln trials decided Lt. Every language must
// have at least one trial.
double cavg(const TrialSet& trials, int num_langs, double p_target = 0.5);

}  // namespace translid

#endif  // TRANSLID_METRICS_HPP
