#ifndef TRANSLID_PIPELINE_HPP
#define TRANSLID_PIPELINE_HPP

#include <string>
#include <vector>

#include "translid/config.hpp"
#include "translid/io.hpp"
#include "translid/metrics.hpp"
#include "translid/trainer.hpp"

namespace translid {

// Stage functions behind the command-line driver. Artifact layout inside a
// corpus directory:
//   config.ini                 resolved generation config
//   train.tsv, val.tsv         training/validation manifests (with transcripts)
//   test_full.tsv              full-length test manifest
//   test_<n>.tsv               fixed-duration crops (n frames)
//   test_shifted_full.tsv      domain-shifted test manifest
//   test_shifted_<n>.tsv       crops of the shifted test set
//   feats/<utt>.feat           binary feature files
// Stage-order violations (a missing upstream artifact) raise ConfigError
// naming the artifact; broken files raise IoError.

void run_gen_corpus(const AppConfig& cfg, const std::string& out_dir);

// Loads a manifest plus its feature files. `name` is the manifest base name
// ("train", "test_100", ...).
std::vector<FeatureSequence> load_split(const std::string& corpus_dir,
                                        const std::string& name);

TrainLog run_train_rnnt(const AppConfig& cfg, const std::string& corpus_dir,
                        const std::string& out_ckpt, bool verbose = false);

TrainLog run_train_lid(const AppConfig& cfg, const std::string& corpus_dir,
                       const std::string& rnnt_ckpt,
                       const std::string& out_ckpt, bool verbose = false);

void run_extract(const AppConfig& cfg, const std::string& corpus_dir,
                 const std::string& lid_ckpt, const std::string& manifest_name,
                 const std::string& out_emb, int jobs = 1);

void run_backend_fit(const AppConfig& cfg, const std::string& train_emb,
                     const std::string& out_ckpt);

void run_score(const std::string& backend_ckpt, const std::string& emb_path,
               const std::string& out_scores, int jobs = 1);

struct EvalResult {
  int trials = 0;
  double cavg = 0.0;
  double accuracy = 0.0;
  Matrix confusion_counts;
};
EvalResult run_evaluate(const std::string& truth_manifest,
                        const std::string& scores_path);

}  // namespace translid

#endif  // TRANSLID_PIPELINE_HPP
