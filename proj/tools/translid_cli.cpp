// Batch pipeline driver. One binary, one subcommand per stage:
//
//   translid gen-corpus   --out DIR
//   translid train-rnnt   --corpus DIR --out CKPT
//   translid train-lid    --corpus DIR --rnnt CKPT --out CKPT
//   translid extract      --corpus DIR --lid CKPT --split NAME --out EMB
//   translid backend-fit  --emb EMB --out CKPT
//   translid score        --backend CKPT --emb EMB --out TSV
//   translid evaluate     --truth MANIFEST --scores TSV
//
// Global flags: --config PATH, --set section.key=value, --seed N, --out PATH,
// --jobs N, --verbose. Precedence: flags > config file > defaults.
// Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 numeric failure.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "translid/errors.hpp"
#include "translid/pipeline.hpp"

namespace {

using translid::AppConfig;
using translid::ConfigError;

void require_flag(const std::string& value, const char* flag,
                  const char* command) {
  if (value.empty())
    throw ConfigError(translid::msg(flag, " is required for ", command));
}

void print_eval(const std::string& scores_path, const translid::EvalResult& r) {
  std::printf("%s: trials %d  Cavg %.4f  accuracy %.4f\n", scores_path.c_str(),
              r.trials, r.cavg, r.accuracy);
  const translid::Matrix& c = r.confusion_counts;
  std::printf("confusion (rows = true language, cols = decided):\n");
  for (int i = 0; i < c.rows(); ++i) {
    std::printf("  lang_%d:", i);
    for (int j = 0; j < c.cols(); ++j)
      std::printf(" %6d", static_cast<int>(c(i, j)));
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spoken language identification with transducer-based "
               "language embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  int seed = 0;
  int jobs = 0;
  bool verbose = false;
  std::string out_path;
  auto* config_opt =
      app.add_option("--config", config_path,
                     "Configuration file (sectioned key = value text)");
  app.add_option("--set", overrides,
                 "Override one key, e.g. --set train.lr=1e-3 (repeatable)");
  auto* seed_opt = app.add_option("--seed", seed, "Override run.seed");
  auto* jobs_opt =
      app.add_option("--jobs", jobs, "Worker threads for extract and score");
  app.add_option("--out", out_path, "Output path of the subcommand");
  app.add_flag("--verbose", verbose, "Print per-epoch training progress");

  std::string corpus_dir;
  std::string rnnt_path;
  std::string lid_path;
  std::string split_name = "test_full";
  std::string emb_path;
  std::string backend_path;
  std::string truth_path;
  std::string scores_path;

  CLI::App* gen = app.add_subcommand(
      "gen-corpus", "Synthesize the corpus: train/val/test splits, "
                    "fixed-duration crops, and the domain-shifted test set");

  CLI::App* train_rnnt = app.add_subcommand(
      "train-rnnt", "Train the transducer on transcribed utterances");
  train_rnnt->add_option("--corpus", corpus_dir, "Corpus directory");

  CLI::App* train_lid = app.add_subcommand(
      "train-lid", "Train the language-embedding model from a transducer "
                   "checkpoint");
  train_lid->add_option("--corpus", corpus_dir, "Corpus directory");
  train_lid->add_option("--rnnt", rnnt_path, "Transducer checkpoint");

  CLI::App* extract = app.add_subcommand(
      "extract", "Write language embeddings for one manifest");
  extract->add_option("--corpus", corpus_dir, "Corpus directory");
  extract->add_option("--lid", lid_path, "Embedding-model checkpoint");
  extract->add_option("--split", split_name,
                      "Manifest base name (train, val, test_full, test_100, "
                      "test_shifted_full, ...)");

  CLI::App* backend_fit = app.add_subcommand(
      "backend-fit", "Fit LDA + length-norm + logistic regression on "
                     "training embeddings");
  backend_fit->add_option("--emb", emb_path, "Training embedding file");

  CLI::App* score = app.add_subcommand(
      "score", "Score an embedding file with a fitted back-end");
  score->add_option("--backend", backend_path, "Back-end checkpoint");
  score->add_option("--emb", emb_path, "Embedding file to score");

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Report Cavg, accuracy, and the confusion matrix for a "
                  "score file");
  evaluate->add_option("--truth", truth_path, "Manifest with true languages");
  evaluate->add_option("--scores", scores_path, "Score file to evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    AppConfig cfg;
    if (*config_opt) cfg = AppConfig::from_file(config_path);
    for (const std::string& assignment : overrides)
      cfg.apply_override(assignment);
    if (*seed_opt) cfg.apply_override("run.seed=" + std::to_string(seed));
    if (*jobs_opt) cfg.apply_override("run.jobs=" + std::to_string(jobs));
    const int worker_count = cfg.get_int("run.jobs");
    if (verbose) std::fputs(cfg.resolved_text().c_str(), stderr);

    if (gen->parsed()) {
      require_flag(out_path, "--out", "gen-corpus");
      translid::run_gen_corpus(cfg, out_path);
      std::printf("gen-corpus: corpus written to %s\n", out_path.c_str());
    } else if (train_rnnt->parsed()) {
      require_flag(corpus_dir, "--corpus", "train-rnnt");
      require_flag(out_path, "--out", "train-rnnt");
      translid::run_train_rnnt(cfg, corpus_dir, out_path, verbose);
    } else if (train_lid->parsed()) {
      require_flag(corpus_dir, "--corpus", "train-lid");
      require_flag(rnnt_path, "--rnnt", "train-lid");
      require_flag(out_path, "--out", "train-lid");
      translid::run_train_lid(cfg, corpus_dir, rnnt_path, out_path, verbose);
    } else if (extract->parsed()) {
      require_flag(corpus_dir, "--corpus", "extract");
      require_flag(lid_path, "--lid", "extract");
      require_flag(out_path, "--out", "extract");
      translid::run_extract(cfg, corpus_dir, lid_path, split_name, out_path,
                            worker_count);
    } else if (backend_fit->parsed()) {
      require_flag(emb_path, "--emb", "backend-fit");
      require_flag(out_path, "--out", "backend-fit");
      translid::run_backend_fit(cfg, emb_path, out_path);
    } else if (score->parsed()) {
      require_flag(backend_path, "--backend", "score");
      require_flag(emb_path, "--emb", "score");
      require_flag(out_path, "--out", "score");
      translid::run_score(backend_path, emb_path, out_path, worker_count);
    } else if (evaluate->parsed()) {
      require_flag(truth_path, "--truth", "evaluate");
      require_flag(scores_path, "--scores", "evaluate");
      print_eval(scores_path, translid::run_evaluate(truth_path, scores_path));
    }
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const translid::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const translid::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
