#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "translid/errors.hpp"
#include "translid/pipeline.hpp"

using namespace translid;
namespace fs = std::filesystem;

namespace {

AppConfig micro_config() {
  AppConfig cfg;
  for (const char* kv :
       {"model.enc_hidden=12", "model.enc_layers=1", "model.enc_dim=10",
        "model.subsample=2", "model.embed_dim=6", "model.pred_hidden=12",
        "model.pred_dim=10", "model.joint_dim=10", "model.head_dim=12",
        "corpus.num_langs=3", "corpus.num_tokens=6", "corpus.feat_dim=8",
        "corpus.train_per_lang=12", "corpus.val_per_lang=4",
        "corpus.test_per_lang=6", "corpus.min_frames=40",
        "corpus.max_frames=60", "corpus.crop_frames=20",
        "train.rnnt_epochs=1", "train.lid_epochs=1", "train.batch_size=4",
        "backend.lda_dim=2", "backend.epochs=100"})
    cfg.apply_override(kv);
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "translid_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void run_pipeline(const AppConfig& cfg, const fs::path& dir, int jobs) {
  run_gen_corpus(cfg, (dir / "corpus").string());
  run_train_rnnt(cfg, (dir / "corpus").string(), (dir / "rnnt.ckpt").string());
  run_train_lid(cfg, (dir / "corpus").string(), (dir / "rnnt.ckpt").string(),
                (dir / "lid.ckpt").string());
  run_extract(cfg, (dir / "corpus").string(), (dir / "lid.ckpt").string(),
              "train", (dir / "train.emb").string(), jobs);
  run_extract(cfg, (dir / "corpus").string(), (dir / "lid.ckpt").string(),
              "test_full", (dir / "test.emb").string(), jobs);
  run_backend_fit(cfg, (dir / "train.emb").string(),
                  (dir / "backend.ckpt").string());
  run_score((dir / "backend.ckpt").string(), (dir / "test.emb").string(),
            (dir / "test.scores").string(), jobs);
}

}  // namespace

TEST_CASE("corpus generation writes every split with the right inventory") {
  const fs::path dir = fresh_dir("gen");
  const AppConfig cfg = micro_config();
  run_gen_corpus(cfg, dir.string());

  for (const char* name : {"train", "val", "test_full", "test_20",
                           "test_shifted_full", "test_shifted_20"})
    CHECK(fs::exists(dir / (std::string(name) + ".tsv")));
  CHECK(fs::exists(dir / "config.ini"));

  // 3 languages: 36 train + 12 val + 18 test, then 18 cropped, 18 shifted,
  // and 18 shifted-cropped feature files.
  std::size_t feat_files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "feats"))
    feat_files += entry.is_regular_file() ? 1 : 0;
  CHECK(feat_files == 36 + 12 + 18 * 4);

  const std::vector<FeatureSequence> train = load_split(dir.string(), "train");
  REQUIRE(train.size() == 36);
  CHECK(train[0].dim() == 8);
  CHECK(train[0].num_frames() >= 40);
  CHECK(train[0].num_frames() <= 60);
  CHECK_FALSE(train[0].tokens.empty());

  const std::vector<FeatureSequence> crop = load_split(dir.string(), "test_20");
  for (const FeatureSequence& u : crop) CHECK(u.num_frames() == 20);

  // The resolved config snapshot itself parses and matches the generator's.
  const AppConfig snap = AppConfig::from_file((dir / "config.ini").string());
  CHECK(snap.resolved_text() == cfg.resolved_text());
}

TEST_CASE("the full pipeline runs end to end and evaluates") {
  const fs::path dir = fresh_dir("e2e");
  const AppConfig cfg = micro_config();
  run_pipeline(cfg, dir, /*jobs=*/1);

  // Checkpoint stages and snapshots.
  const Checkpoint rnnt = load_checkpoint((dir / "rnnt.ckpt").string());
  CHECK(rnnt.stage == "rnnt");
  CHECK_FALSE(rnnt.tensors.empty());
  CHECK_NOTHROW(
      AppConfig::from_text(rnnt.config_text, "snapshot").validate());

  // Checkpoint round-trip reproduces validation loss exactly.
  {
    Rng dummy(0);
    TransducerModel model(cfg.transducer_dims(), dummy);
    unpack_params(rnnt, model.params());
    const std::vector<FeatureSequence> val = load_split((dir / "corpus").string(), "val");
    const double reloaded = rnnt_validation_loss(model, val);
    // Tensors are stored at full precision, so two independent loads must
    // produce bit-identical losses.
    Rng dummy2(0);
    TransducerModel again(cfg.transducer_dims(), dummy2);
    unpack_params(load_checkpoint((dir / "rnnt.ckpt").string()), again.params());
    CHECK(rnnt_validation_loss(again, val) == reloaded);
  }

  const std::vector<LanguageEmbedding> embs =
      read_embedding_file((dir / "test.emb").string());
  REQUIRE(embs.size() == 18);
  CHECK(embs[0].values.size() == 12);
  // Extraction output is ordered by utterance id.
  for (std::size_t i = 1; i < embs.size(); ++i)
    CHECK(embs[i - 1].utt_id < embs[i].utt_id);

  const EvalResult r = run_evaluate((dir / "corpus" / "test_full.tsv").string(),
                                    (dir / "test.scores").string());
  CHECK(r.trials == 18);
  CHECK(r.cavg >= 0.0);
  CHECK(r.cavg <= 1.0);
  CHECK(r.accuracy >= 0.0);
  CHECK(r.accuracy <= 1.0);
  CHECK(r.confusion_counts.rows() == 3);

  SUBCASE("reruns and parallel workers give bit-identical artifacts") {
    const fs::path redo = fresh_dir("e2e-redo");
    run_pipeline(cfg, redo, /*jobs=*/4);
    CHECK(file_bytes(dir / "test.scores") == file_bytes(redo / "test.scores"));
    CHECK(file_bytes(dir / "train.emb") == file_bytes(redo / "train.emb"));
    CHECK(file_bytes(dir / "corpus" / "train.tsv") ==
          file_bytes(redo / "corpus" / "train.tsv"));
  }

  SUBCASE("extract refuses a mismatched fusion setting") {
    AppConfig other = micro_config();
    other.apply_override("fusion.tau=5");
    CHECK_THROWS_WITH_AS(
        run_extract(other, (dir / "corpus").string(),
                    (dir / "lid.ckpt").string(), "val",
                    (dir / "bad.emb").string()),
        doctest::Contains("fusion.tau mismatch"), ConfigError);
  }

  SUBCASE("checkpoints are refused outside their stage") {
    CHECK_THROWS_WITH_AS(
        run_train_lid(cfg, (dir / "corpus").string(),
                      (dir / "lid.ckpt").string(), (dir / "x.ckpt").string()),
        doctest::Contains("'rnnt'"), ConfigError);
    CHECK_THROWS_WITH_AS(
        run_score((dir / "lid.ckpt").string(), (dir / "test.emb").string(),
                  (dir / "x.scores").string()),
        doctest::Contains("'backend'"), ConfigError);
  }
}

TEST_CASE("stage-order violations name the missing artifact") {
  const fs::path dir = fresh_dir("order");
  const AppConfig cfg = micro_config();
  CHECK_THROWS_WITH_AS(load_split((dir / "corpus").string(), "train"),
                       doctest::Contains("gen-corpus"), ConfigError);
  CHECK_THROWS_WITH_AS(
      run_train_lid(cfg, (dir / "corpus").string(), (dir / "no.ckpt").string(),
                    (dir / "x.ckpt").string()),
      doctest::Contains("train-rnnt"), ConfigError);
  CHECK_THROWS_WITH_AS(
      run_backend_fit(cfg, (dir / "no.emb").string(), (dir / "x.ckpt").string()),
      doctest::Contains("extract"), ConfigError);
  CHECK_THROWS_WITH_AS(
      run_score((dir / "no.ckpt").string(), (dir / "no.emb").string(),
                (dir / "x.scores").string()),
      doctest::Contains("backend-fit"), ConfigError);
  CHECK_THROWS_WITH_AS(
      run_evaluate((dir / "no.tsv").string(), (dir / "no.scores").string()),
      doctest::Contains("gen-corpus"), ConfigError);
}

TEST_CASE("perfect synthetic scores evaluate to zero cost") {
  const fs::path dir = fresh_dir("perfect");
  std::vector<ManifestEntry> truth;
  std::vector<ScoreRow> rows;
  for (int lang = 0; lang < 3; ++lang) {
    for (int i = 0; i < 4; ++i) {
      ManifestEntry e;
      e.utt_id = "u" + std::to_string(lang) + "_" + std::to_string(i);
      e.rel_path = "feats/none.feat";
      e.lang_id = lang;
      truth.push_back(e);
      ScoreRow row;
      row.utt_id = e.utt_id;
      row.scores = Vec(3, -10.0);
      row.scores[static_cast<std::size_t>(lang)] = -0.01;
      rows.push_back(row);
    }
  }
  write_manifest((dir / "truth.tsv").string(), truth);
  write_score_file((dir / "perfect.scores").string(), rows, 3);
  const EvalResult r = run_evaluate((dir / "truth.tsv").string(),
                                    (dir / "perfect.scores").string());
  CHECK(r.cavg == 0.0);
  CHECK(r.accuracy == 1.0);
  CHECK(r.trials == 12);
}
