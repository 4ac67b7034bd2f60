#include "translid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "translid/backend.hpp"
#include "translid/errors.hpp"

namespace translid {
namespace {

namespace fs = std::filesystem;

// Stage-order guard: artifacts produced by an upstream command must exist
// before a downstream command may run.
void require_artifact(const std::string& path, const std::string& what,
                      const std::string& producer) {
  if (!fs::exists(path))
    throw ConfigError(msg("missing ", what, ": ", path, " (run ", producer,
                          " first)"));
}

std::string manifest_path(const std::string& corpus_dir,
                          const std::string& name) {
  return (fs::path(corpus_dir) / (name + ".tsv")).string();
}

// Runs fn(0..n-1) on up to `jobs` threads. Each index writes its own output
// slot, so results are identical regardless of scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (std::thread& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

TrainOptions train_options_from(const AppConfig& cfg, bool rnnt_stage,
                                bool verbose) {
  TrainOptions opt;
  opt.epochs = cfg.get_int(rnnt_stage ? "train.rnnt_epochs" : "train.lid_epochs");
  opt.utts_per_epoch = cfg.get_int(rnnt_stage ? "train.rnnt_utts_per_epoch"
                                              : "train.lid_utts_per_epoch");
  opt.val_utts = cfg.get_int("train.val_utts");
  opt.batch_size = cfg.get_int("train.batch_size");
  opt.lr = cfg.get_double("train.lr");
  opt.min_lr = cfg.get_double("train.min_lr");
  opt.plateau_patience = cfg.get_int("train.plateau_patience");
  opt.grad_clip = cfg.get_double("train.grad_clip");
  opt.augment = cfg.get_bool("train.augment");
  opt.time_masks = cfg.get_int("train.time_masks");
  opt.max_t = cfg.get_int("train.max_t");
  opt.freq_masks = cfg.get_int("train.freq_masks");
  opt.max_f = cfg.get_int("train.max_f");
  opt.verbose = verbose;
  return opt;
}

LidModel build_lid_model(const AppConfig& cfg, Rng& rng) {
  return LidModel(cfg.transducer_dims(), cfg.variant(),
                  cfg.get_int("corpus.num_langs"), cfg.get_int("model.head_dim"),
                  cfg.get_double("fusion.lambda"), cfg.get_double("fusion.alpha"),
                  cfg.get_int("fusion.tau"), rng);
}

// The checkpoint's config snapshot pins the settings that shape what a model
// computes; extract and score must not silently run with different ones.
void require_matching_fusion(const AppConfig& cfg, const AppConfig& ck_cfg,
                             const std::string& ckpt_path) {
  const char* keys[] = {"fusion.variant", "fusion.tau", "fusion.lambda",
                        "fusion.alpha"};
  for (const char* key : keys) {
    const std::string& want = ck_cfg.get_string(key);
    const std::string& got = cfg.get_string(key);
    if (want != got)
      throw ConfigError(msg(key, " mismatch: checkpoint ", ckpt_path,
                            " was trained with ", want, " but the current "
                            "config says ", got));
  }
}

Matrix vec_to_column(const Vec& v) {
  Matrix m(static_cast<int>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = v[i];
  return m;
}

Vec column_to_vec(const Matrix& m) {
  if (m.cols() != 1)
    throw ConfigError(msg("expected a column tensor, got ", m.rows(), "x",
                          m.cols()));
  return Vec(m.data(), m.data() + m.size());
}

const Matrix& find_tensor(const Checkpoint& ck, const std::string& name) {
  for (const auto& [tensor_name, tensor] : ck.tensors)
    if (tensor_name == name) return tensor;
  throw ConfigError(msg("checkpoint is missing tensor '", name, "'"));
}

void write_split(const std::string& out_dir, const std::string& name,
                 const std::vector<FeatureSequence>& utts,
                 std::vector<ManifestEntry>* entries) {
  entries->clear();
  for (const FeatureSequence& u : utts) {
    ManifestEntry e;
    e.utt_id = u.utt_id;
    e.rel_path = "feats/" + u.utt_id + ".feat";
    e.lang_id = u.lang_id;
    e.tokens = u.tokens;
    write_feature_file((fs::path(out_dir) / e.rel_path).string(), u);
    entries->push_back(std::move(e));
  }
  write_manifest(manifest_path(out_dir, name), *entries);
}

}  // namespace

void run_gen_corpus(const AppConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "feats");

  const int num_langs = cfg.get_int("corpus.num_langs");
  const int min_frames = cfg.get_int("corpus.min_frames");
  const int max_frames = cfg.get_int("corpus.max_frames");
  const std::vector<int> crops = cfg.get_int_list("corpus.crop_frames");
  const DomainShift shift = cfg.domain_shift(cfg.get_int("corpus.feat_dim"));

  Rng root(static_cast<std::uint64_t>(cfg.get_int("run.seed")));
  Rng spec_rng = root.substream("corpus.specs");
  const std::vector<LanguageSpec> specs = gen_language_specs(
      num_langs, cfg.get_int("corpus.num_tokens"), cfg.get_int("corpus.feat_dim"),
      cfg.get_double("corpus.divergence"), spec_rng,
      cfg.language_spec_options());

  struct Split {
    const char* name;
    int per_lang;
  };
  const Split splits[] = {
      {"train", cfg.get_int("corpus.train_per_lang")},
      {"val", cfg.get_int("corpus.val_per_lang")},
      {"test", cfg.get_int("corpus.test_per_lang")},
  };

  std::vector<ManifestEntry> entries;
  for (const Split& split : splits) {
    std::vector<FeatureSequence> utts;
    utts.reserve(static_cast<std::size_t>(num_langs) * split.per_lang);
    for (int lang = 0; lang < num_langs; ++lang) {
      for (int idx = 0; idx < split.per_lang; ++idx) {
        // One substream per utterance keyed only by its identity, so
        // generation order (or parallelism) cannot change the bytes.
        Rng u = root.substream(msg("utt.", split.name, ".", lang, ".", idx));
        const int frames =
            min_frames + u.uniform_int(max_frames - min_frames + 1);
        FeatureSequence utt = synth_utterance(specs[lang], frames, u);
        char id[64];
        std::snprintf(id, sizeof(id), "%s-l%d-%04d", split.name, lang, idx);
        utt.utt_id = id;
        utts.push_back(std::move(utt));
      }
    }
    const std::string split_name =
        std::string(split.name) == "test" ? "test_full" : split.name;
    write_split(out_dir, split_name, utts, &entries);

    if (std::string(split.name) != "test") continue;

    // Fixed-duration crop conditions of the test split.
    for (int crop : crops) {
      std::vector<FeatureSequence> cropped;
      cropped.reserve(utts.size());
      for (const FeatureSequence& u : utts) {
        Rng cr = root.substream(msg("crop.", crop, ".", u.utt_id));
        FeatureSequence c = crop_fixed(u, crop, cr);
        c.utt_id = u.utt_id + "#" + std::to_string(crop);
        cropped.push_back(std::move(c));
      }
      write_split(out_dir, "test_" + std::to_string(crop), cropped, &entries);
    }

    // Domain-shifted test condition plus its crops.
    std::vector<FeatureSequence> shifted;
    shifted.reserve(utts.size());
    for (const FeatureSequence& u : utts) {
      Rng sh = root.substream(msg("shift.", u.utt_id));
      FeatureSequence s = apply_domain_shift(u, shift, sh);
      s.utt_id = u.utt_id + "@shift";
      shifted.push_back(std::move(s));
    }
    write_split(out_dir, "test_shifted_full", shifted, &entries);
    for (int crop : crops) {
      std::vector<FeatureSequence> cropped;
      cropped.reserve(shifted.size());
      for (const FeatureSequence& s : shifted) {
        Rng cr = root.substream(msg("shiftcrop.", crop, ".", s.utt_id));
        FeatureSequence c = crop_fixed(s, crop, cr);
        c.utt_id = s.utt_id + "#" + std::to_string(crop);
        cropped.push_back(std::move(c));
      }
      write_split(out_dir, "test_shifted_" + std::to_string(crop), cropped,
                  &entries);
    }
  }

  std::ofstream cfg_out(fs::path(out_dir) / "config.ini", std::ios::binary);
  if (!cfg_out) throw IoError(msg("cannot write ", out_dir, "/config.ini"));
  cfg_out << cfg.resolved_text();
}

std::vector<FeatureSequence> load_split(const std::string& corpus_dir,
                                        const std::string& name) {
  const std::string path = manifest_path(corpus_dir, name);
  require_artifact(path, "manifest '" + name + "'", "gen-corpus");
  const std::vector<ManifestEntry> entries = read_manifest(path);
  std::vector<FeatureSequence> utts;
  utts.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    FeatureSequence utt =
        read_feature_file((fs::path(corpus_dir) / e.rel_path).string());
    utt.utt_id = e.utt_id;
    utt.lang_id = e.lang_id;
    utt.tokens = e.tokens;
    utts.push_back(std::move(utt));
  }
  return utts;
}

TrainLog run_train_rnnt(const AppConfig& cfg, const std::string& corpus_dir,
                        const std::string& out_ckpt, bool verbose) {
  cfg.validate();
  const std::vector<FeatureSequence> train = load_split(corpus_dir, "train");
  const std::vector<FeatureSequence> val = load_split(corpus_dir, "val");

  Rng root(static_cast<std::uint64_t>(cfg.get_int("run.seed")));
  Rng init_rng = root.substream("init.rnnt");
  TransducerModel model(cfg.transducer_dims(), init_rng);
  const TrainOptions opt = train_options_from(cfg, /*rnnt_stage=*/true, verbose);
  Rng train_rng = root.substream("train.rnnt");
  TrainLog log = train_rnnt(model, train, val, opt, train_rng);

  Checkpoint ck;
  ck.stage = "rnnt";
  ck.config_text = cfg.resolved_text();
  pack_params(model.params(), &ck);
  save_checkpoint(out_ckpt, ck);

  const double token_acc = greedy_token_accuracy(
      model, val, cfg.get_int("fusion.tau"), opt.val_utts);
  std::fprintf(stderr, "train-rnnt: val loss %.4f, greedy token accuracy %.3f -> %s\n",
              log.val_loss.empty() ? 0.0 : log.val_loss.back(), token_acc,
              out_ckpt.c_str());
  return log;
}

TrainLog run_train_lid(const AppConfig& cfg, const std::string& corpus_dir,
                       const std::string& rnnt_ckpt,
                       const std::string& out_ckpt, bool verbose) {
  cfg.validate();
  require_artifact(rnnt_ckpt, "transducer checkpoint", "train-rnnt");
  const Checkpoint rnnt = load_checkpoint(rnnt_ckpt);
  if (rnnt.stage != "rnnt")
    throw ConfigError(msg(rnnt_ckpt, " holds a '", rnnt.stage,
                          "' checkpoint; train-lid needs an 'rnnt' one"));

  const std::vector<FeatureSequence> train = load_split(corpus_dir, "train");
  const std::vector<FeatureSequence> val = load_split(corpus_dir, "val");

  Rng root(static_cast<std::uint64_t>(cfg.get_int("run.seed")));
  Rng init_rng = root.substream("init.lid");
  LidModel model = build_lid_model(cfg, init_rng);
  unpack_params(rnnt, model.transducer().params());

  const TrainOptions opt = train_options_from(cfg, /*rnnt_stage=*/false, verbose);
  Rng train_rng = root.substream("train.lid");
  TrainLog log = train_lid(model, train, val, cfg.freeze_mask(), opt, train_rng);

  Checkpoint ck;
  ck.stage = "lid";
  ck.config_text = cfg.resolved_text();
  pack_params(model.params(), &ck);
  save_checkpoint(out_ckpt, ck);

  std::fprintf(stderr, "train-lid: val loss %.4f, val accuracy %.3f -> %s\n",
              log.val_loss.empty() ? 0.0 : log.val_loss.back(),
              log.val_metric.empty() ? 0.0 : log.val_metric.back(),
              out_ckpt.c_str());
  return log;
}

void run_extract(const AppConfig& cfg, const std::string& corpus_dir,
                 const std::string& lid_ckpt, const std::string& manifest_name,
                 const std::string& out_emb, int jobs) {
  cfg.validate();
  require_artifact(lid_ckpt, "embedding-model checkpoint", "train-lid");
  const Checkpoint ck = load_checkpoint(lid_ckpt);
  if (ck.stage != "lid")
    throw ConfigError(msg(lid_ckpt, " holds a '", ck.stage,
                          "' checkpoint; extract needs a 'lid' one"));
  const AppConfig ck_cfg =
      AppConfig::from_text(ck.config_text, lid_ckpt + " config snapshot");
  require_matching_fusion(cfg, ck_cfg, lid_ckpt);

  Rng dummy(0);
  LidModel model = build_lid_model(cfg, dummy);
  unpack_params(ck, model.params());

  std::vector<FeatureSequence> utts = load_split(corpus_dir, manifest_name);
  std::sort(utts.begin(), utts.end(),
            [](const FeatureSequence& a, const FeatureSequence& b) {
              return a.utt_id < b.utt_id;
            });

  std::vector<LanguageEmbedding> embeddings(utts.size());
  const LidModel& shared = model;
  parallel_for(static_cast<int>(utts.size()), jobs,
               [&](int i) { embeddings[static_cast<std::size_t>(i)] =
                                shared.extract(utts[static_cast<std::size_t>(i)]); });
  write_embedding_file(out_emb, embeddings);
  std::fprintf(stderr, "extract: %zu embeddings (dim %d) from %s -> %s\n",
              embeddings.size(),
              embeddings.empty() ? 0 : static_cast<int>(embeddings[0].values.size()),
              manifest_name.c_str(), out_emb.c_str());
}

void run_backend_fit(const AppConfig& cfg, const std::string& train_emb,
                     const std::string& out_ckpt) {
  cfg.validate();
  require_artifact(train_emb, "training embedding file", "extract");
  const std::vector<LanguageEmbedding> embs = read_embedding_file(train_emb);
  if (embs.empty()) throw ConfigError(msg(train_emb, " holds no embeddings"));

  const int num_langs = cfg.get_int("corpus.num_langs");
  std::vector<Vec> feats;
  std::vector<int> labels;
  feats.reserve(embs.size());
  labels.reserve(embs.size());
  for (const LanguageEmbedding& e : embs) {
    if (e.label < 0 || e.label >= num_langs)
      throw ConfigError(msg("embedding '", e.utt_id, "' has label ", e.label,
                            "; backend-fit needs labels in [0, ", num_langs,
                            ")"));
    feats.push_back(e.values);
    labels.push_back(e.label);
  }

  const LdaModel lda =
      lda_fit(feats, labels, num_langs, cfg.get_int("backend.lda_dim"));
  std::vector<Vec> projected;
  projected.reserve(feats.size());
  for (const Vec& x : feats)
    projected.push_back(length_normalize(lda_apply(lda, x)));

  Rng root(static_cast<std::uint64_t>(cfg.get_int("run.seed")));
  Rng lr_rng = root.substream("backend.lr");
  LrModel lr = lr_fit(projected, labels, num_langs,
                      cfg.get_int("backend.experts"),
                      cfg.get_double("backend.l2"),
                      cfg.get_int("backend.epochs"), lr_rng);

  Checkpoint ck;
  ck.stage = "backend";
  ck.config_text = cfg.resolved_text();
  ck.tensors.emplace_back("lda.projection", lda.projection);
  ck.tensors.emplace_back("lda.mean", vec_to_column(lda.mean));
  pack_params(lr.params(), &ck);
  save_checkpoint(out_ckpt, ck);

  // Report the closed training accuracy as a sanity signal.
  int correct = 0;
  for (std::size_t i = 0; i < projected.size(); ++i)
    if (decide(lr_score(lr, projected[i])) == labels[i]) ++correct;
  std::fprintf(stderr, "backend-fit: %zu embeddings, train accuracy %.3f -> %s\n",
              embs.size(), static_cast<double>(correct) / projected.size(),
              out_ckpt.c_str());
}

void run_score(const std::string& backend_ckpt, const std::string& emb_path,
               const std::string& out_scores, int jobs) {
  require_artifact(backend_ckpt, "back-end checkpoint", "backend-fit");
  require_artifact(emb_path, "embedding file", "extract");
  const Checkpoint ck = load_checkpoint(backend_ckpt);
  if (ck.stage != "backend")
    throw ConfigError(msg(backend_ckpt, " holds a '", ck.stage,
                          "' checkpoint; score needs a 'backend' one"));
  const AppConfig ck_cfg =
      AppConfig::from_text(ck.config_text, backend_ckpt + " config snapshot");

  LdaModel lda;
  lda.projection = find_tensor(ck, "lda.projection");
  lda.mean = column_to_vec(find_tensor(ck, "lda.mean"));

  const int num_langs = ck_cfg.get_int("corpus.num_langs");
  Rng dummy(0);
  LrModel lr = LrModel::make(num_langs, lda.rank(),
                             ck_cfg.get_int("backend.experts"), dummy);
  unpack_params(ck, lr.params());

  std::vector<LanguageEmbedding> embs = read_embedding_file(emb_path);
  std::sort(embs.begin(), embs.end(),
            [](const LanguageEmbedding& a, const LanguageEmbedding& b) {
              return a.utt_id < b.utt_id;
            });
  for (const LanguageEmbedding& e : embs)
    if (static_cast<int>(e.values.size()) != lda.in_dim())
      throw ConfigError(msg("embedding '", e.utt_id, "' has dim ",
                            e.values.size(), " but the back-end was fitted on dim ",
                            lda.in_dim()));

  std::vector<ScoreRow> rows(embs.size());
  parallel_for(static_cast<int>(embs.size()), jobs, [&](int i) {
    const LanguageEmbedding& e = embs[static_cast<std::size_t>(i)];
    ScoreRow row;
    row.utt_id = e.utt_id;
    row.scores = lr_score(lr, length_normalize(lda_apply(lda, e.values)));
    rows[static_cast<std::size_t>(i)] = std::move(row);
  });
  write_score_file(out_scores, rows, num_langs);
  std::fprintf(stderr, "score: %zu utterances -> %s\n", rows.size(), out_scores.c_str());
}

EvalResult run_evaluate(const std::string& truth_manifest,
                        const std::string& scores_path) {
  require_artifact(truth_manifest, "truth manifest", "gen-corpus");
  require_artifact(scores_path, "score file", "score");
  int num_langs = 0;
  const std::vector<ScoreRow> rows = read_score_file(scores_path, &num_langs);
  const std::vector<ManifestEntry> truth = read_manifest(truth_manifest);

  std::map<std::string, int> lang_of;
  for (const ManifestEntry& e : truth) lang_of[e.utt_id] = e.lang_id;

  TrialSet trials;
  trials.reserve(rows.size());
  for (const ScoreRow& row : rows) {
    auto it = lang_of.find(row.utt_id);
    if (it == lang_of.end())
      throw ConfigError(msg("scored utterance '", row.utt_id,
                            "' is absent from ", truth_manifest));
    Trial t;
    t.utt_id = row.utt_id;
    t.true_lang = it->second;
    t.scores = row.scores;
    trials.push_back(std::move(t));
  }

  EvalResult result;
  result.trials = static_cast<int>(trials.size());
  result.cavg = cavg(trials, num_langs);
  result.accuracy = accuracy(trials, num_langs);
  result.confusion_counts = confusion(trials, num_langs);
  return result;
}

}  // namespace translid
