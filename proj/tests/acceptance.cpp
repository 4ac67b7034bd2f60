// Acceptance suite: one binary, one PASS/FAIL line per numbered system
// property. Run with no arguments for the full suite or pass criterion
// numbers (e.g. `acceptance 1 4 6`) to run a subset. Exit code 0 iff every
// selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "translid/backend.hpp"
#include "translid/config.hpp"
#include "translid/corpus.hpp"
#include "translid/embedder.hpp"
#include "translid/gradcheck.hpp"
#include "translid/io.hpp"
#include "translid/metrics.hpp"
#include "translid/pipeline.hpp"
#include "translid/trainer.hpp"
#include "translid/transducer.hpp"

namespace fs = std::filesystem;
using namespace translid;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return std::string(buf);
}

bool bits_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  return a.empty() ||
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// 1. Lattice DP equals exhaustive path enumeration.
// ---------------------------------------------------------------------------

Lattice random_lattice(int t_len, int u_len, int num_classes, Rng& rng) {
  Lattice lat(t_len, u_len, num_classes);
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u <= u_len; ++u) {
      double mx = kNegInf;
      for (int k = 0; k < num_classes; ++k) {
        lat.at(t, u, k) = 2.0 * rng.gaussian();
        mx = std::max(mx, lat.at(t, u, k));
      }
      double z = 0.0;
      for (int k = 0; k < num_classes; ++k) z += std::exp(lat.at(t, u, k) - mx);
      const double log_z = mx + std::log(z);
      for (int k = 0; k < num_classes; ++k) lat.at(t, u, k) -= log_z;
    }
  }
  return lat;
}

Outcome check_loss_vs_enumeration() {
  const double t0 = now_s();
  Rng rng(9001);
  double max_err = 0.0;
  std::uint64_t total_paths = 0;
  for (int i = 0; i < 200; ++i) {
    const int t_len = 1 + rng.uniform_int(4);   // 1..4
    const int u_len = rng.uniform_int(4);       // 0..3
    const int vocab = 1 + rng.uniform_int(4);   // 1..4 tokens
    Lattice lat = random_lattice(t_len, u_len, vocab + 1, rng);
    std::vector<int> labels(u_len);
    for (int& l : labels) l = 1 + rng.uniform_int(vocab);
    const double dp = rnnt_log_prob(lat, labels);
    std::uint64_t paths = 0;
    const double brute = enumerate_paths_log_prob(lat, labels, &paths);
    total_paths += paths;
    max_err = std::max(max_err, std::fabs(dp - brute));
  }
  const double dt = now_s() - t0;
  const bool ok = max_err <= 1e-10 && dt < 10.0;
  return {ok, fmt("loss vs enumeration: 200 lattices, %llu paths, "
                  "max |dp - brute| %.2e (%.1f s)",
                  static_cast<unsigned long long>(total_paths), max_err, dt)};
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

TransducerDims grad_dims() {
  TransducerDims d;
  d.feat_dim = 3;
  d.enc_hidden = 4;
  d.enc_layers = 1;
  d.enc_dim = 3;
  d.subsample = 2;
  d.vocab_tokens = 3;
  d.embed_dim = 3;
  d.pred_hidden = 4;
  d.pred_dim = 3;
  d.joint_dim = 4;
  return d;
}

Matrix random_frames(int t, int d, Rng& rng) {
  Matrix m(t, d);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = rng.gaussian();
  return m;
}

Outcome check_gradients() {
  const double t0 = now_s();
  std::vector<std::string> parts;

  // Transducer loss end to end (encoder + prediction + joint through the
  // lattice backward).
  double err_rnnt;
  {
    Rng rng(44);
    TransducerModel m(grad_dims(), rng);
    const Matrix frames = random_frames(6, 3, rng);
    const std::vector<int> labels{1, 3};
    zero_grads(m.params());
    rnnt_loss(m, frames, labels, 1.0);
    err_rnnt = grad_check([&] { return rnnt_loss(m, frames, labels, 0.0); },
                          m.params(), 3e-5);
  }

  // One LSTM layer under a fixed linear readout of every step.
  double err_lstm;
  {
    Rng rng(43);
    LstmLayer lstm("g", 3, 4, rng);
    std::vector<Vec> xs(5, Vec(3));
    std::vector<Vec> readout(5, Vec(4));
    for (auto& x : xs)
      for (double& v : x) v = rng.gaussian();
    for (auto& w : readout)
      for (double& v : w) v = rng.gaussian();
    auto loss = [&] {
      const std::vector<Vec> hs = lstm.forward(xs);
      double acc = 0.0;
      for (std::size_t t = 0; t < hs.size(); ++t)
        for (std::size_t j = 0; j < hs[t].size(); ++j)
          acc += readout[t][j] * hs[t][j];
      return acc;
    };
    zero_grads(lstm.params());
    LstmLayer::Tape tape;
    lstm.forward(xs, &tape);
    lstm.backward(tape, readout);
    err_lstm = grad_check(loss, lstm.params(), 1e-5);
  }

  // Joint network through the full lattice gradient.
  double err_joint;
  {
    Rng rng(44);
    JointNet jn(3, 3, 4, 3, rng);
    std::vector<Vec> enc(3, Vec(3)), pred(3, Vec(3));
    for (auto& v : enc)
      for (double& x : v) x = rng.gaussian();
    for (auto& v : pred)
      for (double& x : v) x = rng.gaussian();
    const std::vector<int> labels{2, 1};
    auto loss = [&] {
      return -rnnt_log_prob(joint_lattice(jn, enc, pred), labels);
    };
    zero_grads(jn.params());
    Matrix z_cache;
    Lattice lat = joint_lattice(jn, enc, pred, &z_cache);
    const std::vector<double> d_logits = rnnt_lattice_grad(lat, labels);
    std::vector<Vec> dhe(enc.size(), Vec(3, 0.0));
    std::vector<Vec> dhp(pred.size(), Vec(3, 0.0));
    joint_lattice_backward(jn, enc, pred, z_cache, d_logits, 1.0, dhe, dhp);
    err_joint = grad_check(loss, jn.params(), 1e-5);
  }

  // Utterance head (both pooled branches, FC stacks, output layer) under the
  // language cross-entropy. Head parameters never influence the decode, so
  // the loss stays smooth in every checked coordinate.
  double err_head;
  {
    Rng rng(45);
    LidModel model(grad_dims(), StreamVariant::kLateDual, 3, 5, 1.0, 0.3, 2,
                   rng);
    const Matrix frames = random_frames(12, 3, rng);
    zero_grads(model.params());
    model.ce_loss(frames, 1, 1.0);
    err_head = grad_check([&] { return model.ce_loss(frames, 1, 0.0); },
                          model.head_params(), 1e-5);
  }

  // Mixture logistic regression objective (experts + gate), tight tolerance.
  double err_lr;
  {
    Rng rng(46);
    LrModel lr = LrModel::make(3, 4, 2, rng);
    std::vector<Vec> feats(12, Vec(4));
    std::vector<int> labels(12);
    for (auto& f : feats)
      for (double& v : f) v = rng.gaussian();
    for (auto& l : labels) l = rng.uniform_int(3);
    auto loss = [&] { return lr_objective(lr, feats, labels, 1e-3, 0.0); };
    zero_grads(lr.params());
    lr_objective(lr, feats, labels, 1e-3, 1.0);
    err_lr = grad_check(loss, lr.params(), 1e-5);
  }

  const double dt = now_s() - t0;
  const double worst =
      std::max({err_rnnt, err_lstm, err_joint, err_head});
  const bool ok = worst <= 1e-4 && err_lr <= 1e-6 && dt < 60.0;
  return {ok, fmt("finite differences: transducer %.1e, lstm %.1e, joint %.1e, "
                  "head %.1e, mixture-lr %.1e (%.1f s)",
                  err_rnnt, err_lstm, err_joint, err_head, err_lr, dt)};
}

// ---------------------------------------------------------------------------
// 3. Greedy decode honors the per-frame emission budget.
// ---------------------------------------------------------------------------

Outcome check_decode_contract() {
  Rng rng(77);
  int checked = 0;
  for (int round = 0; round < 20; ++round) {
    Rng init = rng.substream(1000 + round);
    TransducerDims d = grad_dims();
    d.vocab_tokens = 4;
    TransducerModel m(d, init);
    for (int i = 0; i < 25; ++i) {
      const int t = 4 + rng.uniform_int(37);
      const int tau = 1 + rng.uniform_int(4);
      const Matrix frames = random_frames(t, d.feat_dim, rng);
      const std::vector<Vec> enc = m.encoder.forward(frames);
      const DecodeTrace tr = greedy_decode(m.prediction, m.joint, enc, tau);
      const int t_out = static_cast<int>(enc.size());
      if (static_cast<int>(tr.per_frame_emits.size()) != t_out)
        return {false, fmt("decode %d: per-frame ledger has %zu entries for "
                           "%d frames",
                           checked, tr.per_frame_emits.size(), t_out)};
      int emitted = 0;
      for (const int e : tr.per_frame_emits) {
        if (e < 0 || e > tau)
          return {false, fmt("decode %d: frame emitted %d tokens with budget "
                             "tau=%d",
                             checked, e, tau)};
        emitted += e;
      }
      const int pairs = tr.num_pairs();
      if (pairs < t_out || pairs > tau * t_out)
        return {false, fmt("decode %d: %d joint evaluations outside [%d, %d]",
                           checked, pairs, t_out, tau * t_out)};
      if (tau == 1 && pairs != t_out)
        return {false, fmt("decode %d: tau=1 made %d evaluations for %d "
                           "frames",
                           checked, pairs, t_out)};
      if (static_cast<int>(tr.tokens.size()) != emitted)
        return {false, fmt("decode %d: %zu tokens vs %d ledger emissions",
                           checked, tr.tokens.size(), emitted)};
      ++checked;
    }
  }
  return {true, fmt("emission budget: %d random decodes, tau 1..4, every "
                    "per-frame count, pair bound and token total consistent",
                    checked)};
}

// ---------------------------------------------------------------------------
// 4. Fusion reductions honor their exact identities.
// ---------------------------------------------------------------------------

Outcome check_fusion_identities() {
  Rng rng(123);

  // Early additive fusion at lambda = 0 must return the aligned encoder
  // vectors themselves.
  {
    Rng init = rng.substream(1);
    TransducerDims d = grad_dims();
    TransducerModel m(d, init);
    const Matrix frames = random_frames(24, d.feat_dim, rng);
    const std::vector<Vec> enc = m.encoder.forward(frames);
    const DecodeTrace tr = greedy_decode(m.prediction, m.joint, enc, 3);
    const std::vector<Vec> fused = early_fuse(tr, enc, 0.0);
    if (static_cast<int>(fused.size()) != tr.num_pairs())
      return {false, "early fusion changed the pair count at lambda=0"};
    for (int i = 0; i < tr.num_pairs(); ++i)
      if (!bits_equal(fused[i], enc[tr.pairs[i].t]))
        return {false, fmt("early fusion at lambda=0 perturbed pair %d", i)};
  }

  // Late dual-branch fusion at alpha = 0 must reproduce the encoder-only
  // model bit for bit once the shared weights agree.
  {
    Rng init_a = rng.substream(2);
    Rng init_b = rng.substream(3);
    TransducerDims d = grad_dims();
    LidModel dual(d, StreamVariant::kLateDual, 3, 5, 1.0, 0.0, 2, init_a);
    LidModel solo(d, StreamVariant::kEncoderOnly, 3, 5, 1.0, 0.3, 2, init_b);
    auto copy_params = [](std::vector<Param*> src, std::vector<Param*> dst) {
      for (std::size_t i = 0; i < src.size(); ++i)
        dst[i]->value = src[i]->value;
    };
    copy_params(dual.transducer().params(), solo.transducer().params());
    copy_params(dual.head_main().params(), solo.head_main().params());
    copy_params(dual.output_layer().params(), solo.output_layer().params());
    const Matrix frames = random_frames(30, d.feat_dim, rng);
    LidModel::Fwd fa = dual.forward(frames);
    LidModel::Fwd fb = solo.forward(frames);
    // The dual model taps its embedding at the fusion point, so alpha = 0
    // must reproduce the encoder branch's merge input bit for bit.
    if (!bits_equal(fa.embedding, fb.fused))
      return {false, "late fusion at alpha=0 changed the embedding bits"};
    if (!bits_equal(fa.log_post, fb.log_post))
      return {false, "late fusion at alpha=0 changed the posterior bits"};
  }

  // Statistics pooling must be exactly permutation invariant.
  {
    std::vector<Vec> seq(31, Vec(7));
    for (auto& v : seq)
      for (double& x : v) x = rng.gaussian();
    std::vector<Vec> shuffled = seq;
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);
    std::reverse(shuffled.begin(), shuffled.end());
    if (!bits_equal(stats_pool(seq), stats_pool(shuffled)))
      return {false, "statistics pooling depends on frame order"};
  }

  return {true, "early fusion lambda=0 identity, late fusion alpha=0 bitwise "
                "match, pooling permutation invariance"};
}

// ---------------------------------------------------------------------------
// 5. Back-end building blocks behave canonically.
// ---------------------------------------------------------------------------

// Solves A x = b for symmetric positive-definite A by Gaussian elimination
// with partial pivoting (the oracle solver, independent of the library).
Vec gauss_solve(Matrix a, Vec b) {
  const int n = a.rows();
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(piv, col))) piv = r;
    for (int c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (int c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  Vec x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a(r, c) * x[c];
    x[r] = acc / a(r, r);
  }
  return x;
}

Outcome check_backend() {
  Rng rng(555);
  const int dim = 6;

  // Two-class projection vs the closed-form discriminant direction computed
  // from the sample statistics.
  double angle_deg;
  {
    Matrix mixing(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c)
        mixing(r, c) = (r == c ? 1.0 : 0.0) + 0.3 * rng.gaussian();
    Vec mean1(dim);
    for (double& v : mean1) v = 1.5 * rng.gaussian();
    std::vector<Vec> xs;
    std::vector<int> ys;
    for (int cls = 0; cls < 2; ++cls) {
      for (int i = 0; i < 300; ++i) {
        Vec g(dim);
        for (double& v : g) v = rng.gaussian();
        Vec x(dim, 0.0);
        for (int r = 0; r < dim; ++r) {
          for (int c = 0; c < dim; ++c) x[r] += mixing(r, c) * g[c];
          x[r] += cls == 1 ? mean1[r] : 0.0;
        }
        xs.push_back(std::move(x));
        ys.push_back(cls);
      }
    }
    const LdaModel lda = lda_fit(xs, ys, 2, 1);
    Vec mu0(dim, 0.0), mu1(dim, 0.0);
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Vec& mu = ys[i] == 0 ? mu0 : mu1;
      (ys[i] == 0 ? n0 : n1)++;
      for (int r = 0; r < dim; ++r) mu[r] += xs[i][r];
    }
    for (int r = 0; r < dim; ++r) {
      mu0[r] /= n0;
      mu1[r] /= n1;
    }
    Matrix sw(dim, dim);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vec& mu = ys[i] == 0 ? mu0 : mu1;
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
          sw(r, c) += (xs[i][r] - mu[r]) * (xs[i][c] - mu[c]);
    }
    Vec diff(dim);
    for (int r = 0; r < dim; ++r) diff[r] = mu1[r] - mu0[r];
    const Vec oracle = gauss_solve(sw, diff);
    Vec fitted(dim);
    for (int c = 0; c < dim; ++c) fitted[c] = lda.projection(0, c);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int r = 0; r < dim; ++r) {
      dot += fitted[r] * oracle[r];
      na += fitted[r] * fitted[r];
      nb += oracle[r] * oracle[r];
    }
    const double cosang =
        std::min(1.0, std::fabs(dot) / std::sqrt(na * nb));
    angle_deg = std::acos(cosang) * 180.0 / 3.14159265358979323846;
    if (angle_deg > 1.0)
      return {false, fmt("projection is %.3f degrees off the closed-form "
                         "discriminant",
                         angle_deg)};
  }

  // Length normalization must land on the unit sphere.
  double worst_norm = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int n = 1 + rng.uniform_int(10);
    Vec x(n);
    const double scale = std::pow(10.0, rng.uniform(-6.0, 6.0));
    for (double& v : x) v = scale * rng.gaussian();
    bool zero = true;
    for (double v : x) zero = zero && v == 0.0;
    if (zero) x[0] = scale;
    const Vec y = length_normalize(x);
    double norm = 0.0;
    for (double v : y) norm += v * v;
    worst_norm = std::max(worst_norm, std::fabs(std::sqrt(norm) - 1.0));
  }
  if (worst_norm > 1e-12)
    return {false, fmt("length normalization off the unit sphere by %.2e",
                       worst_norm)};

  // Plain logistic regression must separate a separable set completely.
  int iters = 500;
  double lr_acc;
  {
    std::vector<Vec> xs;
    std::vector<int> ys;
    const double means[3][2] = {{0.0, 6.0}, {-5.0, -3.0}, {5.0, -3.0}};
    for (int cls = 0; cls < 3; ++cls)
      for (int i = 0; i < 20; ++i) {
        xs.push_back({means[cls][0] + 0.5 * rng.gaussian(),
                      means[cls][1] + 0.5 * rng.gaussian()});
        ys.push_back(cls);
      }
    Rng fit_rng(1);
    const LrModel lr = lr_fit(xs, ys, 3, 1, 0.0, iters, fit_rng);
    int hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vec post = lr_score(lr, xs[i]);
      hits += decide(post) == ys[i] ? 1 : 0;
    }
    lr_acc = static_cast<double>(hits) / xs.size();
    if (lr_acc != 1.0)
      return {false, fmt("logistic regression reached only %.3f train "
                         "accuracy after %d iterations",
                         lr_acc, iters)};
  }

  return {true, fmt("projection within %.3f deg of the closed form, unit "
                    "norms within %.1e, classifier separates within %d "
                    "iterations",
                    angle_deg, worst_norm, iters)};
}

// ---------------------------------------------------------------------------
// 6. Detection cost matches hand-computed and analytic values.
// ---------------------------------------------------------------------------

Trial make_trial(int true_lang, int decided, int n) {
  Trial t;
  t.true_lang = true_lang;
  t.scores.assign(n, 0.0);
  t.scores[decided] = 1.0;
  return t;
}

Outcome check_cavg() {
  // Hand-computed three-trial case: P_miss(0)=1/2, P_miss(1)=0, P_fa(1,0)=1/2
  // => 0.5*[(0.25 + 0) + (0 + 0.25)] = 0.25.
  const TrialSet hand{make_trial(0, 0, 2), make_trial(0, 1, 2),
                      make_trial(1, 1, 2)};
  const double hand_cost = cavg(hand, 2);
  if (std::fabs(hand_cost - 0.25) > 1e-12)
    return {false, fmt("hand-counted case scored %.6f, want 0.25", hand_cost)};

  TrialSet perfect;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 25; ++i) perfect.push_back(make_trial(c, c, 4));
  const double perfect_cost = cavg(perfect, 4);
  if (perfect_cost != 0.0)
    return {false, fmt("perfect decisions cost %.6f", perfect_cost)};

  // Uniform random scores: expected miss rate (N-1)/N and false-alarm rate
  // 1/N put the expected cost at exactly 1/2 for any N.
  Rng rng(31337);
  TrialSet random_trials;
  const int n_langs = 4;
  for (int i = 0; i < 10000; ++i) {
    Trial t;
    t.true_lang = rng.uniform_int(n_langs);
    t.scores.resize(n_langs);
    for (double& s : t.scores) s = rng.uniform();
    random_trials.push_back(std::move(t));
  }
  const double rand_cost = cavg(random_trials, n_langs);
  if (std::fabs(rand_cost - 0.5) > 0.02)
    return {false, fmt("random decisions cost %.4f, want 0.5 +/- 0.02",
                       rand_cost)};

  return {true, fmt("hand-counted 0.25 exact, perfect 0, random %.4f vs "
                    "analytic 0.5",
                    rand_cost)};
}

// ---------------------------------------------------------------------------
// Shared helpers for the trained-system criteria.
// ---------------------------------------------------------------------------

const fs::path kWorkRoot = fs::temp_directory_path() / "translid-acceptance";

// Writes a class-balanced subset manifest next to the full one so that the
// back-end can be fitted on a fixed number of utterances per language.
void write_subset_manifest(const std::string& corpus_dir,
                           const std::string& out_name, int per_lang) {
  const auto full = read_manifest(corpus_dir + "/train.tsv");
  std::map<int, int> kept;
  std::vector<ManifestEntry> subset;
  for (const auto& e : full)
    if (kept[e.lang_id]++ < per_lang) subset.push_back(e);
  write_manifest(corpus_dir + "/" + out_name + ".tsv", subset);
}

struct VariantResult {
  double in_cavg = 0.0;
  double cross_cavg = 0.0;
  double in_acc = 0.0;
};

// Trains one head variant on top of a shared transducer checkpoint, extracts
// embeddings, fits the back-end and scores both evaluation conditions.
VariantResult run_variant(AppConfig cfg, const std::string& corpus,
                          const std::string& rnnt_ckpt, const fs::path& dir,
                          const std::string& variant,
                          const std::string& eval_split,
                          const std::string& cross_split) {
  fs::create_directories(dir);
  cfg.apply_override("fusion.variant=" + variant);
  const std::string lid = (dir / "lid.ckpt").string();
  run_train_lid(cfg, corpus, rnnt_ckpt, lid);
  run_extract(cfg, corpus, lid, "train_sub", (dir / "train.emb").string());
  run_extract(cfg, corpus, lid, eval_split, (dir / "eval.emb").string());
  const std::string backend = (dir / "backend.ckpt").string();
  run_backend_fit(cfg, (dir / "train.emb").string(), backend);
  run_score(backend, (dir / "eval.emb").string(),
            (dir / "eval.scores").string());
  VariantResult r;
  const EvalResult in_eval =
      run_evaluate(corpus + "/" + eval_split + ".tsv",
                   (dir / "eval.scores").string());
  r.in_cavg = in_eval.cavg;
  r.in_acc = in_eval.accuracy;
  if (!cross_split.empty()) {
    run_extract(cfg, corpus, lid, cross_split, (dir / "cross.emb").string());
    run_score(backend, (dir / "cross.emb").string(),
              (dir / "cross.scores").string());
    r.cross_cavg = run_evaluate(corpus + "/" + cross_split + ".tsv",
                                (dir / "cross.scores").string())
                       .cavg;
  }
  return r;
}

// ---------------------------------------------------------------------------
// 7 + 8. Fusion beats the single streams in domain and degrades no faster
// than the acoustic stream across the channel shift.
// ---------------------------------------------------------------------------

// Desk-scale training recipe: the acoustic stream is kept deliberately small
// relative to the linguistic stream, the shared transducer is frozen while
// the utterance heads train, and evaluation uses the short-crop condition
// where stream fusion matters most.
AppConfig table_config() {
  AppConfig cfg;
  for (const char* o : {
           "model.enc_hidden=16", "model.enc_layers=1", "model.enc_dim=16",
           "model.subsample=4", "model.embed_dim=8", "model.pred_hidden=32",
           "model.pred_dim=16", "model.joint_dim=32", "model.head_dim=64",
           "fusion.variant=early-fused", "fusion.lambda=1.0",
           "fusion.alpha=0.3", "fusion.tau=3",
           "freeze.train_encoder=false", "freeze.train_prediction=false",
           "freeze.train_joint=false",
           "corpus.shift_offset=1.2", "corpus.shift_noise=0.8",
           "corpus.shift_rate=1.0",
           "train.rnnt_epochs=4", "train.rnnt_utts_per_epoch=400",
           "train.lid_epochs=6", "train.lid_utts_per_epoch=400",
           "train.val_utts=40", "train.batch_size=2",
           "backend.lda_dim=3",
       })
    cfg.apply_override(o);
  return cfg;
}

struct TableOutcome {
  Outcome in_domain;
  Outcome cross_domain;
};

TableOutcome check_fusion_tables() {
  const double t0 = now_s();
  const fs::path root = kWorkRoot / "table";
  fs::remove_all(root);
  fs::create_directories(root);

  AppConfig base = table_config();
  base.validate();
  const std::string corpus = (root / "corpus").string();
  {
    AppConfig gen = base;
    gen.apply_override("run.seed=7");
    run_gen_corpus(gen, corpus);
  }
  write_subset_manifest(corpus, "train_sub", 100);

  const int n_seeds = 5;
  const char* fused_variant = "early-fused";
  const std::string eval_split = "test_100";
  const std::string cross_split = "test_shifted_full";
  std::map<std::string, std::vector<VariantResult>> by_variant;
  for (int s = 0; s < n_seeds; ++s) {
    AppConfig cfg = base;
    cfg.apply_override("run.seed=" + std::to_string(11 + s));
    const fs::path seed_dir = root / fmt("seed%02d", 11 + s);
    fs::create_directories(seed_dir);
    const std::string rnnt = (seed_dir / "rnnt.ckpt").string();
    run_train_rnnt(cfg, corpus, rnnt);
    for (const std::string& variant :
         {std::string(fused_variant), std::string("encoder-only"),
          std::string("prediction-only")}) {
      by_variant[variant].push_back(run_variant(cfg, corpus, rnnt,
                                                seed_dir / variant, variant,
                                                eval_split, cross_split));
    }
  }

  auto mean_in = [&](const std::string& v) {
    double acc = 0.0;
    for (const auto& r : by_variant[v]) acc += r.in_cavg;
    return acc / n_seeds;
  };
  const double fused = mean_in(fused_variant);
  const double enc = mean_in("encoder-only");
  const double pred = mean_in("prediction-only");
  const double gap = enc > 0.0 ? (enc - fused) / enc : 0.0;
  const double dt = now_s() - t0;

  TableOutcome out;
  const bool ordered = fused < enc && enc < pred;
  out.in_domain.pass = ordered && gap >= 0.10 && dt < 1800.0;
  out.in_domain.detail =
      fmt("in-domain mean over %d seeds: fused %.4f %s encoder %.4f %s "
          "prediction %.4f, fused %.0f%% below encoder (%.0f s)",
          n_seeds, fused, fused < enc ? "<" : ">=", enc,
          enc < pred ? "<" : ">=", pred, 100.0 * gap, dt);

  int cross_wins = 0;
  for (int s = 0; s < n_seeds; ++s)
    cross_wins += by_variant[fused_variant][s].cross_cavg <=
                          by_variant["encoder-only"][s].cross_cavg
                      ? 1
                      : 0;
  double fused_cross = 0.0, enc_cross = 0.0;
  for (const auto& r : by_variant[fused_variant]) fused_cross += r.cross_cavg;
  for (const auto& r : by_variant["encoder-only"]) enc_cross += r.cross_cavg;
  out.cross_domain.pass = cross_wins >= 4;
  out.cross_domain.detail =
      fmt("shifted-channel condition: fused <= encoder in %d/%d seeds "
          "(mean fused %.4f vs encoder %.4f)",
          cross_wins, n_seeds, fused_cross / n_seeds, enc_cross / n_seeds);
  return out;
}

// ---------------------------------------------------------------------------
// 9. Zero-divergence control stays at chance for every stream variant.
// ---------------------------------------------------------------------------

Outcome check_chance_control() {
  const fs::path root = kWorkRoot / "control";
  fs::remove_all(root);
  fs::create_directories(root);

  // Symmetric stream widths so every variant, including the early additive
  // one, is constructible on the same transducer.
  AppConfig base;
  for (const char* o : {
           "model.enc_hidden=16", "model.enc_layers=1", "model.enc_dim=16",
           "model.subsample=4", "model.embed_dim=8", "model.pred_hidden=32",
           "model.pred_dim=16", "model.joint_dim=32", "model.head_dim=64",
           "freeze.train_encoder=false", "freeze.train_prediction=false",
           "freeze.train_joint=false",
           "corpus.divergence=0.0", "corpus.train_per_lang=80",
           "corpus.val_per_lang=10", "corpus.test_per_lang=60",
           "corpus.min_frames=150", "corpus.max_frames=300",
           "corpus.crop_frames=100",
           "train.rnnt_epochs=1", "train.rnnt_utts_per_epoch=150",
           "train.lid_epochs=1", "train.lid_utts_per_epoch=150",
           "train.val_utts=20", "train.batch_size=2", "backend.lda_dim=3",
           "run.seed=7",
       })
    base.apply_override(o);
  base.validate();

  const std::string corpus = (root / "corpus").string();
  run_gen_corpus(base, corpus);
  write_subset_manifest(corpus, "train_sub", 80);
  const std::string rnnt = (root / "rnnt.ckpt").string();
  run_train_rnnt(base, corpus, rnnt);

  const int trials = 4 * 60;
  const double p = 1.0 / 4.0;
  const double sigma = std::sqrt(p * (1.0 - p) / trials);
  const double lo = p - 3.0 * sigma, hi = p + 3.0 * sigma;
  std::string report;
  for (const char* variant :
       {"encoder-only", "prediction-only", "joint-z", "early-fused",
        "late-dual"}) {
    const VariantResult r = run_variant(base, corpus, rnnt, root / variant,
                                        variant, "test_full", "");
    report += fmt("%s%s %.3f", report.empty() ? "" : ", ", variant, r.in_acc);
    if (r.in_acc < lo || r.in_acc > hi)
      return {false,
              fmt("identical-language control: %s accuracy %.3f escapes the "
                  "chance band [%.3f, %.3f] over %d trials",
                  variant, r.in_acc, lo, hi, trials)};
  }
  return {true, fmt("identical-language control inside [%.3f, %.3f]: %s",
                    lo, hi, report.c_str())};
}

// ---------------------------------------------------------------------------
// 10. The full pipeline is bit-reproducible.
// ---------------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome check_reproducibility() {
  AppConfig base;
  for (const char* o : {
           "model.enc_hidden=12", "model.enc_layers=1", "model.enc_dim=10",
           "model.subsample=2", "model.embed_dim=6", "model.pred_hidden=12",
           "model.pred_dim=10", "model.joint_dim=10", "model.head_dim=12",
           "corpus.num_langs=3", "corpus.num_tokens=6", "corpus.feat_dim=8",
           "corpus.train_per_lang=12", "corpus.val_per_lang=4",
           "corpus.test_per_lang=6", "corpus.min_frames=40",
           "corpus.max_frames=60", "corpus.crop_frames=20",
           "train.rnnt_epochs=1", "train.lid_epochs=1", "train.batch_size=4",
           "backend.lda_dim=2", "run.seed=97",
       })
    base.apply_override(o);
  base.validate();

  auto run_once = [&](const fs::path& root) {
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string corpus = (root / "corpus").string();
    run_gen_corpus(base, corpus);
    const std::string rnnt = (root / "rnnt.ckpt").string();
    const std::string lid = (root / "lid.ckpt").string();
    const std::string backend = (root / "backend.ckpt").string();
    run_train_rnnt(base, corpus, rnnt);
    run_train_lid(base, corpus, rnnt, lid);
    run_extract(base, corpus, lid, "train", (root / "train.emb").string());
    run_extract(base, corpus, lid, "test_full",
                (root / "test.emb").string(), 2);
    run_backend_fit(base, (root / "train.emb").string(), backend);
    run_score(backend, (root / "test.emb").string(),
              (root / "test.scores").string(), 2);
  };
  const fs::path a = kWorkRoot / "repro_a";
  const fs::path b = kWorkRoot / "repro_b";
  run_once(a);
  run_once(b);
  const std::string scores_a = file_bytes(a / "test.scores");
  if (scores_a.empty())
    return {false, "first pipeline pass produced an empty score file"};
  if (scores_a != file_bytes(b / "test.scores"))
    return {false, "two identically seeded pipeline passes disagree on the "
                   "score file bytes"};
  if (file_bytes(a / "test.emb") != file_bytes(b / "test.emb"))
    return {false, "two identically seeded pipeline passes disagree on the "
                   "embedding bytes"};
  return {true, fmt("two full passes, %zu score bytes and the embedding file "
                    "bit-identical (2 worker threads)",
                    scores_a.size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int idx) {
    return selected.empty() || selected.count(idx) > 0;
  };

  std::map<int, Outcome> results;
  auto run = [&](int idx, const std::function<Outcome()>& f) {
    if (!wanted(idx)) return;
    try {
      results[idx] = f();
    } catch (const std::exception& e) {
      results[idx] = {false, fmt("exception: %s", e.what())};
    }
  };

  run(1, check_loss_vs_enumeration);
  run(2, check_gradients);
  run(3, check_decode_contract);
  run(4, check_fusion_identities);
  run(5, check_backend);
  run(6, check_cavg);
  if (wanted(7) || wanted(8)) {
    try {
      const TableOutcome t = check_fusion_tables();
      if (wanted(7)) results[7] = t.in_domain;
      if (wanted(8)) results[8] = t.cross_domain;
    } catch (const std::exception& e) {
      const Outcome o{false, fmt("exception: %s", e.what())};
      if (wanted(7)) results[7] = o;
      if (wanted(8)) results[8] = o;
    }
  }
  run(9, check_chance_control);
  run(10, check_reproducibility);

  bool all_pass = true;
  for (const auto& [idx, outcome] : results) {
    std::printf("[%2d] %s %s\n", idx, outcome.pass ? "PASS" : "FAIL",
                outcome.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && outcome.pass;
  }
  return all_pass ? 0 : 1;
}
