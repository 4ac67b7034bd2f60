#include <vector>

#include "doctest.h"
#include "translid/errors.hpp"
#include "translid/optim.hpp"
#include "translid/trainer.hpp"

using namespace translid;

namespace {

TransducerDims tiny_dims() {
  TransducerDims d;
  d.feat_dim = 3;
  d.enc_hidden = 8;
  d.enc_layers = 1;
  d.enc_dim = 6;
  d.subsample = 2;
  d.vocab_tokens = 3;
  d.embed_dim = 4;
  d.pred_hidden = 8;
  d.pred_dim = 6;
  d.joint_dim = 6;
  return d;
}

// Random frames whose mean is shifted per language, so language identity is
// actually learnable from frame statistics.
FeatureSequence synth_utt(Rng& rng, int frames, int dim, int num_tokens,
                          int lang, double mean_shift) {
  FeatureSequence utt;
  utt.utt_id = "u" + std::to_string(rng.uniform_int(1 << 20));
  utt.lang_id = lang;
  utt.frames = Matrix(frames, dim);
  for (std::size_t i = 0; i < utt.frames.size(); ++i)
    utt.frames.data()[i] = lang * mean_shift + rng.gaussian();
  for (int u = 0; u < num_tokens; ++u)
    utt.tokens.push_back(1 + rng.uniform_int(3));
  return utt;
}

std::vector<FeatureSequence> synth_set(Rng& rng, int count, int lang = 0,
                                       double mean_shift = 0.0) {
  std::vector<FeatureSequence> set;
  for (int i = 0; i < count; ++i)
    set.push_back(synth_utt(rng, 10 + rng.uniform_int(5), 3,
                            2 + rng.uniform_int(2), lang, mean_shift));
  return set;
}

}  // namespace

TEST_CASE("adam descends a quadratic and skips frozen tensors") {
  Param p("p", 2, 1);
  p.value(0, 0) = 3.0;
  p.value(1, 0) = -2.0;
  Param q("q", 1, 1);
  q.value(0, 0) = 5.0;
  q.frozen = true;
  Adam adam({&p, &q}, 0.1);
  for (int it = 0; it < 400; ++it) {
    p.zero_grad();
    q.zero_grad();
    p.grad(0, 0) = 2.0 * p.value(0, 0);  // d/dx of x^2
    p.grad(1, 0) = 2.0 * p.value(1, 0);
    q.grad(0, 0) = 2.0 * q.value(0, 0);
    adam.step();
  }
  CHECK(std::abs(p.value(0, 0)) < 1e-3);
  CHECK(std::abs(p.value(1, 0)) < 1e-3);
  CHECK(q.value(0, 0) == 5.0);  // frozen: bit-identical
}

TEST_CASE("gradient clipping caps the global norm and ignores frozen params") {
  Param a("a", 2, 1);
  a.grad(0, 0) = 3.0;
  a.grad(1, 0) = 4.0;
  Param f("f", 1, 1);
  f.grad(0, 0) = 100.0;
  f.frozen = true;

  SUBCASE("norm above the cap is scaled down") {
    const double pre = clip_grad_norm({&a, &f}, 2.0);
    CHECK(pre == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.grad(0, 0) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(a.grad(1, 0) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(f.grad(0, 0) == 100.0);  // frozen grads neither counted nor scaled
  }
  SUBCASE("norm already under the cap is untouched") {
    const double pre = clip_grad_norm({&a, &f}, 10.0);
    CHECK(pre == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.grad(0, 0) == 3.0);
  }
  SUBCASE("non-positive cap disables clipping") {
    clip_grad_norm({&a, &f}, 0.0);
    CHECK(a.grad(0, 0) == 3.0);
  }
}

TEST_CASE("a one-utterance dataset is memorized to near-zero loss") {
  Rng rng(200);
  TransducerModel model(tiny_dims(), rng);
  Rng data_rng = rng.substream("data");
  const FeatureSequence utt = synth_utt(data_rng, 8, 3, 2, 0, 0.0);

  TrainOptions opt;
  opt.epochs = 200;
  opt.batch_size = 1;
  opt.lr = 0.02;
  opt.plateau_patience = 1000000;  // keep the rate fixed for the whole run
  opt.augment = false;
  Rng train_rng = rng.substream("train");
  const TrainLog log = train_rnnt(model, {utt}, {utt}, opt, train_rng);

  REQUIRE(log.train_loss.size() == 200);
  CHECK(log.train_loss.back() < 0.01);
  // A memorized utterance greedily decodes to its exact transcript.
  CHECK(greedy_token_accuracy(model, {utt}, 3) == doctest::Approx(1.0));
}

TEST_CASE("validation loss drops after the first epoch of a seeded run") {
  Rng rng(201);
  TransducerModel model(tiny_dims(), rng);
  Rng data_rng = rng.substream("data");
  const std::vector<FeatureSequence> train = synth_set(data_rng, 16);
  const std::vector<FeatureSequence> val = synth_set(data_rng, 4);

  const double init_loss = rnnt_validation_loss(model, val);
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch_size = 4;
  opt.lr = 0.01;
  opt.augment = false;
  Rng train_rng = rng.substream("train");
  const TrainLog log = train_rnnt(model, train, val, opt, train_rng);
  REQUIRE(log.val_loss.size() == 1);
  CHECK(log.val_loss[0] < init_loss);
}

TEST_CASE("plateau decay halves the learning rate down to the floor") {
  Rng rng(202);
  TransducerModel model(tiny_dims(), rng);
  Rng data_rng = rng.substream("data");
  const std::vector<FeatureSequence> train = synth_set(data_rng, 4);
  const std::vector<FeatureSequence> val = synth_set(data_rng, 2);

  // A vanishing learning rate keeps the validation loss flat, so every
  // epoch after the first counts as stagnant.
  TrainOptions opt;
  opt.epochs = 6;
  opt.batch_size = 4;
  opt.lr = 1e-9;
  opt.min_lr = 3e-10;
  opt.plateau_patience = 2;
  opt.augment = false;
  Rng train_rng = rng.substream("train");
  const TrainLog log = train_rnnt(model, train, val, opt, train_rng);

  REQUIRE(log.lr.size() == 6);
  CHECK(log.lr[0] == 1e-9);   // first epoch always "improves" on infinity
  CHECK(log.lr[1] == 1e-9);   // one stagnant epoch: below patience
  CHECK(log.lr[2] == 5e-10);  // second stagnant epoch: halved
  CHECK(log.lr[3] == 5e-10);
  CHECK(log.lr[4] == 3e-10);  // halving clamps at the floor
  CHECK(log.lr[5] == 3e-10);
}

TEST_CASE("lid training learns separable languages and honors the freeze mask") {
  Rng rng(203);
  const TransducerDims dims = tiny_dims();
  LidModel model(dims, StreamVariant::kEncoderOnly, 2, 8, 1.0, 0.3, 3, rng);

  Rng data_rng = rng.substream("data");
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> val;
  for (int lang = 0; lang < 2; ++lang) {
    for (const FeatureSequence& u : synth_set(data_rng, 8, lang, 1.5))
      train.push_back(u);
    for (const FeatureSequence& u : synth_set(data_rng, 3, lang, 1.5))
      val.push_back(u);
  }

  FreezeMask mask;
  mask.train_encoder = false;
  const std::uint64_t enc_sum =
      value_checksum(model.transducer().encoder.params());
  const std::uint64_t head_sum = value_checksum(model.head_params());

  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 4;
  opt.lr = 5e-3;
  opt.augment = false;
  Rng train_rng = rng.substream("train");
  const TrainLog log = train_lid(model, train, val, mask, opt, train_rng);

  REQUIRE(log.train_loss.size() == 3);
  CHECK(log.train_loss.back() < log.train_loss.front());
  CHECK(log.val_metric.back() >= 0.5);
  CHECK(value_checksum(model.transducer().encoder.params()) == enc_sum);
  CHECK(value_checksum(model.head_params()) != head_sum);
}

TEST_CASE("identical seeds give bit-identical trained models") {
  auto run = [] {
    Rng rng(204);
    TransducerModel model(tiny_dims(), rng);
    Rng data_rng = rng.substream("data");
    const std::vector<FeatureSequence> train = synth_set(data_rng, 6);
    const std::vector<FeatureSequence> val = synth_set(data_rng, 2);
    TrainOptions opt;
    opt.epochs = 2;
    opt.batch_size = 2;
    opt.lr = 5e-3;
    opt.augment = true;  // augmentation draws must be reproducible too
    opt.max_t = 3;
    opt.max_f = 1;
    Rng train_rng = rng.substream("train");
    const TrainLog log = train_rnnt(model, train, val, opt, train_rng);
    return std::pair<std::uint64_t, std::vector<double>>(
        value_checksum(model.params()), log.val_loss);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("bad training sets are refused up front") {
  Rng rng(205);
  TransducerModel model(tiny_dims(), rng);
  Rng data_rng = rng.substream("data");
  std::vector<FeatureSequence> train = synth_set(data_rng, 2);
  const std::vector<FeatureSequence> val = synth_set(data_rng, 1);
  TrainOptions opt;
  opt.epochs = 1;
  Rng train_rng = rng.substream("train");

  SUBCASE("missing transcript") {
    train[1].tokens.clear();
    CHECK_THROWS_WITH_AS(train_rnnt(model, train, val, opt, train_rng),
                         doctest::Contains("no transcript"), ConfigError);
  }
  SUBCASE("empty split") {
    CHECK_THROWS_AS(train_rnnt(model, {}, val, opt, train_rng),
                    std::invalid_argument);
  }
  SUBCASE("language id out of range") {
    LidModel lid(tiny_dims(), StreamVariant::kEncoderOnly, 2, 8, 1.0, 0.3, 3,
                 rng);
    train[0].lang_id = 7;
    CHECK_THROWS_WITH_AS(
        train_lid(lid, train, val, FreezeMask{}, opt, train_rng),
        doctest::Contains("language id"), ConfigError);
  }
}
