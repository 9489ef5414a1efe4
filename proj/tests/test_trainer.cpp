#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "doctest.h"
#include "ktup/error.hpp"
#include "ktup/trainer.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace ktup;

namespace {

EmbeddingSpace scalar_space() {
  SpaceShape s;
  s.dim = 1;
  s.num_users = 1;
  return EmbeddingSpace::init(s, 1);
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("sgd step") {
  EmbeddingSpace space = scalar_space();
  space.mat(Param::user).row(0)[0] = 1.0f;
  OptState opt(OptKind::sgd, space, 0.1);
  double g = 1.0;
  opt.apply(space, Param::user, 0, std::span<const double>(&g, 1));
  CHECK(space.mat(Param::user).row(0)[0] == doctest::Approx(0.9));
}

TEST_CASE("adagrad first step equals scaled sgd") {
  EmbeddingSpace space = scalar_space();
  space.mat(Param::user).row(0)[0] = 0.5f;
  OptState opt(OptKind::adagrad, space, 0.1);
  double g = 0.3;
  opt.apply(space, Param::user, 0, std::span<const double>(&g, 1));
  double expected = 0.5 - 0.1 * g / std::sqrt(g * g + 1e-8);
  CHECK(space.mat(Param::user).row(0)[0] == doctest::Approx(expected));
}

TEST_CASE("adam three-step trace matches the hand-rolled update") {
  EmbeddingSpace space = scalar_space();
  space.mat(Param::user).row(0)[0] = 1.0f;
  OptState opt(OptKind::adam, space, 0.01);

  double theta = 1.0, m = 0.0, v = 0.0;
  std::vector<double> grads = {0.4, -0.2, 0.7};
  for (int t = 1; t <= 3; ++t) {
    double g = grads[t - 1];
    opt.apply(space, Param::user, 0, std::span<const double>(&g, 1));

    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t));
    double vh = v / (1.0 - std::pow(0.999, t));
    theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    // float parameter storage rounds each step
    theta = static_cast<float>(theta);
    CHECK(space.mat(Param::user).row(0)[0] == doctest::Approx(theta).epsilon(1e-7));
  }
}

TEST_CASE("joint gradient matches finite differences") {
  Corpus corpus = synthetic::random_corpus(5, 6, 4, 7, 3, 6, 21);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.lambda = 0.4;
  cfg.seed = 21;
  Trainer trainer(corpus, cfg);

  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(8, 0), 22);
  Rng rng(23);
  std::vector<RecPair> rec_batch;
  for (const Interaction& r : corpus.interactions.records)
    if (r.role == Role::train && rec_batch.size() < 3)
      rec_batch.push_back({r.user, r.item, trainer.sampler().sample_rec_negative(r.user, rng)});
  std::vector<KgcPair> kgc_batch;
  for (const Triple& t : corpus.triples.triples)
    if (t.role == Role::train && kgc_batch.size() < 3)
      kgc_batch.push_back({t, trainer.sampler().sample_kgc_negative(t, rng), true});

  GradBuffer gb(8);
  trainer.joint_loss_grad(space, rec_batch, kgc_batch, &gb, nullptr);
  auto loss = [&] {
    BatchLosses l = trainer.joint_loss_grad(space, rec_batch, kgc_batch, nullptr, nullptr);
    return cfg.lambda * l.rec_sum / rec_batch.size() +
           (1.0 - cfg.lambda) * l.kgc_sum / kgc_batch.size();
  };
  auto report = oracles::check_all_gradients(space, gb, 1e-5, loss);
  CHECK(report.max_rel_err < 2e-4);  // kink guard not applied; see acceptance suite
}

TEST_CASE("rows untouched by a batch stay bit-identical") {
  Corpus corpus = synthetic::random_corpus(6, 8, 4, 9, 3, 8, 31);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.seed = 31;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(12, 0), 32);
  EmbeddingSpace before = space;

  std::vector<RecPair> rec_batch = {{0, 1, 2}};
  Rng noise(33);
  trainer.joint_step(space, rec_batch, {}, noise);

  // users other than 0 and items other than 1/2 must be unchanged
  for (int32_t u = 1; u < 6; ++u)
    CHECK(std::memcmp(space.mat(Param::user).row(u).data(), before.mat(Param::user).row(u).data(),
                      12 * sizeof(float)) == 0);
  for (int32_t i = 0; i < 8; ++i) {
    if (i == 1 || i == 2) continue;
    CHECK(std::memcmp(space.mat(Param::item).row(i).data(), before.mat(Param::item).row(i).data(),
                      12 * sizeof(float)) == 0);
  }
  // touched rows did move
  CHECK(std::memcmp(space.mat(Param::user).row(0).data(), before.mat(Param::user).row(0).data(),
                    12 * sizeof(float)) != 0);
}

TEST_CASE("L2 is applied per touched row") {
  Corpus corpus = synthetic::random_corpus(4, 5, 3, 6, 2, 5, 41);
  TrainConfig cfg;
  cfg.model = Model::transh;
  cfg.optimizer = OptKind::sgd;
  cfg.lr = 0.05;
  cfg.l2 = 0.01;
  cfg.constraints = false;
  cfg.seed = 41;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(6, 0), 42);

  std::vector<KgcPair> batch;
  Rng rng(43);
  batch.push_back({corpus.triples.triples[0],
                   trainer.sampler().sample_kgc_negative(corpus.triples.triples[0], rng), true});

  GradBuffer gb(6);
  trainer.joint_loss_grad(space, {}, batch, &gb, nullptr);
  EmbeddingSpace expected = space;
  for (size_t idx = 0; idx < gb.touched().size(); ++idx) {
    auto [param, row] = gb.touched()[idx];
    auto theta = expected.mat(param).row(row);
    auto g = gb.grad(idx);
    for (int d = 0; d < 6; ++d)
      theta[d] = static_cast<float>(double(theta[d]) -
                                    cfg.lr * (g[d] + 2.0 * cfg.l2 * double(theta[d])));
  }

  Rng noise(44);
  trainer.joint_step(space, {}, batch, noise);
  CHECK(space.same_bits(expected));
}

TEST_CASE("lambda endpoints leave the other task's exclusive rows untouched") {
  Corpus corpus = synthetic::random_corpus(6, 8, 4, 12, 3, 5, 51);  // entities 5..11 unaligned
  SUBCASE("lambda = 1: unaligned entity rows never move") {
    TrainConfig cfg;
    cfg.model = Model::ktup;
    cfg.lambda = 1.0;
    cfg.max_epochs = 3;
    cfg.eval_every = 0;
    cfg.batch_size = 8;
    cfg.seed = 52;
    Trainer trainer(corpus, cfg);
    EmbeddingSpace init = EmbeddingSpace::init(trainer.space_shape(8, 0), 53);
    TrainResult result = Trainer(corpus, cfg).fit(init);
    for (int32_t e = 5; e < 12; ++e)
      CHECK(std::memcmp(result.space.mat(Param::entity).row(e).data(),
                        init.mat(Param::entity).row(e).data(), 8 * sizeof(float)) == 0);
  }
  SUBCASE("lambda = 0: recommendation rows never move") {
    TrainConfig cfg;
    cfg.model = Model::ktup;
    cfg.lambda = 0.0;
    cfg.max_epochs = 3;
    cfg.eval_every = 0;
    cfg.batch_size = 8;
    cfg.seed = 54;
    Trainer trainer(corpus, cfg);
    EmbeddingSpace init = EmbeddingSpace::init(trainer.space_shape(8, 0), 55);
    TrainResult result = Trainer(corpus, cfg).fit(init);
    for (Param p : {Param::user, Param::item, Param::pref, Param::pref_norm}) {
      const Matrix& a = result.space.mat(p);
      const Matrix& b = init.mat(p);
      CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("fit reduces the training loss on a small synthetic set") {
  Corpus corpus = synthetic::random_corpus(30, 25, 8, 20, 4, 15, 61);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.lambda = 0.5;
  cfg.max_epochs = 10;
  cfg.eval_every = 0;  // no early stopping; run all epochs
  cfg.batch_size = 64;
  cfg.lr = 0.05;
  cfg.optimizer = OptKind::adagrad;
  cfg.seed = 61;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(16, 0), 62);
  TrainResult result = trainer.fit(std::move(space));
  REQUIRE(result.logs.size() == 10);
  CHECK(result.logs.back().joint_loss < result.logs.front().joint_loss);
  for (const EpochLog& log : result.logs) {
    CHECK(log.rec_loss >= 0.0);
    CHECK(log.kgc_loss >= 0.0);
  }
}

TEST_CASE("patience zero trains exactly one evaluation window") {
  Corpus corpus = synthetic::random_corpus(10, 12, 5, 8, 2, 6, 71);
  TrainConfig cfg;
  cfg.model = Model::tup;
  cfg.max_epochs = 50;
  cfg.eval_every = 4;
  cfg.patience = 0;
  cfg.seed = 71;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(8, 3), 72);
  TrainResult result = trainer.fit(std::move(space));
  CHECK(result.logs.size() == 4);  // stopped right after the first evaluation
  CHECK(!std::isnan(result.logs.back().val_metric));
}

TEST_CASE("early stopping returns the best-validation snapshot") {
  Corpus corpus = synthetic::random_corpus(12, 14, 6, 10, 2, 8, 81);
  TrainConfig cfg;
  cfg.model = Model::tup;
  cfg.max_epochs = 12;
  cfg.eval_every = 3;
  cfg.patience = 2;
  cfg.seed = 81;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(8, 3), 82);
  TrainResult result = trainer.fit(std::move(space));
  CHECK(result.best_epoch > 0);
  CHECK(trainer.validate(result.space) == doctest::Approx(result.best_metric));
}

TEST_CASE("training is bitwise reproducible under one seed") {
  Corpus corpus = synthetic::random_corpus(10, 12, 5, 9, 3, 7, 91);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.max_epochs = 4;
  cfg.eval_every = 2;
  cfg.patience = 5;
  cfg.seed = 91;

  auto run = [&] {
    Trainer trainer(corpus, cfg);
    EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(8, 0), 92);
    return trainer.fit(std::move(space));
  };
  TrainResult a = run();
  TrainResult b = run();
  CHECK(a.space.same_bits(b.space));
  CHECK(a.best_metric == b.best_metric);
}

TEST_CASE("config validation") {
  Corpus corpus = synthetic::random_corpus(4, 5, 3, 6, 2, 5, 99);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.lambda = 1.5;
  CHECK_THROWS_AS(Trainer(corpus, cfg), ConfigError);

  cfg.lambda = 0.5;
  Corpus no_align = corpus;
  no_align.alignments = AlignmentMap{};
  no_align.alignments.rebuild_lookup(5, 6);
  CHECK_THROWS_AS(Trainer(no_align, cfg), ConfigError);

  TrainConfig tup_cfg;
  tup_cfg.model = Model::tup;
  Trainer trainer(corpus, tup_cfg);
  CHECK_THROWS_AS(trainer.space_shape(8, 0), ConfigError);  // tup needs num_prefs
}

TEST_CASE("a planted NaN aborts the step with diagnostics") {
  Corpus corpus = synthetic::random_corpus(4, 5, 3, 6, 2, 5, 111);
  TrainConfig cfg;
  cfg.model = Model::transh;
  cfg.seed = 111;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(6, 0), 112);
  space.mat(Param::rel).row(0)[0] = std::numeric_limits<float>::quiet_NaN();

  std::vector<KgcPair> batch;
  for (const Triple& t : corpus.triples.triples)
    if (t.rel == 0) {
      Triple neg = t;
      neg.tail = (t.tail + 1) % 6;
      batch.push_back({t, neg, false});
      break;
    }
  REQUIRE(!batch.empty());
  Rng noise(113);
  CHECK_THROWS_AS(trainer.joint_step(space, {}, batch, noise), NumericError);
}

TEST_CASE("per-model defaults follow the training protocol") {
  TrainConfig cfg;
  cfg.model = Model::tup;
  apply_model_defaults(cfg, false, false, false);
  CHECK(cfg.lr == 0.005);
  CHECK(cfg.l2 == 1e-5);
  CHECK(cfg.optimizer == OptKind::adagrad);

  TrainConfig joint;
  joint.model = Model::ktup;
  apply_model_defaults(joint, false, false, false);
  CHECK(joint.lr == 0.001);
  CHECK(joint.l2 == 0.0);
  CHECK(joint.optimizer == OptKind::adam);

  TrainConfig partial;
  partial.model = Model::ktup;
  partial.lr = 0.42;
  apply_model_defaults(partial, true, false, false);
  CHECK(partial.lr == 0.42);
}

TEST_SUITE_END();
