#include <benchmark/benchmark.h>

#include <set>

#include "ktup/evaluator.hpp"
#include "ktup/kgc.hpp"
#include "ktup/rec.hpp"
#include "ktup/rng.hpp"
#include "ktup/sampler.hpp"
#include "ktup/trainer.hpp"

using namespace ktup;

namespace {

Corpus bench_corpus(int32_t users, int32_t items, int32_t per_user, int32_t entities,
                    int32_t relations) {
  Corpus corpus;
  corpus.interactions.num_users = users;
  corpus.interactions.num_items = items;
  Rng rng(99);
  for (int32_t u = 0; u < users; ++u) {
    std::set<int32_t> chosen;
    while (static_cast<int32_t>(chosen.size()) < per_user)
      chosen.insert(static_cast<int32_t>(rng.index(items)));
    for (int32_t i : chosen) corpus.interactions.records.push_back({u, i, Role::train});
  }
  assign_splits(corpus.interactions, {7, 1, 2}, 99);

  corpus.triples.num_entities = entities;
  corpus.triples.num_relations = relations;
  std::set<std::tuple<int32_t, int32_t, int32_t>> seen;
  while (static_cast<int32_t>(seen.size()) < entities * 4) {
    int32_t h = static_cast<int32_t>(rng.index(entities));
    int32_t t = static_cast<int32_t>(rng.index(entities));
    int32_t r = static_cast<int32_t>(rng.index(relations));
    if (h != t && seen.insert({h, t, r}).second)
      corpus.triples.triples.push_back({h, t, r, Role::train});
  }
  assign_triple_splits(corpus.triples, {7, 1, 2}, 100);

  corpus.alignments.rebuild_lookup(items, entities);
  for (int32_t i = 0; i < std::min(items, entities); ++i) {
    corpus.alignments.pairs.emplace_back(i, i);
    corpus.alignments.item_to_entity[i] = i;
    corpus.alignments.entity_to_item[i] = i;
  }
  return corpus;
}

EmbeddingSpace bench_space(const Corpus& corpus, int dim) {
  SpaceShape shape;
  shape.dim = dim;
  shape.num_users = corpus.interactions.num_users;
  shape.num_items = corpus.interactions.num_items;
  shape.num_entities = corpus.triples.num_entities;
  shape.num_prefs = corpus.triples.num_relations;
  shape.num_relations = corpus.triples.num_relations;
  return EmbeddingSpace::init(shape, 7);
}

void BM_TransHScore(benchmark::State& state) {
  Corpus corpus = bench_corpus(64, 256, 16, 512, 16);
  EmbeddingSpace space = bench_space(corpus, static_cast<int>(state.range(0)));
  KgcConfig cfg;
  Rng rng(1);
  for (auto _ : state) {
    int32_t h = static_cast<int32_t>(rng.index(512));
    int32_t t = static_cast<int32_t>(rng.index(512));
    benchmark::DoNotOptimize(score_triple(space, cfg, h, t, static_cast<int32_t>(rng.index(16))));
  }
}
BENCHMARK(BM_TransHScore)->Arg(64)->Arg(100)->Arg(256);

void BM_KtupScore(benchmark::State& state) {
  Corpus corpus = bench_corpus(64, 256, 16, 512, 16);
  EmbeddingSpace space = bench_space(corpus, static_cast<int>(state.range(0)));
  RecConfig cfg;
  cfg.enhanced = true;
  RecModel model(space, cfg, &corpus.alignments);
  Rng rng(2);
  for (auto _ : state) {
    int32_t u = static_cast<int32_t>(rng.index(64));
    int32_t i = static_cast<int32_t>(rng.index(256));
    benchmark::DoNotOptimize(model.score(u, i));
  }
}
BENCHMARK(BM_KtupScore)->Arg(64)->Arg(100);

void BM_BprPairGrad(benchmark::State& state) {
  Corpus corpus = bench_corpus(64, 256, 16, 512, 16);
  EmbeddingSpace space = bench_space(corpus, 100);
  RecConfig cfg;
  cfg.enhanced = true;
  RecModel model(space, cfg, &corpus.alignments);
  GradBuffer gb(100);
  Rng rng(3);
  for (auto _ : state) {
    gb.clear();
    int32_t u = static_cast<int32_t>(rng.index(64));
    benchmark::DoNotOptimize(model.bpr_pair_loss(u, static_cast<int32_t>(rng.index(256)),
                                                 static_cast<int32_t>(rng.index(256)), nullptr,
                                                 1.0, &gb));
  }
}
BENCHMARK(BM_BprPairGrad);

void BM_JointStep(benchmark::State& state) {
  Corpus corpus = bench_corpus(64, 256, 16, 512, 16);
  TrainConfig cfg;
  cfg.model = Model::ktup;
  cfg.batch_size = static_cast<int>(state.range(0));
  cfg.seed = 4;
  Trainer trainer(corpus, cfg);
  EmbeddingSpace space = EmbeddingSpace::init(trainer.space_shape(100, 0), 5);
  Rng rng(6), noise(7);
  std::vector<Interaction> train;
  for (const Interaction& r : corpus.interactions.records)
    if (r.role == Role::train) train.push_back(r);
  for (auto _ : state) {
    state.PauseTiming();
    std::vector<Interaction> positives;
    for (int k = 0; k < cfg.batch_size; ++k)
      positives.push_back(train[rng.index(train.size())]);
    auto batch = trainer.sampler().sample_rec_batch(positives, rng);
    state.ResumeTiming();
    trainer.joint_step(space, batch, {}, noise);
  }
}
BENCHMARK(BM_JointStep)->Arg(64)->Arg(256);

void BM_EvalRec(benchmark::State& state) {
  Corpus corpus = bench_corpus(64, 256, 16, 512, 16);
  UserIndex index(corpus.interactions);
  EmbeddingSpace space = bench_space(corpus, 100);
  RecConfig cfg;
  cfg.enhanced = true;
  RecModel model(space, cfg, &corpus.alignments);
  RecEvalConfig ecfg;
  ecfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval_rec(model, index, ecfg));
}
BENCHMARK(BM_EvalRec)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
