#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"
#include "ktup/kgc.hpp"
#include "ktup/rec.hpp"

namespace ktup {

struct RecMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double hit = 0.0;
  double ndcg = 0.0;
  int64_t users = 0;  // users with at least one relevant item
};

struct RecRankRecord {
  int32_t user;
  int32_t item;
  int64_t rank;  // 1-based, ties broken by ascending item index
};

struct RecEvalConfig {
  int n = 10;
  Role relevant = Role::test;  // test excludes train+valid; valid excludes train
  bool higher_is_better = false;  // true for the dot-product pretrainer
  int threads = 1;
};

// Scores every candidate item (all items minus the user's excluded
// positives) and averages per-user precision/recall/F1/hit/nDCG at N.
// `users` restricts evaluation to a subset (empty = everyone).
RecMetrics eval_rec(const RecModel& model, const UserIndex& index, const RecEvalConfig& cfg,
                    std::span<const int32_t> users = {},
                    std::vector<RecRankRecord>* ranks = nullptr);

std::vector<RecMetrics> eval_by_sparsity(const RecModel& model, const UserIndex& index,
                                         const RecEvalConfig& cfg,
                                         const SparsityBuckets& buckets);

struct KgcSideMetrics {
  double hit_raw = 0.0;
  double hit_filtered = 0.0;
  double mean_rank_raw = 0.0;
  double mean_rank_filtered = 0.0;
  int64_t queries = 0;
};

struct KgcRankRecord {
  Triple triple;
  bool head_side;
  int64_t raw_rank;
  int64_t filtered_rank;
};

struct KgcMetrics {
  KgcSideMetrics head;
  KgcSideMetrics tail;
  KgcSideMetrics all;
  // [category][0=head, 1=tail]
  std::array<std::array<KgcSideMetrics, 2>, 4> by_category{};
  int hit_cutoff = 10;
};

struct KgcEvalConfig {
  int hit_cutoff = 10;
  Role which = Role::test;
  int threads = 1;
};

// Ranks every entity as replacement for each side of each evaluated triple.
// Filtered ranks drop other known-true corruptions (any split role).
KgcMetrics eval_kgc(const EmbeddingSpace& space, const KgcConfig& cfg, const TripleSet& triples,
                    const TripleIndex& known, const RelationProfile& profile,
                    const KgcEvalConfig& eval_cfg, std::vector<KgcRankRecord>* ranks = nullptr);

}  // namespace ktup
