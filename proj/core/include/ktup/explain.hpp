#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"

namespace ktup {

struct SupportFact {
  int32_t history_item;
  int32_t history_entity;
  int32_t neighbor_entity;  // shared KG neighbor reachable from both sides
  int32_t relation;
};

struct Rationale {
  int32_t item;  // recommended item
  double score;
  std::vector<std::pair<int32_t, double>> top_prefs;  // (pref index, weight), descending
  std::vector<SupportFact> support;
};

struct UserExplanation {
  int32_t user;
  std::vector<double> pref_weights;  // mean soft attention over the train history
  std::vector<Rationale> items;      // in eval_rec candidate order
  bool named = false;                // preferences map one-to-one onto relations
};

struct ExplainConfig {
  int top_k_prefs = 2;
  int top_n_items = 4;
  int max_support = 5;
};

// Aggregates soft preference attention over the user's train items, names the
// top preferences via the relation index when the space is KTUP-shaped, ranks
// candidates exactly as eval_rec does, and attaches shared-neighbor evidence.
UserExplanation explain_user(const EmbeddingSpace& space, const Corpus& corpus,
                             const UserIndex& index, int32_t user, const ExplainConfig& cfg);

}  // namespace ktup
