#include "ktup/explain.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ktup/error.hpp"
#include "ktup/rec.hpp"

namespace ktup {

namespace {

// (entity, relation) -> neighbors in either direction
class RelationAdjacency {
 public:
  explicit RelationAdjacency(const TripleSet& triples) {
    for (const Triple& t : triples.triples) {
      neighbors_[key(t.head, t.rel)].push_back(t.tail);
      neighbors_[key(t.tail, t.rel)].push_back(t.head);
    }
    for (auto& [k, v] : neighbors_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }

  std::span<const int32_t> of(int32_t entity, int32_t rel) const {
    auto it = neighbors_.find(key(entity, rel));
    if (it == neighbors_.end()) return {};
    return it->second;
  }

 private:
  static uint64_t key(int32_t e, int32_t r) {
    return (static_cast<uint64_t>(e) << 16) | static_cast<uint64_t>(r);
  }
  std::unordered_map<uint64_t, std::vector<int32_t>> neighbors_;
};

}  // namespace

UserExplanation explain_user(const EmbeddingSpace& space, const Corpus& corpus,
                             const UserIndex& index, int32_t user, const ExplainConfig& cfg) {
  auto history = index.items(user, Role::train);
  if (history.empty())
    throw DataError("user " + std::to_string(user) + " has no train interactions");

  int32_t P = space.mat(Param::pref).rows();
  int32_t R = space.mat(Param::rel).rows();
  UserExplanation out;
  out.user = user;
  out.named = P > 0 && P == R && !corpus.alignments.pairs.empty();

  // mean soft attention over the history, induced the way scoring induces it
  out.pref_weights.assign(P, 0.0);
  std::vector<double> logits;
  for (int32_t item : history) {
    preference_logits(space, user, item, out.named, logits);
    InducedPreference pref = induce_soft(space, logits, false);
    for (int32_t k = 0; k < P; ++k) out.pref_weights[k] += pref.weights[k];
  }
  for (double& w : out.pref_weights) w /= static_cast<double>(history.size());

  std::vector<int32_t> pref_order(P);
  for (int32_t k = 0; k < P; ++k) pref_order[k] = k;
  std::sort(pref_order.begin(), pref_order.end(), [&](int32_t a, int32_t b) {
    return out.pref_weights[a] != out.pref_weights[b] ? out.pref_weights[a] > out.pref_weights[b]
                                                      : a < b;
  });
  int top_k = std::min<int>(cfg.top_k_prefs, P);

  // candidate ranking identical to eval_rec: exclude train+valid, score
  // ascending, ties by item index
  RecConfig rc;
  rc.induction = InductionKind::soft;
  rc.enhanced = out.named;
  RecModel model(space, rc, &corpus.alignments);

  int32_t num_items = index.num_items();
  std::vector<char> excluded(num_items, 0);
  for (int32_t i : index.items(user, Role::train)) excluded[i] = 1;
  for (int32_t i : index.items(user, Role::valid)) excluded[i] = 1;

  std::vector<std::pair<double, int32_t>> ranked;
  for (int32_t i = 0; i < num_items; ++i) {
    if (excluded[i]) continue;
    ranked.emplace_back(model.score(user, i), i);
  }
  std::sort(ranked.begin(), ranked.end());

  RelationAdjacency adjacency(corpus.triples);
  int n_items = std::min<int>(cfg.top_n_items, static_cast<int>(ranked.size()));
  for (int r = 0; r < n_items; ++r) {
    Rationale rationale;
    rationale.item = ranked[r].second;
    rationale.score = ranked[r].first;
    for (int k = 0; k < top_k; ++k)
      rationale.top_prefs.emplace_back(pref_order[k], out.pref_weights[pref_order[k]]);

    if (out.named && corpus.alignments.aligned(rationale.item)) {
      int32_t rec_entity = corpus.alignments.entity_of(rationale.item);
      for (int k = 0; k < top_k && static_cast<int>(rationale.support.size()) < cfg.max_support;
           ++k) {
        int32_t rel = pref_order[k];
        auto rec_neighbors = adjacency.of(rec_entity, rel);
        if (rec_neighbors.empty()) continue;
        for (int32_t hist_item : history) {
          if (static_cast<int>(rationale.support.size()) >= cfg.max_support) break;
          if (!corpus.alignments.aligned(hist_item)) continue;
          int32_t hist_entity = corpus.alignments.entity_of(hist_item);
          for (int32_t neighbor : adjacency.of(hist_entity, rel)) {
            if (!std::binary_search(rec_neighbors.begin(), rec_neighbors.end(), neighbor))
              continue;
            rationale.support.push_back({hist_item, hist_entity, neighbor, rel});
            if (static_cast<int>(rationale.support.size()) >= cfg.max_support) break;
          }
        }
      }
    }
    out.items.push_back(std::move(rationale));
  }
  return out;
}

}  // namespace ktup
