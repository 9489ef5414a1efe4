#pragma once

// In-memory synthetic corpora for tests.

#include <set>
#include <string>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/rng.hpp"

namespace synthetic {

// Random implicit-feedback corpus with an optional KG and partial alignment.
inline ktup::Corpus random_corpus(int32_t num_users, int32_t num_items, int32_t per_user,
                                  int32_t num_entities, int32_t num_relations,
                                  int32_t aligned_items, uint64_t seed) {
  ktup::Corpus corpus;
  auto& in = corpus.interactions;
  in.num_users = num_users;
  in.num_items = num_items;
  for (int32_t u = 0; u < num_users; ++u) in.user_names.push_back("u" + std::to_string(u));
  for (int32_t i = 0; i < num_items; ++i) in.item_names.push_back("i" + std::to_string(i));

  ktup::Rng rng(ktup::mix_seed(seed, 0x636f7270ULL));
  for (int32_t u = 0; u < num_users; ++u) {
    std::set<int32_t> chosen;
    while (static_cast<int32_t>(chosen.size()) < per_user)
      chosen.insert(static_cast<int32_t>(rng.index(num_items)));
    for (int32_t i : chosen) in.records.push_back({u, i, ktup::Role::train});
  }
  ktup::assign_splits(in, {7, 1, 2}, seed);

  auto& kg = corpus.triples;
  kg.num_entities = num_entities;
  kg.num_relations = num_relations;
  for (int32_t e = 0; e < num_entities; ++e) kg.entity_names.push_back("e" + std::to_string(e));
  for (int32_t r = 0; r < num_relations; ++r) kg.relation_names.push_back("r" + std::to_string(r));
  if (num_entities >= 2 && num_relations >= 1) {
    std::set<std::tuple<int32_t, int32_t, int32_t>> seen;
    int32_t want = num_entities * 3;
    while (static_cast<int32_t>(seen.size()) < want) {
      int32_t h = static_cast<int32_t>(rng.index(num_entities));
      int32_t t = static_cast<int32_t>(rng.index(num_entities));
      int32_t r = static_cast<int32_t>(rng.index(num_relations));
      if (h == t) continue;
      if (seen.insert({h, t, r}).second) kg.triples.push_back({h, t, r, ktup::Role::train});
    }
    ktup::assign_triple_splits(kg, {7, 1, 2}, seed + 1);
  }

  corpus.alignments.rebuild_lookup(num_items, num_entities);
  for (int32_t i = 0; i < std::min(aligned_items, std::min(num_items, num_entities)); ++i) {
    corpus.alignments.pairs.emplace_back(i, i);
    corpus.alignments.item_to_entity[i] = i;
    corpus.alignments.entity_to_item[i] = i;
  }
  return corpus;
}

// Planted-preference corpus: `groups` user groups, each consuming items out
// of a small group pool whose entities all share one hub neighbor through
// that group's relation. `filler_items` never-consumed items pad the catalog
// so the candidate pool stays large. Entities 0..I-1 mirror the items
// one-to-one; entity I+g is group g's hub.
struct PlantedCorpus {
  ktup::Corpus corpus;
  std::vector<int32_t> group_of_user;
  std::vector<int32_t> relation_of_group;
  std::vector<int32_t> hub_of_group;
};

inline PlantedCorpus planted_corpus(int32_t groups, int32_t users_per_group,
                                    int32_t items_per_group, int32_t filler_items,
                                    int32_t per_user, uint64_t seed) {
  PlantedCorpus out;
  ktup::Corpus& corpus = out.corpus;
  int32_t num_users = groups * users_per_group;
  int32_t num_items = groups * items_per_group + filler_items;
  int32_t num_entities = num_items + groups;  // item entities + one hub per group

  auto& in = corpus.interactions;
  in.num_users = num_users;
  in.num_items = num_items;
  for (int32_t u = 0; u < num_users; ++u) in.user_names.push_back("u" + std::to_string(u));
  for (int32_t i = 0; i < num_items; ++i) in.item_names.push_back("i" + std::to_string(i));

  ktup::Rng rng(ktup::mix_seed(seed, 0x706c616e74ULL));
  out.group_of_user.resize(num_users);
  for (int32_t u = 0; u < num_users; ++u) {
    int32_t g = u / users_per_group;
    out.group_of_user[u] = g;
    std::set<int32_t> chosen;
    while (static_cast<int32_t>(chosen.size()) < per_user)
      chosen.insert(g * items_per_group + static_cast<int32_t>(rng.index(items_per_group)));
    for (int32_t i : chosen) in.records.push_back({u, i, ktup::Role::train});
  }
  ktup::assign_splits(in, {7, 1, 2}, seed);

  auto& kg = corpus.triples;
  kg.num_entities = num_entities;
  kg.num_relations = groups;
  for (int32_t e = 0; e < num_entities; ++e) kg.entity_names.push_back("e" + std::to_string(e));
  for (int32_t r = 0; r < groups; ++r) kg.relation_names.push_back("rel" + std::to_string(r));
  out.relation_of_group.resize(groups);
  out.hub_of_group.resize(groups);
  for (int32_t g = 0; g < groups; ++g) {
    out.relation_of_group[g] = g;
    out.hub_of_group[g] = num_items + g;
    // hub as head (e.g. a director pointing at each movie): the item entity
    // sits at hub + r_g, which the matching preference cancels exactly
    for (int32_t k = 0; k < items_per_group; ++k) {
      int32_t item_entity = g * items_per_group + k;
      kg.triples.push_back({num_items + g, item_entity, g, ktup::Role::train});
    }
  }
  ktup::assign_triple_splits(kg, {7, 1, 2}, seed + 1);

  corpus.alignments.rebuild_lookup(num_items, num_entities);
  for (int32_t i = 0; i < num_items; ++i) {
    corpus.alignments.pairs.emplace_back(i, i);
    corpus.alignments.item_to_entity[i] = i;
    corpus.alignments.entity_to_item[i] = i;
  }
  return out;
}

}  // namespace synthetic
