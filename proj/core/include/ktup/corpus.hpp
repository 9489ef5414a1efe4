#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ktup {

enum class Role : uint8_t { train = 0, valid = 1, test = 2 };

struct Interaction {
  int32_t user;
  int32_t item;
  Role role = Role::train;
};

// Implicit-feedback user/item records with dense 0-based indices.
// Immutable after load + split; safe for concurrent reads.
struct InteractionSet {
  std::vector<Interaction> records;
  int32_t num_users = 0;
  int32_t num_items = 0;
  std::vector<std::string> user_names;  // dense index -> raw id
  std::vector<std::string> item_names;
  int64_t dropped_duplicates = 0;  // repeated (user,item) lines in the input
};

struct Triple {
  int32_t head;
  int32_t tail;
  int32_t rel;
  Role role = Role::train;
};

struct TripleSet {
  std::vector<Triple> triples;
  int32_t num_entities = 0;
  int32_t num_relations = 0;
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  int64_t dropped_duplicates = 0;
};

// One-to-one partial map between items and entities.
struct AlignmentMap {
  std::vector<std::pair<int32_t, int32_t>> pairs;  // (item, entity)
  std::vector<int32_t> item_to_entity;             // -1 when unaligned
  std::vector<int32_t> entity_to_item;
  int64_t rejected_duplicates = 0;  // later mapping for an already-mapped id
  int64_t dropped_unknown = 0;      // referenced a filtered-out item/entity

  bool aligned(int32_t item) const {
    return item >= 0 && item < static_cast<int32_t>(item_to_entity.size()) &&
           item_to_entity[item] >= 0;
  }
  int32_t entity_of(int32_t item) const { return item_to_entity[item]; }
  void rebuild_lookup(int32_t num_items, int32_t num_entities);
};

enum class RelationCategory : uint8_t { one_one = 0, one_n = 1, n_one = 2, n_n = 3 };

const char* category_name(RelationCategory c);

struct RelationStats {
  double tails_per_head = 0.0;
  double heads_per_tail = 0.0;
  RelationCategory category = RelationCategory::one_one;
};

using RelationProfile = std::vector<RelationStats>;

struct SparsityBuckets {
  std::vector<std::vector<int32_t>> users;  // bucket -> user ids
  std::vector<int64_t> total_train;         // bucket -> summed train records
  std::vector<double> mean_train;           // bucket -> mean train records per user
  std::vector<int32_t> bucket_of;           // user -> bucket
  int requested = 0;                        // buckets asked for (actual may be fewer)
};

// --- loading -------------------------------------------------------------

// Lines are `user \t item [\t rating ...]`; ratings are binarized away.
// Users/items below the frequency thresholds are removed iteratively until
// a fixpoint; surviving raw ids get dense indices in sorted raw-id order.
InteractionSet load_interactions(const std::string& path, int min_user_freq, int min_item_freq);

// Lines are `head \t tail \t relation`. Duplicates dropped.
TripleSet load_triples(const std::string& path);

// Lines are `item \t entity` using raw ids from the two sets above.
AlignmentMap load_alignments(const std::string& path, const InteractionSet& items,
                             const TripleSet& entities);

// --- splitting -----------------------------------------------------------

// Per-user random partition: train = floor(n*a/S), valid = floor(n*b/S),
// test = remainder, which is always >= 1. Deterministic under seed.
void assign_splits(InteractionSet& set, std::array<int, 3> ratios, uint64_t seed);

// Global random partition of the triple list with the same counting rule.
void assign_triple_splits(TripleSet& set, std::array<int, 3> ratios, uint64_t seed);

// --- derived statistics ---------------------------------------------------

// tph = mean distinct tails per head, hpt symmetric; category from cutoff.
// Computed over all triples regardless of split role.
RelationProfile relation_categories(const TripleSet& triples, double cutoff = 1.5);

// Users ordered by train-record count, greedily grouped so bucket totals
// track an adaptive per-bucket target.
SparsityBuckets sparsity_buckets(const InteractionSet& set, int num_buckets = 10);

// --- indexes ---------------------------------------------------------------

// Per-user item lists by role, sorted; supports binary-search membership.
class UserIndex {
 public:
  explicit UserIndex(const InteractionSet& set);

  std::span<const int32_t> items(int32_t user, Role role) const;
  bool has(int32_t user, Role role, int32_t item) const;
  int32_t count(int32_t user, Role role) const {
    return static_cast<int32_t>(items(user, role).size());
  }
  int32_t num_users() const { return num_users_; }
  int32_t num_items() const { return num_items_; }

 private:
  int32_t num_users_ = 0;
  int32_t num_items_ = 0;
  // CSR layout per role
  std::array<std::vector<int32_t>, 3> offsets_;
  std::array<std::vector<int32_t>, 3> item_ids_;
};

// Membership test over all known triples (any role).
class TripleIndex {
 public:
  explicit TripleIndex(const TripleSet& set);
  bool contains(int32_t head, int32_t tail, int32_t rel) const {
    return keys_.count(key(head, tail, rel)) != 0;
  }

 private:
  static uint64_t key(int32_t h, int32_t t, int32_t r) {
    return (static_cast<uint64_t>(h) << 40) | (static_cast<uint64_t>(t) << 16) |
           static_cast<uint64_t>(r);
  }
  std::unordered_set<uint64_t> keys_;
};

// --- aggregate + preprocessed-directory persistence ------------------------

struct Corpus {
  InteractionSet interactions;
  TripleSet triples;        // may be empty
  AlignmentMap alignments;  // may be empty
};

// Writes train/valid/test.tsv, kg_train/valid/test.tsv, alignments.tsv and
// index.json (raw id -> dense id maps) into dir.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace ktup
