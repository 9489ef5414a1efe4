#pragma once

#include <span>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/rng.hpp"

namespace ktup {

struct RecPair {
  int32_t user;
  int32_t pos_item;
  int32_t neg_item;
};

struct KgcPair {
  Triple pos;
  Triple neg;
  bool corrupted_head;
};

// Negative sampling for both tasks. Stateless given (indexes, rng); callers
// own the rng stream so parallel workers stay deterministic.
class Sampler {
 public:
  // profile may be null; it is only consulted when bernoulli corruption is on
  Sampler(const UserIndex& users, const TripleIndex& triples, int32_t num_entities,
          bool bernoulli, const RelationProfile* profile, int retry_bound = 100);

  // uniform over items outside the user's train set
  int32_t sample_rec_negative(int32_t user, Rng& rng) const;
  // corrupt head or tail; resample while the corrupted triple is in the KG
  Triple sample_kgc_negative(const Triple& pos, Rng& rng, bool* corrupted_head = nullptr) const;

  std::vector<RecPair> sample_rec_batch(std::span<const Interaction> positives, Rng& rng) const;
  std::vector<KgcPair> sample_kgc_batch(std::span<const Triple> positives, Rng& rng) const;

 private:
  const UserIndex& users_;
  const TripleIndex& triples_;
  int32_t num_entities_;
  bool bernoulli_;
  const RelationProfile* profile_;
  int retry_bound_;
};

}  // namespace ktup
