#include "ktup/sampler.hpp"

#include <string>

#include "ktup/error.hpp"

namespace ktup {

Sampler::Sampler(const UserIndex& users, const TripleIndex& triples, int32_t num_entities,
                 bool bernoulli, const RelationProfile* profile, int retry_bound)
    : users_(users),
      triples_(triples),
      num_entities_(num_entities),
      bernoulli_(bernoulli),
      profile_(profile),
      retry_bound_(retry_bound) {
  if (bernoulli_ && !profile_)
    throw ConfigError("bernoulli corruption needs a relation profile");
}

int32_t Sampler::sample_rec_negative(int32_t user, Rng& rng) const {
  auto train = users_.items(user, Role::train);
  int32_t num_items = users_.num_items();
  if (static_cast<int32_t>(train.size()) >= num_items)
    throw DataError("user " + std::to_string(user) + " interacted with every item");
  for (int attempt = 0; attempt < retry_bound_; ++attempt) {
    int32_t item = static_cast<int32_t>(rng.index(num_items));
    if (!users_.has(user, Role::train, item)) return item;
  }
  // dense user: enumerate the complement once and draw exactly
  std::vector<int32_t> pool;
  pool.reserve(num_items - train.size());
  size_t t = 0;
  for (int32_t item = 0; item < num_items; ++item) {
    while (t < train.size() && train[t] < item) ++t;
    if (t < train.size() && train[t] == item) continue;
    pool.push_back(item);
  }
  return pool[rng.index(pool.size())];
}

Triple Sampler::sample_kgc_negative(const Triple& pos, Rng& rng, bool* corrupted_head) const {
  if (num_entities_ < 2) throw DataError("need at least two entities to corrupt triples");
  double p_head = 0.5;
  if (bernoulli_) {
    const RelationStats& st = (*profile_)[pos.rel];
    double denom = st.tails_per_head + st.heads_per_tail;
    if (denom > 0.0) p_head = st.tails_per_head / denom;
  }
  for (int attempt = 0; attempt < retry_bound_; ++attempt) {
    bool head_side = rng.uniform() < p_head;
    int32_t replacement = static_cast<int32_t>(rng.index(num_entities_));
    Triple neg = pos;
    (head_side ? neg.head : neg.tail) = replacement;
    if (triples_.contains(neg.head, neg.tail, neg.rel)) continue;
    if (corrupted_head) *corrupted_head = head_side;
    return neg;
  }
  throw DataError("could not find a negative triple after " + std::to_string(retry_bound_) +
                  " attempts (degenerate graph?)");
}

std::vector<RecPair> Sampler::sample_rec_batch(std::span<const Interaction> positives,
                                               Rng& rng) const {
  std::vector<RecPair> out;
  out.reserve(positives.size());
  for (const Interaction& r : positives)
    out.push_back({r.user, r.item, sample_rec_negative(r.user, rng)});
  return out;
}

std::vector<KgcPair> Sampler::sample_kgc_batch(std::span<const Triple> positives, Rng& rng) const {
  std::vector<KgcPair> out;
  out.reserve(positives.size());
  for (const Triple& t : positives) {
    bool head_side = false;
    Triple neg = sample_kgc_negative(t, rng, &head_side);
    out.push_back({t, neg, head_side});
  }
  return out;
}

}  // namespace ktup
