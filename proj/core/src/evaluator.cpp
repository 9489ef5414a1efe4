#include "ktup/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ktup/vecmath.hpp"

namespace ktup {

namespace {

// chunked parallel loop; results must be written to per-index slots so the
// final reduction is order-independent
template <typename Fn>
void parallel_for(int64_t count, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || count < 2) {
    for (int64_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  int64_t chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk, hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t k = lo; k < hi; ++k) fn(k);
    });
  }
  for (auto& th : pool) th.join();
}

struct PerUser {
  double precision = 0, recall = 0, f1 = 0, hit = 0, ndcg = 0;
  bool evaluated = false;
  std::vector<RecRankRecord> ranks;
};

double ideal_dcg(int64_t relevant, int n) {
  double s = 0.0;
  for (int64_t k = 1; k <= std::min<int64_t>(relevant, n); ++k) s += 1.0 / std::log2(k + 1.0);
  return s;
}

// the (possibly relation-enhanced) preference rows, widened once
std::vector<std::vector<double>> pref_rows(const EmbeddingSpace& space, bool enhanced) {
  int32_t P = space.mat(Param::pref).rows();
  std::vector<std::vector<double>> rows(P);
  for (int32_t k = 0; k < P; ++k)
    combined_row(space, k, Param::pref, Param::rel, enhanced, rows[k]);
  return rows;
}

// dot(i, p_hat_k) for every item row, reused across users
std::vector<double> item_pref_dots(const EmbeddingSpace& space,
                                   const std::vector<std::vector<double>>& prefs) {
  const Matrix& items = space.mat(Param::item);
  int32_t P = static_cast<int32_t>(prefs.size());
  std::vector<double> dots(size_t(items.rows()) * P);
  for (int32_t i = 0; i < items.rows(); ++i)
    for (int32_t k = 0; k < P; ++k)
      dots[size_t(i) * P + k] =
          dot(std::span<const float>(items.row(i)), std::span<const double>(prefs[k]));
  return dots;
}

}  // namespace

RecMetrics eval_rec(const RecModel& model, const UserIndex& index, const RecEvalConfig& cfg,
                    std::span<const int32_t> users, std::vector<RecRankRecord>* ranks) {
  const EmbeddingSpace& space = model.space();
  int32_t num_items = index.num_items();
  bool translation = true;  // scoring family
  std::vector<std::vector<double>> prefs;
  std::vector<double> ip_dots;
  if (cfg.higher_is_better) {
    translation = false;
  } else {
    prefs = pref_rows(space, model.config().enhanced);
    ip_dots = item_pref_dots(space, prefs);
  }
  int32_t P = space.mat(Param::pref).rows();

  std::vector<int32_t> all_users;
  if (users.empty()) {
    all_users.resize(index.num_users());
    for (int32_t u = 0; u < index.num_users(); ++u) all_users[u] = u;
    users = all_users;
  }

  std::vector<PerUser> results(users.size());
  bool want_ranks = ranks != nullptr;

  parallel_for(static_cast<int64_t>(users.size()), cfg.threads, [&](int64_t slot) {
    int32_t u = users[slot];
    auto relevant = index.items(u, cfg.relevant);
    if (relevant.empty()) return;

    // candidate pool: all items minus the user's known-positive exclusions
    std::vector<char> excluded(num_items, 0);
    for (int32_t i : index.items(u, Role::train)) excluded[i] = 1;
    if (cfg.relevant == Role::test)
      for (int32_t i : index.items(u, Role::valid)) excluded[i] = 1;

    std::vector<double> u_dots(P);
    if (translation)
      for (int32_t k = 0; k < P; ++k)
        u_dots[k] = dot(std::span<const float>(space.mat(Param::user).row(u)),
                        std::span<const double>(prefs[k]));

    std::vector<double> score(num_items, 0.0);
    std::vector<double> logits(P);
    InducedPreference pref;
    for (int32_t i = 0; i < num_items; ++i) {
      if (excluded[i]) continue;
      if (translation) {
        for (int32_t k = 0; k < P; ++k) logits[k] = u_dots[k] + ip_dots[size_t(i) * P + k];
        model.induce(logits, nullptr, pref);
        score[i] = model.score(u, i, pref);
      } else {
        score[i] = model.dot_score(u, i);
      }
    }

    auto better = [&](int32_t a, double sa, int32_t b, double sb) {
      if (sa != sb) return cfg.higher_is_better ? sa > sb : sa < sb;
      return a < b;  // deterministic tie-break by ascending index
    };

    PerUser& res = results[slot];
    res.evaluated = true;
    int64_t in_top = 0;
    double dcg = 0.0;
    for (int32_t rel : relevant) {
      int64_t rank = 1;
      double s_rel = score[rel];
      for (int32_t c = 0; c < num_items; ++c) {
        if (excluded[c] || c == rel) continue;
        if (better(c, score[c], rel, s_rel)) ++rank;
      }
      if (rank <= cfg.n) {
        ++in_top;
        dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
      }
      if (want_ranks) res.ranks.push_back({u, rel, rank});
    }
    res.precision = static_cast<double>(in_top) / cfg.n;
    res.recall = static_cast<double>(in_top) / static_cast<double>(relevant.size());
    res.f1 = (res.precision + res.recall) > 0.0
                 ? 2.0 * res.precision * res.recall / (res.precision + res.recall)
                 : 0.0;
    res.hit = in_top > 0 ? 1.0 : 0.0;
    res.ndcg = dcg / ideal_dcg(static_cast<int64_t>(relevant.size()), cfg.n);
  });

  RecMetrics out;
  for (const PerUser& r : results) {
    if (!r.evaluated) continue;
    ++out.users;
    out.precision += r.precision;
    out.recall += r.recall;
    out.f1 += r.f1;
    out.hit += r.hit;
    out.ndcg += r.ndcg;
    if (want_ranks) ranks->insert(ranks->end(), r.ranks.begin(), r.ranks.end());
  }
  if (out.users > 0) {
    out.precision /= out.users;
    out.recall /= out.users;
    out.f1 /= out.users;
    out.hit /= out.users;
    out.ndcg /= out.users;
  }
  return out;
}

std::vector<RecMetrics> eval_by_sparsity(const RecModel& model, const UserIndex& index,
                                         const RecEvalConfig& cfg,
                                         const SparsityBuckets& buckets) {
  std::vector<RecMetrics> out;
  out.reserve(buckets.users.size());
  for (const auto& group : buckets.users)
    out.push_back(eval_rec(model, index, cfg, group, nullptr));
  return out;
}

KgcMetrics eval_kgc(const EmbeddingSpace& space, const KgcConfig& cfg, const TripleSet& triples,
                    const TripleIndex& known, const RelationProfile& profile,
                    const KgcEvalConfig& eval_cfg, std::vector<KgcRankRecord>* ranks) {
  std::vector<const Triple*> queries;
  for (const Triple& t : triples.triples)
    if (t.role == eval_cfg.which) queries.push_back(&t);

  struct PerTriple {
    int64_t raw[2] = {0, 0};
    int64_t filtered[2] = {0, 0};
  };
  std::vector<PerTriple> results(queries.size());
  int32_t E = triples.num_entities;

  parallel_for(static_cast<int64_t>(queries.size()), eval_cfg.threads, [&](int64_t qi) {
    const Triple& t = *queries[qi];
    for (int side = 0; side < 2; ++side) {  // 0 = replace head, 1 = replace tail
      int32_t gold = side == 0 ? t.head : t.tail;
      double gold_score = score_triple(space, cfg, t.head, t.tail, t.rel);
      int64_t raw = 1, known_better = 0;
      for (int32_t e = 0; e < E; ++e) {
        if (e == gold) continue;
        int32_t h = side == 0 ? e : t.head;
        int32_t tl = side == 0 ? t.tail : e;
        double s = score_triple(space, cfg, h, tl, t.rel);
        bool better = s < gold_score || (s == gold_score && e < gold);
        if (!better) continue;
        ++raw;
        if (known.contains(h, tl, t.rel)) ++known_better;
      }
      results[qi].raw[side] = raw;
      results[qi].filtered[side] = raw - known_better;
    }
  });

  KgcMetrics out;
  out.hit_cutoff = eval_cfg.hit_cutoff;
  auto add = [&](KgcSideMetrics& m, int64_t raw, int64_t filt) {
    m.hit_raw += raw <= eval_cfg.hit_cutoff ? 1.0 : 0.0;
    m.hit_filtered += filt <= eval_cfg.hit_cutoff ? 1.0 : 0.0;
    m.mean_rank_raw += static_cast<double>(raw);
    m.mean_rank_filtered += static_cast<double>(filt);
    ++m.queries;
  };
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    const Triple& t = *queries[qi];
    int cat = static_cast<int>(profile[t.rel].category);
    for (int side = 0; side < 2; ++side) {
      int64_t raw = results[qi].raw[side], filt = results[qi].filtered[side];
      add(side == 0 ? out.head : out.tail, raw, filt);
      add(out.all, raw, filt);
      add(out.by_category[cat][side], raw, filt);
      if (ranks) ranks->push_back({t, side == 0, raw, filt});
    }
  }
  auto finish = [](KgcSideMetrics& m) {
    if (m.queries == 0) return;
    m.hit_raw /= m.queries;
    m.hit_filtered /= m.queries;
    m.mean_rank_raw /= m.queries;
    m.mean_rank_filtered /= m.queries;
  };
  finish(out.head);
  finish(out.tail);
  finish(out.all);
  for (auto& row : out.by_category)
    for (auto& side : row) finish(side);
  return out;
}

}  // namespace ktup
