#include "ktup/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>

#include "json.hpp"
#include "ktup/error.hpp"
#include "ktup/rng.hpp"

namespace ktup {

namespace {

using json = nlohmann::json;

// Splits a TSV line; strips a trailing '\r' so CRLF files load cleanly.
std::vector<std::string> split_tsv(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

bool skippable(const std::string& line) {
  return line.empty() || line[0] == '#' || line == "\r";
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return in;
}

[[noreturn]] void malformed(const std::string& path, size_t lineno, const std::string& why) {
  throw DataError("parse error: " + path + ":" + std::to_string(lineno) + ": " + why);
}

uint64_t pack_pair(int32_t a, int32_t b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

// floor the train and valid shares; the remainder goes to test, which keeps
// test >= 1 for every non-empty group
std::array<int64_t, 3> split_counts(int64_t n, std::array<int, 3> ratios) {
  int64_t total = ratios[0] + ratios[1] + ratios[2];
  int64_t n_train = n * ratios[0] / total;
  int64_t n_valid = n * ratios[1] / total;
  return {n_train, n_valid, n - n_train - n_valid};
}

void check_ratios(std::array<int, 3> ratios) {
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0)
    throw ConfigError("split ratios must be positive");
}

}  // namespace

const char* category_name(RelationCategory c) {
  switch (c) {
    case RelationCategory::one_one: return "1-1";
    case RelationCategory::one_n: return "1-N";
    case RelationCategory::n_one: return "N-1";
    case RelationCategory::n_n: return "N-N";
  }
  return "?";
}

void AlignmentMap::rebuild_lookup(int32_t num_items, int32_t num_entities) {
  item_to_entity.assign(num_items, -1);
  entity_to_item.assign(num_entities, -1);
  for (auto& [item, entity] : pairs) {
    item_to_entity[item] = entity;
    entity_to_item[entity] = item;
  }
}

InteractionSet load_interactions(const std::string& path, int min_user_freq, int min_item_freq) {
  auto in = open_or_throw(path);

  // provisional ids; raw string kept for the final sorted remap
  std::unordered_map<std::string, int32_t> user_id, item_id;
  std::vector<std::string> user_raw, item_raw;
  std::vector<std::pair<int32_t, int32_t>> pairs;
  std::unordered_set<uint64_t> seen;
  int64_t duplicates = 0;

  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    auto fields = split_tsv(line);
    if (fields.size() < 2) malformed(path, lineno, "expected `user<TAB>item[<TAB>rating]`");
    if (fields[0].empty() || fields[1].empty()) malformed(path, lineno, "empty id field");

    auto intern = [](std::unordered_map<std::string, int32_t>& ids, std::vector<std::string>& raw,
                     const std::string& s) {
      auto [it, fresh] = ids.emplace(s, static_cast<int32_t>(raw.size()));
      if (fresh) raw.push_back(s);
      return it->second;
    };
    int32_t u = intern(user_id, user_raw, fields[0]);
    int32_t i = intern(item_id, item_raw, fields[1]);
    if (!seen.insert(pack_pair(u, i)).second) {
      ++duplicates;  // binarized feedback: a repeated pair adds nothing
      continue;
    }
    pairs.emplace_back(u, i);
  }

  // iterative frequency filtering until fixpoint
  std::vector<char> user_alive(user_raw.size(), 1), item_alive(item_raw.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int32_t> user_count(user_raw.size(), 0), item_count(item_raw.size(), 0);
    for (auto& [u, i] : pairs)
      if (user_alive[u] && item_alive[i]) {
        ++user_count[u];
        ++item_count[i];
      }
    for (size_t u = 0; u < user_raw.size(); ++u)
      if (user_alive[u] && user_count[u] < min_user_freq) {
        user_alive[u] = 0;
        changed = true;
      }
    for (size_t i = 0; i < item_raw.size(); ++i)
      if (item_alive[i] && item_count[i] < min_item_freq) {
        item_alive[i] = 0;
        changed = true;
      }
  }

  // dense indices in sorted raw-id order
  auto dense_map = [](const std::vector<std::string>& raw, const std::vector<char>& alive,
                      std::vector<std::string>& names) {
    std::vector<int32_t> order;
    for (size_t k = 0; k < raw.size(); ++k)
      if (alive[k]) order.push_back(static_cast<int32_t>(k));
    std::sort(order.begin(), order.end(),
              [&](int32_t a, int32_t b) { return raw[a] < raw[b]; });
    std::vector<int32_t> dense(raw.size(), -1);
    names.reserve(order.size());
    for (size_t k = 0; k < order.size(); ++k) {
      dense[order[k]] = static_cast<int32_t>(k);
      names.push_back(raw[order[k]]);
    }
    return dense;
  };

  InteractionSet out;
  out.dropped_duplicates = duplicates;
  std::vector<int32_t> user_dense = dense_map(user_raw, user_alive, out.user_names);
  std::vector<int32_t> item_dense = dense_map(item_raw, item_alive, out.item_names);
  out.num_users = static_cast<int32_t>(out.user_names.size());
  out.num_items = static_cast<int32_t>(out.item_names.size());

  for (auto& [u, i] : pairs)
    if (user_alive[u] && item_alive[i])
      out.records.push_back({user_dense[u], item_dense[i], Role::train});
  if (out.records.empty())
    throw DataError("dataset exhausted: no interactions survive frequency filtering");

  std::sort(out.records.begin(), out.records.end(), [](const Interaction& a, const Interaction& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  });
  return out;
}

TripleSet load_triples(const std::string& path) {
  auto in = open_or_throw(path);

  std::unordered_map<std::string, int32_t> ent_id, rel_id;
  std::vector<std::string> ent_raw, rel_raw;
  std::vector<std::array<int32_t, 3>> raw_triples;
  std::unordered_set<uint64_t> seen;
  int64_t duplicates = 0;

  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    auto fields = split_tsv(line);
    if (fields.size() != 3) malformed(path, lineno, "expected `head<TAB>tail<TAB>relation`");
    if (fields[0].empty() || fields[1].empty() || fields[2].empty())
      malformed(path, lineno, "empty id field");

    auto intern = [](std::unordered_map<std::string, int32_t>& ids, std::vector<std::string>& raw,
                     const std::string& s) {
      auto [it, fresh] = ids.emplace(s, static_cast<int32_t>(raw.size()));
      if (fresh) raw.push_back(s);
      return it->second;
    };
    int32_t h = intern(ent_id, ent_raw, fields[0]);
    int32_t t = intern(ent_id, ent_raw, fields[1]);
    int32_t r = intern(rel_id, rel_raw, fields[2]);
    raw_triples.push_back({h, t, r});
  }

  if (ent_raw.size() >= (1ULL << 24) || rel_raw.size() >= (1ULL << 16))
    throw DataError("triple file exceeds supported entity/relation counts");

  TripleSet out;
  auto sort_names = [](const std::vector<std::string>& raw, std::vector<std::string>& names) {
    std::vector<int32_t> order(raw.size());
    for (size_t k = 0; k < raw.size(); ++k) order[k] = static_cast<int32_t>(k);
    std::sort(order.begin(), order.end(),
              [&](int32_t a, int32_t b) { return raw[a] < raw[b]; });
    std::vector<int32_t> dense(raw.size());
    names.reserve(raw.size());
    for (size_t k = 0; k < order.size(); ++k) {
      dense[order[k]] = static_cast<int32_t>(k);
      names.push_back(raw[order[k]]);
    }
    return dense;
  };
  std::vector<int32_t> ent_dense = sort_names(ent_raw, out.entity_names);
  std::vector<int32_t> rel_dense = sort_names(rel_raw, out.relation_names);
  out.num_entities = static_cast<int32_t>(out.entity_names.size());
  out.num_relations = static_cast<int32_t>(out.relation_names.size());

  for (auto& [h, t, r] : raw_triples) {
    int32_t hd = ent_dense[h], td = ent_dense[t], rd = rel_dense[r];
    uint64_t key = (static_cast<uint64_t>(hd) << 40) | (static_cast<uint64_t>(td) << 16) |
                   static_cast<uint64_t>(rd);
    if (!seen.insert(key).second) {
      ++duplicates;
      continue;
    }
    out.triples.push_back({hd, td, rd, Role::train});
  }
  out.dropped_duplicates = duplicates;
  std::sort(out.triples.begin(), out.triples.end(), [](const Triple& a, const Triple& b) {
    if (a.head != b.head) return a.head < b.head;
    if (a.tail != b.tail) return a.tail < b.tail;
    return a.rel < b.rel;
  });
  return out;
}

AlignmentMap load_alignments(const std::string& path, const InteractionSet& items,
                             const TripleSet& entities) {
  auto in = open_or_throw(path);

  std::unordered_map<std::string, int32_t> item_id, ent_id;
  for (int32_t k = 0; k < items.num_items; ++k) item_id[items.item_names[k]] = k;
  for (int32_t k = 0; k < entities.num_entities; ++k) ent_id[entities.entity_names[k]] = k;

  AlignmentMap out;
  out.rebuild_lookup(items.num_items, entities.num_entities);

  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    auto fields = split_tsv(line);
    if (fields.size() != 2) malformed(path, lineno, "expected `item<TAB>entity`");
    auto it_i = item_id.find(fields[0]);
    auto it_e = ent_id.find(fields[1]);
    if (it_i == item_id.end() || it_e == ent_id.end()) {
      ++out.dropped_unknown;
      continue;
    }
    int32_t item = it_i->second, ent = it_e->second;
    if (out.item_to_entity[item] >= 0 || out.entity_to_item[ent] >= 0) {
      ++out.rejected_duplicates;  // one-to-one: first mapping wins
      continue;
    }
    out.item_to_entity[item] = ent;
    out.entity_to_item[ent] = item;
    out.pairs.emplace_back(item, ent);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

void assign_splits(InteractionSet& set, std::array<int, 3> ratios, uint64_t seed) {
  check_ratios(ratios);
  std::vector<std::vector<int32_t>> per_user(set.num_users);
  for (size_t k = 0; k < set.records.size(); ++k)
    per_user[set.records[k].user].push_back(static_cast<int32_t>(k));

  for (int32_t u = 0; u < set.num_users; ++u) {
    auto& recs = per_user[u];
    if (recs.empty()) continue;
    Rng rng(mix_seed(seed, static_cast<uint64_t>(u)));
    rng.shuffle(recs);
    auto counts = split_counts(static_cast<int64_t>(recs.size()), ratios);
    size_t pos = 0;
    for (int64_t k = 0; k < counts[0]; ++k) set.records[recs[pos++]].role = Role::train;
    for (int64_t k = 0; k < counts[1]; ++k) set.records[recs[pos++]].role = Role::valid;
    for (; pos < recs.size(); ++pos) set.records[recs[pos]].role = Role::test;
  }
}

void assign_triple_splits(TripleSet& set, std::array<int, 3> ratios, uint64_t seed) {
  check_ratios(ratios);
  if (set.triples.empty()) return;
  std::vector<int32_t> order(set.triples.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int32_t>(k);
  Rng rng(mix_seed(seed, 0x6b675f73706c6974ULL));
  rng.shuffle(order);
  auto counts = split_counts(static_cast<int64_t>(order.size()), ratios);
  size_t pos = 0;
  for (int64_t k = 0; k < counts[0]; ++k) set.triples[order[pos++]].role = Role::train;
  for (int64_t k = 0; k < counts[1]; ++k) set.triples[order[pos++]].role = Role::valid;
  for (; pos < order.size(); ++pos) set.triples[order[pos]].role = Role::test;
}

RelationProfile relation_categories(const TripleSet& triples, double cutoff) {
  if (triples.triples.empty()) throw DataError("relation_categories: empty triple set");
  int32_t R = triples.num_relations;
  std::vector<int64_t> count(R, 0);
  std::vector<std::unordered_set<int32_t>> heads(R), tails(R);
  for (const Triple& t : triples.triples) {
    ++count[t.rel];
    heads[t.rel].insert(t.head);
    tails[t.rel].insert(t.tail);
  }
  RelationProfile out(R);
  for (int32_t r = 0; r < R; ++r) {
    if (count[r] == 0) continue;
    double tph = static_cast<double>(count[r]) / static_cast<double>(heads[r].size());
    double hpt = static_cast<double>(count[r]) / static_cast<double>(tails[r].size());
    out[r].tails_per_head = tph;
    out[r].heads_per_tail = hpt;
    bool many_tails = tph >= cutoff;
    bool many_heads = hpt >= cutoff;
    out[r].category = many_tails ? (many_heads ? RelationCategory::n_n : RelationCategory::one_n)
                                 : (many_heads ? RelationCategory::n_one : RelationCategory::one_one);
  }
  return out;
}

SparsityBuckets sparsity_buckets(const InteractionSet& set, int num_buckets) {
  if (num_buckets <= 0) throw ConfigError("sparsity_buckets: need at least one bucket");
  std::vector<int64_t> train_count(set.num_users, 0);
  for (const Interaction& r : set.records)
    if (r.role == Role::train) ++train_count[r.user];

  std::vector<int32_t> order(set.num_users);
  for (int32_t u = 0; u < set.num_users; ++u) order[u] = u;
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return train_count[a] != train_count[b] ? train_count[a] < train_count[b] : a < b;
  });

  int64_t remaining_total = 0;
  for (int64_t c : train_count) remaining_total += c;

  SparsityBuckets out;
  out.requested = num_buckets;
  out.bucket_of.assign(set.num_users, -1);

  size_t i = 0;
  int64_t n = set.num_users;
  for (int b = 0; b < num_buckets && i < order.size(); ++b) {
    int buckets_left = num_buckets - b;
    double target = static_cast<double>(remaining_total) / buckets_left;
    std::vector<int32_t> bucket;
    int64_t sum = 0;
    bucket.push_back(order[i]);
    sum += train_count[order[i]];
    ++i;
    if (b + 1 < num_buckets) {
      while (i < order.size() && (n - static_cast<int64_t>(i)) > (buckets_left - 1)) {
        int64_t next = train_count[order[i]];
        if (std::abs(static_cast<double>(sum + next) - target) >
            std::abs(static_cast<double>(sum) - target))
          break;
        bucket.push_back(order[i]);
        sum += next;
        ++i;
      }
    } else {
      while (i < order.size()) {  // last bucket takes the rest
        bucket.push_back(order[i]);
        sum += train_count[order[i]];
        ++i;
      }
    }
    remaining_total -= sum;
    for (int32_t u : bucket) out.bucket_of[u] = static_cast<int32_t>(out.users.size());
    out.total_train.push_back(sum);
    out.mean_train.push_back(static_cast<double>(sum) / bucket.size());
    out.users.push_back(std::move(bucket));
  }
  return out;
}

UserIndex::UserIndex(const InteractionSet& set)
    : num_users_(set.num_users), num_items_(set.num_items) {
  for (int role = 0; role < 3; ++role) {
    std::vector<int32_t> counts(num_users_ + 1, 0);
    for (const Interaction& r : set.records)
      if (static_cast<int>(r.role) == role) ++counts[r.user + 1];
    for (int32_t u = 0; u < num_users_; ++u) counts[u + 1] += counts[u];
    std::vector<int32_t> ids(counts[num_users_]);
    std::vector<int32_t> fill = counts;
    for (const Interaction& r : set.records)
      if (static_cast<int>(r.role) == role) ids[fill[r.user]++] = r.item;
    for (int32_t u = 0; u < num_users_; ++u)
      std::sort(ids.begin() + counts[u], ids.begin() + counts[u + 1]);
    offsets_[role] = std::move(counts);
    item_ids_[role] = std::move(ids);
  }
}

std::span<const int32_t> UserIndex::items(int32_t user, Role role) const {
  int r = static_cast<int>(role);
  int32_t lo = offsets_[r][user], hi = offsets_[r][user + 1];
  return {item_ids_[r].data() + lo, static_cast<size_t>(hi - lo)};
}

bool UserIndex::has(int32_t user, Role role, int32_t item) const {
  auto span = items(user, role);
  return std::binary_search(span.begin(), span.end(), item);
}

TripleIndex::TripleIndex(const TripleSet& set) {
  if (set.num_entities >= (1 << 24) || set.num_relations >= (1 << 16))
    throw DataError("TripleIndex: entity/relation counts exceed packed-key range");
  keys_.reserve(set.triples.size() * 2);
  for (const Triple& t : set.triples) keys_.insert(key(t.head, t.tail, t.rel));
}

// --- preprocessed directory -------------------------------------------------

namespace {

const char* role_file(Role r) {
  switch (r) {
    case Role::train: return "train.tsv";
    case Role::valid: return "valid.tsv";
    case Role::test: return "test.tsv";
  }
  return "";
}

const char* kg_role_file(Role r) {
  switch (r) {
    case Role::train: return "kg_train.tsv";
    case Role::valid: return "kg_valid.tsv";
    case Role::test: return "kg_test.tsv";
  }
  return "";
}

json name_map(const std::vector<std::string>& names) {
  json m = json::object();
  for (size_t k = 0; k < names.size(); ++k) m[names[k]] = k;
  return m;
}

std::vector<std::string> invert_name_map(const json& m, const char* what) {
  std::vector<std::string> names(m.size());
  for (auto it = m.begin(); it != m.end(); ++it) {
    size_t idx = it.value().get<size_t>();
    if (idx >= names.size())
      throw DataError(std::string("index.json: non-dense ") + what + " indices");
    names[idx] = it.key();
  }
  return names;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  for (Role role : {Role::train, Role::valid, Role::test}) {
    std::ofstream out(fs::path(dir) / role_file(role));
    out << "# user\titem\n";
    for (const Interaction& r : corpus.interactions.records)
      if (r.role == role) out << r.user << '\t' << r.item << '\n';
  }
  for (Role role : {Role::train, Role::valid, Role::test}) {
    std::ofstream out(fs::path(dir) / kg_role_file(role));
    out << "# head\ttail\trelation\n";
    for (const Triple& t : corpus.triples.triples)
      if (t.role == role) out << t.head << '\t' << t.tail << '\t' << t.rel << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "alignments.tsv");
    out << "# item\tentity\n";
    for (auto& [item, ent] : corpus.alignments.pairs) out << item << '\t' << ent << '\n';
  }

  json index;
  index["format"] = "ktup-index";
  index["version"] = 1;
  index["counts"] = {{"users", corpus.interactions.num_users},
                     {"items", corpus.interactions.num_items},
                     {"entities", corpus.triples.num_entities},
                     {"relations", corpus.triples.num_relations}};
  index["users"] = name_map(corpus.interactions.user_names);
  index["items"] = name_map(corpus.interactions.item_names);
  index["entities"] = name_map(corpus.triples.entity_names);
  index["relations"] = name_map(corpus.triples.relation_names);
  std::ofstream out(fs::path(dir) / "index.json");
  out << index.dump(2) << '\n';
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream idx(fs::path(dir) / "index.json");
  if (!idx) throw DataError("cannot open " + dir + "/index.json");
  json index;
  try {
    idx >> index;
  } catch (const json::exception& e) {
    throw DataError("index.json: " + std::string(e.what()));
  }
  if (index.value("format", "") != "ktup-index" || index.value("version", 0) != 1)
    throw DataError("index.json: unrecognized format/version");

  Corpus corpus;
  corpus.interactions.user_names = invert_name_map(index.at("users"), "user");
  corpus.interactions.item_names = invert_name_map(index.at("items"), "item");
  corpus.triples.entity_names = invert_name_map(index.at("entities"), "entity");
  corpus.triples.relation_names = invert_name_map(index.at("relations"), "relation");
  corpus.interactions.num_users = static_cast<int32_t>(corpus.interactions.user_names.size());
  corpus.interactions.num_items = static_cast<int32_t>(corpus.interactions.item_names.size());
  corpus.triples.num_entities = static_cast<int32_t>(corpus.triples.entity_names.size());
  corpus.triples.num_relations = static_cast<int32_t>(corpus.triples.relation_names.size());

  auto parse_int = [](const std::string& path, size_t lineno, const std::string& s,
                      int32_t limit) {
    int32_t v = 0;
    try {
      size_t used = 0;
      v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      malformed(path, lineno, "expected a dense integer id, got `" + s + "`");
    }
    if (v < 0 || v >= limit) malformed(path, lineno, "dense id out of range: " + s);
    return v;
  };

  for (Role role : {Role::train, Role::valid, Role::test}) {
    std::string path = (fs::path(dir) / role_file(role)).string();
    auto in = open_or_throw(path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (skippable(line)) continue;
      auto fields = split_tsv(line);
      if (fields.size() != 2) malformed(path, lineno, "expected `user<TAB>item`");
      corpus.interactions.records.push_back(
          {parse_int(path, lineno, fields[0], corpus.interactions.num_users),
           parse_int(path, lineno, fields[1], corpus.interactions.num_items), role});
    }
  }
  for (Role role : {Role::train, Role::valid, Role::test}) {
    std::string path = (fs::path(dir) / kg_role_file(role)).string();
    if (!fs::exists(path)) continue;
    auto in = open_or_throw(path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (skippable(line)) continue;
      auto fields = split_tsv(line);
      if (fields.size() != 3) malformed(path, lineno, "expected `head<TAB>tail<TAB>relation`");
      corpus.triples.triples.push_back(
          {parse_int(path, lineno, fields[0], corpus.triples.num_entities),
           parse_int(path, lineno, fields[1], corpus.triples.num_entities),
           parse_int(path, lineno, fields[2], corpus.triples.num_relations), role});
    }
  }
  {
    std::string path = (fs::path(dir) / "alignments.tsv").string();
    corpus.alignments.rebuild_lookup(corpus.interactions.num_items, corpus.triples.num_entities);
    if (fs::exists(path)) {
      auto in = open_or_throw(path);
      std::string line;
      size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        auto fields = split_tsv(line);
        if (fields.size() != 2) malformed(path, lineno, "expected `item<TAB>entity`");
        int32_t item = parse_int(path, lineno, fields[0], corpus.interactions.num_items);
        int32_t ent = parse_int(path, lineno, fields[1], corpus.triples.num_entities);
        corpus.alignments.pairs.emplace_back(item, ent);
        corpus.alignments.item_to_entity[item] = ent;
        corpus.alignments.entity_to_item[ent] = item;
      }
    }
  }
  return corpus;
}

}  // namespace ktup
