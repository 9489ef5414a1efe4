// ktup: train and evaluate translation-based recommendation jointly with
// knowledge-graph completion. See README.md for the file formats.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"
#include "ktup/error.hpp"
#include "ktup/evaluator.hpp"
#include "ktup/explain.hpp"
#include "ktup/kgc.hpp"
#include "ktup/rec.hpp"
#include "ktup/trainer.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace ktup;

struct CommonOptions {
  uint64_t seed = 42;
  std::string out = ".";
  int threads = 1;
};

struct DataOptions {
  std::string data_dir;
  std::string interactions;
  std::string triples;
  std::string alignments;
  int min_user_freq = 10;
  int min_item_freq = 10;
  std::string ratios = "7:1:2";
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--seed", opts.seed, "Master random seed")
      ->capture_default_str()
      ->envname("KTUP_SEED");
  cmd->add_option("--out", opts.out, "Output directory for artifacts and the run manifest")
      ->capture_default_str()
      ->envname("KTUP_OUT");
  cmd->add_option("--threads", opts.threads, "Evaluation threads (training stays single-threaded)")
      ->capture_default_str()
      ->envname("KTUP_THREADS");
}

void add_data_options(CLI::App* cmd, DataOptions& opts) {
  cmd->add_option("--data-dir", opts.data_dir,
                  "Preprocessed dataset directory (output of `ktup preprocess`)");
  cmd->add_option("--interactions", opts.interactions, "Raw user<TAB>item[<TAB>rating] TSV");
  cmd->add_option("--triples", opts.triples, "Raw head<TAB>tail<TAB>relation TSV");
  cmd->add_option("--alignments", opts.alignments, "Raw item<TAB>entity TSV");
  cmd->add_option("--min-user-freq", opts.min_user_freq, "Drop users with fewer interactions")
      ->capture_default_str();
  cmd->add_option("--min-item-freq", opts.min_item_freq, "Drop items with fewer interactions")
      ->capture_default_str();
  cmd->add_option("--ratios", opts.ratios, "train:valid:test split ratio")->capture_default_str();
}

std::array<int, 3> parse_ratios(const std::string& s) {
  std::array<int, 3> out{};
  int got = std::sscanf(s.c_str(), "%d:%d:%d", &out[0], &out[1], &out[2]);
  if (got != 3) throw ConfigError("cannot parse --ratios `" + s + "` (expected a:b:c)");
  return out;
}

Corpus load_data(const DataOptions& opts, uint64_t seed) {
  if (!opts.data_dir.empty()) {
    if (!opts.interactions.empty() || !opts.triples.empty() || !opts.alignments.empty())
      throw ConfigError("--data-dir excludes the raw input flags");
    return load_corpus(opts.data_dir);
  }
  if (opts.interactions.empty() && opts.triples.empty())
    throw ConfigError("need --data-dir, or --interactions and/or --triples");
  std::array<int, 3> ratios = parse_ratios(opts.ratios);

  Corpus corpus;
  if (!opts.interactions.empty()) {
    corpus.interactions =
        load_interactions(opts.interactions, opts.min_user_freq, opts.min_item_freq);
    assign_splits(corpus.interactions, ratios, seed);
  }
  if (!opts.triples.empty()) {
    corpus.triples = load_triples(opts.triples);
    assign_triple_splits(corpus.triples, ratios, seed);
  }
  if (!opts.alignments.empty()) {
    if (opts.interactions.empty() || opts.triples.empty())
      throw ConfigError("--alignments needs both --interactions and --triples");
    corpus.alignments = load_alignments(opts.alignments, corpus.interactions, corpus.triples);
  } else {
    corpus.alignments.rebuild_lookup(corpus.interactions.num_items, corpus.triples.num_entities);
  }
  return corpus;
}

json data_manifest(const DataOptions& opts) {
  return {{"data_dir", opts.data_dir},       {"interactions", opts.interactions},
          {"triples", opts.triples},         {"alignments", opts.alignments},
          {"min_user_freq", opts.min_user_freq}, {"min_item_freq", opts.min_item_freq},
          {"ratios", opts.ratios}};
}

void write_manifest(const CommonOptions& common, const std::string& command, json extra) {
  fs::create_directories(common.out);
  json manifest;
  manifest["command"] = command;
  manifest["version"] = "0.1.0";
  manifest["seed"] = common.seed;
  manifest["out"] = common.out;
  manifest["threads"] = common.threads;
  manifest.update(extra);
  std::ofstream out(fs::path(common.out) / "run-manifest.json");
  out << manifest.dump(2) << '\n';
}

Model parse_model(const std::string& name) {
  for (Model m : {Model::bprmf, Model::transe, Model::transh, Model::tup, Model::ktup})
    if (name == model_name(m)) return m;
  throw ConfigError("unknown model `" + name + "`");
}

OptKind parse_optimizer(const std::string& name) {
  for (OptKind k : {OptKind::sgd, OptKind::adagrad, OptKind::adam})
    if (name == optimizer_name(k)) return k;
  throw ConfigError("unknown optimizer `" + name + "`");
}

int32_t resolve_raw_id(const std::vector<std::string>& names, const std::string& raw,
                       const char* what) {
  auto it = std::lower_bound(names.begin(), names.end(), raw);
  if (it == names.end() || *it != raw)
    throw DataError(std::string(what) + " id `" + raw + "` not found in the corpus");
  return static_cast<int32_t>(it - names.begin());
}

// An embedding file may omit a modality it never trained (zero rows). The
// counts a command actually uses must match the corpus exactly; the rest may
// be zero or matching.
void check_space_matches_corpus(const EmbeddingSpace& space, const Corpus& corpus, bool need_rec,
                                bool need_kg) {
  SpaceShape s = space.shape();
  auto mismatch = [](const char* what, int32_t a, int32_t b) {
    throw DataError(std::string("embedding file does not match the corpus: ") + what + " " +
                    std::to_string(a) + " vs " + std::to_string(b));
  };
  auto check = [&](const char* what, int32_t have, int32_t want, bool required) {
    if (have == want) return;
    if (!required && have == 0) return;
    mismatch(what, have, want);
  };
  check("users", s.num_users, corpus.interactions.num_users, need_rec);
  check("items", s.num_items, corpus.interactions.num_items, need_rec);
  check("entities", s.num_entities, corpus.triples.num_entities, need_kg);
  check("relations", s.num_relations, corpus.triples.num_relations, need_kg);
}

// ---------------------------------------------------------------------------

struct TrainCli {
  CommonOptions common;
  DataOptions data;
  std::string model = "ktup";
  std::string induction = "soft";
  std::string noise = "gumbel";
  std::string optimizer = "adam";
  int dim = 100;
  int num_prefs = 0;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 5;
  int eval_every = 5;
  int eval_n = 10;
  double lr = 0.001;
  double l2 = 0.0;
  double lambda = 0.5;
  double margin = 1.0;
  double tau = 1.0;
  bool no_constraints = false;
  bool bern = false;
  std::vector<std::string> init_from;
  std::string save;
  std::string log;
};

int run_train(const TrainCli& cli, const CLI::App* cmd) {
  Corpus corpus = load_data(cli.data, cli.common.seed);

  TrainConfig cfg;
  cfg.model = parse_model(cli.model);
  if (cli.induction == "soft") cfg.induction = InductionKind::soft;
  else if (cli.induction == "hard") cfg.induction = InductionKind::hard;
  else throw ConfigError("unknown induction `" + cli.induction + "`");
  if (cli.noise == "gumbel") cfg.noise = NoiseKind::gumbel;
  else if (cli.noise == "normal") cfg.noise = NoiseKind::normal;
  else if (cli.noise == "none") cfg.noise = NoiseKind::none;
  else throw ConfigError("unknown noise kind `" + cli.noise + "`");
  cfg.optimizer = parse_optimizer(cli.optimizer);
  cfg.lr = cli.lr;
  cfg.l2 = cli.l2;
  cfg.lambda = cli.lambda;
  cfg.margin = cli.margin;
  cfg.tau = cli.tau;
  cfg.batch_size = cli.batch_size;
  cfg.max_epochs = cli.max_epochs;
  cfg.patience = cli.patience;
  cfg.eval_every = cli.eval_every;
  cfg.eval_n = cli.eval_n;
  cfg.constraints = !cli.no_constraints;
  cfg.bernoulli = cli.bern;
  cfg.eval_threads = cli.common.threads;
  cfg.seed = cli.common.seed;
  apply_model_defaults(cfg, cmd->count("--lr") > 0, cmd->count("--l2") > 0,
                       cmd->count("--optimizer") > 0);

  if (cfg.model == Model::ktup && corpus.alignments.pairs.empty())
    throw ConfigError("ktup requires --alignments (or a data dir that contains them)");

  Trainer trainer(corpus, cfg);
  SpaceShape shape = trainer.space_shape(cli.dim, cli.num_prefs);
  EmbeddingSpace space = EmbeddingSpace::init(shape, cfg.seed);
  for (const std::string& path : cli.init_from) {
    EmbeddingSpace pretrained = EmbeddingSpace::load(path);
    auto copied = space.absorb(pretrained);
    std::fprintf(stderr, "init-from %s:", path.c_str());
    for (Param p : copied) std::fprintf(stderr, " %s", param_name(p));
    std::fprintf(stderr, "\n");
  }

  fs::create_directories(cli.common.out);
  std::string log_path =
      cli.log.empty() ? (fs::path(cli.common.out) / "epochs.ndjson").string() : cli.log;
  std::ofstream log_stream(log_path);
  if (!log_stream) throw DataError("cannot open epoch log for writing: " + log_path);

  TrainResult result = trainer.fit(std::move(space), &log_stream);

  // only the matrices this model trains go to disk; pretraining hand-offs
  // then stay order-independent under repeated --init-from
  auto trained = [&](Param p) {
    switch (cfg.model) {
      case Model::bprmf: return p == Param::user || p == Param::item;
      case Model::transe: return p == Param::entity || p == Param::rel;
      case Model::transh:
        return p == Param::entity || p == Param::rel || p == Param::rel_norm;
      case Model::tup:
        return p == Param::user || p == Param::item || p == Param::pref ||
               p == Param::pref_norm;
      case Model::ktup: return true;
    }
    return true;
  };
  for (int p = 0; p < kNumParams; ++p)
    if (!trained(static_cast<Param>(p)))
      result.space.mat(static_cast<Param>(p)) = Matrix(0, result.space.dim());

  std::string save_path =
      cli.save.empty() ? (fs::path(cli.common.out) / "space.bin").string() : cli.save;
  result.space.save(save_path);

  write_manifest(cli.common, "train",
                 {{"data", data_manifest(cli.data)},
                  {"model", cli.model},
                  {"induction", cli.induction},
                  {"noise", cli.noise},
                  {"optimizer", optimizer_name(cfg.optimizer)},
                  {"dim", cli.dim},
                  {"num_prefs", shape.num_prefs},
                  {"batch_size", cfg.batch_size},
                  {"max_epochs", cfg.max_epochs},
                  {"patience", cfg.patience},
                  {"eval_every", cfg.eval_every},
                  {"eval_n", cfg.eval_n},
                  {"lr", cfg.lr},
                  {"l2", cfg.l2},
                  {"lambda", cfg.lambda},
                  {"margin", cfg.margin},
                  {"tau", cfg.tau},
                  {"constraints", cfg.constraints},
                  {"bernoulli", cfg.bernoulli},
                  {"init_from", cli.init_from},
                  {"save", save_path},
                  {"log", log_path},
                  {"best_metric", result.best_metric},
                  {"best_epoch", result.best_epoch},
                  {"epochs_run", result.logs.size()}});

  std::printf("trained %s for %zu epochs; best validation metric %.6f at epoch %d\n", cli.model.c_str(),
              result.logs.size(), result.best_metric, result.best_epoch);
  std::printf("parameters: %s\nepoch log: %s\n", save_path.c_str(), log_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalCli {
  CommonOptions common;
  DataOptions data;
  std::string space;
  std::string model = "ktup";
  std::string induction = "soft";
  std::string split = "test";
  std::string tasks = "all";
  double tau = 1.0;
  double margin = 1.0;
  double category_cutoff = 1.5;
  int n = 10;
  int by_sparsity = 0;
  std::string dump_ranks;
};

RecConfig rec_config_for(Model model, const std::string& induction, double tau) {
  RecConfig rc;
  rc.induction = induction == "hard" ? InductionKind::hard : InductionKind::soft;
  rc.tau = tau;
  rc.enhanced = model == Model::ktup;
  rc.noise = NoiseKind::none;  // evaluation is deterministic
  return rc;
}

int run_eval(const EvalCli& cli) {
  Corpus corpus = load_data(cli.data, cli.common.seed);
  EmbeddingSpace space = EmbeddingSpace::load(cli.space);
  Model model = parse_model(cli.model);
  Role split = cli.split == "valid" ? Role::valid : Role::test;
  if (cli.split != "valid" && cli.split != "test")
    throw ConfigError("unknown --split `" + cli.split + "`");
  bool want_rec = cli.tasks == "all" || cli.tasks == "rec";
  bool want_kgc = cli.tasks == "all" || cli.tasks == "kgc";
  if (!want_rec && !want_kgc) throw ConfigError("unknown --tasks `" + cli.tasks + "`");
  if (model == Model::transe || model == Model::transh) want_rec = false;
  if (model == Model::bprmf || model == Model::tup) want_kgc = false;
  check_space_matches_corpus(space, corpus, want_rec, want_kgc || model == Model::ktup);

  fs::create_directories(cli.common.out);
  std::ofstream records(fs::path(cli.common.out) / "metrics.ndjson");
  std::ofstream ranks_out;
  if (!cli.dump_ranks.empty()) {
    ranks_out.open(cli.dump_ranks);
    if (!ranks_out) throw DataError("cannot open --dump-ranks path: " + cli.dump_ranks);
  }

  UserIndex index(corpus.interactions);
  json summary;

  if (want_rec) {
    RecModel rec_model(space, rec_config_for(model, cli.induction, cli.tau), &corpus.alignments);
    RecEvalConfig cfg;
    cfg.n = cli.n;
    cfg.relevant = split;
    cfg.higher_is_better = model == Model::bprmf;
    cfg.threads = cli.common.threads;
    std::vector<RecRankRecord> rank_records;
    RecMetrics m =
        eval_rec(rec_model, index, cfg, {}, cli.dump_ranks.empty() ? nullptr : &rank_records);

    std::printf("item recommendation (@%d, %s split, %lld users)\n", cli.n, cli.split.c_str(),
                static_cast<long long>(m.users));
    std::printf("  %-10s %-10s %-10s %-10s %-10s\n", "precision", "recall", "f1", "hit", "ndcg");
    std::printf("  %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", m.precision, m.recall, m.f1, m.hit,
                m.ndcg);
    json rec_json = {{"task", "rec"},      {"split", cli.split}, {"n", cli.n},
                     {"users", m.users},   {"precision", m.precision}, {"recall", m.recall},
                     {"f1", m.f1},         {"hit", m.hit},       {"ndcg", m.ndcg}};
    records << rec_json.dump() << '\n';
    summary["rec"] = rec_json;

    if (cli.by_sparsity > 0) {
      SparsityBuckets buckets = sparsity_buckets(corpus.interactions, cli.by_sparsity);
      auto per_bucket = eval_by_sparsity(rec_model, index, cfg, buckets);
      std::printf("sparsity buckets (%zu groups by train interactions)\n", per_bucket.size());
      for (size_t b = 0; b < per_bucket.size(); ++b) {
        std::printf("  group %zu: users %zu, mean train %.1f, f1 %.4f, hit %.4f\n", b,
                    buckets.users[b].size(), buckets.mean_train[b], per_bucket[b].f1,
                    per_bucket[b].hit);
        records << json{{"task", "rec_by_sparsity"},
                        {"group", b},
                        {"users", buckets.users[b].size()},
                        {"mean_train", buckets.mean_train[b]},
                        {"f1", per_bucket[b].f1},
                        {"hit", per_bucket[b].hit},
                        {"ndcg", per_bucket[b].ndcg}}
                       .dump()
                << '\n';
      }
    }
    for (const RecRankRecord& r : rank_records)
      ranks_out << json{{"task", "rec"},
                        {"user", corpus.interactions.user_names[r.user]},
                        {"item", corpus.interactions.item_names[r.item]},
                        {"rank", r.rank}}
                       .dump()
                << '\n';
  }

  if (want_kgc) {
    if (corpus.triples.triples.empty()) throw ConfigError("kgc evaluation needs triples");
    KgcConfig kcfg;
    kcfg.variant = model == Model::transe ? KgcVariant::transE : KgcVariant::transH;
    kcfg.margin = cli.margin;
    TripleIndex known(corpus.triples);
    RelationProfile profile = relation_categories(corpus.triples, cli.category_cutoff);
    KgcEvalConfig ecfg;
    ecfg.which = split;
    ecfg.threads = cli.common.threads;
    std::vector<KgcRankRecord> rank_records;
    KgcMetrics m = eval_kgc(space, kcfg, corpus.triples, known, profile, ecfg,
                            cli.dump_ranks.empty() ? nullptr : &rank_records);

    std::printf("kg completion (hit@%d, %s split, %lld queries)\n", m.hit_cutoff,
                cli.split.c_str(), static_cast<long long>(m.all.queries));
    std::printf("  %-8s %-12s %-12s %-12s %-12s\n", "side", "hit(raw)", "hit(filt)", "mr(raw)",
                "mr(filt)");
    auto side_row = [&](const char* name, const KgcSideMetrics& s) {
      std::printf("  %-8s %-12.4f %-12.4f %-12.1f %-12.1f\n", name, s.hit_raw, s.hit_filtered,
                  s.mean_rank_raw, s.mean_rank_filtered);
    };
    side_row("head", m.head);
    side_row("tail", m.tail);
    side_row("all", m.all);
    std::printf("  by relation category (hit@%d filtered, head/tail)\n", m.hit_cutoff);
    for (int c = 0; c < 4; ++c) {
      const char* name = category_name(static_cast<RelationCategory>(c));
      std::printf("    %-4s head %.4f (%lld)  tail %.4f (%lld)\n", name,
                  m.by_category[c][0].hit_filtered,
                  static_cast<long long>(m.by_category[c][0].queries),
                  m.by_category[c][1].hit_filtered,
                  static_cast<long long>(m.by_category[c][1].queries));
    }
    json kgc_json = {{"task", "kgc"},
                     {"split", cli.split},
                     {"hit_cutoff", m.hit_cutoff},
                     {"queries", m.all.queries},
                     {"hit_raw", m.all.hit_raw},
                     {"hit_filtered", m.all.hit_filtered},
                     {"mean_rank_raw", m.all.mean_rank_raw},
                     {"mean_rank_filtered", m.all.mean_rank_filtered}};
    records << kgc_json.dump() << '\n';
    summary["kgc"] = kgc_json;
    for (int c = 0; c < 4; ++c)
      for (int s = 0; s < 2; ++s)
        records << json{{"task", "kgc_by_category"},
                        {"category", category_name(static_cast<RelationCategory>(c))},
                        {"side", s == 0 ? "head" : "tail"},
                        {"queries", m.by_category[c][s].queries},
                        {"hit_raw", m.by_category[c][s].hit_raw},
                        {"hit_filtered", m.by_category[c][s].hit_filtered},
                        {"mean_rank_raw", m.by_category[c][s].mean_rank_raw},
                        {"mean_rank_filtered", m.by_category[c][s].mean_rank_filtered}}
                       .dump()
                << '\n';
    for (const KgcRankRecord& r : rank_records)
      ranks_out << json{{"task", "kgc"},
                        {"head", corpus.triples.entity_names[r.triple.head]},
                        {"tail", corpus.triples.entity_names[r.triple.tail]},
                        {"relation", corpus.triples.relation_names[r.triple.rel]},
                        {"side", r.head_side ? "head" : "tail"},
                        {"raw_rank", r.raw_rank},
                        {"filtered_rank", r.filtered_rank}}
                       .dump()
                << '\n';
  }

  write_manifest(cli.common, "eval",
                 {{"data", data_manifest(cli.data)},
                  {"space", cli.space},
                  {"model", cli.model},
                  {"induction", cli.induction},
                  {"split", cli.split},
                  {"tasks", cli.tasks},
                  {"n", cli.n},
                  {"by_sparsity", cli.by_sparsity},
                  {"category_cutoff", cli.category_cutoff},
                  {"dump_ranks", cli.dump_ranks},
                  {"results", summary}});
  return 0;
}

// ---------------------------------------------------------------------------

struct RecommendCli {
  CommonOptions common;
  DataOptions data;
  std::string space;
  std::string model = "ktup";
  std::string induction = "soft";
  std::string user;
  double tau = 1.0;
  int n = 10;
};

int run_recommend(const RecommendCli& cli) {
  Corpus corpus = load_data(cli.data, cli.common.seed);
  EmbeddingSpace space = EmbeddingSpace::load(cli.space);
  Model model = parse_model(cli.model);
  if (model == Model::transe || model == Model::transh)
    throw ConfigError("recommend needs a recommendation model (bprmf, tup or ktup)");
  check_space_matches_corpus(space, corpus, true, model == Model::ktup);

  int32_t user = resolve_raw_id(corpus.interactions.user_names, cli.user, "user");
  UserIndex index(corpus.interactions);
  RecModel rec_model(space, rec_config_for(model, cli.induction, cli.tau), &corpus.alignments);
  bool higher = model == Model::bprmf;

  std::vector<char> excluded(corpus.interactions.num_items, 0);
  for (int32_t i : index.items(user, Role::train)) excluded[i] = 1;
  for (int32_t i : index.items(user, Role::valid)) excluded[i] = 1;

  std::vector<std::pair<double, int32_t>> ranked;
  for (int32_t i = 0; i < corpus.interactions.num_items; ++i) {
    if (excluded[i]) continue;
    double s = higher ? rec_model.dot_score(user, i) : rec_model.score(user, i);
    ranked.emplace_back(higher ? -s : s, i);
  }
  std::sort(ranked.begin(), ranked.end());

  int n = std::min<int>(cli.n, static_cast<int>(ranked.size()));
  for (int k = 0; k < n; ++k) {
    double score = higher ? -ranked[k].first : ranked[k].first;
    std::printf("%d\t%s\t%.6f\n", k + 1, corpus.interactions.item_names[ranked[k].second].c_str(),
                score);
  }
  write_manifest(cli.common, "recommend",
                 {{"data", data_manifest(cli.data)},
                  {"space", cli.space},
                  {"model", cli.model},
                  {"user", cli.user},
                  {"n", cli.n}});
  return 0;
}

// ---------------------------------------------------------------------------

struct CompleteCli {
  CommonOptions common;
  DataOptions data;
  std::string space;
  std::string model = "ktup";
  std::string head;
  std::string tail;
  std::string rel;
  int n = 10;
  bool filtered = false;
};

int run_complete(const CompleteCli& cli) {
  Corpus corpus = load_data(cli.data, cli.common.seed);
  EmbeddingSpace space = EmbeddingSpace::load(cli.space);
  Model model = parse_model(cli.model);
  if (model == Model::bprmf || model == Model::tup)
    throw ConfigError("complete needs a KG model (transe, transh or ktup)");
  check_space_matches_corpus(space, corpus, false, true);
  if (cli.head.empty() == cli.tail.empty())
    throw ConfigError("give exactly one of --head or --tail, plus --rel");

  KgcConfig kcfg;
  kcfg.variant = model == Model::transe ? KgcVariant::transE : KgcVariant::transH;
  int32_t rel = resolve_raw_id(corpus.triples.relation_names, cli.rel, "relation");
  bool predict_tail = cli.tail.empty();
  int32_t anchor = resolve_raw_id(corpus.triples.entity_names,
                                  predict_tail ? cli.head : cli.tail, "entity");
  TripleIndex known(corpus.triples);

  std::vector<std::pair<double, int32_t>> ranked;
  for (int32_t e = 0; e < corpus.triples.num_entities; ++e) {
    int32_t h = predict_tail ? anchor : e;
    int32_t t = predict_tail ? e : anchor;
    if (cli.filtered && known.contains(h, t, rel)) continue;
    ranked.emplace_back(score_triple(space, kcfg, h, t, rel), e);
  }
  std::sort(ranked.begin(), ranked.end());
  int n = std::min<int>(cli.n, static_cast<int>(ranked.size()));
  for (int k = 0; k < n; ++k)
    std::printf("%d\t%s\t%.6f\n", k + 1, corpus.triples.entity_names[ranked[k].second].c_str(),
                ranked[k].first);

  write_manifest(cli.common, "complete",
                 {{"data", data_manifest(cli.data)},
                  {"space", cli.space},
                  {"model", cli.model},
                  {"head", cli.head},
                  {"tail", cli.tail},
                  {"rel", cli.rel},
                  {"n", cli.n},
                  {"filtered", cli.filtered}});
  return 0;
}

// ---------------------------------------------------------------------------

struct ExplainCli {
  CommonOptions common;
  DataOptions data;
  std::string space;
  std::string user;
  int top_prefs = 2;
  int top_items = 4;
  int max_support = 5;
  bool as_json = false;
};

int run_explain(const ExplainCli& cli) {
  Corpus corpus = load_data(cli.data, cli.common.seed);
  EmbeddingSpace space = EmbeddingSpace::load(cli.space);
  check_space_matches_corpus(space, corpus, true, false);
  int32_t user = resolve_raw_id(corpus.interactions.user_names, cli.user, "user");
  UserIndex index(corpus.interactions);

  ExplainConfig cfg;
  cfg.top_k_prefs = cli.top_prefs;
  cfg.top_n_items = cli.top_items;
  cfg.max_support = cli.max_support;
  UserExplanation ex = explain_user(space, corpus, index, user, cfg);
  if (!ex.named)
    std::fprintf(stderr,
                 "warning: preferences do not map onto relations; reporting anonymous ids\n");

  auto pref_label = [&](int32_t k) {
    return ex.named ? corpus.triples.relation_names[k] : "pref_" + std::to_string(k);
  };

  if (cli.as_json) {
    json out;
    out["user"] = corpus.interactions.user_names[user];
    out["named"] = ex.named;
    json prefs = json::array();
    for (size_t k = 0; k < ex.pref_weights.size(); ++k)
      prefs.push_back({{"preference", pref_label(static_cast<int32_t>(k))},
                       {"weight", ex.pref_weights[k]}});
    out["preference_weights"] = prefs;
    json items = json::array();
    for (const Rationale& r : ex.items) {
      json item;
      item["item"] = corpus.interactions.item_names[r.item];
      item["score"] = r.score;
      json top = json::array();
      for (auto& [k, w] : r.top_prefs) top.push_back({{"preference", pref_label(k)}, {"weight", w}});
      item["top_preferences"] = top;
      json support = json::array();
      for (const SupportFact& s : r.support)
        support.push_back({{"history_item", corpus.interactions.item_names[s.history_item]},
                           {"history_entity", corpus.triples.entity_names[s.history_entity]},
                           {"shared_neighbor", corpus.triples.entity_names[s.neighbor_entity]},
                           {"relation", corpus.triples.relation_names[s.relation]}});
      item["support"] = support;
      items.push_back(item);
    }
    out["recommendations"] = items;
    std::printf("%s\n", out.dump(2).c_str());
  } else {
    std::printf("user %s: top preferences:", corpus.interactions.user_names[user].c_str());
    for (const auto& [k, w] : ex.items.empty()
                                  ? std::vector<std::pair<int32_t, double>>{}
                                  : ex.items[0].top_prefs)
      std::printf(" %s (%.3f)", pref_label(k).c_str(), w);
    std::printf("\n");
    for (size_t r = 0; r < ex.items.size(); ++r) {
      const Rationale& rat = ex.items[r];
      std::printf("%zu. %s (distance %.4f)\n", r + 1,
                  corpus.interactions.item_names[rat.item].c_str(), rat.score);
      for (const SupportFact& s : rat.support)
        std::printf("   shares %s with %s via %s\n",
                    corpus.triples.entity_names[s.neighbor_entity].c_str(),
                    corpus.interactions.item_names[s.history_item].c_str(),
                    corpus.triples.relation_names[s.relation].c_str());
    }
  }

  write_manifest(cli.common, "explain",
                 {{"data", data_manifest(cli.data)},
                  {"space", cli.space},
                  {"user", cli.user},
                  {"top_prefs", cli.top_prefs},
                  {"top_items", cli.top_items},
                  {"json", cli.as_json}});
  return 0;
}

// ---------------------------------------------------------------------------

struct PreprocessCli {
  CommonOptions common;
  DataOptions data;
};

int run_preprocess(const PreprocessCli& cli) {
  if (!cli.data.data_dir.empty()) throw ConfigError("preprocess takes raw inputs, not --data-dir");
  Corpus corpus = load_data(cli.data, cli.common.seed);
  save_corpus(corpus, cli.common.out);

  std::printf("users %d, items %d, interactions %zu (%lld duplicate lines dropped)\n",
              corpus.interactions.num_users, corpus.interactions.num_items,
              corpus.interactions.records.size(),
              static_cast<long long>(corpus.interactions.dropped_duplicates));
  if (!corpus.triples.triples.empty())
    std::printf("entities %d, relations %d, triples %zu (%lld duplicates dropped)\n",
                corpus.triples.num_entities, corpus.triples.num_relations,
                corpus.triples.triples.size(),
                static_cast<long long>(corpus.triples.dropped_duplicates));
  if (!corpus.alignments.pairs.empty())
    std::printf("alignments %zu (%lld duplicates rejected, %lld unknown ids dropped), coverage %.1f%%\n",
                corpus.alignments.pairs.size(),
                static_cast<long long>(corpus.alignments.rejected_duplicates),
                static_cast<long long>(corpus.alignments.dropped_unknown),
                100.0 * corpus.alignments.pairs.size() /
                    std::max(1, corpus.interactions.num_items));

  write_manifest(cli.common, "preprocess", {{"data", data_manifest(cli.data)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"translation-based recommendation joint with KG completion"};
  app.require_subcommand(1);

  PreprocessCli preprocess;
  CLI::App* prep_cmd = app.add_subcommand("preprocess", "Filter, index and split raw TSV inputs");
  add_common_options(prep_cmd, preprocess.common);
  add_data_options(prep_cmd, preprocess.data);

  TrainCli train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  add_common_options(train_cmd, train.common);
  add_data_options(train_cmd, train.data);
  train_cmd->add_option("--model", train.model, "bprmf | transe | transh | tup | ktup")
      ->capture_default_str();
  train_cmd->add_option("--induction", train.induction, "hard | soft")->capture_default_str();
  train_cmd->add_option("--gumbel-noise", train.noise, "gumbel | normal | none")
      ->capture_default_str();
  train_cmd->add_option("--optimizer", train.optimizer, "sgd | adagrad | adam")
      ->capture_default_str();
  train_cmd->add_option("--dim", train.dim, "Embedding dimension")->capture_default_str();
  train_cmd->add_option("--num-prefs", train.num_prefs,
                        "Preference count (tup only; ktup uses the relation count)");
  train_cmd->add_option("--batch-size", train.batch_size, "")->capture_default_str();
  train_cmd->add_option("--epochs", train.max_epochs, "Maximum training epochs")
      ->capture_default_str();
  train_cmd->add_option("--patience", train.patience, "Evaluations without improvement before stopping")
      ->capture_default_str();
  train_cmd->add_option("--eval-every", train.eval_every, "Epochs between validation passes")
      ->capture_default_str();
  train_cmd->add_option("--eval-n", train.eval_n, "Cutoff for the validation F1")
      ->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "Learning rate (default 0.005 rec / 0.001 kg+joint)");
  train_cmd->add_option("--l2", train.l2, "L2 coefficient (default 1e-5 rec / 0 kg+joint)");
  train_cmd->add_option("--lambda", train.lambda, "Joint task weight")->capture_default_str();
  train_cmd->add_option("--margin", train.margin, "Margin for the ranking loss")
      ->capture_default_str();
  train_cmd->add_option("--tau", train.tau, "Gumbel softmax temperature")->capture_default_str();
  train_cmd->add_flag("--no-constraints", train.no_constraints,
                      "Disable norm constraint enforcement");
  train_cmd->add_flag("--bern", train.bern, "Bernoulli head/tail corruption");
  train_cmd->add_option("--init-from", train.init_from,
                        "Embedding file(s) to warm-start matching matrices from (repeatable)");
  train_cmd->add_option("--save", train.save, "Parameter output path (default <out>/space.bin)");
  train_cmd->add_option("--log", train.log, "Epoch log path (default <out>/epochs.ndjson)");

  EvalCli eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a trained space");
  add_common_options(eval_cmd, eval.common);
  add_data_options(eval_cmd, eval.data);
  eval_cmd->add_option("--space", eval.space, "Trained parameter file")->required();
  eval_cmd->add_option("--model", eval.model, "Scoring model")->capture_default_str();
  eval_cmd->add_option("--induction", eval.induction, "hard | soft")->capture_default_str();
  eval_cmd->add_option("--split", eval.split, "test | valid")->capture_default_str();
  eval_cmd->add_option("--tasks", eval.tasks, "rec | kgc | all")->capture_default_str();
  eval_cmd->add_option("--n", eval.n, "Ranking cutoff")->capture_default_str();
  eval_cmd->add_option("--tau", eval.tau, "")->capture_default_str();
  eval_cmd->add_option("--by-sparsity", eval.by_sparsity,
                       "Also report per-sparsity-bucket metrics (bucket count)");
  eval_cmd->add_option("--category-cutoff", eval.category_cutoff,
                       "tph/hpt cutoff for the relation category split")
      ->capture_default_str();
  eval_cmd->add_option("--dump-ranks", eval.dump_ranks, "Write per-query ranks to this ndjson path");

  RecommendCli recommend;
  CLI::App* rec_cmd = app.add_subcommand("recommend", "Top-N items for one user");
  add_common_options(rec_cmd, recommend.common);
  add_data_options(rec_cmd, recommend.data);
  rec_cmd->add_option("--space", recommend.space, "")->required();
  rec_cmd->add_option("--model", recommend.model, "")->capture_default_str();
  rec_cmd->add_option("--induction", recommend.induction, "")->capture_default_str();
  rec_cmd->add_option("--user", recommend.user, "Raw user id")->required();
  rec_cmd->add_option("--n", recommend.n, "")->capture_default_str();

  CompleteCli complete;
  CLI::App* comp_cmd = app.add_subcommand("complete", "Top-N entities for a partial triple");
  add_common_options(comp_cmd, complete.common);
  add_data_options(comp_cmd, complete.data);
  comp_cmd->add_option("--space", complete.space, "")->required();
  comp_cmd->add_option("--model", complete.model, "")->capture_default_str();
  comp_cmd->add_option("--head", complete.head, "Raw head entity id (predicts the tail)");
  comp_cmd->add_option("--tail", complete.tail, "Raw tail entity id (predicts the head)");
  comp_cmd->add_option("--rel", complete.rel, "Raw relation id")->required();
  comp_cmd->add_option("--n", complete.n, "")->capture_default_str();
  comp_cmd->add_flag("--filtered", complete.filtered, "Drop known-true answers from the ranking");

  ExplainCli explain;
  CLI::App* exp_cmd = app.add_subcommand("explain", "Explain recommendations for one user");
  add_common_options(exp_cmd, explain.common);
  add_data_options(exp_cmd, explain.data);
  exp_cmd->add_option("--space", explain.space, "")->required();
  exp_cmd->add_option("--user", explain.user, "Raw user id")->required();
  exp_cmd->add_option("--top-prefs", explain.top_prefs, "")->capture_default_str();
  exp_cmd->add_option("--top-items", explain.top_items, "")->capture_default_str();
  exp_cmd->add_option("--max-support", explain.max_support, "")->capture_default_str();
  exp_cmd->add_flag("--json", explain.as_json, "Structured output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (prep_cmd->parsed()) return run_preprocess(preprocess);
    if (train_cmd->parsed()) return run_train(train, train_cmd);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (rec_cmd->parsed()) return run_recommend(recommend);
    if (comp_cmd->parsed()) return run_complete(complete);
    if (exp_cmd->parsed()) return run_explain(explain);
  } catch (const ktup::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 2;
  } catch (const ktup::DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 3;
  } catch (const ktup::NumericError& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
