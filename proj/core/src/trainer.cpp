#include "ktup/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ktup/error.hpp"
#include "ktup/evaluator.hpp"
#include "ktup/vecmath.hpp"

namespace ktup {

namespace {

constexpr double kEps = 1e-8;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;

bool is_rec_model(Model m) { return m == Model::bprmf || m == Model::tup || m == Model::ktup; }
bool is_kgc_model(Model m) { return m == Model::transe || m == Model::transh || m == Model::ktup; }

}  // namespace

const char* model_name(Model m) {
  switch (m) {
    case Model::bprmf: return "bprmf";
    case Model::transe: return "transe";
    case Model::transh: return "transh";
    case Model::tup: return "tup";
    case Model::ktup: return "ktup";
  }
  return "?";
}

const char* optimizer_name(OptKind k) {
  switch (k) {
    case OptKind::sgd: return "sgd";
    case OptKind::adagrad: return "adagrad";
    case OptKind::adam: return "adam";
  }
  return "?";
}

void apply_model_defaults(TrainConfig& cfg, bool lr_set, bool l2_set, bool optimizer_set) {
  bool rec_only = cfg.model == Model::bprmf || cfg.model == Model::tup;
  if (!lr_set) cfg.lr = rec_only ? 0.005 : 0.001;
  if (!l2_set) cfg.l2 = rec_only ? 1e-5 : 0.0;
  if (!optimizer_set) cfg.optimizer = rec_only ? OptKind::adagrad : OptKind::adam;
}

OptState::OptState(OptKind kind, const EmbeddingSpace& space, double lr) : kind_(kind), lr_(lr) {
  for (int p = 0; p < kNumParams; ++p) {
    const Matrix& m = space.mat(static_cast<Param>(p));
    size_t n = m.size();
    if (kind_ == OptKind::adagrad) acc_[p].assign(n, 0.0);
    if (kind_ == OptKind::adam) {
      m_[p].assign(n, 0.0);
      v_[p].assign(n, 0.0);
      step_[p].assign(m.rows(), 0);
    }
  }
}

void OptState::apply(EmbeddingSpace& space, Param p, int32_t row, std::span<const double> grad) {
  auto theta = space.mat(p).row(row);
  size_t base = static_cast<size_t>(row) * theta.size();
  int pi = static_cast<int>(p);
  switch (kind_) {
    case OptKind::sgd:
      for (size_t d = 0; d < theta.size(); ++d)
        theta[d] = static_cast<float>(static_cast<double>(theta[d]) - lr_ * grad[d]);
      break;
    case OptKind::adagrad:
      for (size_t d = 0; d < theta.size(); ++d) {
        double g = grad[d];
        double a = (acc_[pi][base + d] += g * g);
        theta[d] = static_cast<float>(static_cast<double>(theta[d]) - lr_ * g / std::sqrt(a + kEps));
      }
      break;
    case OptKind::adam: {
      int64_t t = ++step_[pi][row];
      double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
      double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
      for (size_t d = 0; d < theta.size(); ++d) {
        double g = grad[d];
        double m = (m_[pi][base + d] = kBeta1 * m_[pi][base + d] + (1.0 - kBeta1) * g);
        double v = (v_[pi][base + d] = kBeta2 * v_[pi][base + d] + (1.0 - kBeta2) * g * g);
        double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + kEps);
        theta[d] = static_cast<float>(static_cast<double>(theta[d]) - update);
      }
      break;
    }
  }
}

Trainer::Trainer(const Corpus& corpus, const TrainConfig& cfg)
    : corpus_(corpus), cfg_(cfg), user_index_(corpus.interactions) {
  if (cfg_.lambda < 0.0 || cfg_.lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
  if (cfg_.batch_size <= 0) throw ConfigError("batch size must be positive");

  if (is_rec_model(cfg_.model) && corpus_.interactions.records.empty())
    throw ConfigError(std::string(model_name(cfg_.model)) + " needs user-item interactions");
  if (is_kgc_model(cfg_.model) && corpus_.triples.triples.empty())
    throw ConfigError(std::string(model_name(cfg_.model)) + " needs KG triples");
  if (cfg_.model == Model::ktup && corpus_.alignments.pairs.empty())
    throw ConfigError("ktup needs item-entity alignments");

  triple_index_ = std::make_unique<TripleIndex>(corpus_.triples);
  if (!corpus_.triples.triples.empty()) profile_ = relation_categories(corpus_.triples);
  sampler_ = std::make_unique<Sampler>(user_index_, *triple_index_,
                                       corpus_.triples.num_entities, cfg_.bernoulli,
                                       profile_.empty() ? nullptr : &profile_, cfg_.retry_bound);

  for (const Interaction& r : corpus_.interactions.records)
    if (r.role == Role::train) rec_train_.push_back(r);
  for (const Triple& t : corpus_.triples.triples)
    if (t.role == Role::train) kgc_train_.push_back(t);
}

double Trainer::rec_weight() const {
  if (cfg_.model == Model::ktup) return cfg_.lambda;
  return is_rec_model(cfg_.model) ? 1.0 : 0.0;
}

double Trainer::kgc_weight() const {
  if (cfg_.model == Model::ktup) return 1.0 - cfg_.lambda;
  return is_kgc_model(cfg_.model) ? 1.0 : 0.0;
}

KgcConfig Trainer::kgc_config() const {
  KgcConfig cfg;
  cfg.variant = cfg_.model == Model::transe ? KgcVariant::transE : KgcVariant::transH;
  cfg.margin = cfg_.margin;
  return cfg;
}

RecConfig Trainer::rec_config() const {
  RecConfig cfg;
  cfg.induction = cfg_.induction;
  cfg.tau = cfg_.tau;
  cfg.enhanced = cfg_.model == Model::ktup;
  cfg.noise = cfg_.noise;
  return cfg;
}

SpaceShape Trainer::space_shape(int32_t dim, int32_t num_prefs) const {
  SpaceShape s;
  s.dim = dim;
  s.num_users = corpus_.interactions.num_users;
  s.num_items = corpus_.interactions.num_items;
  s.num_entities = corpus_.triples.num_entities;
  s.num_relations = corpus_.triples.num_relations;
  if (cfg_.model == Model::ktup) {
    s.num_prefs = s.num_relations;  // one-to-one relation -> preference map
  } else if (cfg_.model == Model::tup) {
    if (num_prefs <= 0) throw ConfigError("tup needs --num-prefs");
    s.num_prefs = num_prefs;
  } else {
    s.num_prefs = num_prefs > 0 ? num_prefs : 0;
  }
  return s;
}

BatchLosses Trainer::joint_loss_grad(const EmbeddingSpace& space,
                                     std::span<const RecPair> rec_batch,
                                     std::span<const KgcPair> kgc_batch, GradBuffer* gb,
                                     Rng* noise_rng) const {
  BatchLosses out;
  double rw = rec_weight();
  double kw = kgc_weight();

  if (rw > 0.0 && !rec_batch.empty()) {
    double scale = rw / static_cast<double>(rec_batch.size());
    if (cfg_.model == Model::bprmf) {
      RecModel model(space, rec_config(), nullptr);
      for (const RecPair& pair : rec_batch) {
        double l = model.bprmf_pair_loss(pair.user, pair.pos_item, pair.neg_item, scale, gb);
        if (!std::isfinite(l))
          throw NumericError("non-finite rec loss (user=" + std::to_string(pair.user) +
                             " pos=" + std::to_string(pair.pos_item) +
                             " neg=" + std::to_string(pair.neg_item) + ")");
        out.rec_sum += l;
        ++out.rec_pairs;
      }
    } else {
      RecModel model(space, rec_config(), &corpus_.alignments);
      for (const RecPair& pair : rec_batch) {
        double l = model.bpr_pair_loss(pair.user, pair.pos_item, pair.neg_item, noise_rng, scale,
                                       gb);
        if (!std::isfinite(l))
          throw NumericError("non-finite rec loss (user=" + std::to_string(pair.user) +
                             " pos=" + std::to_string(pair.pos_item) +
                             " neg=" + std::to_string(pair.neg_item) + ")");
        out.rec_sum += l;
        ++out.rec_pairs;
      }
    }
  }

  if (kw > 0.0 && !kgc_batch.empty()) {
    double scale = kw / static_cast<double>(kgc_batch.size());
    KgcConfig kcfg = kgc_config();
    for (const KgcPair& pair : kgc_batch) {
      double l = kgc_pair_loss(space, kcfg, pair.pos, pair.neg, scale, gb);
      if (!std::isfinite(l))
        throw NumericError("non-finite kgc loss (h=" + std::to_string(pair.pos.head) +
                           " t=" + std::to_string(pair.pos.tail) +
                           " r=" + std::to_string(pair.pos.rel) + ")");
      out.kgc_sum += l;
      ++out.kgc_pairs;
    }
  }
  return out;
}

BatchLosses Trainer::joint_step(EmbeddingSpace& space, std::span<const RecPair> rec_batch,
                                std::span<const KgcPair> kgc_batch, Rng& noise_rng) {
  if (!opt_) opt_ = std::make_unique<OptState>(cfg_.optimizer, space, cfg_.lr);
  if (!grads_) grads_ = std::make_unique<GradBuffer>(space.dim());

  grads_->clear();
  BatchLosses losses = joint_loss_grad(space, rec_batch, kgc_batch, grads_.get(), &noise_rng);

  Rng repair_rng(mix_seed(cfg_.seed, 0x726570616972ULL));
  const auto& touched = grads_->touched();
  for (size_t idx = 0; idx < touched.size(); ++idx) {
    auto [param, row] = touched[idx];
    std::span<double> g = grads_->grad(idx);
    if (cfg_.l2 > 0.0)
      axpy(2.0 * cfg_.l2, std::span<const float>(space.mat(param).row(row)), g);
    opt_->apply(space, param, row, g);
    if (cfg_.constraints) space.enforce_row(param, row, repair_rng);
  }
  return losses;
}

double Trainer::validate(const EmbeddingSpace& space) const {
  double rw = rec_weight();
  double kw = kgc_weight();
  double metric = 0.0;
  if (rw > 0.0) {
    RecEvalConfig cfg;
    cfg.n = cfg_.eval_n;
    cfg.relevant = Role::valid;
    cfg.higher_is_better = cfg_.model == Model::bprmf;
    cfg.threads = cfg_.eval_threads;
    RecModel model(space, rec_config(), &corpus_.alignments);
    metric += rw * eval_rec(model, user_index_, cfg).f1;
  }
  if (kw > 0.0) {
    KgcEvalConfig cfg;
    cfg.which = Role::valid;
    cfg.threads = cfg_.eval_threads;
    metric += kw * eval_kgc(space, kgc_config(), corpus_.triples, *triple_index_, profile_, cfg)
                       .all.hit_filtered;
  }
  return metric;
}

TrainResult Trainer::fit(EmbeddingSpace space, std::ostream* epoch_log) {
  opt_ = std::make_unique<OptState>(cfg_.optimizer, space, cfg_.lr);
  grads_ = std::make_unique<GradBuffer>(space.dim());

  bool use_rec = rec_weight() > 0.0 && !rec_train_.empty();
  bool use_kgc = kgc_weight() > 0.0 && !kgc_train_.empty();
  if (!use_rec && !use_kgc) throw ConfigError("nothing to train: both task streams are empty");

  TrainResult result;
  result.best_metric = -std::numeric_limits<double>::infinity();
  result.space = space;

  std::vector<int32_t> rec_order(rec_train_.size()), kgc_order(kgc_train_.size());
  for (size_t k = 0; k < rec_order.size(); ++k) rec_order[k] = static_cast<int32_t>(k);
  for (size_t k = 0; k < kgc_order.size(); ++k) kgc_order[k] = static_cast<int32_t>(k);

  int evals_since_best = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg_.max_epochs && !stop; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(mix_seed(cfg_.seed, 0x6f72646572ULL + static_cast<uint64_t>(epoch)));
    Rng sample_rng(mix_seed(cfg_.seed, 0x73616d706cULL + static_cast<uint64_t>(epoch)));
    Rng noise_rng(mix_seed(cfg_.seed, 0x6e6f697365ULL + static_cast<uint64_t>(epoch)));

    size_t b = static_cast<size_t>(cfg_.batch_size);
    size_t n_rec = use_rec ? (rec_train_.size() + b - 1) / b : 0;
    size_t n_kgc = use_kgc ? (kgc_train_.size() + b - 1) / b : 0;

    if (use_rec) order_rng.shuffle(rec_order);
    if (use_kgc) order_rng.shuffle(kgc_order);
    // interleave the two streams proportionally to their batch counts
    std::vector<uint8_t> schedule;
    schedule.insert(schedule.end(), n_rec, 0);
    schedule.insert(schedule.end(), n_kgc, 1);
    order_rng.shuffle(schedule);

    BatchLosses epoch_losses;
    size_t rec_cursor = 0, kgc_cursor = 0;
    for (uint8_t task : schedule) {
      if (task == 0) {
        size_t hi = std::min(rec_cursor + b, rec_train_.size());
        std::vector<Interaction> positives;
        positives.reserve(hi - rec_cursor);
        for (size_t k = rec_cursor; k < hi; ++k) positives.push_back(rec_train_[rec_order[k]]);
        rec_cursor = hi;
        auto batch = sampler_->sample_rec_batch(positives, sample_rng);
        BatchLosses l = joint_step(space, batch, {}, noise_rng);
        epoch_losses.rec_sum += l.rec_sum;
        epoch_losses.rec_pairs += l.rec_pairs;
      } else {
        size_t hi = std::min(kgc_cursor + b, kgc_train_.size());
        std::vector<Triple> positives;
        positives.reserve(hi - kgc_cursor);
        for (size_t k = kgc_cursor; k < hi; ++k) positives.push_back(kgc_train_[kgc_order[k]]);
        kgc_cursor = hi;
        auto batch = sampler_->sample_kgc_batch(positives, sample_rng);
        BatchLosses l = joint_step(space, {}, batch, noise_rng);
        epoch_losses.kgc_sum += l.kgc_sum;
        epoch_losses.kgc_pairs += l.kgc_pairs;
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.rec_loss = epoch_losses.rec_pairs > 0 ? epoch_losses.rec_sum / epoch_losses.rec_pairs : 0.0;
    log.kgc_loss = epoch_losses.kgc_pairs > 0 ? epoch_losses.kgc_sum / epoch_losses.kgc_pairs : 0.0;
    log.joint_loss = rec_weight() * log.rec_loss + kgc_weight() * log.kgc_loss;

    bool eval_now = (cfg_.eval_every > 0 && epoch % cfg_.eval_every == 0) ||
                    epoch == cfg_.max_epochs;
    if (eval_now) {
      double metric = validate(space);
      log.val_metric = metric;
      if (metric > result.best_metric) {
        result.best_metric = metric;
        result.best_epoch = epoch;
        result.space = space;
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (evals_since_best >= cfg_.patience) stop = true;
    }

    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (epoch_log) {
      (*epoch_log) << "{\"epoch\":" << log.epoch << ",\"rec_loss\":" << log.rec_loss
                   << ",\"kgc_loss\":" << log.kgc_loss << ",\"joint_loss\":" << log.joint_loss
                   << ",\"val_metric\":";
      if (std::isnan(log.val_metric))
        (*epoch_log) << "null";
      else
        (*epoch_log) << log.val_metric;
      (*epoch_log) << ",\"seconds\":" << log.seconds << "}\n";
    }
    result.logs.push_back(log);
  }

  if (std::isinf(result.best_metric)) {  // never evaluated: keep the final state
    result.best_metric = std::nan("");
    result.space = std::move(space);
  }
  return result;
}

}  // namespace ktup
