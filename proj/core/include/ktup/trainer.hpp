#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"
#include "ktup/grad.hpp"
#include "ktup/kgc.hpp"
#include "ktup/rec.hpp"
#include "ktup/sampler.hpp"

namespace ktup {

enum class Model { bprmf, transe, transh, tup, ktup };
enum class OptKind { sgd, adagrad, adam };

const char* model_name(Model m);
const char* optimizer_name(OptKind k);

struct TrainConfig {
  Model model = Model::ktup;
  InductionKind induction = InductionKind::soft;
  NoiseKind noise = NoiseKind::gumbel;
  double tau = 1.0;
  double lambda = 0.5;  // joint weight: lambda * rec + (1 - lambda) * kgc
  int batch_size = 256;
  double lr = 0.001;
  double l2 = 0.0;
  OptKind optimizer = OptKind::adam;
  int max_epochs = 100;
  int patience = 5;    // evaluations without improvement before stopping
  int eval_every = 5;  // epochs between validation passes
  double margin = 1.0;
  bool constraints = true;
  bool bernoulli = false;
  int eval_n = 10;
  int eval_threads = 1;
  int retry_bound = 100;
  uint64_t seed = 42;
};

// Paper-protocol defaults: recommendation models use Adagrad with lr 0.005
// and L2 1e-5; KG and joint models use Adam with lr 0.001 and no L2.
void apply_model_defaults(TrainConfig& cfg, bool lr_set, bool l2_set, bool optimizer_set);

struct EpochLog {
  int epoch = 0;
  double rec_loss = 0.0;   // mean per pair, unweighted
  double kgc_loss = 0.0;   // mean per pair, unweighted
  double joint_loss = 0.0; // lambda-weighted combination
  double val_metric = std::nan("");  // NaN when this epoch was not evaluated
  double seconds = 0.0;
};

struct TrainResult {
  EmbeddingSpace space;  // best-validation snapshot
  double best_metric = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> logs;
};

struct BatchLosses {
  double rec_sum = 0.0;
  int64_t rec_pairs = 0;
  double kgc_sum = 0.0;
  int64_t kgc_pairs = 0;
};

// Per-matrix optimizer state with lazily counted per-row Adam steps; only
// rows that received gradient move.
class OptState {
 public:
  OptState(OptKind kind, const EmbeddingSpace& space, double lr);
  void apply(EmbeddingSpace& space, Param p, int32_t row, std::span<const double> grad);

 private:
  OptKind kind_;
  double lr_;
  std::array<std::vector<double>, kNumParams> acc_;  // adagrad
  std::array<std::vector<double>, kNumParams> m_, v_;
  std::array<std::vector<int64_t>, kNumParams> step_;
};

class Trainer {
 public:
  Trainer(const Corpus& corpus, const TrainConfig& cfg);

  // lambda-weighted batch-mean losses and gradients; pure in the space
  BatchLosses joint_loss_grad(const EmbeddingSpace& space, std::span<const RecPair> rec_batch,
                              std::span<const KgcPair> kgc_batch, GradBuffer* gb,
                              Rng* noise_rng) const;

  // gradients + L2-on-touched-rows + one optimizer step + row constraints
  BatchLosses joint_step(EmbeddingSpace& space, std::span<const RecPair> rec_batch,
                         std::span<const KgcPair> kgc_batch, Rng& noise_rng);

  TrainResult fit(EmbeddingSpace space, std::ostream* epoch_log = nullptr);

  double validate(const EmbeddingSpace& space) const;

  double rec_weight() const;
  double kgc_weight() const;
  SpaceShape space_shape(int32_t dim, int32_t num_prefs) const;

  const TrainConfig& config() const { return cfg_; }
  const UserIndex& user_index() const { return user_index_; }
  const TripleIndex& triple_index() const { return *triple_index_; }
  const RelationProfile& relation_profile() const { return profile_; }
  const Sampler& sampler() const { return *sampler_; }

 private:
  KgcConfig kgc_config() const;
  RecConfig rec_config() const;

  const Corpus& corpus_;
  TrainConfig cfg_;
  UserIndex user_index_;
  std::unique_ptr<TripleIndex> triple_index_;
  RelationProfile profile_;
  std::unique_ptr<Sampler> sampler_;
  std::unique_ptr<OptState> opt_;
  std::unique_ptr<GradBuffer> grads_;
  std::vector<Interaction> rec_train_;
  std::vector<Triple> kgc_train_;
};

}  // namespace ktup
