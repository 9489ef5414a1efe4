#pragma once

#include <span>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"
#include "ktup/grad.hpp"
#include "ktup/rng.hpp"

namespace ktup {

enum class InductionKind { hard, soft };

// Noise source for the hard (ST-Gumbel) strategy. `normal` feeds N(0,1)
// noise straight into the perturbed log-probabilities instead of the
// Gumbel transform; `none` disables noise (deterministic argmax).
enum class NoiseKind { gumbel, normal, none };

struct RecConfig {
  InductionKind induction = InductionKind::soft;
  double tau = 1.0;
  bool enhanced = false;  // add aligned entity / relation embeddings (KTUP)
  NoiseKind noise = NoiseKind::gumbel;
};

struct InducedPreference {
  std::vector<double> logits;     // u.p_k + i.p_k
  std::vector<double> weights;    // forward combination: soft alpha, hard one-hot
  std::vector<double> surrogate;  // hard backward distribution y; empty in soft mode
  std::vector<double> p_vec;      // combined translation vector
  std::vector<double> w_vec;      // combined hyperplane normal, pre-normalization
  int32_t selected = -1;          // hard forward pick
};

// logits_k = u.p_k + i.p_k. In enhanced (KTUP) mode the preference rows are
// relation-enhanced first (p_k + r_k), which ties the induced attention to
// the jointly trained relation geometry.
void preference_logits(const EmbeddingSpace& space, int32_t user, int32_t item, bool enhanced,
                       std::vector<double>& out);
inline void preference_logits(const EmbeddingSpace& space, int32_t user, int32_t item,
                              std::vector<double>& out) {
  preference_logits(space, user, item, false, out);
}

// row k of `base`, plus row k of `extra` when enhanced, widened to double
void combined_row(const EmbeddingSpace& space, int32_t k, Param base, Param extra, bool enhanced,
                  std::vector<double>& out);

// attention over all preferences: alpha = softmax(logits). The out-param
// forms reuse the buffers of a caller-retained InducedPreference.
InducedPreference induce_soft(const EmbeddingSpace& space, std::span<const double> logits,
                              bool enhanced);
void induce_soft(const EmbeddingSpace& space, std::span<const double> logits, bool enhanced,
                 InducedPreference& out);

// ST-Gumbel: forward one-hot at argmax(log_softmax(logits) + g), backward
// surrogate y = softmax((log_softmax(logits) + g)/tau). noise_rng == nullptr
// or NoiseKind::none gives zero noise.
InducedPreference induce_hard(const EmbeddingSpace& space, std::span<const double> logits,
                              bool enhanced, double tau, Rng* noise_rng, NoiseKind noise);
void induce_hard(const EmbeddingSpace& space, std::span<const double> logits, bool enhanced,
                 double tau, Rng* noise_rng, NoiseKind noise, InducedPreference& out);

class RecModel {
 public:
  // align may be null (plain TUP); cfg.enhanced requires align + relation rows
  RecModel(const EmbeddingSpace& space, const RecConfig& cfg, const AlignmentMap* align);

  InducedPreference induce(int32_t user, int32_t item, Rng* noise_rng) const;
  InducedPreference induce(std::span<const double> logits, Rng* noise_rng) const;
  void induce(std::span<const double> logits, Rng* noise_rng, InducedPreference& out) const;

  // item embedding plus aligned entity embedding when enhancement is on
  void combined_item(int32_t item, std::span<double> out) const;

  double score(int32_t user, int32_t item, const InducedPreference& pref) const;
  // deterministic scoring for evaluation (hard mode: noise-free argmax)
  double score(int32_t user, int32_t item) const;

  // -log sigmoid(g(u,i') - g(u,i)) with independent preference induction for
  // the two pairs; accumulates scale * gradients for every touched row
  double bpr_pair_loss(int32_t user, int32_t pos_item, int32_t neg_item, Rng* noise_rng,
                       double scale, GradBuffer* gb) const;

  // dot-product pretrainer (higher = better)
  double dot_score(int32_t user, int32_t item) const;
  double bprmf_pair_loss(int32_t user, int32_t pos_item, int32_t neg_item, double scale,
                         GradBuffer* gb) const;

  const RecConfig& config() const { return cfg_; }
  const EmbeddingSpace& space() const { return space_; }

  // Maps a downstream sensitivity c_k = dL/d(weight_k) to dL/d(logit_j).
  // Exposed so the straight-through surrogate can be compared against the
  // soft attention path directly.
  static std::vector<double> weights_backward(const InducedPreference& pref, InductionKind kind,
                                              double tau, std::span<const double> c);

 private:
  void backprop_side(int32_t user, int32_t item, const InducedPreference& pref, double c,
                     GradBuffer& gb) const;

  const EmbeddingSpace& space_;
  RecConfig cfg_;
  const AlignmentMap* align_;
};

}  // namespace ktup
