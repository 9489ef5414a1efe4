#pragma once

#include <span>
#include <vector>

#include "ktup/corpus.hpp"
#include "ktup/embedding.hpp"
#include "ktup/grad.hpp"

namespace ktup {

enum class KgcVariant { transE, transH };

struct KgcConfig {
  KgcVariant variant = KgcVariant::transH;
  double margin = 1.0;  // gamma; L1 distance throughout
};

// Hyperplane projection v - ((w.v)/(w.w)) w.
std::vector<double> project(std::span<const double> v, std::span<const double> w);

// L1 translation distance with optional hyperplane projection of the two
// endpoint vectors:
//   f = || proj(a,w) + trans - proj(b,w) ||_1
// When grads is non-null the four closed-form gradients are written out.
// wrt_b is always -wrt_a and is not materialized.
struct TranslationGrads {
  std::vector<double> wrt_a;
  std::vector<double> wrt_trans;
  std::vector<double> wrt_w;  // empty for the unprojected (TransE-style) form
};
double translation_distance(std::span<const double> a, std::span<const double> b,
                            std::span<const double> trans, std::span<const double> w,
                            TranslationGrads* grads);
double translation_distance_plain(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> trans, TranslationGrads* grads);

// score of a triple under the configured variant; lower = more plausible
double score_triple(const EmbeddingSpace& space, const KgcConfig& cfg, int32_t head, int32_t tail,
                    int32_t rel);

// margin ranking loss [f(pos) + gamma - f(neg)]_+ for one pair; accumulates
// scale * d(loss)/d(row) into gb when non-null
double kgc_pair_loss(const EmbeddingSpace& space, const KgcConfig& cfg, const Triple& pos,
                     const Triple& neg, double scale, GradBuffer* gb);

}  // namespace ktup
