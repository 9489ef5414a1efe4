#include "ktup/rec.hpp"

#include <algorithm>
#include <cmath>

#include "ktup/error.hpp"
#include "ktup/kgc.hpp"
#include "ktup/vecmath.hpp"

namespace ktup {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void softmax(std::span<const double> in, std::vector<double>& out) {
  out.resize(in.size());
  double m = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (size_t k = 0; k < in.size(); ++k) {
    out[k] = std::exp(in[k] - m);
    z += out[k];
  }
  for (double& v : out) v /= z;
}

double log_sum_exp(std::span<const double> in) {
  double m = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (double v : in) z += std::exp(v - m);
  return m + std::log(z);
}

// combined = sum_k weight_k * (pref_k [+ rel_k])
void combine_rows(const EmbeddingSpace& space, std::span<const double> weights, Param base,
                  Param extra, bool enhanced, std::vector<double>& out) {
  int n = space.dim();
  out.assign(n, 0.0);
  const Matrix& bm = space.mat(base);
  const Matrix& em = space.mat(extra);
  for (size_t k = 0; k < weights.size(); ++k) {
    auto brow = bm.row(static_cast<int32_t>(k));
    auto erow = em.row(static_cast<int32_t>(k));
    double wk = weights[k];
    for (int d = 0; d < n; ++d) {
      double v = static_cast<double>(brow[d]);
      if (enhanced) v += static_cast<double>(erow[d]);
      out[d] += wk * v;
    }
  }
}

}  // namespace

void combined_row(const EmbeddingSpace& space, int32_t k, Param base, Param extra, bool enhanced,
                  std::vector<double>& out) {
  int n = space.dim();
  out.resize(n);
  auto brow = space.mat(base).row(k);
  auto erow = space.mat(extra).row(k);
  for (int d = 0; d < n; ++d) {
    double v = static_cast<double>(brow[d]);
    if (enhanced) v += static_cast<double>(erow[d]);
    out[d] = v;
  }
}

void preference_logits(const EmbeddingSpace& space, int32_t user, int32_t item, bool enhanced,
                       std::vector<double>& out) {
  const Matrix& prefs = space.mat(Param::pref);
  out.resize(prefs.rows());
  auto u = space.mat(Param::user).row(user);
  auto i = space.mat(Param::item).row(item);
  std::vector<double> row(space.dim());
  for (int32_t k = 0; k < prefs.rows(); ++k) {
    combined_row(space, k, Param::pref, Param::rel, enhanced, row);
    out[k] = dot(std::span<const float>(u), std::span<const double>(row)) +
             dot(std::span<const float>(i), std::span<const double>(row));
  }
}

void induce_soft(const EmbeddingSpace& space, std::span<const double> logits, bool enhanced,
                 InducedPreference& out) {
  out.logits.assign(logits.begin(), logits.end());
  out.surrogate.clear();
  out.selected = -1;
  softmax(logits, out.weights);
  combine_rows(space, out.weights, Param::pref, Param::rel, enhanced, out.p_vec);
  combine_rows(space, out.weights, Param::pref_norm, Param::rel_norm, enhanced, out.w_vec);
}

InducedPreference induce_soft(const EmbeddingSpace& space, std::span<const double> logits,
                              bool enhanced) {
  InducedPreference out;
  induce_soft(space, logits, enhanced, out);
  return out;
}

void induce_hard(const EmbeddingSpace& space, std::span<const double> logits, bool enhanced,
                 double tau, Rng* noise_rng, NoiseKind noise, InducedPreference& out) {
  if (tau <= 0.0) throw ConfigError("gumbel temperature must be positive");
  out.logits.assign(logits.begin(), logits.end());

  size_t P = logits.size();
  double lse = log_sum_exp(logits);
  std::vector<double> perturbed(P);
  for (size_t k = 0; k < P; ++k) {
    double g = 0.0;
    if (noise_rng && noise != NoiseKind::none)
      g = noise == NoiseKind::gumbel ? noise_rng->gumbel() : noise_rng->normal();
    perturbed[k] = (logits[k] - lse) + g;
  }
  out.selected = static_cast<int32_t>(
      std::max_element(perturbed.begin(), perturbed.end()) - perturbed.begin());
  out.weights.assign(P, 0.0);
  out.weights[out.selected] = 1.0;

  std::vector<double> scaled(P);
  for (size_t k = 0; k < P; ++k) scaled[k] = perturbed[k] / tau;
  softmax(scaled, out.surrogate);

  combined_row(space, out.selected, Param::pref, Param::rel, enhanced, out.p_vec);
  combined_row(space, out.selected, Param::pref_norm, Param::rel_norm, enhanced, out.w_vec);
}

InducedPreference induce_hard(const EmbeddingSpace& space, std::span<const double> logits,
                              bool enhanced, double tau, Rng* noise_rng, NoiseKind noise) {
  InducedPreference out;
  induce_hard(space, logits, enhanced, tau, noise_rng, noise, out);
  return out;
}

RecModel::RecModel(const EmbeddingSpace& space, const RecConfig& cfg, const AlignmentMap* align)
    : space_(space), cfg_(cfg), align_(align) {
  if (cfg_.enhanced) {
    if (!align_) throw ConfigError("enhanced scoring requires an alignment map");
    if (space_.mat(Param::pref).rows() != space_.mat(Param::rel).rows())
      throw ConfigError("enhanced scoring requires num_prefs == num_relations");
  }
}

InducedPreference RecModel::induce(std::span<const double> logits, Rng* noise_rng) const {
  if (cfg_.induction == InductionKind::soft) return induce_soft(space_, logits, cfg_.enhanced);
  return induce_hard(space_, logits, cfg_.enhanced, cfg_.tau, noise_rng, cfg_.noise);
}

void RecModel::induce(std::span<const double> logits, Rng* noise_rng,
                      InducedPreference& out) const {
  if (cfg_.induction == InductionKind::soft) {
    induce_soft(space_, logits, cfg_.enhanced, out);
  } else {
    induce_hard(space_, logits, cfg_.enhanced, cfg_.tau, noise_rng, cfg_.noise, out);
  }
}

InducedPreference RecModel::induce(int32_t user, int32_t item, Rng* noise_rng) const {
  std::vector<double> logits;
  preference_logits(space_, user, item, cfg_.enhanced, logits);
  return induce(logits, noise_rng);
}

void RecModel::combined_item(int32_t item, std::span<double> out) const {
  widen(space_.mat(Param::item).row(item), out);
  if (cfg_.enhanced && align_->aligned(item))
    axpy(1.0, std::span<const float>(space_.mat(Param::entity).row(align_->entity_of(item))), out);
}

double RecModel::score(int32_t user, int32_t item, const InducedPreference& pref) const {
  thread_local std::vector<double> u, i;
  u.resize(space_.dim());
  i.resize(space_.dim());
  widen(space_.mat(Param::user).row(user), std::span<double>(u));
  combined_item(item, i);
  return translation_distance(u, i, pref.p_vec, pref.w_vec, nullptr);
}

double RecModel::score(int32_t user, int32_t item) const {
  InducedPreference pref = induce(user, item, nullptr);
  return score(user, item, pref);
}

std::vector<double> RecModel::weights_backward(const InducedPreference& pref, InductionKind kind,
                                               double tau, std::span<const double> c) {
  size_t P = c.size();
  std::vector<double> out(P);
  if (kind == InductionKind::soft) {
    const std::vector<double>& alpha = pref.weights;
    double mean = 0.0;
    for (size_t k = 0; k < P; ++k) mean += alpha[k] * c[k];
    for (size_t j = 0; j < P; ++j) out[j] = alpha[j] * (c[j] - mean);
    return out;
  }
  // straight-through: dL/dy through the tempered softmax, then through the
  // log-softmax that produced the perturbed logits
  const std::vector<double>& y = pref.surrogate;
  double mean = 0.0;
  for (size_t k = 0; k < P; ++k) mean += y[k] * c[k];
  std::vector<double> b(P);
  double b_sum = 0.0;
  for (size_t j = 0; j < P; ++j) {
    b[j] = y[j] * (c[j] - mean) / tau;
    b_sum += b[j];
  }
  std::vector<double> s;
  softmax(pref.logits, s);
  for (size_t j = 0; j < P; ++j) out[j] = b[j] - s[j] * b_sum;
  return out;
}

void RecModel::backprop_side(int32_t user, int32_t item, const InducedPreference& pref, double c,
                             GradBuffer& gb) const {
  int n = space_.dim();
  std::vector<double> u(n), i_hat(n);
  widen(space_.mat(Param::user).row(user), std::span<double>(u));
  combined_item(item, i_hat);

  TranslationGrads tg;
  translation_distance(u, i_hat, pref.p_vec, pref.w_vec, &tg);

  axpy(c, std::span<const double>(tg.wrt_a), gb.acc(Param::user, user));
  axpy(-c, std::span<const double>(tg.wrt_a), gb.acc(Param::item, item));
  if (cfg_.enhanced && align_->aligned(item))
    axpy(-c, std::span<const double>(tg.wrt_a), gb.acc(Param::entity, align_->entity_of(item)));

  size_t P = pref.weights.size();
  bool hard = cfg_.induction == InductionKind::hard;
  const std::vector<double>& dist = hard ? pref.surrogate : pref.weights;

  // per-preference sensitivity for the attention/ST chain
  std::vector<double> c_k(P), row(n);
  for (size_t k = 0; k < P; ++k) {
    double lk = dist[k];
    combined_row(space_, static_cast<int32_t>(k), Param::pref, Param::rel, cfg_.enhanced, row);
    c_k[k] = dot(std::span<const double>(tg.wrt_trans), std::span<const double>(row));
    axpy(c * lk, std::span<const double>(tg.wrt_trans), gb.acc(Param::pref, k));
    if (cfg_.enhanced) axpy(c * lk, std::span<const double>(tg.wrt_trans), gb.acc(Param::rel, k));

    combined_row(space_, static_cast<int32_t>(k), Param::pref_norm, Param::rel_norm, cfg_.enhanced,
                 row);
    c_k[k] += dot(std::span<const double>(tg.wrt_w), std::span<const double>(row));
    axpy(c * lk, std::span<const double>(tg.wrt_w), gb.acc(Param::pref_norm, k));
    if (cfg_.enhanced)
      axpy(c * lk, std::span<const double>(tg.wrt_w), gb.acc(Param::rel_norm, k));
  }

  std::vector<double> dlogits =
      weights_backward(pref, cfg_.induction, cfg_.tau, std::span<const double>(c_k));

  // logits_j = (u + i) . p_hat_j; in enhanced mode p_hat_j = p_j + r_j so the
  // chain also feeds the relation rows
  auto u_row = space_.mat(Param::user).row(user);
  auto i_row = space_.mat(Param::item).row(item);
  std::span<double> u_acc = gb.acc(Param::user, user);
  std::span<double> i_acc = gb.acc(Param::item, item);
  for (size_t j = 0; j < P; ++j) {
    double dj = c * dlogits[j];
    if (dj == 0.0) continue;
    combined_row(space_, static_cast<int32_t>(j), Param::pref, Param::rel, cfg_.enhanced, row);
    axpy(dj, std::span<const double>(row), u_acc);
    axpy(dj, std::span<const double>(row), i_acc);
    std::span<double> p_acc = gb.acc(Param::pref, static_cast<int32_t>(j));
    axpy(dj, std::span<const float>(u_row), p_acc);
    axpy(dj, std::span<const float>(i_row), p_acc);
    if (cfg_.enhanced) {
      std::span<double> r_acc = gb.acc(Param::rel, static_cast<int32_t>(j));
      axpy(dj, std::span<const float>(u_row), r_acc);
      axpy(dj, std::span<const float>(i_row), r_acc);
    }
  }
}

double RecModel::bpr_pair_loss(int32_t user, int32_t pos_item, int32_t neg_item, Rng* noise_rng,
                               double scale, GradBuffer* gb) const {
  InducedPreference pos_pref = induce(user, pos_item, noise_rng);
  InducedPreference neg_pref = induce(user, neg_item, noise_rng);
  double f_pos = score(user, pos_item, pos_pref);
  double f_neg = score(user, neg_item, neg_pref);
  double loss = softplus(f_pos - f_neg);
  if (gb) {
    double beta = stable_sigmoid(f_pos - f_neg);
    backprop_side(user, pos_item, pos_pref, scale * beta, *gb);
    backprop_side(user, neg_item, neg_pref, -scale * beta, *gb);
  }
  return loss;
}

double RecModel::dot_score(int32_t user, int32_t item) const {
  return dot(std::span<const float>(space_.mat(Param::user).row(user)),
             std::span<const float>(space_.mat(Param::item).row(item)));
}

double RecModel::bprmf_pair_loss(int32_t user, int32_t pos_item, int32_t neg_item, double scale,
                                 GradBuffer* gb) const {
  double x = dot_score(user, pos_item) - dot_score(user, neg_item);
  double loss = softplus(-x);
  if (gb) {
    double beta = stable_sigmoid(-x);
    auto u_row = space_.mat(Param::user).row(user);
    std::span<double> u_acc = gb->acc(Param::user, user);
    axpy(-scale * beta, std::span<const float>(space_.mat(Param::item).row(pos_item)), u_acc);
    axpy(scale * beta, std::span<const float>(space_.mat(Param::item).row(neg_item)), u_acc);
    axpy(-scale * beta, std::span<const float>(u_row), gb->acc(Param::item, pos_item));
    axpy(scale * beta, std::span<const float>(u_row), gb->acc(Param::item, neg_item));
  }
  return loss;
}

}  // namespace ktup
