#include "ktup/kgc.hpp"

#include <cmath>

#include "ktup/vecmath.hpp"

namespace ktup {

std::vector<double> project(std::span<const double> v, std::span<const double> w) {
  std::vector<double> out(v.size());
  project_hyperplane(v, w, std::span<double>(out));
  return out;
}

// f(a,b,trans,w) = sum_i |d_i|,  d = m + trans - ((w.m)/q) w,  m = a-b, q = w.w
//
// With g = sign(d), s_m = (w.m)/q, s_g = (w.g)/q:
//   df/da     =  g - s_g w          (df/db is the negative)
//   df/dtrans =  g
//   df/dw     = -s_g m - s_m g + 2 s_m s_g w
// The w terms carry the derivative of the 1/q factor, which keeps the
// analytic gradient exact for normals that drift off unit norm.
double translation_distance(std::span<const double> a, std::span<const double> b,
                            std::span<const double> trans, std::span<const double> w,
                            TranslationGrads* grads) {
  size_t n = a.size();
  std::vector<double> m(n), d(n);
  for (size_t k = 0; k < n; ++k) m[k] = a[k] - b[k];
  double q = dot(w, w);
  double s_m = q > 0.0 ? dot(w, std::span<const double>(m)) / q : 0.0;
  double f = 0.0;
  for (size_t k = 0; k < n; ++k) {
    d[k] = m[k] + trans[k] - s_m * w[k];
    f += std::fabs(d[k]);
  }
  if (grads) {
    std::vector<double> g(n);
    for (size_t k = 0; k < n; ++k) g[k] = sgn(d[k]);
    double s_g = q > 0.0 ? dot(w, std::span<const double>(g)) / q : 0.0;
    grads->wrt_a.resize(n);
    grads->wrt_trans = g;
    grads->wrt_w.resize(n);
    for (size_t k = 0; k < n; ++k) {
      grads->wrt_a[k] = g[k] - s_g * w[k];
      grads->wrt_w[k] = -s_g * m[k] - s_m * g[k] + 2.0 * s_m * s_g * w[k];
    }
  }
  return f;
}

double translation_distance_plain(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> trans, TranslationGrads* grads) {
  size_t n = a.size();
  double f = 0.0;
  if (grads) {
    grads->wrt_a.resize(n);
    grads->wrt_trans.resize(n);
    grads->wrt_w.clear();
  }
  for (size_t k = 0; k < n; ++k) {
    double d = a[k] - b[k] + trans[k];
    f += std::fabs(d);
    if (grads) {
      double g = sgn(d);
      grads->wrt_a[k] = g;
      grads->wrt_trans[k] = g;
    }
  }
  return f;
}

namespace {

double triple_distance(const EmbeddingSpace& space, const KgcConfig& cfg, const Triple& t,
                       TranslationGrads* grads) {
  int n = space.dim();
  std::vector<double> h(n), tl(n), r(n);
  widen(space.mat(Param::entity).row(t.head), std::span<double>(h));
  widen(space.mat(Param::entity).row(t.tail), std::span<double>(tl));
  widen(space.mat(Param::rel).row(t.rel), std::span<double>(r));
  if (cfg.variant == KgcVariant::transE)
    return translation_distance_plain(h, tl, r, grads);
  std::vector<double> w(n);
  widen(space.mat(Param::rel_norm).row(t.rel), std::span<double>(w));
  return translation_distance(h, tl, r, w, grads);
}

void accumulate_triple(GradBuffer& gb, const Triple& t, const TranslationGrads& grads,
                       double c) {
  axpy(c, std::span<const double>(grads.wrt_a), gb.acc(Param::entity, t.head));
  axpy(-c, std::span<const double>(grads.wrt_a), gb.acc(Param::entity, t.tail));
  axpy(c, std::span<const double>(grads.wrt_trans), gb.acc(Param::rel, t.rel));
  if (!grads.wrt_w.empty())
    axpy(c, std::span<const double>(grads.wrt_w), gb.acc(Param::rel_norm, t.rel));
}

}  // namespace

double score_triple(const EmbeddingSpace& space, const KgcConfig& cfg, int32_t head, int32_t tail,
                    int32_t rel) {
  Triple t{head, tail, rel, Role::train};
  return triple_distance(space, cfg, t, nullptr);
}

double kgc_pair_loss(const EmbeddingSpace& space, const KgcConfig& cfg, const Triple& pos,
                     const Triple& neg, double scale, GradBuffer* gb) {
  TranslationGrads pos_grads, neg_grads;
  double f_pos = triple_distance(space, cfg, pos, gb ? &pos_grads : nullptr);
  double f_neg = triple_distance(space, cfg, neg, gb ? &neg_grads : nullptr);
  double loss = f_pos + cfg.margin - f_neg;
  if (loss <= 0.0) return 0.0;  // inactive hinge: zero gradients
  if (gb) {
    accumulate_triple(*gb, pos, pos_grads, scale);
    accumulate_triple(*gb, neg, neg_grads, -scale);
  }
  return loss;
}

}  // namespace ktup
