#pragma once

#include <vector>

#include "vlplab/sinkhorn.hpp"
#include "vlplab/tape.hpp"

namespace vlplab {

// (1-s) * I + (s/N) * ones; s = 0 reproduces the identity matrix.
struct SmoothedTargets {
  Tensor t;
  double smoothing = 0.0;

  static SmoothedTargets make(int64_t n, double s);
};

// Per-step loss decomposition. total always equals
// alpha * contrastive + beta * non_contrastive, and the modality terms obey
// the (loss_weak + num_augs * loss_strong) / (1 + num_augs) weighting.
struct LossBreakdown {
  double total = 0.0;
  double contrastive = 0.0;
  double contrastive_weak = 0.0;    // mean of the two weak directions
  double contrastive_strong = 0.0;  // mean of the two strong directions
  double non_contrastive = 0.0;
  double weak_ab = 0.0, weak_ba = 0.0;      // per-direction weak terms
  double strong_ab = 0.0, strong_ba = 0.0;  // per-direction strong terms
  double modality_a = 0.0, modality_b = 0.0;
  double alpha = 1.0, beta = 0.0;
  int num_augs = 0;
};

// cos(a_i, b_j) on the tape; rows are normalized internally.
Var cosine_sim(GradTape& t, Var a, Var b);

// InfoNCE in one direction: mean over rows of the cross entropy between the
// row softmax of logit_scale * cos(za, zb) and the target rows.
Var contrastive_directional(GradTape& t, Var za, Var zb, Var logit_scale,
                            const SmoothedTargets& targets);
// Mean of the two directions.
Var contrastive_symmetric(GradTape& t, Var za, Var zb, Var logit_scale,
                          const SmoothedTargets& targets);

// Consistency between a predictor output and a detached target: mean over
// rows of ||p_hat - z_hat||^2 with both sides row-normalized; equals
// mean(2 - 2 cos).
Var consistency_loss(GradTape& t, Var pred, const Tensor& detached_target);

// C[u][v] = sum_i za[i][u] zb[i][v] / (||za col u|| ||zb col v||); no mean
// centering.
Var barlow_cross_correlation(GradTape& t, Var za, Var zb);
// sum_u (1 - C[u][u])^2 + lam_bt * sum_{u != v} C[u][v]^2.
Var barlow_loss(GradTape& t, Var c, double lam_bt);

// Clustering cross entropy: mean over rows of
// -sum_k a[i][k] log softmax_k(cos(z_i, p_k) / temperature).
// Assignments are constants; gradient flows through z and the prototypes.
Var swav_xent(GradTape& t, Var za, const Tensor& assignments, Var prototypes, double temperature);

// The prototype-free objective over two strong views per modality. Each of
// the 8 terms predicts one view against one view of the other modality as
// prototypes, with targets computed by Sinkhorn from the correlated partner
// view and mixed with the identity. Assignment computation and the cross
// entropy are split so the assignments can be frozen (they carry no
// gradient).
struct SwalipViews {
  Var z_a, z_a_bar, z_b, z_b_bar;
};

struct SwalipAssignments {
  std::vector<Tensor> targets;  // 8 mixed assignment matrices in fixed term order
};

SwalipAssignments swalip_assignments(const Tensor& za, const Tensor& za_bar, const Tensor& zb,
                                     const Tensor& zb_bar, double lam, const SinkhornConfig& cfg);
Var swalip_modified_with(GradTape& t, const SwalipViews& v, const SwalipAssignments& a,
                         double temperature);
Var swalip_modified(GradTape& t, const SwalipViews& v, double lam, double temperature,
                    const SinkhornConfig& cfg);

// alpha * lc + beta * lnc.
Var combined_objective(GradTape& t, Var lc, Var lnc, double alpha, double beta);

}  // namespace vlplab
