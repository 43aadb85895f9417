#include "vlplab/losses.hpp"

namespace vlplab {

SmoothedTargets SmoothedTargets::make(int64_t n, double s) {
  if (s < 0.0 || s >= 1.0) throw Error(Errc::BadConfig, "smoothing must be in [0,1)");
  SmoothedTargets st;
  st.smoothing = s;
  st.t = Tensor::full({n, n}, s / static_cast<double>(n));
  for (int64_t i = 0; i < n; ++i) st.t.at(i, i) += 1.0 - s;
  return st;
}

Var cosine_sim(GradTape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).cols())
    throw Error(Errc::DimMismatch,
                "cosine_sim " + t.value(a).dims_str() + " vs " + t.value(b).dims_str());
  return t.matmul(t.l2_normalize_rows(a), t.transpose(t.l2_normalize_rows(b)));
}

Var contrastive_directional(GradTape& t, Var za, Var zb, Var logit_scale,
                            const SmoothedTargets& targets) {
  const int64_t n = t.value(za).rows();
  if (t.value(zb).rows() != n)
    throw Error(Errc::DimMismatch, "contrastive batch sizes differ");
  if (targets.t.rows() != n || targets.t.cols() != n)
    throw Error(Errc::DimMismatch, "targets must be N x N");
  Var logits = t.mul_scalar(cosine_sim(t, za, zb), logit_scale);
  return t.cross_entropy_rows(logits, targets.t);
}

Var contrastive_symmetric(GradTape& t, Var za, Var zb, Var logit_scale,
                          const SmoothedTargets& targets) {
  Var ab = contrastive_directional(t, za, zb, logit_scale, targets);
  Var ba = contrastive_directional(t, zb, za, logit_scale, targets);
  return t.scale(t.add(ab, ba), 0.5);
}

Var consistency_loss(GradTape& t, Var pred, const Tensor& detached_target) {
  if (!t.value(pred).same_dims(detached_target))
    throw Error(Errc::DimMismatch, "consistency_loss shape mismatch");
  Var p_hat = t.l2_normalize_rows(pred);
  Tensor z_hat = l2_normalize_rows(detached_target);
  Var diff = t.sub_const(p_hat, z_hat);
  Var sq = t.mul(diff, diff);
  return t.scale(t.sum_all(sq), 1.0 / static_cast<double>(detached_target.rows()));
}

Var barlow_cross_correlation(GradTape& t, Var za, Var zb) {
  if (!t.value(za).same_dims(t.value(zb)))
    throw Error(Errc::DimMismatch, "barlow_cross_correlation shape mismatch");
  return t.matmul(t.transpose(t.l2_normalize_cols(za)), t.l2_normalize_cols(zb));
}

Var barlow_loss(GradTape& t, Var c, double lam_bt) {
  const Tensor& cv = t.value(c);
  if (cv.rank() != 2 || cv.rows() != cv.cols())
    throw Error(Errc::NotSquare, "barlow_loss needs a square matrix, got " + cv.dims_str());
  const int64_t d = cv.rows();
  Tensor diag_mask({d, d});
  Tensor off_mask = Tensor::full({d, d}, 1.0);
  for (int64_t i = 0; i < d; ++i) {
    diag_mask.at(i, i) = 1.0;
    off_mask.at(i, i) = 0.0;
  }
  Var diag_err = t.mul_const(t.sub_const(c, Tensor::identity(d)), diag_mask);
  Var diag_term = t.sum_all(t.mul(diag_err, diag_err));
  Var off = t.mul_const(c, off_mask);
  Var off_term = t.sum_all(t.mul(off, off));
  return t.add(diag_term, t.scale(off_term, lam_bt));
}

Var swav_xent(GradTape& t, Var za, const Tensor& assignments, Var prototypes,
              double temperature) {
  const Tensor& z = t.value(za);
  const Tensor& p = t.value(prototypes);
  if (z.cols() != p.cols())
    throw Error(Errc::DimMismatch, "swav_xent embed dims " + z.dims_str() + " vs " + p.dims_str());
  if (assignments.rows() != z.rows() || assignments.cols() != p.rows())
    throw Error(Errc::DimMismatch, "swav_xent assignments must be N x K");
  Var logits = t.scale(cosine_sim(t, za, prototypes), 1.0 / temperature);
  return t.cross_entropy_rows(logits, assignments);
}

SwalipAssignments swalip_assignments(const Tensor& za, const Tensor& za_bar, const Tensor& zb,
                                     const Tensor& zb_bar, double lam, const SinkhornConfig& cfg) {
  if (!za.same_dims(za_bar) || !za.same_dims(zb) || !za.same_dims(zb_bar))
    throw Error(Errc::DimMismatch, "swalip views must share one shape");
  auto mixed = [&](const Tensor& partner, const Tensor& protos) {
    AssignmentMatrix am = sinkhorn_normalize(cosine_sim_matrix(partner, protos), cfg);
    return mix_with_identity(am.q, lam);
  };
  SwalipAssignments out;
  // Term order: A->B with prototypes Z^B then Zbar^B, then B->A likewise; the
  // assignment always comes from the correlated partner of the predicting
  // view.
  out.targets.push_back(mixed(za_bar, zb));      // pred za,     protos zb
  out.targets.push_back(mixed(za, zb));          // pred za_bar, protos zb
  out.targets.push_back(mixed(za_bar, zb_bar));  // pred za,     protos zb_bar
  out.targets.push_back(mixed(za, zb_bar));      // pred za_bar, protos zb_bar
  out.targets.push_back(mixed(zb_bar, za));      // pred zb,     protos za
  out.targets.push_back(mixed(zb, za));          // pred zb_bar, protos za
  out.targets.push_back(mixed(zb_bar, za_bar));  // pred zb,     protos za_bar
  out.targets.push_back(mixed(zb, za_bar));      // pred zb_bar, protos za_bar
  return out;
}

Var swalip_modified_with(GradTape& t, const SwalipViews& v, const SwalipAssignments& a,
                         double temperature) {
  if (a.targets.size() != 8)
    throw Error(Errc::ViewCountMismatch, "swalip needs 8 assignment matrices");
  const Var preds[8] = {v.z_a, v.z_a_bar, v.z_a, v.z_a_bar, v.z_b, v.z_b_bar, v.z_b, v.z_b_bar};
  const Var protos[8] = {v.z_b, v.z_b, v.z_b_bar, v.z_b_bar,
                         v.z_a, v.z_a, v.z_a_bar, v.z_a_bar};
  Var total;
  for (int i = 0; i < 8; ++i) {
    Var term = swav_xent(t, preds[i], a.targets[static_cast<size_t>(i)], protos[i], temperature);
    total = (i == 0) ? term : t.add(total, term);
  }
  return t.scale(total, 1.0 / 8.0);
}

Var swalip_modified(GradTape& t, const SwalipViews& v, double lam, double temperature,
                    const SinkhornConfig& cfg) {
  SwalipAssignments a = swalip_assignments(t.value(v.z_a), t.value(v.z_a_bar), t.value(v.z_b),
                                           t.value(v.z_b_bar), lam, cfg);
  return swalip_modified_with(t, v, a, temperature);
}

Var combined_objective(GradTape& t, Var lc, Var lnc, double alpha, double beta) {
  if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
    throw Error(Errc::BadConfig, "objective weights must be in [0,1]");
  return t.add(t.scale(lc, alpha), t.scale(lnc, beta));
}

}  // namespace vlplab
