#include "vlplab/verify.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "vlplab/gradcheck.hpp"
#include "vlplab/imageaug.hpp"
#include "vlplab/losses.hpp"
#include "vlplab/textaug.hpp"

namespace vlplab {

namespace {

Tensor rand_t(std::vector<int64_t> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

std::string fmt_err(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "max rel err %.3g", v);
  return buf;
}

// Grad-check `build` w.r.t. x on 3 random instances; optionally corrupt the
// analytic gradient to prove the detector fires.
template <typename MakeInput, typename BuildFn>
VerifyCheck grad_check(const std::string& name, MakeInput make_input, BuildFn build,
                       bool corrupt) {
  VerifyCheck out{name, true, ""};
  double worst = 0.0;
  for (uint64_t inst = 0; inst < 3; ++inst) {
    Tensor x = make_input(inst);
    GradTape t;
    Var v = t.leaf(x);
    Var loss = build(t, v, inst);
    t.backward(loss);
    Tensor analytic = t.grad(v);
    if (corrupt) analytic = scale(analytic, 1.1);
    auto f = [&](const Tensor& px) {
      GradTape tt;
      Var vv = tt.leaf(px);
      return tt.value(build(tt, vv, inst)).at(0);
    };
    auto rep = finite_diff_grad_check(f, x, analytic);
    worst = std::max(worst, rep.max_rel_err);
    if (!rep.pass) out.pass = false;
  }
  out.detail = fmt_err(worst);
  return out;
}

}  // namespace

std::vector<VerifyCheck> run_verification(const std::string& corrupt_target) {
  std::vector<VerifyCheck> checks;
  Rng rng(0xB1E55EDULL);
  const int64_t n = 4, d = 8;
  Tensor zb = rand_t({n, d}, rng);
  Tensor za_bar = rand_t({n, d}, rng);
  Tensor zb_bar = rand_t({n, d}, rng);
  auto st = SmoothedTargets::make(n, 0.1);
  auto st0 = SmoothedTargets::make(n, 0.0);
  SinkhornConfig sk_cfg;

  auto fresh = [&](uint64_t inst) {
    Rng r(derive_seed(17, "verify", inst));
    return rand_t({n, d}, r);
  };

  checks.push_back(grad_check(
      "grad contrastive_directional (Eq. 1)", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        return contrastive_directional(t, v, t.constant(zb), t.constant(Tensor::scalar(5.0)), st0);
      },
      corrupt_target == "contrastive_directional"));

  checks.push_back(grad_check(
      "grad contrastive_symmetric (Eq. 2)", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        return contrastive_symmetric(t, v, t.constant(zb), t.constant(Tensor::scalar(5.0)), st);
      },
      corrupt_target == "contrastive_symmetric"));

  checks.push_back(grad_check(
      "grad consistency_loss (Eq. 3)", fresh,
      [&](GradTape& t, Var v, uint64_t) { return consistency_loss(t, v, zb); },
      corrupt_target == "consistency_loss"));

  checks.push_back(grad_check(
      "grad barlow_loss (Eq. 4)", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        return barlow_loss(t, barlow_cross_correlation(t, v, t.constant(zb)), 0.005);
      },
      corrupt_target == "barlow_loss"));

  Tensor protos = rand_t({6, d}, rng);
  Tensor assign({n, 6});
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t k = 0; k < 6; ++k) {
      assign.at(i, k) = rng.uniform(0.05, 1.0);
      s += assign.at(i, k);
    }
    for (int64_t k = 0; k < 6; ++k) assign.at(i, k) /= s;
  }
  checks.push_back(grad_check(
      "grad swav_xent (Eq. 5)", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        return swav_xent(t, v, assign, t.constant(protos), 0.4);
      },
      corrupt_target == "swav_xent"));

  checks.push_back(grad_check(
      "grad combined_objective (Eq. 6)", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        Var lc = contrastive_symmetric(t, v, t.constant(zb), t.constant(Tensor::scalar(5.0)), st);
        Var lnc = barlow_loss(t, barlow_cross_correlation(t, v, t.constant(zb)), 0.005);
        return combined_objective(t, lc, lnc, 1.0, 1.0);
      },
      corrupt_target == "combined_objective"));

  {
    // Assignments are frozen across the finite differences: they carry no
    // gradient by contract.
    std::vector<SwalipAssignments> frozen;
    for (uint64_t inst = 0; inst < 3; ++inst)
      frozen.push_back(swalip_assignments(fresh(inst), za_bar, zb, zb_bar, 0.5, sk_cfg));
    checks.push_back(grad_check(
        "grad swalip_modified (Eq. 7-8)", fresh,
        [&](GradTape& t, Var v, uint64_t inst) {
          SwalipViews views{v, t.constant(za_bar), t.constant(zb), t.constant(zb_bar)};
          return swalip_modified_with(t, views, frozen[inst], 0.3);
        },
        corrupt_target == "swalip_modified"));
  }

  checks.push_back(grad_check(
      "grad smoothed cross entropy", fresh,
      [&](GradTape& t, Var v, uint64_t) {
        Var logits = t.matmul(v, t.transpose(t.constant(zb)));
        return t.cross_entropy_rows(logits, st.t);
      },
      corrupt_target == "smoothed_cross_entropy"));

  {
    VerifyCheck c{"sinkhorn marginals + epsilon rescaling", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      Tensor sims = rand_t({8, 8}, rng, 0.0, 2.0);
      auto out = sinkhorn_normalize(sims, 0.5, 10000, 1e-9);
      for (int64_t i = 0; i < 8; ++i) {
        double rs = 0.0, cs = 0.0;
        for (int64_t j = 0; j < 8; ++j) {
          rs += out.q.at(i, j);
          cs += out.q.at(j, i);
        }
        worst = std::max({worst, std::abs(rs - 1.0), std::abs(cs - 1.0)});
      }
      auto a = sinkhorn_normalize(scale(sims, 3.0), 0.9, 500, 1e-12);
      auto b = sinkhorn_normalize(sims, 0.3, 500, 1e-12);
      for (int64_t i = 0; i < a.q.numel(); ++i)
        worst = std::max(worst, std::abs(a.q.at(i) - b.q.at(i)));
      auto u = sinkhorn_normalize(Tensor::full({4, 4}, 1.7), 0.05, 3, 1e-9);
      for (int64_t i = 0; i < u.q.numel(); ++i)
        worst = std::max(worst, std::abs(u.q.at(i) - 0.25));
    }
    c.pass = worst < 1e-6;
    c.detail = fmt_err(worst);
    checks.push_back(c);
  }

  {
    VerifyCheck c{"augmentation determinism (text + image)", true, ""};
    TextAugConfig tcfg;
    std::vector<std::string> caps = {"a red circle on a gray background",
                                     "the picture shows a red circle"};
    for (uint64_t seed = 1; seed <= 20 && c.pass; ++seed) {
      Rng r1(seed), r2(seed);
      if (augment_text(caps, TextMode::Strong, tcfg, r1) !=
          augment_text(caps, TextMode::Strong, tcfg, r2))
        c.pass = false;
    }
    ImageAugConfig icfg;
    icfg.out_size = 16;
    Rng ir(5);
    Tensor img = rand_t({3, 24, 24}, ir, 0.0, 1.0);
    for (uint64_t seed = 1; seed <= 10 && c.pass; ++seed) {
      Rng r1(seed), r2(seed);
      Tensor a = augment_image(img, ImageMode::Strong, icfg, r1);
      Tensor b = augment_image(img, ImageMode::Strong, icfg, r2);
      for (int64_t i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) c.pass = false;
    }
    c.detail = "identical seeds, identical outputs";
    checks.push_back(c);
  }

  {
    VerifyCheck c{"loss oracle equivalence (Eq. 1, Eq. 5 double loop)", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int64_t nn = 2 + static_cast<int64_t>(rng.uniform_int(7));
      Tensor a = rand_t({nn, 6}, rng), b = rand_t({nn, 6}, rng);
      const double sc = rng.uniform(1.0, 10.0);
      auto stt = SmoothedTargets::make(nn, 0.1);
      GradTape t;
      double fast = t.value(contrastive_directional(t, t.constant(a), t.constant(b),
                                                    t.constant(Tensor::scalar(sc)), stt))
                        .item();
      // direct per-row evaluation
      Tensor an = l2_normalize_rows(a), bn = l2_normalize_rows(b);
      double slow = 0.0;
      for (int64_t i = 0; i < nn; ++i) {
        double z = 0.0;
        for (int64_t j = 0; j < nn; ++j)
          z += std::exp(sc * dot(an.data() + i * 6, bn.data() + j * 6, 6));
        for (int64_t j = 0; j < nn; ++j)
          slow += stt.t.at(i, j) *
                  (std::log(z) - sc * dot(an.data() + i * 6, bn.data() + j * 6, 6));
      }
      slow /= static_cast<double>(nn);
      worst = std::max(worst, std::abs(fast - slow));

      // Eq. 5 oracle
      Tensor pp = rand_t({5, 6}, rng);
      Tensor aa({nn, 5});
      for (int64_t i = 0; i < nn; ++i) {
        double s = 0.0;
        for (int64_t k = 0; k < 5; ++k) {
          aa.at(i, k) = rng.uniform(0.05, 1.0);
          s += aa.at(i, k);
        }
        for (int64_t k = 0; k < 5; ++k) aa.at(i, k) /= s;
      }
      GradTape t2;
      double fast5 =
          t2.value(swav_xent(t2, t2.constant(a), aa, t2.constant(pp), 0.4)).item();
      Tensor pn = l2_normalize_rows(pp);
      double slow5 = 0.0;
      for (int64_t i = 0; i < nn; ++i) {
        double z = 0.0;
        for (int64_t k = 0; k < 5; ++k)
          z += std::exp(dot(an.data() + i * 6, pn.data() + k * 6, 6) / 0.4);
        for (int64_t k = 0; k < 5; ++k)
          slow5 += aa.at(i, k) *
                   (std::log(z) - dot(an.data() + i * 6, pn.data() + k * 6, 6) / 0.4);
      }
      slow5 /= static_cast<double>(nn);
      worst = std::max(worst, std::abs(fast5 - slow5));
    }
    c.pass = worst < 1e-12;
    c.detail = fmt_err(worst);
    checks.push_back(c);
  }

  return checks;
}

}  // namespace vlplab
