#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vlplab/gradcheck.hpp"
#include "vlplab/losses.hpp"

using namespace vlplab;
using testutil::random_tensor;

namespace {

double row_norm(const Tensor& m, int64_t i) {
  double s = 0.0;
  for (int64_t j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
  return std::sqrt(s);
}

double cos_rows(const Tensor& a, int64_t i, const Tensor& b, int64_t j) {
  double d = 0.0;
  for (int64_t k = 0; k < a.cols(); ++k) d += a.at(i, k) * b.at(j, k);
  return d / (row_norm(a, i) * row_norm(b, j));
}

// Naive double-loop reference for the directional contrastive objective.
double contrastive_oracle(const Tensor& za, const Tensor& zb, double scale,
                          const Tensor& targets) {
  const int64_t n = za.rows();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) z += std::exp(scale * cos_rows(za, i, zb, j));
    const double log_z = std::log(z);
    for (int64_t j = 0; j < n; ++j)
      total += targets.at(i, j) * (log_z - scale * cos_rows(za, i, zb, j));
  }
  return total / static_cast<double>(n);
}

// Naive double-loop reference for the clustering cross entropy.
double swav_oracle(const Tensor& z, const Tensor& assignments, const Tensor& protos,
                   double temperature) {
  const int64_t n = z.rows(), k = protos.rows();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double zsum = 0.0;
    for (int64_t kk = 0; kk < k; ++kk)
      zsum += std::exp(cos_rows(z, i, protos, kk) / temperature);
    const double log_z = std::log(zsum);
    for (int64_t kk = 0; kk < k; ++kk)
      total += assignments.at(i, kk) * (log_z - cos_rows(z, i, protos, kk) / temperature);
  }
  return total / static_cast<double>(n);
}

double eval_directional(const Tensor& za, const Tensor& zb, double scale,
                        const SmoothedTargets& st) {
  GradTape t;
  return t.value(contrastive_directional(t, t.constant(za), t.constant(zb),
                                         t.constant(Tensor::scalar(scale)), st))
      .at(0);
}

// Grad-check a scalar-valued loss built from one leaf tensor.
template <typename BuildFn>
void check_loss_grad(const Tensor& x, BuildFn build, double rel_tol = 1e-4) {
  GradTape t;
  Var v = t.leaf(x);
  Var loss = build(t, v);
  t.backward(loss);
  Tensor analytic = t.grad(v);
  auto f = [&](const Tensor& px) {
    GradTape tt;
    Var vv = tt.leaf(px);
    return tt.value(build(tt, vv)).at(0);
  };
  auto rep = finite_diff_grad_check(f, x, analytic, 1e-5, rel_tol);
  INFO("max rel err ", rep.max_rel_err);
  CHECK(rep.pass);
}

}  // namespace

TEST_CASE("smoothed targets") {
  auto st = SmoothedTargets::make(2, 0.1);
  CHECK(st.t.at(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(st.t.at(0, 1) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(st.t.at(1, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(st.t.at(1, 1) == doctest::Approx(0.95).epsilon(1e-15));

  auto id = SmoothedTargets::make(3, 0.0);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) CHECK(id.t.at(i, j) == (i == j ? 1.0 : 0.0));

  for (int64_t i = 0; i < 2; ++i) {
    double s = st.t.at(i, 0) + st.t.at(i, 1);
    CHECK(s == 1.0);
  }
}

TEST_CASE("contrastive_directional examples") {
  // single element: numerator equals denominator
  Tensor z1({1, 3}, {0.3, -0.2, 0.9});
  Tensor z2({1, 3}, {1.0, 0.5, 0.0});
  CHECK(eval_directional(z1, z2, 7.3, SmoothedTargets::make(1, 0.0)) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // N=2 orthonormal pair at tau=1
  Tensor id = Tensor::identity(2);
  const double expected = std::log(1.0 + std::exp(-1.0));
  CHECK(eval_directional(id, id, 1.0, SmoothedTargets::make(2, 0.0)) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("vectorized contrastive equals the double-loop reference (100 instances)") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(7));  // 2..8
    const int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(15));
    Tensor za = random_tensor({n, d}, rng);
    Tensor zb = random_tensor({n, d}, rng);
    const double scale = rng.uniform(0.5, 20.0);
    const double s = (trial % 2) ? 0.1 : 0.0;
    auto st = SmoothedTargets::make(n, s);
    const double fast = eval_directional(za, zb, scale, st);
    const double slow = contrastive_oracle(za, zb, scale, st.t);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
    CHECK(fast >= 0.0);
  }
}

TEST_CASE("contrastive invariances") {
  Rng rng(55);
  Tensor za = random_tensor({4, 8}, rng);
  Tensor zb = random_tensor({4, 8}, rng);
  auto st = SmoothedTargets::make(4, 0.1);
  const double base = eval_directional(za, zb, 9.0, st);

  // positive per-row rescale leaves cosine losses unchanged
  Tensor za_s = za, zb_s = zb;
  for (int64_t i = 0; i < 4; ++i) {
    double ca = rng.uniform(0.1, 5.0), cb = rng.uniform(0.1, 5.0);
    for (int64_t j = 0; j < 8; ++j) {
      za_s.at(i, j) *= ca;
      zb_s.at(i, j) *= cb;
    }
  }
  CHECK(eval_directional(za_s, zb_s, 9.0, st) == doctest::Approx(base).epsilon(1e-12));

  // joint batch permutation of za, zb and targets
  const int64_t perm[4] = {3, 1, 0, 2};
  Tensor za_p({4, 8}), zb_p({4, 8});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 8; ++j) {
      za_p.at(i, j) = za.at(perm[i], j);
      zb_p.at(i, j) = zb.at(perm[i], j);
    }
  // smoothed targets are permutation-symmetric, so targets stay as-is
  CHECK(eval_directional(za_p, zb_p, 9.0, st) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("contrastive_symmetric properties") {
  Rng rng(77);
  Tensor za = random_tensor({4, 6}, rng);
  Tensor zb = random_tensor({4, 6}, rng);
  auto st = SmoothedTargets::make(4, 0.0);
  auto sym = [&](const Tensor& a, const Tensor& b) {
    GradTape t;
    return t
        .value(contrastive_symmetric(t, t.constant(a), t.constant(b),
                                     t.constant(Tensor::scalar(4.0)), st))
        .at(0);
  };
  CHECK(sym(za, zb) == sym(zb, za));
  const double dir_ab = eval_directional(za, zb, 4.0, st);
  const double dir_ba = eval_directional(zb, za, 4.0, st);
  CHECK(sym(za, zb) == doctest::Approx(0.5 * (dir_ab + dir_ba)).epsilon(1e-12));
  CHECK(sym(za, za) == doctest::Approx(eval_directional(za, za, 4.0, st)).epsilon(1e-12));
}

TEST_CASE("gradient descent over zb aligns every pair with its own row") {
  // With one-hot targets and fixed orthonormal za (D = N), descent on the
  // sphere does not stop at zb = za: spreading the negatives to
  // cos = -1/sqrt(N(N-1)) widens the positive/negative margin past 1 and
  // strictly lowers the loss at any scale. The stationarity condition
  // sum_i p_ij za_i - za_j ∝ zb_j gives diagonal cosine sqrt((N-1)/N) for the
  // symmetric optimum; descent must find it, and retrieval must be perfect.
  const int64_t n = 4;
  Tensor za = Tensor::identity(n);
  Rng rng(31);
  Tensor zb = random_tensor({n, n}, rng, -0.5, 0.5);
  auto st = SmoothedTargets::make(n, 0.0);
  double loss_at_za = 0.0, final_loss = 0.0;
  {
    GradTape t;
    loss_at_za = t.value(contrastive_directional(t, t.constant(za), t.constant(za),
                                                 t.constant(Tensor::scalar(5.0)), st))
                     .item();
  }
  for (int step = 0; step < 8000; ++step) {
    GradTape t;
    Var zbv = t.leaf(zb);
    Var loss =
        contrastive_directional(t, t.constant(za), zbv, t.constant(Tensor::scalar(5.0)), st);
    final_loss = t.value(loss).item();
    t.backward(loss);
    Tensor g = t.grad(zbv);
    for (int64_t i = 0; i < zb.numel(); ++i) zb.at(i) -= 0.5 * g.at(i);
    zb = l2_normalize_rows(zb);
  }
  const double cos_star = std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
  for (int64_t i = 0; i < n; ++i) {
    CHECK(cos_rows(zb, i, za, i) == doctest::Approx(cos_star).epsilon(2e-3));
    // every row retrieves its own pair
    for (int64_t j = 0; j < n; ++j)
      if (j != i) CHECK(cos_rows(zb, i, za, i) > cos_rows(zb, j, za, i));
  }
  CHECK(final_loss < loss_at_za);
}

TEST_CASE("consistency loss examples") {
  Rng rng(9);
  Tensor p = random_tensor({3, 5}, rng);
  auto eval = [](const Tensor& pred, const Tensor& tgt) {
    GradTape t;
    return t.value(consistency_loss(t, t.constant(pred), tgt)).at(0);
  };
  CHECK(eval(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eval(p, scale(p, -1.0)) == doctest::Approx(4.0).epsilon(1e-12));

  Tensor u({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor v({2, 2}, {0.0, 1.0, 1.0, 0.0});
  CHECK(eval(u, v) == doctest::Approx(2.0).epsilon(1e-12));

  // scale invariance of the target through internal normalization
  CHECK(eval(p, scale(p, 3.0)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("barlow cross correlation examples") {
  auto eval_cc = [](const Tensor& a, const Tensor& b) {
    GradTape t;
    return t.value(barlow_cross_correlation(t, t.constant(a), t.constant(b)));
  };
  // orthonormal columns across the batch -> identity
  Tensor za({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor c = eval_cc(za, za);
  CHECK(c.at(0, 0) == doctest::Approx(1.0));
  CHECK(c.at(0, 1) == doctest::Approx(0.0));
  CHECK(c.at(1, 1) == doctest::Approx(1.0));

  // zb = -za flips every sign
  Rng rng(4);
  Tensor r = random_tensor({5, 3}, rng);
  Tensor c_pos = eval_cc(r, r);
  Tensor c_neg = eval_cc(r, scale(r, -1.0));
  for (int64_t i = 0; i < c_pos.numel(); ++i)
    CHECK(c_neg.at(i) == doctest::Approx(-c_pos.at(i)).epsilon(1e-12));

  Tensor ones({2, 2}, {1.0, 1.0, 1.0, 1.0});
  Tensor c3 = eval_cc(za, ones);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(c3.at(i) == doctest::Approx(inv_sqrt2).epsilon(1e-12));
  for (int64_t i = 0; i < c3.numel(); ++i) {
    CHECK(c3.at(i) <= 1.0 + 1e-12);
    CHECK(c3.at(i) >= -1.0 - 1e-12);
  }
}

TEST_CASE("barlow loss examples") {
  auto eval_bl = [](const Tensor& c, double lam) {
    GradTape t;
    return t.value(barlow_loss(t, t.constant(c), lam)).at(0);
  };
  CHECK(eval_bl(Tensor::identity(4), 0.005) == doctest::Approx(0.0));
  CHECK(eval_bl(Tensor::zeros({3, 3}), 0.7) == doctest::Approx(3.0));

  const int64_t d = 5;
  const double off = 0.3, lam = 0.01;
  Tensor c = Tensor::full({d, d}, off);
  for (int64_t i = 0; i < d; ++i) c.at(i, i) = 1.0;
  CHECK(eval_bl(c, lam) ==
        doctest::Approx(lam * static_cast<double>(d * (d - 1)) * off * off).epsilon(1e-12));

  GradTape t;
  CHECK_THROWS_AS((void)barlow_loss(t, t.constant(Tensor({2, 3})), 0.1), Error);

  // zero iff identity
  Rng rng(8);
  Tensor noisy = add(Tensor::identity(4), scale(random_tensor({4, 4}, rng), 0.01));
  CHECK(eval_bl(noisy, 0.005) > 0.0);
}

TEST_CASE("swav_xent examples and oracle") {
  auto eval_swav = [](const Tensor& z, const Tensor& a, const Tensor& p, double tau) {
    GradTape t;
    return t.value(swav_xent(t, t.constant(z), a, t.constant(p), tau)).at(0);
  };

  // confident correct: z equals its assigned prototype, small temperature
  Tensor protos = Tensor::identity(3);
  Tensor z = Tensor::identity(3);
  Tensor onehot = Tensor::identity(3);
  CHECK(eval_swav(z, onehot, protos, 0.02) == doctest::Approx(0.0).epsilon(1e-8));

  // equal similarities + uniform assignments -> ln K
  Tensor z_any({2, 3}, {1.0, 1.0, 1.0, 2.0, 2.0, 2.0});
  Tensor protos_sym = Tensor::full({4, 3}, 1.0);
  Tensor unif = Tensor::full({2, 4}, 0.25);
  CHECK(eval_swav(z_any, unif, protos_sym, 0.5) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // brute-force loop oracle on random instances
  Rng rng(66);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(7));
    const int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(7));
    Tensor zz = random_tensor({n, 6}, rng);
    Tensor pp = random_tensor({k, 6}, rng);
    Tensor aa = testutil::random_prob_rows(n, k, rng);
    const double tau = rng.uniform(0.05, 1.0);
    CHECK(eval_swav(zz, aa, pp, tau) ==
          doctest::Approx(swav_oracle(zz, aa, pp, tau)).epsilon(1e-12));
  }
}

TEST_CASE("swalip modified: lam=0 reduces to identity-target cross entropy") {
  Rng rng(88);
  const int64_t n = 4, d = 6;
  Tensor za = random_tensor({n, d}, rng);
  Tensor za_bar = random_tensor({n, d}, rng);
  Tensor zb = random_tensor({n, d}, rng);
  Tensor zb_bar = random_tensor({n, d}, rng);
  const double tau = 0.3;

  GradTape t;
  SwalipViews v{t.constant(za), t.constant(za_bar), t.constant(zb), t.constant(zb_bar)};
  SinkhornConfig cfg;
  double loss = t.value(swalip_modified(t, v, 0.0, tau, cfg)).at(0);

  Tensor eye = Tensor::identity(n);
  const Tensor* preds[8] = {&za, &za_bar, &za, &za_bar, &zb, &zb_bar, &zb, &zb_bar};
  const Tensor* protos[8] = {&zb, &zb, &zb_bar, &zb_bar, &za, &za, &za_bar, &za_bar};
  double ref = 0.0;
  for (int i = 0; i < 8; ++i)
    ref += cross_entropy_rows(scale(cosine_sim_matrix(*preds[i], *protos[i]), 1.0 / tau), eye);
  ref /= 8.0;
  CHECK(loss == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("swalip modified: loss decreases as temperature decreases on aligned views") {
  const int64_t n = 4;
  Tensor eye = Tensor::identity(n);
  SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  auto eval_at = [&](double tau) {
    GradTape t;
    SwalipViews v{t.constant(eye), t.constant(eye), t.constant(eye), t.constant(eye)};
    return t.value(swalip_modified(t, v, 0.5, tau, cfg)).at(0);
  };
  // brute-force check of one evaluation path against swav_oracle
  {
    SwalipAssignments a = swalip_assignments(eye, eye, eye, eye, 0.5, cfg);
    double direct = 0.0;
    for (int i = 0; i < 8; ++i) direct += swav_oracle(eye, a.targets[static_cast<size_t>(i)], eye, 1.0);
    direct /= 8.0;
    CHECK(eval_at(1.0) == doctest::Approx(direct).epsilon(1e-12));
  }
  const double l1 = eval_at(1.0), l05 = eval_at(0.5), l01 = eval_at(0.1);
  CHECK(l1 > l05);
  CHECK(l05 > l01);
}

TEST_CASE("swalip modified: joint batch permutation invariance") {
  Rng rng(12);
  const int64_t n = 5, d = 4;
  Tensor views[4];
  for (auto& v : views) v = random_tensor({n, d}, rng);
  SinkhornConfig cfg;
  auto eval_views = [&](const Tensor& a, const Tensor& ab, const Tensor& b, const Tensor& bb) {
    GradTape t;
    SwalipViews v{t.constant(a), t.constant(ab), t.constant(b), t.constant(bb)};
    return t.value(swalip_modified(t, v, 0.4, 0.2, cfg)).at(0);
  };
  const double base = eval_views(views[0], views[1], views[2], views[3]);
  const int64_t perm[5] = {4, 2, 0, 1, 3};
  Tensor permed[4];
  for (int v = 0; v < 4; ++v) {
    permed[v] = Tensor({n, d});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) permed[v].at(i, j) = views[v].at(perm[i], j);
  }
  const double after = eval_views(permed[0], permed[1], permed[2], permed[3]);
  CHECK(after == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("combined objective examples") {
  GradTape t;
  Var lc = t.constant(Tensor::scalar(0.7));
  Var lnc = t.constant(Tensor::scalar(0.2));
  CHECK(t.value(combined_objective(t, lc, lnc, 1.0, 0.0)).at(0) == doctest::Approx(0.7));
  CHECK(t.value(combined_objective(t, lc, lnc, 0.0, 1.0)).at(0) == doctest::Approx(0.2));
  CHECK(t.value(combined_objective(t, lc, lnc, 1.0, 1.0)).at(0) == doctest::Approx(0.9));
}

TEST_CASE("gradients of every loss pass the finite-difference check") {
  Rng rng(2024);
  const int64_t n = 4, d = 8;
  Tensor za = random_tensor({n, d}, rng);
  Tensor zb = random_tensor({n, d}, rng);
  auto st = SmoothedTargets::make(n, 0.1);
  auto st0 = SmoothedTargets::make(n, 0.0);
  Tensor scale_t = Tensor::scalar(6.0);

  // Eq. 1 w.r.t. za, zb, and the logit scale
  check_loss_grad(za, [&](GradTape& t, Var v) {
    return contrastive_directional(t, v, t.constant(zb), t.constant(scale_t), st0);
  });
  check_loss_grad(zb, [&](GradTape& t, Var v) {
    return contrastive_directional(t, t.constant(za), v, t.constant(scale_t), st0);
  });
  check_loss_grad(scale_t, [&](GradTape& t, Var v) {
    return contrastive_directional(t, t.constant(za), t.constant(zb), v, st);
  });

  // Eq. 2
  check_loss_grad(za, [&](GradTape& t, Var v) {
    return contrastive_symmetric(t, v, t.constant(zb), t.constant(scale_t), st);
  });

  // Eq. 3 (target branch is detached by contract)
  check_loss_grad(za, [&](GradTape& t, Var v) { return consistency_loss(t, v, zb); });

  // Eq. 4
  check_loss_grad(za, [&](GradTape& t, Var v) {
    return barlow_loss(t, barlow_cross_correlation(t, v, t.constant(zb)), 0.005);
  });
  check_loss_grad(zb, [&](GradTape& t, Var v) {
    return barlow_loss(t, barlow_cross_correlation(t, t.constant(za), v), 0.005);
  });

  // Eq. 5 w.r.t. embeddings and prototypes
  Tensor protos = random_tensor({6, d}, rng);
  Tensor assign = testutil::random_prob_rows(n, 6, rng);
  check_loss_grad(za, [&](GradTape& t, Var v) {
    return swav_xent(t, v, assign, t.constant(protos), 0.4);
  });
  check_loss_grad(protos, [&](GradTape& t, Var v) {
    return swav_xent(t, t.constant(za), assign, v, 0.4);
  });

  // Eq. 6 as a composition
  check_loss_grad(za, [&](GradTape& t, Var v) {
    Var lc = contrastive_symmetric(t, v, t.constant(zb), t.constant(scale_t), st);
    Var lnc = barlow_loss(t, barlow_cross_correlation(t, v, t.constant(zb)), 0.005);
    return combined_objective(t, lc, lnc, 1.0, 1.0);
  });

  // Eq. 7-8 with frozen assignments (they are constants under backprop)
  Tensor za_bar = random_tensor({n, d}, rng);
  Tensor zb_bar = random_tensor({n, d}, rng);
  SinkhornConfig cfg;
  SwalipAssignments frozen = swalip_assignments(za, za_bar, zb, zb_bar, 0.5, cfg);
  check_loss_grad(za, [&](GradTape& t, Var v) {
    SwalipViews views{v, t.constant(za_bar), t.constant(zb), t.constant(zb_bar)};
    return swalip_modified_with(t, views, frozen, 0.3);
  });
  check_loss_grad(zb_bar, [&](GradTape& t, Var v) {
    SwalipViews views{t.constant(za), t.constant(za_bar), t.constant(zb), v};
    return swalip_modified_with(t, views, frozen, 0.3);
  });

  // smoothed cross entropy w.r.t. raw logits
  Tensor logits = random_tensor({n, n}, rng, -2.0, 2.0);
  check_loss_grad(logits,
                  [&](GradTape& t, Var v) { return t.cross_entropy_rows(v, st.t); });
}
