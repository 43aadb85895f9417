#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vlplab/sinkhorn.hpp"

using namespace vlplab;
using testutil::random_tensor;

namespace {

// Independent oracle: plain alternating-normalization loop in 64-bit, run for
// a fixed large iteration count with no early stop and no overflow guard.
Tensor sinkhorn_oracle(const Tensor& sims, double epsilon, int iters) {
  const int64_t n = sims.rows(), k = sims.cols();
  const double col_target = static_cast<double>(n) / static_cast<double>(k);
  Tensor q(sims.dims());
  for (int64_t i = 0; i < q.numel(); ++i) q.at(i) = std::exp(sims.at(i) / epsilon);
  for (int it = 0; it < iters; ++it) {
    for (int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += q.at(i, j);
      for (int64_t i = 0; i < n; ++i) q.at(i, j) *= col_target / s;
    }
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < k; ++j) s += q.at(i, j);
      for (int64_t j = 0; j < k; ++j) q.at(i, j) /= s;
    }
  }
  return q;
}

}  // namespace

TEST_CASE("uniform similarities give the exact uniform assignment") {
  Tensor sims = Tensor::full({2, 2}, 3.7);
  auto out = sinkhorn_normalize(sims, 0.9, 50, 1e-12);
  for (int64_t i = 0; i < 4; ++i) CHECK(out.q.at(i) == 0.5);

  Tensor sims2 = Tensor::full({6, 3}, -1.2);
  auto out2 = sinkhorn_normalize(sims2, 0.05, 10, 1e-12);
  for (int64_t i = 0; i < out2.q.numel(); ++i) CHECK(out2.q.at(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("a balanced kernel is a fixed point") {
  // sims chosen so exp(sims/eps) already satisfies both marginals
  const double eps = 1.3;
  Tensor q0({2, 2}, {0.7, 0.3, 0.3, 0.7});
  Tensor sims({2, 2});
  for (int64_t i = 0; i < 4; ++i) sims.at(i) = eps * std::log(q0.at(i));
  auto out = sinkhorn_normalize(sims, eps, 5, 1e-12);
  for (int64_t i = 0; i < 4; ++i) CHECK(out.q.at(i) == doctest::Approx(q0.at(i)).epsilon(1e-9));
}

TEST_CASE("2x2 instance matches the high-precision oracle") {
  Tensor sims({2, 2}, {2.0, 1.0, 1.0, 2.0});
  auto out = sinkhorn_normalize(sims, 1.0, 10000, 1e-9);
  CHECK(out.converged);
  Tensor ref = sinkhorn_oracle(sims, 1.0, 2000);
  for (int64_t i = 0; i < 4; ++i) CHECK(out.q.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-9));
  CHECK(out.q.at(0, 0) == doctest::Approx(out.q.at(1, 1)).epsilon(1e-9));
  CHECK(out.q.at(0, 0) > 0.5);
}

TEST_CASE("marginals after convergence on random positive matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor sims = random_tensor({8, 8}, rng, 0.0, 2.0);
    auto out = sinkhorn_normalize(sims, 0.5, 10000, 1e-9);
    CHECK(out.converged);
    const int64_t n = 8, k = 8;
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < k; ++j) s += out.q.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-9);  // exact final renormalization
    }
    for (int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) s += out.q.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-6);  // N/K = 1 here
    }
    for (int64_t i = 0; i < out.q.numel(); ++i) CHECK(out.q.at(i) >= 0.0);
  }
}

TEST_CASE("rows sum to 1 even without convergence") {
  Rng rng(7);
  Tensor sims = random_tensor({5, 3}, rng, -1.0, 1.0);
  auto out = sinkhorn_normalize(sims, 0.05, 1, 1e-15);
  CHECK_FALSE(out.converged);
  for (int64_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 3; ++j) s += out.q.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("residual decreases: iter 2k residual <= iter k residual") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor sims = random_tensor({6, 6}, rng, 0.0, 3.0);
    auto out = sinkhorn_normalize(sims, 0.3, 64, 0.0);  // tol 0: never stops early
    REQUIRE(static_cast<int>(out.residual_history.size()) == 64);
    for (int k = 1; 2 * k <= 64; ++k)
      CHECK(out.residual_history[static_cast<size_t>(2 * k - 1)] <=
            out.residual_history[static_cast<size_t>(k - 1)] + 1e-15);
  }
}

TEST_CASE("equivariance to joint row permutation") {
  Rng rng(21);
  Tensor sims = random_tensor({4, 3}, rng, 0.0, 1.0);
  auto base = sinkhorn_normalize(sims, 0.2, 200, 1e-12);
  const int64_t perm[4] = {2, 0, 3, 1};
  Tensor perm_sims({4, 3});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 3; ++j) perm_sims.at(i, j) = sims.at(perm[i], j);
  auto permuted = sinkhorn_normalize(perm_sims, 0.2, 200, 1e-12);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 3; ++j)
      CHECK(permuted.q.at(i, j) == doctest::Approx(base.q.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("scaling sims by c equals using epsilon/c") {
  Rng rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor sims = random_tensor({5, 4}, rng, -1.0, 1.0);
    const double c = rng.uniform(0.5, 4.0);
    auto a = sinkhorn_normalize(scale(sims, c), 0.4, 100, 1e-12);
    auto b = sinkhorn_normalize(sims, 0.4 / c, 100, 1e-12);
    for (int64_t i = 0; i < a.q.numel(); ++i)
      CHECK(a.q.at(i) == doctest::Approx(b.q.at(i)).epsilon(1e-9));
  }
}

TEST_CASE("underflow of a full row or column is reported") {
  // One row far below everything else: exp((s - max)/eps) flushes it to zero.
  Tensor sims({2, 2}, {0.0, 0.0, -1e6, -1e6});
  CHECK_THROWS_AS((void)sinkhorn_normalize(sims, 1e-3, 3, 1e-9), Error);
}

TEST_CASE("mix_with_identity examples") {
  Tensor q({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor lam0 = mix_with_identity(q, 0.0);
  CHECK(lam0.at(0, 0) == 1.0);
  CHECK(lam0.at(0, 1) == 0.0);

  Tensor lam1 = mix_with_identity(q, 1.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(lam1.at(i) == q.at(i));

  Tensor half = mix_with_identity(q, 0.5);
  CHECK(half.at(0, 0) == doctest::Approx(0.75));
  CHECK(half.at(0, 1) == doctest::Approx(0.25));
  CHECK(half.at(1, 0) == doctest::Approx(0.25));
  CHECK(half.at(1, 1) == doctest::Approx(0.75));

  // row sums preserved
  for (int64_t i = 0; i < 2; ++i) {
    double s = half.at(i, 0) + half.at(i, 1);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  Tensor rect({2, 3});
  CHECK_THROWS_AS((void)mix_with_identity(rect, 0.5), Error);
}
