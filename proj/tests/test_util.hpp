#pragma once

#include <string>
#include <vector>

#include "vlplab/rng.hpp"
#include "vlplab/tensor.hpp"

namespace vlplab::testutil {

inline Tensor random_tensor(std::vector<int64_t> dims, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(dims));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

// Random rows that form probability distributions.
inline Tensor random_prob_rows(int64_t n, int64_t m, Rng& rng) {
  Tensor t({n, m});
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      t.at(i, j) = rng.uniform(0.05, 1.0);
      s += t.at(i, j);
    }
    for (int64_t j = 0; j < m; ++j) t.at(i, j) /= s;
  }
  return t;
}

}  // namespace vlplab::testutil
