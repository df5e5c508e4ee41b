#pragma once

// Shared deterministic fixtures for loss and gradient tests.

#include <algorithm>
#include <numeric>
#include <vector>

#include "lunet/rng.hpp"
#include "lunet/tensor.hpp"

namespace fixtures {

/// Fills each spatial plane with a random permutation of evenly spaced
/// distinct values in (0.05, 0.95); the second channel sits on a half-step
/// offset lattice so no value collides across channels. Distinctness keeps
/// finite-difference probes (h = 1e-4) clear of min/max/abs tie points.
inline lunet::Tensor distinct_prob_pair(int64_t h, int64_t w,
                                        lunet::Rng& rng) {
  lunet::Tensor pred(1, 2, h, w);
  const int64_t hw = h * w;
  std::vector<int64_t> perm(static_cast<size_t>(hw));
  for (int64_t c = 0; c < 2; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const double offset = c == 0 ? 0.0 : 0.45 / static_cast<double>(hw);
    double* p = pred.plane(0, c);
    for (int64_t i = 0; i < hw; ++i)
      p[i] = 0.05 +
             0.9 * (static_cast<double>(perm[static_cast<size_t>(i)]) + 0.25) /
                 static_cast<double>(hw) +
             offset;
  }
  return pred;
}

/// Random binary triplet [artery, venule, unknown]; overlap is allowed and
/// the unknown plane stays sparse.
inline lunet::Tensor random_label_triplet(int64_t h, int64_t w,
                                          lunet::Rng& rng) {
  lunet::Tensor label(1, 3, h, w);
  for (int64_t i = 0; i < h * w; ++i) {
    label.plane(0, 0)[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    label.plane(0, 1)[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    label.plane(0, 2)[i] = rng.bernoulli(0.15) ? 1.0 : 0.0;
  }
  return label;
}

}  // namespace fixtures
