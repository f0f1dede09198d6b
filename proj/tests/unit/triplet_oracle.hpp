#pragma once

// Exhaustive triplet enumeration: for each anchor, scan every (positive,
// negative) pair and keep the one with the largest dp - dn, preferring lower
// indices on ties.

#include <cstdint>
#include <span>
#include <vector>

#include "oracles.hpp"
#include "vcfl/losses.hpp"

namespace vcfl::testing {

inline TripletSelection exhaustive_select(const Matrix& f, std::span<const std::uint32_t> ids) {
  TripletSelection out;
  const std::size_t n = f.rows();
  for (std::size_t a = 0; a < n; ++a) {
    bool found = false;
    std::size_t bp = 0, bn = 0;
    double best_dp = 0, best_dn = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || ids[p] != ids[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (ids[q] == ids[a]) continue;
        const double dp = pair_dist(f, a, f, p);
        const double dn = pair_dist(f, a, f, q);
        // dp - dn is separable: a larger dp wins; for equal dp a smaller dn wins.
        const bool better = !found || dp > best_dp || (dp == best_dp && dn < best_dn);
        if (better) {
          found = true;
          bp = p, bn = q, best_dp = dp, best_dn = dn;
        }
      }
    }
    out.positive.push_back(bp);
    out.positive_dist.push_back(best_dp);
    out.negative.push_back(bn);
    out.negative_dist.push_back(best_dn);
  }
  return out;
}

}  // namespace vcfl::testing
