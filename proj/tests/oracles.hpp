#pragma once

// Independent oracles used across the test suites. Everything here is kept
// deliberately separate from the library's own computation paths: finite
// differences for gradients, a re-implemented log-softmax for the contrastive
// loss, a word-level caption semantics checker, and brute-force enumeration
// for the pair-matching metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdsclip/core/rng.hpp"
#include "sdsclip/core/tensor.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
  const double scale = std::max({1e-6, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / scale;
}

// atol + rtol comparison for gradient coordinates. The atol floor only
// matters for coordinates orders of magnitude below the loss scale, where a
// central difference carries no signal beyond floating-point noise.
inline bool grad_close(double analytic, double fd, double rtol = 1e-4, double atol = 1e-8) {
  return std::fabs(analytic - fd) <= atol + rtol * std::max(std::fabs(analytic), std::fabs(fd));
}

// central finite difference of f() with respect to x[i]
inline double central_diff(const std::function<double()>& f, std::vector<double>& x, std::size_t i,
                           double h = 1e-5) {
  const double orig = x[i];
  x[i] = orig + h;
  const double fp = f();
  x[i] = orig - h;
  const double fm = f();
  x[i] = orig;
  return (fp - fm) / (2.0 * h);
}

// independently coded log-softmax cross entropy over a row
inline double row_log_softmax_at(const std::vector<double>& row, std::size_t target) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  return row[target] - mx - std::log(z);
}

// expected pair-matching scores for i.i.d. continuous scores, computed by
// enumerating the 4! orderings of the four (image, caption) scores
struct PairChance {
  double text = 0.0;
  double image = 0.0;
  double group = 0.0;
};

inline PairChance pair_matching_chance() {
  // ranks r[k] for scores s00,s01,s10,s11; all orderings equally likely
  int perm[4] = {0, 1, 2, 3};
  int n_text = 0, n_image = 0, n_group = 0, n_total = 0;
  std::sort(perm, perm + 4);
  do {
    // perm[k] is the rank of score k; higher rank = larger value
    const int s00 = perm[0], s01 = perm[1], s10 = perm[2], s11 = perm[3];
    const bool text = s00 > s01 && s11 > s10;
    const bool image = s00 > s10 && s11 > s01;
    ++n_total;
    if (text) ++n_text;
    if (image) ++n_image;
    if (text && image) ++n_group;
  } while (std::next_permutation(perm, perm + 4));
  PairChance c;
  c.text = static_cast<double>(n_text) / n_total;
  c.image = static_cast<double>(n_image) / n_total;
  c.group = static_cast<double>(n_group) / n_total;
  return c;
}

}  // namespace oracle
