#pragma once

#include <algorithm>
#include <numeric>

#include "toscca/common.hpp"

namespace toscca {

// Exact-cardinality soft thresholding: shrink every coefficient by the
// largest magnitude strictly below the k-th largest (the (k+1)-th order
// statistic on tie-free input) and keep only the top k. Ties at the cut are
// resolved toward the lowest index, so the result is deterministic and
// nnz <= k always, with equality whenever the k-th largest magnitude is
// positive.
inline VectorXd soft_threshold_topk(const Eigen::Ref<const VectorXd>& w, Index k) {
  const Index p = w.size();
  if (k < 1 || k > p)
    throw Error("soft_threshold_topk: k = " + std::to_string(k) +
                " out of range [1, " + std::to_string(p) + "]");

  std::vector<double> mags(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) mags[static_cast<std::size_t>(j)] = std::abs(w[j]);
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  const double kth = sorted[static_cast<std::size_t>(k - 1)];
  double shrink = 0.0;
  for (Index j = k; j < p; ++j) {
    if (sorted[static_cast<std::size_t>(j)] < kth) {
      shrink = sorted[static_cast<std::size_t>(j)];
      break;
    }
  }

  VectorXd out = VectorXd::Zero(p);
  Index taken = 0;
  // Strictly-above-the-cut coefficients survive unconditionally...
  for (Index j = 0; j < p; ++j) {
    if (mags[static_cast<std::size_t>(j)] > kth) {
      out[j] = (w[j] > 0.0 ? 1.0 : -1.0) * (mags[static_cast<std::size_t>(j)] - shrink);
      ++taken;
    }
  }
  // ...then coefficients tied at the cut fill the remaining slots by index.
  for (Index j = 0; j < p && taken < k; ++j) {
    if (mags[static_cast<std::size_t>(j)] == kth) {
      if (kth > shrink)
        out[j] = (w[j] > 0.0 ? 1.0 : -1.0) * (kth - shrink);
      ++taken;
    }
  }
  return out;
}

}  // namespace toscca
