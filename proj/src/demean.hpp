#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace cffe::detail {

// Scratch buffers for repeated residualization over the same code domains.
struct TwoWayScratch {
  std::vector<double> sum_i, sum_j;
  std::vector<int> cnt_i, cnt_j;
};

// Projects `v` onto the orthogonal complement of the span of group-i and
// group-j indicators by alternating demeaning, in place. Group codes must lie
// in [0, ni) / [0, nj); only codes present among the rows matter. Converges
// when every group mean is below a scale-aware tolerance. With a single
// distinct group on one side this degenerates to one-dimensional demeaning
// (the caller decides whether to flag that). Returns sweeps used.
inline int two_way_demean(std::span<double> v, std::span<const int> gi,
                          std::span<const int> gj, int ni, int nj,
                          TwoWayScratch& scratch, int max_sweeps = 1000) {
  const std::size_t n = v.size();
  scratch.sum_i.assign(ni, 0.0);
  scratch.cnt_i.assign(ni, 0);
  scratch.sum_j.assign(nj, 0.0);
  scratch.cnt_j.assign(nj, 0);
  for (std::size_t r = 0; r < n; ++r) {
    scratch.cnt_i[gi[r]] += 1;
    scratch.cnt_j[gj[r]] += 1;
  }
  double scale = 0.0;
  for (std::size_t r = 0; r < n; ++r) scale = std::max(scale, std::abs(v[r]));
  const double tol = 1e-13 * std::max(1.0, scale);

  int sweeps = 0;
  for (; sweeps < max_sweeps; ++sweeps) {
    std::fill(scratch.sum_i.begin(), scratch.sum_i.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) scratch.sum_i[gi[r]] += v[r];
    double drift = 0.0;
    for (int g = 0; g < ni; ++g) {
      if (scratch.cnt_i[g] > 0) {
        scratch.sum_i[g] /= scratch.cnt_i[g];
        drift = std::max(drift, std::abs(scratch.sum_i[g]));
      }
    }
    for (std::size_t r = 0; r < n; ++r) v[r] -= scratch.sum_i[gi[r]];

    std::fill(scratch.sum_j.begin(), scratch.sum_j.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) scratch.sum_j[gj[r]] += v[r];
    double drift_j = 0.0;
    for (int g = 0; g < nj; ++g) {
      if (scratch.cnt_j[g] > 0) {
        scratch.sum_j[g] /= scratch.cnt_j[g];
        drift_j = std::max(drift_j, std::abs(scratch.sum_j[g]));
      }
    }
    for (std::size_t r = 0; r < n; ++r) v[r] -= scratch.sum_j[gj[r]];

    // after the j-pass the j-means are exactly zero; stop once the i-pass
    // no longer moved anything either
    if (drift <= tol && drift_j <= tol) {
      ++sweeps;
      break;
    }
  }
  return sweeps;
}

}  // namespace cffe::detail
