#ifndef SEGTTA_EDT_HPP
#define SEGTTA_EDT_HPP

// Exact Euclidean distance transform by separable lower envelopes of
// parabolas, one pass per axis, with anisotropic voxel spacing.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "segtta/types.hpp"

namespace segtta {

namespace detail {

/// In-place 1D pass over n samples spaced `step` apart in memory and `pitch`
/// millimeters apart in space: f[q] <- min_p f[p] + (pitch (q - p))^2.
/// Infinite entries are non-sites.
inline void envelope_pass(double* f, std::size_t n, std::size_t step, double pitch, std::vector<double>& line,
                          std::vector<std::size_t>& site, std::vector<double>& bound) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  line.resize(n);
  site.resize(n);
  bound.resize(n + 1);
  for (std::size_t q = 0; q < n; ++q) line[q] = f[q * step];

  long k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (line[q] == inf) continue;
    const double xq = pitch * static_cast<double>(q);
    double cross = -inf;
    while (k >= 0) {
      const std::size_t p = site[k];
      const double xp = pitch * static_cast<double>(p);
      cross = ((line[q] + xq * xq) - (line[p] + xp * xp)) / (2.0 * (xq - xp));
      if (cross <= bound[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    site[k] = q;
    bound[k] = k == 0 ? -inf : cross;
    bound[k + 1] = inf;
  }
  if (k < 0) return;  // no sites on this line

  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = pitch * static_cast<double>(q);
    while (bound[k + 1] < xq) ++k;
    const double dx = pitch * (static_cast<double>(q) - static_cast<double>(site[k]));
    f[q * step] = dx * dx + line[site[k]];
  }
}

}  // namespace detail

/// Squared distance in mm^2 from every voxel to the nearest voxel flagged in
/// `sites` (same storage order as `dims`). All-infinite when there are no sites.
inline std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites, const Dims& dims,
                                                      const Spacing& spacing) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(dims.count());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = sites[i] ? 0.0 : inf;

  std::vector<double> line;
  std::vector<std::size_t> site;
  std::vector<double> bound;
  const auto ext = dims.extents();
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (std::size_t i2 = 0; i2 < ext[a2]; ++i2) {
      for (std::size_t i1 = 0; i1 < ext[a1]; ++i1) {
        double* start = dist.data() + i1 * dims.stride(a1) + i2 * dims.stride(a2);
        detail::envelope_pass(start, ext[axis], dims.stride(axis), spacing.axis(axis), line, site, bound);
      }
    }
  }
  return dist;
}

}  // namespace segtta

#endif  // SEGTTA_EDT_HPP
