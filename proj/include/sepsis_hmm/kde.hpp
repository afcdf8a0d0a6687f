#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "sepsis_hmm/errors.hpp"

namespace sepsis_hmm {

inline constexpr std::size_t kKdeMinSamples = 10;
inline constexpr std::size_t kKdeGridPoints = 512;

namespace detail {

// Linear-interpolated quantile of sorted data (type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

// Silverman's rule: 1.06 * min(sd, IQR / 1.34) * n^(-1/5). Falls back to sd
// when the IQR collapses to zero.
inline double silverman_bandwidth(std::span<const double> samples) {
  const auto n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::sorted_quantile(sorted, 0.75) - detail::sorted_quantile(sorted, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 1.06 * spread * std::pow(n, -0.2);
}

// Unnormalized Gaussian KDE (the constant factor does not move the mode).
inline double kde_value(std::span<const double> samples, double bandwidth, double x) {
  const double inv = 1.0 / bandwidth;
  double total = 0.0;
  for (double s : samples) {
    const double z = (x - s) * inv;
    total += std::exp(-0.5 * z * z);
  }
  return total;
}

// Mode of the Gaussian KDE: scan a uniform grid over [min, max], then
// golden-section refine inside the neighbouring cells of the best grid point.
// Grid ties go to the smaller abscissa.
inline double kde_map(std::span<const double> samples) {
  if (samples.size() < kKdeMinSamples)
    throw ValidationError("kde_map: need at least " + std::to_string(kKdeMinSamples) +
                          " samples, got " + std::to_string(samples.size()));
  for (double x : samples)
    if (!std::isfinite(x)) throw ValidationError("kde_map: non-finite sample");
  // Sorted copy: the density sums, and so the mode, do not depend on input order.
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  samples = sorted;
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (lo == hi) return lo;

  const double h = silverman_bandwidth(samples);
  const double cell = (hi - lo) / static_cast<double>(kKdeGridPoints - 1);
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < kKdeGridPoints; ++i) {
    const double x = lo + cell * static_cast<double>(i);
    const double v = kde_value(samples, h, x);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }

  double a = lo + cell * static_cast<double>(best == 0 ? 0 : best - 1);
  double b = lo + cell * static_cast<double>(std::min(best + 1, kKdeGridPoints - 1));
  const double tol = 1e-8 * cell;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = kde_value(samples, h, c);
  double fd = kde_value(samples, h, d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = kde_value(samples, h, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = kde_value(samples, h, d);
    }
  }
  const double refined = 0.5 * (a + b);
  // Keep the grid point if refinement did not improve on it.
  const double grid_x = lo + cell * static_cast<double>(best);
  return kde_value(samples, h, refined) >= best_value ? refined : grid_x;
}

}  // namespace sepsis_hmm
