#pragma once

// Ensemble statistics: histograms, moments, Gaussian-kernel mode estimates,
// and density comparison on matching grids.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "markovsde/grid.hpp"

namespace markovsde {

class StatsError : public std::runtime_error {
 public:
  explicit StatsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double std_error = 0.0; // of the mean
};

inline Moments moments(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw StatsError("moments: need at least 2 samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : samples) {
    const double d = v - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  return {mean, var, std::sqrt(var / static_cast<double>(n))};
}

struct HistogramResult {
  DensityGrid density;
  std::size_t below = 0;
  std::size_t above = 0;
};

// Closed-open cells [edge_i, edge_{i+1}), final cell closed.
inline HistogramResult histogram(std::span<const double> samples, const GridSpec& spec) {
  spec.validate();
  HistogramResult result;
  result.density = DensityGrid(spec);
  const double dx = spec.dx();
  std::size_t in_range = 0;
  for (double v : samples) {
    if (v < spec.x_min) {
      ++result.below;
    } else if (v > spec.x_max) {
      ++result.above;
    } else {
      int idx = static_cast<int>((v - spec.x_min) / dx);
      idx = std::min(idx, spec.n_cells - 1);
      result.density.values[static_cast<std::size_t>(idx)] += 1.0;
      ++in_range;
    }
  }
  if (in_range == 0) throw StatsError("histogram: all samples fall outside the grid");
  const double norm = 1.0 / (static_cast<double>(in_range) * dx);
  for (double& v : result.density.values) v *= norm;
  return result;
}

struct KdeMode {
  double mode = 0.0;
  double bandwidth = 0.0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double idx = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline double kde_value(std::span<const double> samples, double x, double h) {
  double s = 0.0;
  for (double v : samples) {
    const double z = (x - v) / h;
    s += std::exp(-0.5 * z * z);
  }
  return s / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace detail

// Gaussian KDE with Silverman bandwidth h = 0.9 min(sd, IQR/1.34) N^{-1/5};
// mode from a 512-point scan refined by golden-section search.
inline KdeMode kde_mode(std::span<const double> samples) {
  if (samples.size() < 100) throw StatsError("kde_mode: need at least 100 samples");

  const Moments m = moments(samples);
  const double sd = std::sqrt(m.variance);
  if (sd == 0.0) return {samples[0], 0.0};

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
  double scale = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  const double h =
      0.9 * scale * std::pow(static_cast<double>(samples.size()), -0.2);
  if (h == 0.0) return {samples[0], 0.0};

  const double lo = sorted.front();
  const double hi = sorted.back();
  constexpr int kScanPoints = 512;
  const double step = (hi - lo) / (kScanPoints - 1);
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i < kScanPoints; ++i) {
    const double v = detail::kde_value(samples, lo + i * step, h);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }

  double a = lo + std::max(0, best - 1) * step;
  double b = lo + std::min(kScanPoints - 1, best + 1) * step;
  constexpr double kGolden = 0.6180339887498949;
  double x1 = b - kGolden * (b - a);
  double x2 = a + kGolden * (b - a);
  double f1 = detail::kde_value(samples, x1, h);
  double f2 = detail::kde_value(samples, x2, h);
  for (int iter = 0; iter < 60 && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++iter) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = detail::kde_value(samples, x2, h);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = detail::kde_value(samples, x1, h);
    }
  }
  return {0.5 * (a + b), h};
}

// L1 distance on a shared grid: sum |a_i - b_i| dx, in [0, 2] for
// normalized densities.
inline double l1_distance(const DensityGrid& a, const DensityGrid& b) {
  if (!a.same_grid(b)) throw StatsError("l1_distance: grids differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
  return s * a.dx();
}

}  // namespace markovsde
