#pragma once

// Cell-centered 1-D probability density. Normalization convention:
// sum(values) * dx == 1.

#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "markovsde/expr.hpp"

namespace markovsde {

class GridError : public std::runtime_error {
 public:
  explicit GridError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GridSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  int n_cells = 400;

  void validate() const {
    if (!(x_min < x_max)) throw GridError("grid: x_min must be < x_max");
    if (n_cells < 2) throw GridError("grid: n_cells must be >= 2");
  }
  double dx() const { return (x_max - x_min) / n_cells; }
  double center(int i) const { return x_min + (i + 0.5) * dx(); }
};

struct DensityGrid {
  double x_min = -1.0;
  double x_max = 1.0;
  std::vector<double> values;

  DensityGrid() = default;
  explicit DensityGrid(const GridSpec& spec) : x_min(spec.x_min), x_max(spec.x_max) {
    spec.validate();
    values.assign(static_cast<std::size_t>(spec.n_cells), 0.0);
  }

  int n_cells() const { return static_cast<int>(values.size()); }
  double dx() const { return (x_max - x_min) / n_cells(); }
  double center(int i) const { return x_min + (i + 0.5) * dx(); }
  GridSpec spec() const { return {x_min, x_max, n_cells()}; }

  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * dx();
  }

  void normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw GridError("density has non-positive mass");
    for (double& v : values) v /= m;
  }

  double mean() const {
    double s = 0.0;
    for (int i = 0; i < n_cells(); ++i) s += center(i) * values[static_cast<std::size_t>(i)];
    return s * dx();
  }

  double variance() const {
    const double mu = mean();
    double s = 0.0;
    for (int i = 0; i < n_cells(); ++i) {
      const double d = center(i) - mu;
      s += d * d * values[static_cast<std::size_t>(i)];
    }
    return s * dx();
  }

  double max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }

  bool same_grid(const DensityGrid& other) const {
    return x_min == other.x_min && x_max == other.x_max &&
           values.size() == other.values.size();
  }
};

// Normalized Gaussian sampled at cell centers.
inline DensityGrid gaussian_density(const GridSpec& spec, double center, double sigma) {
  if (!(sigma > 0.0)) throw GridError("gaussian_density: sigma must be > 0");
  DensityGrid w(spec);
  for (int i = 0; i < w.n_cells(); ++i) {
    const double z = (w.center(i) - center) / sigma;
    w.values[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
  }
  w.normalize();
  return w;
}

// CSV dump: '#'-prefixed metadata lines, then header x,w and one row per cell.
inline void write_density_csv(std::ostream& os, const DensityGrid& w,
                              const std::vector<std::pair<std::string, std::string>>& metadata = {}) {
  for (const auto& [key, value] : metadata) os << "# " << key << ": " << value << "\n";
  os << "x,w\n";
  for (int i = 0; i < w.n_cells(); ++i)
    os << expr::detail::format_double(w.center(i)) << ','
       << expr::detail::format_double(w.values[static_cast<std::size_t>(i)]) << "\n";
}

}  // namespace markovsde
