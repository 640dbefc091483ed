#pragma once

// 1-D Fokker-Planck solver in conservative flux form,
//   w_t = -d/dx J,   J = a_eff w - (D/2) w',   a_eff = a + (alpha - 1) a_sp,
// on a cell-centered grid with zero-flux boundaries.
//
// Face fluxes use exponential fitting (Scharfetter-Gummel): with
// P = trapezoid of 2 a_eff / D across the face and Bernoulli
// B(z) = z / (e^z - 1),
//   J_f = (D_f / 2 dx) [ B(-P) w_left - B(P) w_right ].
// This blends central differencing (P -> 0) with upwinding (|P| large),
// preserves positivity under the dt bound below, and its discrete
// zero-current state is exactly exp of the cumulative trapezoid integral,
// so the flux-form steady state and the quadrature steady state coincide.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "markovsde/grid.hpp"
#include "markovsde/model.hpp"

namespace markovsde {

class FpeError : public std::runtime_error {
 public:
  explicit FpeError(const std::string& msg) : std::runtime_error(msg) {}
};

class StabilityError : public FpeError {
 public:
  StabilityError(const std::string& msg, double suggested_dt)
      : FpeError(msg + "; suggested dt <= " + std::to_string(suggested_dt)),
        suggested_dt_(suggested_dt) {}
  double suggested_dt() const { return suggested_dt_; }

 private:
  double suggested_dt_;
};

class NonNormalizableError : public FpeError {
 public:
  explicit NonNormalizableError(const std::string& msg) : FpeError(msg) {}
};

class UnderResolvedError : public FpeError {
 public:
  explicit UnderResolvedError(const std::string& msg) : FpeError(msg) {}
};

namespace detail {

inline double bernoulli(double z) {
  if (std::abs(z) < 1e-12) return 1.0 - 0.5 * z;
  if (z > 700.0) return 0.0;
  if (z < -700.0) return -z;
  return z / std::expm1(z);
}

// Grid-frozen coefficients of the flux operator.
struct FluxOperator {
  int n = 0;
  double dx = 0.0;
  std::vector<double> k_left, k_right;  // interior faces 1..n-1
  std::vector<double> g;                // 2 a_eff / D at centers
  double d_max = 0.0;
  double a_eff_max = 0.0;

  FluxOperator(const SdeModel& model, const GridSpec& spec, double alpha) {
    if (model.dim() != 1)
      throw FpeError("the flux-form solver handles 1-D models only (model '" +
                     model.label() + "' has dimension " + std::to_string(model.dim()) + ")");
    spec.validate();
    n = spec.n_cells;
    dx = spec.dx();
    g.resize(static_cast<std::size_t>(n));
    k_left.assign(static_cast<std::size_t>(n) + 1, 0.0);
    k_right.assign(static_cast<std::size_t>(n) + 1, 0.0);

    VectorXd x(1);
    for (int i = 0; i < n; ++i) {
      x(0) = spec.center(i);
      const double a = model.drift(x)(0);
      const double asp = alpha == 1.0 ? 0.0 : model.spurious_drift(x)(0);
      const double d = model.diffusion(x)(0, 0);
      if (!(d > 0.0))
        throw FpeError("diffusion must be positive on the grid (D(" +
                       std::to_string(x(0)) + ") = " + std::to_string(d) + ")");
      const double a_eff = a + (alpha - 1.0) * asp;
      g[static_cast<std::size_t>(i)] = 2.0 * a_eff / d;
      d_max = std::max(d_max, d);
      a_eff_max = std::max(a_eff_max, std::abs(a_eff));
    }
    for (int f = 1; f < n; ++f) {
      x(0) = spec.x_min + f * dx;
      const double d_face = model.diffusion(x)(0, 0);
      if (!(d_face > 0.0))
        throw FpeError("diffusion must be positive on the grid (face x = " +
                       std::to_string(x(0)) + ")");
      d_max = std::max(d_max, d_face);
      const double p = 0.5 * dx * (g[static_cast<std::size_t>(f - 1)] +
                                   g[static_cast<std::size_t>(f)]);
      const double c = 0.5 * d_face / dx;
      k_left[static_cast<std::size_t>(f)] = c * bernoulli(-p);
      k_right[static_cast<std::size_t>(f)] = c * bernoulli(p);
    }
  }

  void currents(const std::vector<double>& w, std::vector<double>& j) const {
    j.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int f = 1; f < n; ++f)
      j[static_cast<std::size_t>(f)] =
          k_left[static_cast<std::size_t>(f)] * w[static_cast<std::size_t>(f - 1)] -
          k_right[static_cast<std::size_t>(f)] * w[static_cast<std::size_t>(f)];
  }

  double stable_dt() const {
    const double diffusive = dx * dx / d_max;
    const double advective = a_eff_max > 0.0 ? dx / a_eff_max
                                             : std::numeric_limits<double>::infinity();
    return 0.4 * std::min(diffusive, advective);
  }
};

}  // namespace detail

// Largest explicit-Euler step the solver accepts for this model/grid/alpha.
inline double stable_dt(const SdeModel& model, const GridSpec& spec, double alpha) {
  return detail::FluxOperator(model, spec, alpha).stable_dt();
}

// Discrete face currents of a density under the flux operator; n_cells + 1
// values with zero at both boundary faces.
inline std::vector<double> face_currents(const SdeModel& model, const DensityGrid& w,
                                         double alpha) {
  detail::FluxOperator op(model, w.spec(), alpha);
  std::vector<double> j;
  op.currents(w.values, j);
  return j;
}

struct ModeEstimate {
  double value = 0.0;
  bool at_boundary = false;
  bool plateau = false;
};

// Argmax cell refined by a 3-point parabolic fit. Monotone densities are
// flagged at_boundary; a flat top wider than 10% of the grid is flagged
// plateau and its center reported.
inline ModeEstimate density_mode(const DensityGrid& w) {
  const int n = w.n_cells();
  if (n < 3) throw GridError("density_mode: need at least 3 cells");
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (w.values[static_cast<std::size_t>(i)] > w.values[static_cast<std::size_t>(best)])
      best = i;
  const double peak = w.values[static_cast<std::size_t>(best)];

  int lo = best, hi = best;
  const double flat = peak * (1.0 - 1e-9);
  while (lo > 0 && w.values[static_cast<std::size_t>(lo - 1)] >= flat) --lo;
  while (hi < n - 1 && w.values[static_cast<std::size_t>(hi + 1)] >= flat) ++hi;
  if (hi - lo + 1 > n / 10) {
    return {0.5 * (w.center(lo) + w.center(hi)), lo == 0 || hi == n - 1, true};
  }
  if (best == 0 || best == n - 1) {
    return {w.center(best), true, false};
  }
  const double wl = w.values[static_cast<std::size_t>(best - 1)];
  const double wr = w.values[static_cast<std::size_t>(best + 1)];
  const double denom = wl - 2.0 * peak + wr;
  double offset = 0.0;
  if (denom < 0.0) offset = std::clamp(0.5 * (wl - wr) / denom, -0.5, 0.5);
  return {w.center(best) + offset * w.dx(), false, false};
}

struct TrackPoint {
  double t = 0.0;
  double mean = 0.0;
  double mode = 0.0;
};

struct EvolveOptions {
  int track_samples = 0;  // >= 2 records (t, mean, mode) along the way
};

struct EvolveResult {
  DensityGrid density;
  std::vector<TrackPoint> track;
  double max_mass_drift = 0.0;  // per-step, before the final renormalization
  bool boundary_mass_warning = false;
  long steps = 0;
  double dt = 0.0;
};

// Advance w for t_final by explicit Euler flux updates. dt is an upper
// bound on the step; the actual step is t_final / ceil(t_final / dt). Mass
// is conserved by construction; the result is renormalized once at the end
// to absorb rounding.
inline EvolveResult evolve(const SdeModel& model, const DensityGrid& w0, double t_final,
                           double dt, double alpha, const EvolveOptions& opts = {}) {
  if (!(t_final > 0.0)) throw FpeError("evolve: t_final must be > 0");
  if (!(dt > 0.0)) throw FpeError("evolve: dt must be > 0");

  const detail::FluxOperator op(model, w0.spec(), alpha);
  const long steps = static_cast<long>(std::ceil(t_final / dt - 1e-12));
  const double h = t_final / static_cast<double>(steps);

  EvolveResult result;
  result.density = w0;
  result.steps = steps;
  result.dt = h;

  std::vector<double>& w = result.density.values;
  std::vector<double> j;
  const int n = op.n;
  const double scale = h / op.dx;

  const double mass0 = result.density.mass();
  double mass_prev = mass0;

  auto record = [&](double t) {
    result.track.push_back({t, result.density.mean(), density_mode(result.density).value});
  };
  std::vector<long> track_steps;
  if (opts.track_samples >= 2) {
    for (int k = 0; k < opts.track_samples; ++k)
      track_steps.push_back(static_cast<long>(std::llround(
          static_cast<double>(k) * static_cast<double>(steps) /
          static_cast<double>(opts.track_samples - 1))));
    record(0.0);
  }
  std::size_t next_track = track_steps.empty() ? 0 : 1;

  for (long step = 0; step < steps; ++step) {
    op.currents(w, j);
    for (int i = 0; i < n; ++i)
      w[static_cast<std::size_t>(i)] -=
          scale * (j[static_cast<std::size_t>(i) + 1] - j[static_cast<std::size_t>(i)]);

    double mass = 0.0, min_w = 0.0;
    for (int i = 0; i < n; ++i) {
      mass += w[static_cast<std::size_t>(i)];
      min_w = std::min(min_w, w[static_cast<std::size_t>(i)]);
    }
    mass *= op.dx;
    result.max_mass_drift = std::max(result.max_mass_drift, std::abs(mass - mass_prev));
    mass_prev = mass;
    if (min_w < -1e-12)
      throw StabilityError("negative density detected at step " + std::to_string(step + 1),
                           op.stable_dt());

    while (next_track < track_steps.size() && track_steps[next_track] == step + 1) {
      record(static_cast<double>(step + 1) * h);
      ++next_track;
    }
  }

  result.density.normalize();
  const double peak = result.density.max_value();
  if (w.front() > 1e-10 * peak || w.back() > 1e-10 * peak)
    result.boundary_mass_warning = true;
  return result;
}

// Zero-current steady density: ln w accumulated by the trapezoid rule of
// 2 a_eff / D between cell centers, then normalized. This is the exact
// kernel of the discrete flux operator above.
inline DensityGrid steady_1d(const SdeModel& model, const GridSpec& spec, double alpha) {
  const detail::FluxOperator op(model, spec, alpha);
  DensityGrid w(spec);
  const int n = spec.n_cells;
  std::vector<double> lnw(static_cast<std::size_t>(n), 0.0);
  for (int i = 1; i < n; ++i)
    lnw[static_cast<std::size_t>(i)] =
        lnw[static_cast<std::size_t>(i - 1)] +
        0.5 * op.dx * (op.g[static_cast<std::size_t>(i - 1)] + op.g[static_cast<std::size_t>(i)]);

  int argmax = 0;
  for (int i = 1; i < n; ++i)
    if (lnw[static_cast<std::size_t>(i)] > lnw[static_cast<std::size_t>(argmax)]) argmax = i;
  if (argmax == 0 || argmax == n - 1)
    throw NonNormalizableError(
        "steady_1d: density exponent grows toward the boundary (model '" + model.label() +
        "'); the density is not normalizable on this grid");

  const double top = lnw[static_cast<std::size_t>(argmax)];
  for (int i = 0; i < n; ++i)
    w.values[static_cast<std::size_t>(i)] = std::exp(lnw[static_cast<std::size_t>(i)] - top);
  w.normalize();
  return w;
}

struct PropagatorStats {
  double mean = 0.0;
  double mode = 0.0;
};

// Short-time propagator statistics: evolve a near-delta peak (Gaussian of
// width 3 dx) at x0 for dt_small, then report the density mean and the
// parabola-refined mode.
inline PropagatorStats propagator_stats(const SdeModel& model, const GridSpec& spec,
                                        double x0, double dt_small, double alpha) {
  spec.validate();
  if (!(dt_small > 0.0)) throw FpeError("propagator_stats: dt_small must be > 0");
  const double dx = spec.dx();
  if (x0 < spec.x_min + 5.0 * dx || x0 > spec.x_max - 5.0 * dx)
    throw FpeError("propagator_stats: x0 too close to the grid boundary");

  const DensityGrid w0 = gaussian_density(spec, x0, 3.0 * dx);
  const double dt = std::min(stable_dt(model, spec, alpha), dt_small / 20.0);
  const EvolveResult r = evolve(model, w0, dt_small, dt, alpha);

  const double peak = r.density.max_value();
  int above_half = 0;
  for (double v : r.density.values)
    if (v >= 0.5 * peak) ++above_half;
  if (above_half < 3)
    throw UnderResolvedError("propagator peak spans fewer than 3 cells; refine the grid");

  return {r.density.mean(), density_mode(r.density).value};
}

}  // namespace markovsde
