#pragma once

// Steady-state analysis near attractors. For a fixed point x* with drift
// Jacobian M, diffusion D and dissipation rho = -tr M, the quadratic
// quasipotential Phi = (x-x*)^T S (x-x*) / 2 and the antisymmetric
// circulation matrix A of the decomposition a = (-D/2 + A) grad Phi are
// computed along two independent routes:
//   explicit:   A = [M D - (M D)^T] / (4 rho),  S = (-D/2 + A)^{-1} M
//   covariance: Sigma solves M Sigma + Sigma M^T + D = 0 (stationary
//               covariance of the linearized dynamics), S = Sigma^{-1},
//               A = M S^{-1} + D/2
// Both results and their disagreement are first-class outputs; the report
// never silently prefers one.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "markovsde/model.hpp"

namespace markovsde {

class AnalysisError : public std::runtime_error {
 public:
  explicit AnalysisError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FixedPointReport {
  VectorXd x_star;
  MatrixXd m_jacobian;
  MatrixXd d_star;
  double rho = 0.0;
  Eigen::VectorXcd eigenvalues;
  bool hurwitz = false;
  int iterations = 0;
};

// Damped Newton iteration on a(x) = 0 with finite-difference Jacobian.
inline FixedPointReport find_fixed_point(const SdeModel& model, VectorXd x_guess) {
  constexpr double kTol = 1e-10;
  constexpr int kMaxIter = 100;
  constexpr int kMaxHalvings = 20;

  VectorXd x = std::move(x_guess);
  VectorXd a = model.drift(x);
  int iter = 0;
  for (; iter < kMaxIter && a.lpNorm<Eigen::Infinity>() > kTol; ++iter) {
    const MatrixXd jac = model.jacobian_drift(x);
    Eigen::FullPivLU<MatrixXd> lu(jac);
    if (!lu.isInvertible())
      throw AnalysisError("find_fixed_point: singular Jacobian at iteration " +
                          std::to_string(iter));
    const VectorXd step = lu.solve(-a);
    double lambda = 1.0;
    const double a_norm = a.lpNorm<Eigen::Infinity>();
    VectorXd x_next = x + step;
    VectorXd a_next = model.drift(x_next);
    for (int h = 0; h < kMaxHalvings && a_next.lpNorm<Eigen::Infinity>() >= a_norm; ++h) {
      lambda *= 0.5;
      x_next = x + lambda * step;
      a_next = model.drift(x_next);
    }
    x = std::move(x_next);
    a = std::move(a_next);
  }
  if (a.lpNorm<Eigen::Infinity>() > kTol)
    throw AnalysisError("find_fixed_point: no convergence in " + std::to_string(kMaxIter) +
                        " iterations");

  FixedPointReport report;
  report.x_star = x;
  report.m_jacobian = model.jacobian_drift(x);
  report.d_star = model.diffusion(x);
  report.rho = -report.m_jacobian.trace();
  report.eigenvalues = Eigen::EigenSolver<MatrixXd>(report.m_jacobian).eigenvalues();
  report.hurwitz = true;
  for (int i = 0; i < report.eigenvalues.size(); ++i)
    if (report.eigenvalues(i).real() >= 0.0) report.hurwitz = false;
  report.iterations = iter;
  return report;
}

// A = (M D)_a / (2 rho), the antisymmetric part of M D over twice the
// dissipation. Antisymmetric by construction.
inline MatrixXd circulation_closed_form(const MatrixXd& m, const MatrixXd& d, double rho) {
  if (rho == 0.0)
    throw AnalysisError("circulation_closed_form: undefined for vanishing dissipation");
  const MatrixXd md = m * d;
  return (md - md.transpose()) / (4.0 * rho);
}

// Stationary covariance of dX = M X dt + noise with diffusion D:
// M Sigma + Sigma M^T + D = 0, solved as an n^2 x n^2 linear system.
inline MatrixXd lyapunov_solve(const MatrixXd& m, const MatrixXd& d) {
  const int n = static_cast<int>(m.rows());
  if (m.cols() != n || d.rows() != n || d.cols() != n)
    throw AnalysisError("lyapunov_solve: dimension mismatch");

  const Eigen::VectorXcd eigs = Eigen::EigenSolver<MatrixXd>(m).eigenvalues();
  for (int i = 0; i < n; ++i)
    if (eigs(i).real() >= 0.0)
      throw AnalysisError("lyapunov_solve: M is not Hurwitz (eigenvalue with real part " +
                          std::to_string(eigs(i).real()) + ")");

  // column-major vec: row (i + n j) carries the (i, j) entry
  const int nn = n * n;
  MatrixXd k = MatrixXd::Zero(nn, nn);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int row = i + n * j;
      for (int l = 0; l < n; ++l) {
        k(row, l + n * j) += m(i, l);  // (M Sigma)_{ij}
        k(row, i + n * l) += m(j, l);  // (Sigma M^T)_{ij}
      }
    }
  VectorXd rhs(nn);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rhs(i + n * j) = -d(i, j);

  Eigen::FullPivLU<MatrixXd> lu(k);
  if (!lu.isInvertible()) throw AnalysisError("lyapunov_solve: singular system");
  const VectorXd z = lu.solve(rhs);

  MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sigma(i, j) = z(i + n * j);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  const double residual = (m * sigma + sigma * m.transpose() + d).norm();
  if (residual > 1e-10 * std::max(1.0, d.norm()))
    throw AnalysisError("lyapunov_solve: residual " + std::to_string(residual) +
                        " exceeds tolerance");
  return sigma;
}

// S = (-D/2 + A)^{-1} M. Symmetry of the result is not assumed; callers
// measure and report it.
inline MatrixXd curvature_from_circulation(const MatrixXd& m, const MatrixXd& d,
                                           const MatrixXd& a) {
  const MatrixXd w = -0.5 * d + a;
  Eigen::FullPivLU<MatrixXd> lu(w);
  if (!lu.isInvertible())
    throw AnalysisError("curvature_from_circulation: -D/2 + A is singular");
  return lu.solve(m);
}

// A = M S^{-1} + D/2 from the linearized balance M = (-D/2 + A) S.
inline MatrixXd circulation_from_curvature(const MatrixXd& m, const MatrixXd& d,
                                           const MatrixXd& s) {
  Eigen::JacobiSVD<MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw AnalysisError("circulation_from_curvature: S is singular or ill-conditioned");
  Eigen::FullPivLU<MatrixXd> lu(s);
  return m * lu.inverse() + 0.5 * d;
}

// |div(D A^{-1} a) - 2 rho| at x, divergence by central differences on the
// composite field. Undefined in one dimension (antisymmetric 1x1 is zero).
inline double balance_condition_residual(const SdeModel& model, const MatrixXd& a_matrix,
                                         const VectorXd& x) {
  const int n = model.dim();
  if (n < 2)
    throw AnalysisError("balance_condition_residual: not applicable in one dimension");
  if (a_matrix.rows() != n || a_matrix.cols() != n)
    throw AnalysisError("balance_condition_residual: A has the wrong shape");
  Eigen::FullPivLU<MatrixXd> lu(a_matrix);
  if (!lu.isInvertible())
    throw AnalysisError("balance_condition_residual: A is singular");
  const MatrixXd a_inv = lu.inverse();

  auto field = [&](const VectorXd& y) -> VectorXd {
    return model.diffusion(y) * (a_inv * model.drift(y));
  };
  double divergence = 0.0;
  VectorXd xt = x;
  for (int k = 0; k < n; ++k) {
    const double h = fd_step(x(k));
    xt(k) = x(k) + h;
    const double fp = field(xt)(k);
    xt(k) = x(k) - h;
    const double fm = field(xt)(k);
    xt(k) = x(k);
    divergence += (fp - fm) / (2.0 * h);
  }
  return std::abs(divergence - 2.0 * model.dissipation(x));
}

// a_c = a + D grad(Phi)/2 with the quadratic Phi; the velocity of the
// steady probability current near x*.
inline VectorXd conservative_drift(const SdeModel& model, const MatrixXd& s,
                                   const VectorXd& x_star, const VectorXd& x) {
  const VectorXd grad = s * (x - x_star);
  return model.drift(x) + 0.5 * model.diffusion(x) * grad;
}

// (a + D grad(Phi)/2) . grad(Phi); vanishes identically for the exact
// quasipotential.
inline double freidlin_residual(const SdeModel& model, const MatrixXd& s,
                                const VectorXd& x_star, const VectorXd& x) {
  const VectorXd grad = s * (x - x_star);
  return (model.drift(x) + 0.5 * model.diffusion(x) * grad).dot(grad);
}

struct QuasipotentialTable {
  std::vector<double> x;
  std::vector<double> phi;
  double x_star = 0.0;
};

// Phi(x) = -int_{x*}^{x} 2 a / D by the trapezoid rule on n_points uniform
// nodes, anchored Phi(x*) = 0.
inline QuasipotentialTable quasipotential_1d(const SdeModel& model, double x_lo,
                                             double x_hi, int n_points) {
  if (model.dim() != 1)
    throw AnalysisError("quasipotential_1d: 1-D models only");
  if (!(x_lo < x_hi) || n_points < 3)
    throw AnalysisError("quasipotential_1d: bad range or point count");

  QuasipotentialTable table;
  table.x.resize(static_cast<std::size_t>(n_points));
  table.phi.resize(static_cast<std::size_t>(n_points));
  const double h = (x_hi - x_lo) / (n_points - 1);

  std::vector<double> integrand(static_cast<std::size_t>(n_points));
  VectorXd y(1);
  for (int j = 0; j < n_points; ++j) {
    const double xj = x_lo + j * h;
    table.x[static_cast<std::size_t>(j)] = xj;
    y(0) = xj;
    const double d = model.diffusion(y)(0, 0);
    if (!(d > 0.0))
      throw AnalysisError("quasipotential_1d: diffusion vanishes at x = " + std::to_string(xj));
    integrand[static_cast<std::size_t>(j)] = 2.0 * model.drift(y)(0) / d;
  }
  double acc = 0.0;
  table.phi[0] = 0.0;
  for (int j = 1; j < n_points; ++j) {
    acc += 0.5 * h * (integrand[static_cast<std::size_t>(j - 1)] +
                      integrand[static_cast<std::size_t>(j)]);
    table.phi[static_cast<std::size_t>(j)] = -acc;
  }

  VectorXd guess(1);
  guess(0) = 0.5 * (x_lo + x_hi);
  const FixedPointReport fp = find_fixed_point(model, guess);
  const double xs = fp.x_star(0);
  if (xs < x_lo || xs > x_hi)
    throw AnalysisError("quasipotential_1d: fixed point lies outside the range");
  table.x_star = xs;

  // anchor by linear interpolation of Phi at x*
  const int j0 = std::min(n_points - 2, std::max(0, static_cast<int>((xs - x_lo) / h)));
  const double frac = (xs - table.x[static_cast<std::size_t>(j0)]) / h;
  const double phi_star = table.phi[static_cast<std::size_t>(j0)] * (1.0 - frac) +
                          table.phi[static_cast<std::size_t>(j0 + 1)] * frac;
  for (auto& v : table.phi) v -= phi_star;
  return table;
}

struct QuasipotentialReport {
  std::string model_label;
  FixedPointReport fixed_point;
  MatrixXd a_explicit;    // closed form from (M D)_a / 2 rho
  MatrixXd a_balance;     // from the stationary covariance route
  MatrixXd s_explicit;    // (-D/2 + A_explicit)^{-1} M
  MatrixXd s_covariance;  // Sigma^{-1}
  MatrixXd sigma;         // stationary covariance
  std::map<std::string, double> residuals;
  bool partial = false;  // non-Hurwitz fixed point: explicit A only
  std::vector<std::string> notes;
};

namespace detail {

inline double relative_norm(const MatrixXd& num, const MatrixXd& den) {
  return num.norm() / std::max(1.0, den.norm());
}

}  // namespace detail

// Full steady-state analysis near the fixed point reached from x_guess.
inline QuasipotentialReport analyze_steady_state(const SdeModel& model,
                                                 const VectorXd& x_guess) {
  if (model.dim() < 2)
    throw AnalysisError(
        "analyze_steady_state: needs n >= 2; use quasipotential_1d for 1-D models");

  QuasipotentialReport report;
  report.model_label = model.label();
  report.fixed_point = find_fixed_point(model, x_guess);
  const MatrixXd& m = report.fixed_point.m_jacobian;
  const MatrixXd& d = report.fixed_point.d_star;
  const double rho = report.fixed_point.rho;

  report.a_explicit = circulation_closed_form(m, d, rho);

  if (!report.fixed_point.hurwitz) {
    report.partial = true;
    report.notes.push_back(
        "fixed point is not an attractor; covariance-route results are unavailable");
    return report;
  }

  report.sigma = lyapunov_solve(m, d);
  report.residuals["lyapunov"] =
      (m * report.sigma + report.sigma * m.transpose() + d).norm() / std::max(1.0, d.norm());

  Eigen::JacobiSVD<MatrixXd> svd(report.sigma, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw AnalysisError("analyze_steady_state: stationary covariance is singular");
  report.s_covariance = Eigen::FullPivLU<MatrixXd>(report.sigma).inverse();
  report.s_covariance = (0.5 * (report.s_covariance + report.s_covariance.transpose())).eval();

  report.a_balance = circulation_from_curvature(m, d, report.s_covariance);
  report.s_explicit = curvature_from_circulation(m, d, report.a_explicit);

  report.residuals["s_explicit_symmetry"] =
      (report.s_explicit - report.s_explicit.transpose()).norm() / report.s_explicit.norm();
  report.residuals["a_balance_antisymmetry"] =
      detail::relative_norm(report.a_balance + report.a_balance.transpose(), report.a_balance);
  report.residuals["a_explicit_vs_balance"] =
      detail::relative_norm(report.a_explicit - report.a_balance, report.a_balance);
  report.residuals["s_explicit_vs_covariance"] =
      detail::relative_norm(report.s_explicit - report.s_covariance, report.s_covariance);

  // divergence condition at the fixed point: (M D)_a = rho A for the
  // balance-route A; a singular (near-zero) A means detailed balance, and
  // the condition degenerates to (M D)_a = 0
  const MatrixXd md = m * d;
  const MatrixXd md_a = 0.5 * (md - md.transpose());
  if (report.a_balance.norm() <= 1e-12 * std::max(1.0, md.norm())) {
    report.residuals["balance_condition"] = detail::relative_norm(md_a, md);
  } else {
    Eigen::FullPivLU<MatrixXd> lu(report.a_balance);
    if (lu.isInvertible()) {
      const double trace = (lu.inverse() * md_a).trace();
      report.residuals["balance_condition"] =
          std::abs(trace - 2.0 * rho) / std::max(1.0, 2.0 * std::abs(rho));
    } else {
      report.notes.push_back("balance condition skipped: A from balance is singular");
    }
  }

  double freidlin_worst = 0.0;
  for (int k = 0; k < model.dim(); ++k) {
    for (double sign : {-1.0, 1.0}) {
      VectorXd probe = report.fixed_point.x_star;
      probe(k) += sign * 0.1;
      freidlin_worst = std::max(
          freidlin_worst,
          std::abs(freidlin_residual(model, report.s_covariance, report.fixed_point.x_star,
                                     probe)));
    }
  }
  report.residuals["freidlin_quadratic"] = freidlin_worst;
  return report;
}

// ---- report serialization ----

namespace detail {

inline std::string matrix_to_string(const MatrixXd& m) {
  std::string out = "[";
  for (int i = 0; i < m.rows(); ++i) {
    out += "[";
    for (int j = 0; j < m.cols(); ++j) {
      out += expr::detail::format_double(m(i, j));
      if (j + 1 < m.cols()) out += ", ";
    }
    out += "]";
    if (i + 1 < m.rows()) out += ", ";
  }
  return out + "]";
}

inline std::string vector_to_string(const VectorXd& v) {
  std::string out = "[";
  for (int i = 0; i < v.size(); ++i) {
    out += expr::detail::format_double(v(i));
    if (i + 1 < v.size()) out += ", ";
  }
  return out + "]";
}

}  // namespace detail

inline void write_matrix_csv(std::ostream& os, const MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      os << expr::detail::format_double(m(i, j));
      if (j + 1 < m.cols()) os << ',';
    }
    os << '\n';
  }
}

// Flat key-value dump, one `name = value` per line; matrices as nested
// bracket lists.
inline void write_report(std::ostream& os, const QuasipotentialReport& report) {
  using expr::detail::format_double;
  os << "model = " << report.model_label << "\n";
  os << "x_star = " << detail::vector_to_string(report.fixed_point.x_star) << "\n";
  os << "rho = " << format_double(report.fixed_point.rho) << "\n";
  os << "hurwitz = " << (report.fixed_point.hurwitz ? "true" : "false") << "\n";
  os << "newton_iterations = " << report.fixed_point.iterations << "\n";
  std::string re = "[", im = "[";
  for (int i = 0; i < report.fixed_point.eigenvalues.size(); ++i) {
    re += format_double(report.fixed_point.eigenvalues(i).real());
    im += format_double(report.fixed_point.eigenvalues(i).imag());
    if (i + 1 < report.fixed_point.eigenvalues.size()) {
      re += ", ";
      im += ", ";
    }
  }
  os << "eigenvalues_real = " << re << "]\n";
  os << "eigenvalues_imag = " << im << "]\n";
  os << "M = " << detail::matrix_to_string(report.fixed_point.m_jacobian) << "\n";
  os << "D = " << detail::matrix_to_string(report.fixed_point.d_star) << "\n";
  os << "A_explicit = " << detail::matrix_to_string(report.a_explicit) << "\n";
  if (!report.partial) {
    os << "A_balance = " << detail::matrix_to_string(report.a_balance) << "\n";
    os << "S_explicit = " << detail::matrix_to_string(report.s_explicit) << "\n";
    os << "S_covariance = " << detail::matrix_to_string(report.s_covariance) << "\n";
    os << "sigma = " << detail::matrix_to_string(report.sigma) << "\n";
  }
  os << "partial = " << (report.partial ? "true" : "false") << "\n";
  for (const auto& [key, value] : report.residuals)
    os << "residual_" << key << " = " << format_double(value) << "\n";
  for (const auto& note : report.notes) os << "note = " << note << "\n";
}

}  // namespace markovsde
