#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "markovsde/fpe.hpp"
#include "markovsde/quasipotential.hpp"
#include "markovsde/stats.hpp"

using namespace markovsde;

namespace {

VectorXd vec1(double a) {
  VectorXd v(1);
  v << a;
  return v;
}

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

MatrixXd mat2(double a, double b, double c, double d) {
  MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

// gamma = 1, T = 1, U = x^2/2, D_vv = 2 gamma T
SdeModel klein_kramers(double gamma = 1.0, double temperature = 1.0) {
  return SdeModel(2, 1, {"x2", "-(gamma*x2) - x1"}, {{"0"}, {"sqrt(2*gamma*T)"}},
                  {{"gamma", gamma}, {"T", temperature}}, "klein-kramers");
}

SdeModel rotational(double omega = 1.0) {
  return SdeModel(2, 2, {"-x1 + omega*x2", "-omega*x1 - x2"},
                  {{"1", "0"}, {"0", "1"}}, {{"omega", omega}}, "linear2d");
}

const MatrixXd kJ = mat2(0.0, 1.0, -1.0, 0.0);

}  // namespace

TEST_CASE("fixed point search") {
  const SdeModel decay(1, 1, {"-x1"}, {{"1"}}, {});
  const auto fp = find_fixed_point(decay, vec1(3.0));
  CHECK(std::abs(fp.x_star(0)) <= 1e-10);
  CHECK(fp.m_jacobian(0, 0) == Catch::Approx(-1.0).margin(1e-9));
  CHECK(fp.rho == Catch::Approx(1.0).margin(1e-9));
  CHECK(fp.hurwitz);
  CHECK(fp.rho == Catch::Approx(-fp.m_jacobian.trace()).margin(1e-12));

  const auto kk = find_fixed_point(klein_kramers(), vec2(0.5, 0.5));
  CHECK(kk.x_star.lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(kk.m_jacobian.isApprox(mat2(0.0, 1.0, -1.0, -1.0), 1e-8));
  CHECK(kk.rho == Catch::Approx(1.0).margin(1e-9));

  // a saddle converges but is flagged as non-attracting
  const SdeModel saddle(2, 2, {"x2", "x1"}, {{"1", "0"}, {"0", "1"}}, {});
  const auto sp = find_fixed_point(saddle, vec2(0.1, -0.2));
  CHECK(sp.x_star.lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK_FALSE(sp.hurwitz);
  double max_real = -1e300;
  for (int i = 0; i < sp.eigenvalues.size(); ++i)
    max_real = std::max(max_real, sp.eigenvalues(i).real());
  CHECK(max_real == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("closed-form circulation matrix") {
  // symmetric M with isotropic D has no circulation
  const MatrixXd m_sym = mat2(-2.0, 0.3, 0.3, -1.0);
  CHECK(circulation_closed_form(m_sym, 3.0 * MatrixXd::Identity(2, 2), 3.0).norm() <=
        1e-15);

  // M = [[0,1],[-U'',-gamma]], D = diag(0,d) -> (d / 4 gamma) J
  const double gamma = 1.0, d_vv = 2.0;
  const MatrixXd a = circulation_closed_form(mat2(0.0, 1.0, -1.0, -gamma),
                                             mat2(0.0, 0.0, 0.0, d_vv), gamma);
  CHECK(a.isApprox(d_vv / (4.0 * gamma) * kJ, 1e-12));

  const double omega = 1.0;
  const MatrixXd ar = circulation_closed_form(mat2(-1.0, omega, -omega, -1.0),
                                              MatrixXd::Identity(2, 2), 2.0);
  CHECK(ar.isApprox(omega / 4.0 * kJ, 1e-12));

  CHECK_THROWS_AS(circulation_closed_form(m_sym, MatrixXd::Identity(2, 2), 0.0),
                  AnalysisError);
}

TEST_CASE("Lyapunov solve") {
  const MatrixXd sigma1 = lyapunov_solve(-MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  CHECK(sigma1.isApprox(0.5 * MatrixXd::Identity(2, 2), 1e-12));

  const MatrixXd sigma2 =
      lyapunov_solve(mat2(-1.0, 1.0, -1.0, -1.0), MatrixXd::Identity(2, 2));
  CHECK(sigma2.isApprox(0.5 * MatrixXd::Identity(2, 2), 1e-12));

  const double gamma = 0.7, temperature = 1.3;
  const MatrixXd sigma3 = lyapunov_solve(mat2(0.0, 1.0, -1.0, -gamma),
                                         mat2(0.0, 0.0, 0.0, 2.0 * gamma * temperature));
  CHECK(sigma3.isApprox(temperature * MatrixXd::Identity(2, 2), 1e-12));

  CHECK_THROWS_AS(lyapunov_solve(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)),
                  AnalysisError);
}

TEST_CASE("Lyapunov solutions over random stable systems") {
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 2);
    MatrixXd g(n, n), m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        g(i, j) = u(rng);
        m(i, j) = u(rng);
      }
    m -= (2.0 + n) * MatrixXd::Identity(n, n);  // push eigenvalues left
    const MatrixXd d = g * g.transpose() + 0.1 * MatrixXd::Identity(n, n);

    const MatrixXd sigma = lyapunov_solve(m, d);
    REQUIRE((m * sigma + sigma * m.transpose() + d).norm() <= 1e-10 * d.norm());

    // the inverse covariance makes the quadratic Hamilton-Jacobi form vanish
    const MatrixXd s = sigma.inverse();
    const MatrixXd hj = m.transpose() * s + s * m + s * d * s;
    REQUIRE(hj.norm() <= 1e-9 * s.norm());

    // and the balance-route A is antisymmetric
    const MatrixXd a = circulation_from_curvature(m, d, 0.5 * (s + s.transpose()));
    REQUIRE((a + a.transpose()).norm() <= 1e-8 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("curvature from circulation") {
  const MatrixXd s1 = curvature_from_circulation(-MatrixXd::Identity(2, 2),
                                                 MatrixXd::Identity(2, 2),
                                                 MatrixXd::Zero(2, 2));
  CHECK(s1.isApprox(2.0 * MatrixXd::Identity(2, 2), 1e-12));

  // one-dimensional matrix algebra: S = 2k/d
  MatrixXd m1(1, 1), d1(1, 1), a1(1, 1);
  m1 << -3.0;
  d1 << 2.0;
  a1 << 0.0;
  CHECK(curvature_from_circulation(m1, d1, a1)(0, 0) == Catch::Approx(3.0));

  // rotational system: explicit route is asymmetric, covariance route is 2I
  const double omega = 1.0;
  const MatrixXd m = mat2(-1.0, omega, -omega, -1.0);
  const MatrixXd a_explicit = circulation_closed_form(m, MatrixXd::Identity(2, 2), 2.0);
  const MatrixXd s_explicit =
      curvature_from_circulation(m, MatrixXd::Identity(2, 2), a_explicit);
  const MatrixXd s_cov = lyapunov_solve(m, MatrixXd::Identity(2, 2)).inverse();
  CHECK(s_cov.isApprox(2.0 * MatrixXd::Identity(2, 2), 1e-10));
  CHECK((s_explicit - s_explicit.transpose()).norm() > 0.1);  // measured, not assumed
  CHECK((s_explicit - s_cov).norm() > 0.1);                   // the routes disagree here
}

TEST_CASE("circulation from curvature") {
  const double gamma = 0.7, temperature = 2.0;
  const MatrixXd a = circulation_from_curvature(
      mat2(0.0, 1.0, -1.0, -gamma), mat2(0.0, 0.0, 0.0, 2.0 * gamma * temperature),
      (1.0 / temperature) * MatrixXd::Identity(2, 2));
  CHECK(a.isApprox(temperature * kJ, 1e-10));

  CHECK(circulation_from_curvature(-MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2),
                                   2.0 * MatrixXd::Identity(2, 2))
            .norm() <= 1e-14);

  const double omega = 1.0;
  const MatrixXd ar = circulation_from_curvature(mat2(-1.0, omega, -omega, -1.0),
                                                 MatrixXd::Identity(2, 2),
                                                 2.0 * MatrixXd::Identity(2, 2));
  CHECK(ar.isApprox(0.5 * omega * kJ, 1e-12));
  CHECK((ar + ar.transpose()).norm() <= 1e-14);

  CHECK_THROWS_AS(circulation_from_curvature(mat2(-1.0, 0.0, 0.0, -1.0),
                                             MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 2)),
                  AnalysisError);
}

TEST_CASE("divergence condition on the composite field") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const SdeModel rot = rotational();
  const MatrixXd a_rot = 0.5 * kJ;  // omega/2 J
  for (int rep = 0; rep < 10; ++rep) {
    const double r = balance_condition_residual(rot, a_rot, vec2(u(rng), u(rng)));
    REQUIRE(r <= 1e-6);
  }

  // friction may vary with the state; the condition still holds with A = T J
  const SdeModel kk_var(2, 1,
                        {"x2", "-((1+0.1*tanh(x1*x2))*x2) - x1"},
                        {{"0"}, {"sqrt(2*(1+0.1*tanh(x1*x2))*T)"}}, {{"T", 1.0}},
                        "klein-kramers-variable");
  const MatrixXd a_kk = 1.0 * kJ;
  for (int rep = 0; rep < 10; ++rep) {
    const double r = balance_condition_residual(kk_var, a_kk, vec2(u(rng), u(rng)));
    REQUIRE(r <= 1e-6);
  }

  const SdeModel one_d(1, 1, {"-x1"}, {{"1"}}, {});
  MatrixXd a1(1, 1);
  a1 << 0.0;
  CHECK_THROWS_AS(balance_condition_residual(one_d, a1, vec1(0.3)), AnalysisError);
}

TEST_CASE("conservative drift") {
  const SdeModel rot = rotational();
  const MatrixXd s = 2.0 * MatrixXd::Identity(2, 2);
  const VectorXd x_star = VectorXd::Zero(2);

  CHECK(conservative_drift(rot, s, x_star, x_star).norm() <= 1e-12);

  const double eps = 0.3;
  const VectorXd ac = conservative_drift(rot, s, x_star, vec2(eps, 0.0));
  CHECK(ac(0) == Catch::Approx(0.0).margin(1e-10));
  CHECK(ac(1) == Catch::Approx(-eps).margin(1e-10));
  // a_c = A grad(Phi) with the balance-route A
  const MatrixXd a = circulation_from_curvature(mat2(-1.0, 1.0, -1.0, -1.0),
                                                MatrixXd::Identity(2, 2), s);
  const VectorXd grad = s * vec2(eps, 0.0);
  CHECK((ac - a * grad).norm() <= 1e-10);

  // 1-D zero-current: a + D S x / 2 = 0 everywhere
  const SdeModel ou(1, 1, {"-x1"}, {{"sqrt(2)"}}, {});
  MatrixXd s1(1, 1);
  s1 << 1.0;
  for (double x : {-1.5, 0.2, 2.0})
    CHECK(conservative_drift(ou, s1, vec1(0.0), vec1(x)).norm() <= 1e-12);
}

TEST_CASE("Freidlin residual vanishes for linear systems and scales cubically") {
  const SdeModel rot = rotational();
  const MatrixXd sigma = lyapunov_solve(mat2(-1.0, 1.0, -1.0, -1.0), MatrixXd::Identity(2, 2));
  const MatrixXd s = sigma.inverse();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    const double r = freidlin_residual(rot, s, VectorXd::Zero(2), vec2(u(rng), u(rng)));
    REQUIRE(std::abs(r) <= 1e-10);
  }

  CHECK(freidlin_residual(rot, s, VectorXd::Zero(2), VectorXd::Zero(2)) == 0.0);

  // cubic perturbation: residual order >= 2.7 under probe halving
  const SdeModel cubic(1, 1, {"-x1 - x1^3"}, {{"sqrt(2)"}}, {});
  MatrixXd s1(1, 1);
  s1 << 1.0;
  double prev = 0.0;
  std::vector<double> orders;
  for (int k = 0; k < 4; ++k) {
    const double delta = 0.4 / (1 << k);
    const double r = std::abs(freidlin_residual(cubic, s1, vec1(0.0), vec1(delta)));
    if (k > 0) orders.push_back(std::log2(prev / r));
    prev = r;
  }
  for (double order : orders) CHECK(order >= 2.7);
}

TEST_CASE("tabulated 1-D quasipotential") {
  const SdeModel ou(1, 1, {"-x1"}, {{"sqrt(2)"}}, {});
  const auto table = quasipotential_1d(ou, -3.0, 3.0, 601);
  CHECK(std::abs(table.x_star) <= 1e-10);
  for (int j = 0; j < 601; j += 60) {
    const double x = table.x[static_cast<std::size_t>(j)];
    CHECK(table.phi[static_cast<std::size_t>(j)] ==
          Catch::Approx(0.5 * x * x).margin(1e-5));
  }

  // repeller: the quasipotential has a maximum at the fixed point
  const SdeModel rep(1, 1, {"x1"}, {{"sqrt(2)"}}, {});
  const auto rt = quasipotential_1d(rep, -2.0, 2.0, 401);
  CHECK(rt.phi[0] < 0.0);
  CHECK(rt.phi.back() < 0.0);
  CHECK(std::abs(rt.phi[200]) <= 1e-9);

  const SdeModel vanishing(1, 1, {"-x1"}, {{"x1"}}, {});
  CHECK_THROWS_AS(quasipotential_1d(vanishing, -1.0, 1.0, 101), AnalysisError);
}

TEST_CASE("exp(-Phi) reproduces the flux-form steady density") {
  const SdeModel model(1, 1, {"-x1"}, {{"sigma*(2+tanh(x1))"}}, {{"sigma", 1.0}},
                       "tanh1d");
  const GridSpec spec{-6.0, 14.0, 400};
  const DensityGrid steady = steady_1d(model, spec, 1.0);

  // same trapezoid nodes: the table runs over the cell centers
  const auto table =
      quasipotential_1d(model, spec.center(0), spec.center(spec.n_cells - 1), spec.n_cells);
  double min_phi = 1e300;
  double argmin = 0.0;
  DensityGrid from_phi(spec);
  for (int i = 0; i < spec.n_cells; ++i) {
    from_phi.values[static_cast<std::size_t>(i)] =
        std::exp(-table.phi[static_cast<std::size_t>(i)]);
    if (table.phi[static_cast<std::size_t>(i)] < min_phi) {
      min_phi = table.phi[static_cast<std::size_t>(i)];
      argmin = table.x[static_cast<std::size_t>(i)];
    }
  }
  from_phi.normalize();
  CHECK(std::abs(argmin) <= spec.dx());
  CHECK(l1_distance(from_phi, steady) <= 1e-6);
}

TEST_CASE("full steady-state analysis: isotropic contraction") {
  const SdeModel model(2, 2, {"-x1", "-x2"}, {{"1", "0"}, {"0", "1"}}, {}, "isotropic");
  const auto report = analyze_steady_state(model, vec2(0.4, -0.7));
  CHECK_FALSE(report.partial);
  CHECK(report.a_explicit.norm() <= 1e-9);
  CHECK(report.a_balance.norm() <= 1e-9);
  CHECK(report.s_explicit.isApprox(2.0 * MatrixXd::Identity(2, 2), 1e-9));
  CHECK(report.s_covariance.isApprox(2.0 * MatrixXd::Identity(2, 2), 1e-9));
  for (const auto& [key, value] : report.residuals) {
    INFO(key);
    CHECK(value <= 1e-10);
  }
}

TEST_CASE("full steady-state analysis: Klein-Kramers") {
  const auto report = analyze_steady_state(klein_kramers(), vec2(0.5, 0.5));
  CHECK_FALSE(report.partial);
  CHECK(report.a_balance.isApprox(kJ, 1e-8));
  CHECK(report.s_covariance.isApprox(MatrixXd::Identity(2, 2), 1e-8));
  CHECK(report.sigma.isApprox(MatrixXd::Identity(2, 2), 1e-8));
  // the two routes disagree here by design; the report must carry both
  CHECK(report.a_explicit.isApprox(0.5 * kJ, 1e-8));
  CHECK(report.residuals.at("a_explicit_vs_balance") > 0.1);
  CHECK(report.residuals.at("balance_condition") <= 1e-8);
  CHECK(report.residuals.at("freidlin_quadratic") <= 1e-9);
}

TEST_CASE("full steady-state analysis: rotational system") {
  const auto report = analyze_steady_state(rotational(), vec2(0.3, 0.3));
  CHECK(report.s_covariance.isApprox(2.0 * MatrixXd::Identity(2, 2), 1e-8));
  CHECK(report.a_balance.isApprox(0.5 * kJ, 1e-8));
  CHECK(report.a_explicit.isApprox(0.25 * kJ, 1e-8));
  CHECK(report.residuals.at("s_explicit_vs_covariance") > 0.01);
  CHECK(report.residuals.at("a_balance_antisymmetry") <= 1e-8);
  CHECK(report.residuals.at("freidlin_quadratic") <= 1e-10);
  CHECK(report.residuals.at("balance_condition") <= 1e-8);
}

TEST_CASE("non-attracting fixed points give a partial report") {
  const SdeModel model(2, 2, {"x1", "-2*x2"}, {{"1", "0"}, {"0", "1"}}, {}, "unstable");
  const auto report = analyze_steady_state(model, vec2(0.2, 0.4));
  CHECK(report.partial);
  CHECK(report.a_explicit.size() == 4);
  CHECK(report.sigma.size() == 0);
  CHECK_FALSE(report.notes.empty());
}

TEST_CASE("1-D models are rejected by the full analysis") {
  const SdeModel ou(1, 1, {"-x1"}, {{"1"}}, {});
  CHECK_THROWS_AS(analyze_steady_state(ou, vec1(1.0)), AnalysisError);
}

TEST_CASE("report serialization is a flat key-value block") {
  const auto report = analyze_steady_state(klein_kramers(), vec2(0.5, 0.5));
  std::ostringstream os;
  write_report(os, report);
  const std::string text = os.str();
  CHECK(text.find("x_star = [") != std::string::npos);
  CHECK(text.find("A_explicit = [[") != std::string::npos);
  CHECK(text.find("A_balance = [[") != std::string::npos);
  CHECK(text.find("residual_a_explicit_vs_balance = ") != std::string::npos);
  CHECK(text.find("hurwitz = true") != std::string::npos);

  std::ostringstream csv;
  write_matrix_csv(csv, kJ);
  CHECK(csv.str() == "0,1\n-1,0\n");
}
