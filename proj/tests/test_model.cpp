#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "markovsde/model.hpp"

using markovsde::MatrixXd;
using markovsde::ModelError;
using markovsde::SdeModel;
using markovsde::VectorXd;

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

SdeModel tanh1d() {
  return SdeModel(1, 1, {"-x1"}, {{"sigma*(2+tanh(x1))"}}, {{"sigma", 1.0}}, "tanh1d");
}

SdeModel klein_kramers() {
  // gamma = 1, T = 1, U = x1^2/2
  return SdeModel(2, 1, {"x2", "-(gamma*x2) - x1"},
                  {{"0"}, {"sqrt(2*gamma*T)"}}, {{"gamma", 1.0}, {"T", 1.0}},
                  "klein-kramers");
}

}  // namespace

TEST_CASE("model construction validates bindings") {
  CHECK_THROWS_AS(SdeModel(0, 1, {}, {}, {}), ModelError);
  CHECK_THROWS_AS(SdeModel(1, 1, {"-x2"}, {{"1"}}, {}), ModelError);     // x2 out of range
  CHECK_THROWS_AS(SdeModel(1, 1, {"-k*x1"}, {{"1"}}, {}), ModelError);   // unbound k
  CHECK_THROWS_AS(SdeModel(1, 1, {"-x1"}, {{"1", "2"}}, {}), ModelError);  // wrong shape
}

TEST_CASE("drift evaluation") {
  const SdeModel decay(1, 1, {"-x1"}, {{"1"}}, {});
  CHECK(decay.drift(vec1(2.0))(0) == -2.0);

  const SdeModel kk = klein_kramers();
  const VectorXd a = kk.drift(vec2(1.0, 1.0));
  CHECK(a(0) == 1.0);
  CHECK(a(1) == -2.0);

  const SdeModel rot(2, 2, {"x2", "-x1"}, {{"1", "0"}, {"0", "1"}}, {});
  CHECK(rot.drift(vec2(0.0, 0.0)).norm() == 0.0);
}

TEST_CASE("coupling evaluation") {
  const SdeModel ident(2, 2, {"0", "0"}, {{"1", "0"}, {"0", "1"}}, {});
  CHECK(ident.coupling(vec2(3.0, -4.0)).isApprox(MatrixXd::Identity(2, 2)));

  CHECK(tanh1d().coupling(vec1(0.0))(0, 0) == 2.0);

  const SdeModel linear(1, 1, {"0"}, {{"sigma*x1"}}, {{"sigma", 2.0}});
  CHECK(linear.coupling(vec1(3.0))(0, 0) == 6.0);
}

TEST_CASE("diffusion matrix D = B B^T") {
  const SdeModel diag(2, 2, {"0", "0"}, {{"1", "0"}, {"0", "2"}}, {});
  const MatrixXd d = diag.diffusion(vec2(0.0, 0.0));
  CHECK(d(0, 0) == 1.0);
  CHECK(d(1, 1) == 4.0);
  CHECK(d(0, 1) == 0.0);

  const SdeModel rank1(2, 1, {"0", "0"}, {{"1"}, {"1"}}, {});
  const MatrixXd d1 = rank1.diffusion(vec2(0.0, 0.0));
  CHECK(d1.isApprox(MatrixXd::Ones(2, 2)));
  CHECK(Eigen::FullPivLU<MatrixXd>(d1).rank() == 1);

  const SdeModel flat(1, 1, {"0"}, {{"2"}}, {});
  CHECK(flat.diffusion(vec1(7.0))(0, 0) == 4.0);
}

TEST_CASE("spurious drift, coupling form") {
  const SdeModel linear(1, 1, {"0"}, {{"sigma*x1"}}, {{"sigma", 2.0}});
  CHECK(linear.spurious_drift_coupling_form(vec1(3.0))(0) == Catch::Approx(12.0).margin(1e-8));

  const SdeModel constant(2, 2, {"0", "0"}, {{"1", "2"}, {"3", "4"}}, {});
  CHECK(constant.spurious_drift_coupling_form(vec2(1.0, -1.0)).norm() < 1e-12);

  CHECK(tanh1d().spurious_drift_coupling_form(vec1(0.0))(0) ==
        Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("spurious drift, divergence-of-D form") {
  const SdeModel linear(1, 1, {"0"}, {{"sigma*x1"}}, {{"sigma", 2.0}});
  CHECK(linear.spurious_drift(vec1(3.0))(0) == Catch::Approx(12.0).margin(1e-8));

  const SdeModel constant(2, 2, {"0", "0"}, {{"1", "2"}, {"3", "4"}}, {});
  CHECK(constant.spurious_drift(vec2(1.0, -1.0)).norm() < 1e-12);

  CHECK(tanh1d().spurious_drift(vec1(0.0))(0) == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("both spurious forms agree for diagonal coupling") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  // diagonal entries depending on every coordinate
  const SdeModel model(2, 2, {"-x1", "-x2"},
                       {{"1+0.5*tanh(x1+0.3*x2)", "0"}, {"0", "2+sin(x2)*cos(x1)"}},
                       {});
  for (int rep = 0; rep < 25; ++rep) {
    const VectorXd x = vec2(u(rng), u(rng));
    const VectorXd a = model.spurious_drift(x);
    const VectorXd b = model.spurious_drift_coupling_form(x);
    REQUIRE((a - b).norm() <= 1e-6 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("diffusion is symmetric and positive semi-definite") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const SdeModel model(3, 2,
                       {"-x1", "-x2", "-x3"},
                       {{"1+0.1*sin(x2)", "0.2*x3"},
                        {"0.5", "exp(0.1*x1)"},
                        {"0.3*tanh(x1)", "1"}},
                       {});
  for (int rep = 0; rep < 25; ++rep) {
    VectorXd x(3);
    x << u(rng), u(rng), u(rng);
    const MatrixXd d = model.diffusion(x);
    REQUIRE((d - d.transpose()).norm() <= 1e-14 * std::max(1.0, d.norm()));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(d);
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("drift Jacobian") {
  const SdeModel decay(1, 1, {"-x1"}, {{"1"}}, {});
  CHECK(decay.jacobian_drift(vec1(0.3))(0, 0) == Catch::Approx(-1.0).margin(1e-9));

  const SdeModel kk = klein_kramers();
  const MatrixXd m = kk.jacobian_drift(vec2(0.0, 0.0));
  CHECK(m(0, 0) == Catch::Approx(0.0).margin(1e-9));
  CHECK(m(0, 1) == Catch::Approx(1.0).margin(1e-9));
  CHECK(m(1, 0) == Catch::Approx(-1.0).margin(1e-9));
  CHECK(m(1, 1) == Catch::Approx(-1.0).margin(1e-9));

  const SdeModel rot(2, 2, {"-x1+omega*x2", "-omega*x1-x2"},
                     {{"1", "0"}, {"0", "1"}}, {{"omega", 1.0}});
  const MatrixXd mr = rot.jacobian_drift(vec2(0.4, -0.2));
  CHECK(mr(0, 0) == Catch::Approx(-1.0).margin(1e-9));
  CHECK(mr(0, 1) == Catch::Approx(1.0).margin(1e-9));
  CHECK(mr(1, 0) == Catch::Approx(-1.0).margin(1e-9));
  CHECK(mr(1, 1) == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("Jacobian differences converge at second order in the step") {
  const SdeModel model(2, 1, {"sin(2*x1)*x2", "exp(0.5*x2)-x1^2"}, {{"1"}, {"1"}}, {});
  const VectorXd x = vec2(0.4, -0.3);
  // large steps keep truncation well above rounding
  const MatrixXd j4 = model.jacobian_drift(x, 4096.0);
  const MatrixXd j2 = model.jacobian_drift(x, 2048.0);
  const MatrixXd j1 = model.jacobian_drift(x, 1024.0);
  const double d21 = (j4 - j2).norm();
  const double d10 = (j2 - j1).norm();
  const double order = std::log2(d21 / d10);
  INFO("observed order " << order);
  CHECK(order >= 1.8);
}

TEST_CASE("dissipation is minus the Jacobian trace") {
  const SdeModel decay(1, 1, {"-x1"}, {{"1"}}, {});
  CHECK(decay.dissipation(vec1(1.0)) == Catch::Approx(1.0).margin(1e-9));

  CHECK(klein_kramers().dissipation(vec2(0.2, -0.4)) == Catch::Approx(1.0).margin(1e-9));

  const SdeModel rot(2, 2, {"x2", "-x1"}, {{"1", "0"}, {"0", "1"}}, {});
  CHECK(rot.dissipation(vec2(0.5, 0.5)) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("expression domain errors carry the component index") {
  const SdeModel model(2, 1, {"x1", "1/x2"}, {{"1"}, {"1"}}, {});
  try {
    model.drift(vec2(1.0, 0.0));
    FAIL("expected ModelError");
  } catch (const ModelError& err) {
    CHECK(std::string(err.what()).find("component 2") != std::string::npos);
  }
}
