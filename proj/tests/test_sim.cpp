#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "markovsde/sim.hpp"
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

SdeModel tanh1d() {
  return SdeModel(1, 1, {"-x1"}, {{"sigma*(2+tanh(x1))"}}, {{"sigma", 1.0}}, "tanh1d");
}

SdeModel tanh1d_driftless() {
  return SdeModel(1, 1, {"0"}, {{"2+tanh(x1)"}}, {}, "tanh1d-driftless");
}

}  // namespace

TEST_CASE("alpha step with additive noise ignores alpha") {
  const SdeModel model(2, 2, {"0", "0"}, {{"1", "0"}, {"0", "1"}}, {});
  const VectorXd x = vec2(0.5, -0.5);
  const VectorXd dw = vec2(0.3, -0.1);
  for (double alpha : {0.0, 0.5, 1.0}) {
    const VectorXd y = step_alpha(model, x, 0.01, dw, alpha);
    CHECK(y(0) == Catch::Approx(0.8).margin(1e-12));
    CHECK(y(1) == Catch::Approx(-0.6).margin(1e-12));
  }
}

TEST_CASE("alpha step includes the spurious drift correction") {
  const SdeModel model = tanh1d();
  const VectorXd y1 = step_alpha(model, vec1(0.0), 0.01, vec1(0.1), 1.0);
  CHECK(y1(0) == Catch::Approx(0.22).margin(1e-8));
  const VectorXd y0 = step_alpha(model, vec1(0.0), 0.01, vec1(0.1), 0.0);
  CHECK(y0(0) == Catch::Approx(0.20).margin(1e-12));
}

TEST_CASE("quadratic-increment step") {
  const SdeModel driftless = tanh1d_driftless();
  const VectorXd y = step_q(driftless, vec1(0.0), 0.01, vec1(0.1));
  CHECK(y(0) == Catch::Approx(0.22).margin(1e-8));

  // constant coupling: Q vanishes and all schemes coincide
  const SdeModel flat(2, 2, {"-x1", "-x2"}, {{"1", "0"}, {"0", "1"}}, {});
  const VectorXd x = vec2(0.3, 0.7);
  const VectorXd dw = vec2(-0.2, 0.05);
  const VectorXd yq = step_q(flat, x, 0.01, dw);
  for (double alpha : {0.0, 0.5, 1.0})
    CHECK((yq - step_alpha(flat, x, 0.01, dw, alpha)).norm() < 1e-14);

  const SdeModel gbm(1, 1, {"0"}, {{"x1"}}, {});
  const VectorXd yg = step_q(gbm, vec1(1.0), 0.01, vec1(-0.2));
  CHECK(yg(0) == Catch::Approx(0.84).margin(1e-8));
}

TEST_CASE("replacing dw_mu dw_nu by delta dt reduces the Q step to anti-Ito") {
  // exact identity when the coupling entries are affine in the state
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double dt = 1e-3;
  const double sq = std::sqrt(dt);
  for (int rep = 0; rep < 20; ++rep) {
    const double c0 = 1.5 + u(rng), c1 = u(rng), d0 = 2.0 + u(rng), d1 = u(rng);
    const SdeModel model(
        2, 2, {"-x1", "-x2"},
        {{"a0+a1*x1", "0"}, {"0", "b0+b1*x2"}},
        {{"a0", c0}, {"a1", c1}, {"b0", d0}, {"b1", d1}});
    const VectorXd x = vec2(u(rng), u(rng));

    VectorXd q_delta = VectorXd::Zero(2);
    for (int mu = 0; mu < 2; ++mu) {
      VectorXd e = VectorXd::Zero(2);
      e(mu) = sq;
      q_delta += q_term(model, x, e);
    }
    const VectorXd lhs = x + model.drift(x) * dt + q_delta;
    const VectorXd rhs = step_alpha(model, x, dt, VectorXd::Zero(2), 1.0);
    REQUIRE((lhs - rhs).norm() <= 1e-12);
  }

  // smooth nonlinear coupling, where the two spurious-drift forms coincide
  const SdeModel model = tanh1d();
  const VectorXd x = vec1(0.4);
  VectorXd e = vec1(sq);
  const VectorXd lhs = x + model.drift(x) * dt + q_term(model, x, e);
  const VectorXd rhs = step_alpha(model, x, dt, vec1(0.0), 1.0);
  CHECK((lhs - rhs).norm() <= 1e-12);
}

TEST_CASE("noiseless path follows the Euler solution") {
  const SdeModel model(1, 1, {"-x1"}, {{"0"}}, {});
  WienerStream stream(0, 0);
  const auto traj = simulate_path(model, StepScheme::q_increment(), vec1(1.0), 1.0,
                                  1000, stream, 1000);
  const double final = traj.state(traj.n_samples() - 1, 0);
  CHECK(final == Catch::Approx(std::exp(-1.0)).margin(5e-4));
}

TEST_CASE("constant coupling: all schemes produce bit-identical paths") {
  const SdeModel model(2, 2, {"-x1", "0.5*x1-x2"}, {{"1", "0"}, {"0", "2"}}, {});
  const VectorXd x0 = vec2(1.0, -1.0);
  std::vector<Trajectory> runs;
  for (const StepScheme& s :
       {StepScheme::ito(), StepScheme::anti_ito(), StepScheme::q_increment()}) {
    WienerStream stream(77, 3);
    runs.push_back(simulate_path(model, s, x0, 1.0, 256, stream));
  }
  REQUIRE(runs[0].data == runs[1].data);
  REQUIRE(runs[0].data == runs[2].data);
}

TEST_CASE("a single step path reproduces one step call exactly") {
  const SdeModel model = tanh1d();
  const double dt = 0.25;

  WienerStream s1(9, 0);
  const auto traj = simulate_path(model, StepScheme::q_increment(), vec1(0.3), dt, 1, s1);

  WienerStream s2(9, 0);
  const VectorXd dw(vec1(s2.sample_dw(dt, 1)[0]));
  const VectorXd expected = step_q(model, vec1(0.3), dt, dw);
  CHECK(traj.state(1, 0) == expected(0));
}

TEST_CASE("ensemble of one path equals simulate_path with stream id 0") {
  const SdeModel model = tanh1d();
  const auto ens = simulate_ensemble(model, StepScheme::q_increment(), vec1(0.1), 0.5,
                                     64, 1, 1234);
  WienerStream stream(1234, 0);
  const auto traj =
      simulate_path(model, StepScheme::q_increment(), vec1(0.1), 0.5, 64, stream);
  REQUIRE(ens.paths.size() == 1);
  REQUIRE(ens.paths[0].data == traj.data);
}

TEST_CASE("ensembles are deterministic in the seed") {
  const SdeModel model = tanh1d();
  const auto a = simulate_ensemble(model, StepScheme::q_increment(), vec1(0.0), 0.2,
                                   32, 50, 2024);
  const auto b = simulate_ensemble(model, StepScheme::q_increment(), vec1(0.0), 0.2,
                                   32, 50, 2024);
  REQUIRE(a.paths.size() == b.paths.size());
  for (std::size_t i = 0; i < a.paths.size(); ++i)
    REQUIRE(a.paths[i].data == b.paths[i].data);

  std::ostringstream csv_a, csv_b;
  a.write_csv(csv_a);
  b.write_csv(csv_b);
  CHECK(csv_a.str() == csv_b.str());
}

TEST_CASE("one-step ensemble mean matches drift plus spurious drift") {
  const SdeModel model = tanh1d();
  const double dt = 1e-3;
  const auto ens = simulate_ensemble(model, StepScheme::q_increment(), vec1(0.0), dt,
                                     1, 100'000, 0);
  const auto samples = ens.final_marginal();
  const auto m = moments(samples);
  // increments of the quadratic scheme have mean (a + a_sp) dt = 2e-3
  CHECK(std::abs(m.mean - 2e-3) <= 3.0 * m.std_error);
  // and their most probable value stays at a dt = 0
  const auto kde = kde_mode(samples);
  CHECK(std::abs(kde.mode) <= kde.bandwidth);
  CHECK(m.mean > 3.0 * m.std_error);
}

TEST_CASE("quadratic scheme converges to the anti-Ito ensemble mean") {
  const SdeModel model = tanh1d();
  const int n_paths = 16384;
  const double t_final = 1.0;
  std::vector<double> diffs;
  double combined_se_last = 0.0;
  for (std::int64_t m : {128, 1024}) {
    const auto eq = simulate_ensemble(model, StepScheme::q_increment(), vec1(0.0),
                                      t_final, m, n_paths, 555, {m, 0, 1e-3});
    const auto ea = simulate_ensemble(model, StepScheme::anti_ito(), vec1(0.0),
                                      t_final, m, n_paths, 555, {m, 0, 1e-3});
    const auto mq = moments(eq.final_marginal());
    const auto ma = moments(ea.final_marginal());
    diffs.push_back(std::abs(mq.mean - ma.mean));
    combined_se_last = std::sqrt(mq.std_error * mq.std_error + ma.std_error * ma.std_error);
  }
  INFO("diffs " << diffs[0] << " -> " << diffs[1] << ", 3 se = " << 3.0 * combined_se_last);
  CHECK(diffs[1] < diffs[0]);
  CHECK(diffs[1] <= 3.0 * combined_se_last);
}

TEST_CASE("exploding paths abort with a diagnostic") {
  const SdeModel model(1, 1, {"x1^3"}, {{"0"}}, {});
  WienerStream stream(0, 0);
  CHECK_THROWS_AS(
      simulate_path(model, StepScheme::q_increment(), vec1(2.0), 10.0, 10, stream),
      SimulationError);

  CHECK_THROWS_AS(simulate_ensemble(model, StepScheme::q_increment(), vec1(2.0), 10.0,
                                    10, 8, 1),
                  SimulationError);
}

TEST_CASE("ensemble csv layout") {
  const SdeModel model = tanh1d();
  const auto ens =
      simulate_ensemble(model, StepScheme::q_increment(), vec1(0.0), 0.1, 4, 2, 9);
  std::ostringstream os;
  ens.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "path_id,step,t,x1");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2 * 5);  // 2 paths, steps 0..4
}
