#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfg/direct_oracle.hpp"
#include "mfg/games.hpp"

using namespace mfg;

namespace {

struct Problem {
  GameSpec spec;
  MomentPath eta;
  Problem(GameSpec s, const Vec& eta_value) : spec(std::move(s)), eta() {
    eta = MomentPath::constant(spec.grid, eta_value);
  }
  OcpContext ctx() const {
    return OcpContext{spec.dynamics, spec.running_cost, spec.terminal_cost, eta};
  }
};

Mat random_controls(int m, int K, uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  Mat U(m, K);
  for (int j = 0; j < K; ++j)
    for (int i = 0; i < m; ++i) U(i, j) = dist(rng);
  return U;
}

}  // namespace

TEST_CASE("reverse accumulation is exact for the discrete quadratic problem") {
  // Linear dynamics + quadratic costs make J exactly quadratic in U, so
  // r(t) = J(U + tE) - J(U) - t <G, E> is exactly quadratic in t and the
  // combination r(2t) - 4 r(t) vanishes to roundoff.  Any first-order error
  // in G would survive in that combination as a term linear in t.
  Problem prob(games::build_lq_target(1.0, 1.0, 40), Vec::Zero(1));
  OcpContext ctx = prob.ctx();
  const Vec xbar = Vec::Constant(1, 0.3);

  Mat U = random_controls(1, 40, 11u, 0.8);
  Mat G;
  const double J0 = direct_cost_and_gradient(xbar, ctx, U, &G);
  REQUIRE(std::isfinite(J0));

  Mat E = random_controls(1, 40, 23u, 1.0);
  const double gE = (G.array() * E.array()).sum();
  for (double t : {1e-1, 1e-3}) {
    const double r1 = direct_cost_and_gradient(xbar, ctx, U + t * E, nullptr) - J0 - t * gE;
    const double r2 =
        direct_cost_and_gradient(xbar, ctx, U + 2 * t * E, nullptr) - J0 - 2 * t * gE;
    CHECK(std::abs(r2 - 4 * r1) <= 1e-12 * (1 + std::abs(J0)));
  }
}

TEST_CASE("gradient matches central differences on a nonlinear problem") {
  Problem prob(games::build_two_well(2.0, 2.0, 30).spec, Vec::Constant(1, 0.3));
  OcpContext ctx = prob.ctx();
  const Vec xbar = Vec::Zero(1);

  Mat U = random_controls(1, 30, 5u, 0.5);
  Mat G;
  direct_cost_and_gradient(xbar, ctx, U, &G);

  std::mt19937_64 pick(99u);
  for (int probe = 0; probe < 6; ++probe) {
    const int j = static_cast<int>(pick() % 30);
    const double h = 1e-5;
    Mat Up = U, Um = U;
    Up(0, j) += h;
    Um(0, j) -= h;
    const double fd = (direct_cost_and_gradient(xbar, ctx, Up, nullptr) -
                       direct_cost_and_gradient(xbar, ctx, Um, nullptr)) /
                      (2 * h);
    CHECK(G(0, j) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("descent recovers the tracking optimum") {
  Problem prob(games::build_lq_target(1.0, 1.0, 50), Vec::Zero(1));
  DirectConfig cfg;
  cfg.starts = 8;
  DirectResult res = solve_direct(Vec::Zero(1), prob.ctx(), cfg);
  REQUIRE(!res.minima.empty());
  // piecewise-constant controls contain the true constant optimum, so the
  // discrete minimum matches the continuous value 1/2 almost exactly
  CHECK(res.best().cost == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(res.best().states.back()[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("descent finds both wells and keeps them distinct") {
  Problem prob(games::build_double_well(1.0, 50, 0.0), Vec::Zero(1));
  DirectConfig cfg;
  cfg.starts = 24;
  DirectResult res = solve_direct(Vec::Zero(1), prob.ctx(), cfg);
  REQUIRE(res.minima.size() >= 2);
  const double w = 1.0 / std::sqrt(2.0);
  // best two minima are the mirrored wells at cost 3/4
  CHECK(res.minima[0].cost == doctest::Approx(0.75).epsilon(1e-5));
  CHECK(res.minima[1].cost == doctest::Approx(0.75).epsilon(1e-5));
  CHECK(std::abs(res.minima[0].states.back()[0]) == doctest::Approx(w).epsilon(1e-3));
  CHECK(res.minima[0].states.back()[0] * res.minima[1].states.back()[0] < 0.0);
}

TEST_CASE("explosive forward dynamics are counted as failed starts") {
  ControlAffineDynamics dyn;
  dyn.state_dim = 1;
  dyn.control_dim = 1;
  dyn.drift = [](double, const Vec& x, const Vec&) { return (x.array().pow(3)).matrix().eval(); };
  dyn.fields.push_back([](double, const Vec&, const Vec&) { return Vec::Ones(1); });
  RunningCost cost;
  cost.value = [](double, const Vec&, const Vec& u, const Vec&) { return u.squaredNorm(); };
  TerminalCost psi;
  psi.value = [](const Vec&, const Vec&) { return 0.0; };
  TimeGrid grid(2.0, 50);
  MomentPath eta = MomentPath::constant(grid, Vec::Zero(1));
  OcpContext ctx{dyn, cost, psi, eta};

  Mat U = Mat::Zero(1, 50);
  CHECK(direct_cost_and_gradient(Vec::Constant(1, 3.0), ctx, U, nullptr) ==
        std::numeric_limits<double>::infinity());

  DirectConfig cfg;
  cfg.starts = 4;
  cfg.max_iter = 20;
  CHECK_THROWS_AS(solve_direct(Vec::Constant(1, 3.0), ctx, cfg), NoCandidateError);
}

TEST_CASE("runs with the same seed are bitwise identical") {
  Problem prob(games::build_double_well(1.0, 40, 0.1), Vec::Zero(1));
  DirectConfig cfg;
  cfg.starts = 12;
  DirectResult a = solve_direct(Vec::Zero(1), prob.ctx(), cfg);
  DirectResult b = solve_direct(Vec::Zero(1), prob.ctx(), cfg);
  REQUIRE(a.minima.size() == b.minima.size());
  for (size_t i = 0; i < a.minima.size(); ++i) {
    CHECK(a.minima[i].cost == b.minima[i].cost);  // bitwise
    CHECK((a.minima[i].controls - b.minima[i].controls).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("control matrix shape is validated") {
  Problem prob(games::build_lq_target(1.0, 1.0, 10), Vec::Zero(1));
  OcpContext ctx = prob.ctx();
  Mat U = Mat::Zero(1, 9);
  CHECK_THROWS_AS(direct_cost_and_gradient(Vec::Zero(1), ctx, U, nullptr),
                  std::invalid_argument);
}
