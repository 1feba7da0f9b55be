#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfg/best_reply.hpp"
#include "mfg/games.hpp"
#include "mfg/pmp_solver.hpp"

using namespace mfg;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Complete elliptic integral of the second kind by the arithmetic-geometric
// mean (Abramowitz & Stegun 17.6): an independent route to the turning time.
double elliptic_E_agm(double k) {
  double a = 1.0, b = std::sqrt(1.0 - k * k), c = k;
  double sum = 0.5 * c * c;
  double pow2 = 0.5;  // 2^{n-1} at n = 0
  for (int n = 0; n < 60 && c > 1e-17; ++n) {
    const double an = 0.5 * (a + b);
    const double bn = std::sqrt(a * b);
    c = 0.5 * (a - b);
    a = an;
    b = bn;
    pow2 *= 2.0;
    sum += pow2 * c * c;
  }
  const double K = kPi / (2.0 * a);
  return K * (1.0 - sum);
}

// Turning time of the reduced orbit with height c, in closed form.
double turning_time_agm(double c) {
  const double k = c / std::sqrt(1.0 + c * c);
  return (1.0 + c * c) * elliptic_E_agm(k);
}

// Root of 2 y^3 - y = r by bisection on a bracketing interval.
double cubic_root(double r, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((2 * mid * mid * mid - mid) < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("turning time quadrature matches the elliptic closed form") {
  for (double c : {0.3, 0.7, 1.0, 1.1283, 2.0}) {
    CHECK(games::turning_time(c) == doctest::Approx(turning_time_agm(c)).epsilon(1e-11));
  }
  // small orbits are harmonic: quarter period pi/2
  CHECK(games::turning_time(1e-4) == doctest::Approx(kPi / 2).epsilon(1e-6));
  // the turning time grows with the height, so tall orbits never fit T <= pi/2
  CHECK(games::turning_time(2.0) > games::turning_time(1.0));
}

TEST_CASE("monotone branch solver matches the elliptic root and its certificates") {
  const double T = 3.0;
  games::MonotoneSolution sol = games::solve_el_monotone(T, 1e-12, 1000);

  // independent reference: solve turning_time(c) = T on the closed form
  double lo = 0.1, hi = 4.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (turning_time_agm(mid) < T ? lo : hi) = mid;
  }
  const double M_ref = 0.5 * (lo + hi);
  CHECK(sol.turning_height == doctest::Approx(M_ref).epsilon(1e-9));

  CHECK(sol.terminal_gap < 1e-10);
  CHECK(sol.energy_drift < 1e-10);
  CHECK(sol.nodes[0] == 0.0);
  CHECK(sol.velocity[sol.grid.steps()] == doctest::Approx(0.0).epsilon(1e-9));
  // strictly increasing to the turn
  for (int k = 0; k < sol.grid.steps(); ++k) CHECK(sol.nodes[k + 1] > sol.nodes[k]);
  // conserved energy at the start equals the turning condition -1/(2(1+M^2))
  const double E0 = games::orbit_energy(sol.nodes[0], sol.velocity[0]);
  CHECK(E0 == doctest::Approx(-0.5 / (1 + M_ref * M_ref)).epsilon(1e-9));
}

TEST_CASE("angular-form integration passes smoothly through the turn") {
  const double T = 3.0;
  games::MonotoneSolution sol = games::solve_el_monotone(T, 1e-12, 1000);
  const double c = sol.turning_height;

  // integrate past the turn with the same step, so the shared nodes align
  TimeGrid longer(1.2 * T, 1200);
  games::SqrtBranch branch = games::integrate_sqrt_branch(c, longer);
  CHECK(branch.turning_time == doctest::Approx(T).epsilon(1e-8));
  double sup = 0.0;
  for (int k = 0; k <= sol.grid.steps(); ++k)
    sup = std::max(sup, std::abs(branch.nodes[k] - sol.nodes[k]));
  CHECK(sup < 1e-7);
  // the orbit descends symmetrically about the turn: y(t* + s) = y(t* - s)
  CHECK(branch.nodes[1200] == doctest::Approx(sol.nodes[800]).epsilon(1e-6));
}

TEST_CASE("short horizons admit no monotone branch") {
  CHECK_THROWS_AS(games::solve_el_monotone(1.2), NoCandidateError);
}

TEST_CASE("double well candidate map and costs") {
  SUBCASE("balanced at the hilltop: three candidates, wells tied at 3/4") {
    games::DoubleWellCandidates c = games::double_well_candidates(0.0, 1.0, 0.0);
    REQUIRE(c.terminals.size() == 3);
    const double w = 1.0 / std::sqrt(2.0);
    CHECK(c.terminals[0] == doctest::Approx(-w).epsilon(1e-12));
    CHECK(c.terminals[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.terminals[2] == doctest::Approx(w).epsilon(1e-12));
    CHECK(c.costs[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(c.costs[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.costs[2] == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("starts past the fold keep a single candidate") {
    games::DoubleWellCandidates c = games::double_well_candidates(0.5, 1.0, 0.0);
    REQUIRE(c.terminals.size() == 1);
    CHECK(c.terminals[0] == doctest::Approx(cubic_root(0.5, 0.5, 1.2)).epsilon(1e-10));
  }

  SUBCASE("inside the fold three candidates persist") {
    games::DoubleWellCandidates c = games::double_well_candidates(0.2, 1.0, 0.0);
    CHECK(c.terminals.size() == 3);
  }

  SUBCASE("a tilt breaks the tie by about twice its size") {
    games::DoubleWellCandidates c = games::double_well_candidates(0.0, 1.0, 0.05);
    REQUIRE(c.terminals.size() == 3);
    const double gap = c.costs.back() - c.costs.front();
    CHECK(gap == doctest::Approx(2 * 0.05 / std::sqrt(2.0)).epsilon(0.05));
  }
}

TEST_CASE("two well builder enforces its regime") {
  CHECK_THROWS_AS(games::build_two_well(0.9, 3.0, 50), std::invalid_argument);
  CHECK_THROWS_AS(games::build_two_well(2.0, 1.9, 50), std::invalid_argument);
  CHECK_NOTHROW(games::build_two_well(2.0, 2.0, 50));

  games::TwoWellGame game = games::build_two_well(2.0, 3.0, 50);
  CHECK(game.kappa == 2.0);
  CHECK(game.spec.unique_optimum_declared);
  CHECK(game.spec.moments.count() == 1);
  CHECK(game.spec.players.size() >= 1);
  for (const Vec& x0 : game.spec.players.initial_points) CHECK(x0.cwiseAbs().maxCoeff() == 0.0);
  CHECK(game.spec.declared_radius.has_value());
  CHECK_NOTHROW(game.spec.validate());

  // the barycenter kernel is the identity coordinate
  Vec x = Vec::Constant(1, 0.37);
  CHECK(game.spec.moments.eval(0.5, x)[0] == 0.37);
}

TEST_CASE("rotation game closed forms") {
  const double theta = kPi / 4, T = 1.0;
  games::RotationGame rot = games::build_rotation(true, theta, T, 40);
  games::RotationGame plain = games::build_rotation(false, theta, T, 40);

  SUBCASE("planar map moduli follow the scalar radius maps") {
    for (double r : {0.05, 0.5, 1.0, 2.0}) {
      Vec z(2);
      z << r, 0;
      CHECK(rot.planar_map(z).norm() == doctest::Approx(2 * r / (1 + r * r)).epsilon(1e-12));
      CHECK(rot.radius_map(r) == doctest::Approx(2 * r / (1 + r * r)).epsilon(1e-12));
      CHECK(plain.planar_map(z).norm() == doctest::Approx(r / (1 + r * r)).epsilon(1e-12));
      CHECK(plain.radius_map(r) == doctest::Approx(r / (1 + r * r)).epsilon(1e-12));
    }
  }

  SUBCASE("rotating variant turns by theta0, plain variant does not turn") {
    Vec z(2);
    z << 1, 0;
    Vec fr = rot.planar_map(z);
    CHECK(std::atan2(fr[1], fr[0]) == doctest::Approx(theta).epsilon(1e-12));
    Vec fp = plain.planar_map(z);
    CHECK(fp[1] == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("unit circle is invariant for the rotating variant") {
    CHECK(rot.radius_map(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("terminal target scales the planar map by (1+T)/T") {
    Vec z(2);
    z << 0.3, 0.2;
    CHECK((rot.terminal_target(z) - (1 + T) / T * rot.planar_map(z)).norm() < 1e-14);
  }

  SUBCASE("solver reply equals the closed-form reply") {
    Vec b(2);
    b << 0.3, -0.4;
    MomentPath eta = MomentPath::constant(rot.spec.grid, b);
    MomentPath closed = rot.best_reply_closed_form(eta);
    BestReplyOutput out = apply_best_reply(eta, rot.spec);
    CHECK(sup_distance(out.eta_new, closed) < 1e-8);
    // straight-line trajectory: terminal = phi of the terminal barycenter
    CHECK((out.group_solutions[0].best().terminal() - rot.planar_map(b)).cwiseAbs().maxCoeff() <
          1e-8);
  }
}

TEST_CASE("equilibrium synthesis re-derives and couples a prescribed optimum") {
  GameSpec base = games::build_double_well(1.0, 100, 0.0);
  MomentPath zero = MomentPath::constant(base.grid, Vec::Zero(1));
  OcpContext ctx{base.dynamics, base.running_cost, base.terminal_cost, zero};
  OCPSolution sol = solve_ocp(Vec::Zero(1), ctx, ShootingConfig{});

  const PMPTrajectory* right = nullptr;
  for (int i : sol.optimal)
    if (sol.candidates[static_cast<size_t>(i)].terminal()[0] > 0)
      right = &sol.candidates[static_cast<size_t>(i)];
  REQUIRE(right != nullptr);

  games::SynthesizedMFG synth = games::synthesize_mfg(base, *right, 50.0);
  CHECK(synth.base_pmp_residual < 1e-8);
  CHECK(synth.kappa == 50.0);
  CHECK(synth.spec.unique_optimum_declared);  // strong coupling
  CHECK(synth.spec.players.size() == 1);
  CHECK(synth.reference.at(1.0)[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK_NOTHROW(synth.spec.validate());

  SUBCASE("the reference path is a fixed point of the coupled game") {
    BestReplyOutput out = apply_best_reply(synth.reference, synth.spec);
    CHECK(sup_distance(out.eta_new, synth.reference) < 1e-8);
  }

  SUBCASE("a trajectory that does not solve the base problem is rejected") {
    PMPTrajectory corrupted = *right;
    for (auto& x : corrupted.states) x.array() += 0.05;
    CHECK_THROWS_AS(games::synthesize_mfg(base, corrupted, 50.0), PreconditionError);
  }
}

TEST_CASE("kernel game certificate: ties everywhere, no equilibrium, mixture heals") {
  games::KernelCertificate cert = games::no_solution_kernel();

  CHECK(cert.T == 1.0);
  CHECK(cert.tie_mass == 1.0);
  CHECK(cert.tie_cost_gap <= 1e-12);

  // all-right selection: b(xi)/T = (sqrt(pi)/2)(erf(1-xi) + erf(xi)),
  // minimized at the endpoint labels
  const double min_ref = std::sqrt(kPi) / 2 * std::erf(1.0);
  CHECK(cert.induced_field_min_over_T == doctest::Approx(min_ref).epsilon(1e-6));
  CHECK(cert.induced_field_min_over_T > 0.7);

  // a nonzero equilibrium needs the kernel form negative, but it is PSD
  CHECK(cert.equilibrium_form_value < 0.0);
  CHECK(cert.gram_min_eigenvalue >= -1e-12);

  CHECK(cert.reply_gap == doctest::Approx(2.0 * cert.T).epsilon(1e-12));

  // half/half randomization restores the zero field and keeps the tie exact
  CHECK(cert.mixture_field_sup <= 1e-12);
  CHECK(cert.mixture_cost_gap <= 1e-12);
}

TEST_CASE("terminal constraint certificate: the reply map two-cycles") {
  const double T = 1.0;
  games::TerminalConstraintCertificate cert = games::no_solution_terminal(T);

  CHECK(cert.zero_field_stay_cost == doctest::Approx(0.0));
  CHECK(cert.zero_field_move_cost == doctest::Approx(-T).epsilon(1e-12));
  CHECK(cert.zero_field_reply_terminal == doctest::Approx(T).epsilon(1e-12));

  // against the ramp the far branch is unreachable by T^3/3
  CHECK(cert.ramp_shortfall == doctest::Approx(T * T * T / 3).epsilon(1e-6));
  CHECK(cert.ramp_reply_terminal == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cert.ramp_reply_cost == doctest::Approx(std::pow(T, 5) / 9).epsilon(1e-6));

  CHECK(cert.zero_field_not_fixed);
  CHECK(cert.ramp_not_fixed);
  CHECK(cert.cost_jump_at_zero == doctest::Approx(T).epsilon(1e-12));

  SUBCASE("scaling with the horizon") {
    games::TerminalConstraintCertificate c2 = games::no_solution_terminal(1.2);
    CHECK(c2.zero_field_move_cost == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(c2.ramp_shortfall == doctest::Approx(1.2 * 1.2 * 1.2 / 3).epsilon(1e-6));
  }

  SUBCASE("past T = sqrt(3) the drained dynamics change regime") {
    CHECK_THROWS_AS(games::no_solution_terminal(1.8), std::invalid_argument);
  }
}
