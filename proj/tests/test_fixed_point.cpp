#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfg/fixed_point.hpp"
#include "mfg/games.hpp"

using namespace mfg;

namespace {

MomentPath ramp_state(const games::RotationGame& rot, double r) {
  return rot.best_reply_closed_form(MomentPath::constant(rot.spec.grid, Vec::Constant(2, r)));
}

}  // namespace

TEST_CASE("undamped rotation iterates follow the scalar radius recursion") {
  games::RotationGame rot = games::build_rotation(true, 3.14159265358979323846 / 4, 1.0, 30);
  MomentPath eta0 = ramp_state(rot, 0.05);

  PicardConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iter = 20;
  cfg.auto_damp = false;
  BestReplyMap phi(rot.spec, BestReplyConfig{});
  FixedPointRun run = picard_iterate(eta0, phi, cfg);

  CHECK(run.outcome == PicardOutcome::max_iter);
  CHECK(run.damping_used == 1.0);
  CHECK(run.iterations == 20);
  CHECK(run.residuals.size() == static_cast<size_t>(run.iterations));
  REQUIRE(run.history.size() >= 2);

  const double T = 1.0;
  for (size_t k = 0; k + 1 < run.history.size(); ++k) {
    const double r_k = run.history[k].at(T).norm();
    const double r_next = run.history[k + 1].at(T).norm();
    CHECK(std::abs(r_next - rot.radius_map(r_k)) <= 1e-8);
  }
  // the radius climbs toward the invariant circle
  CHECK(run.history.back().at(T).norm() > 0.9);
}

TEST_CASE("recorded residuals are the pre-damping defect at each iterate") {
  games::RotationGame rot = games::build_rotation(true, 0.7, 1.0, 24);
  MomentPath eta0 = ramp_state(rot, 0.2);

  PicardConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iter = 6;
  cfg.auto_damp = false;
  BestReplyMap phi(rot.spec, BestReplyConfig{});
  FixedPointRun run = picard_iterate(eta0, phi, cfg);

  REQUIRE(run.history.size() >= run.residuals.size());
  for (size_t k = 0; k < run.residuals.size(); ++k) {
    BestReplyMap fresh(rot.spec, BestReplyConfig{});
    const double defect = sup_distance(fresh(run.history[k]), run.history[k]);
    CHECK(run.residuals[k] == doctest::Approx(defect).epsilon(1e-9));
  }
  CHECK(run.final_residual == run.residuals.back());
}

TEST_CASE("convergence stops at the measured iterate without a final move") {
  games::TwoWellGame game = games::build_two_well(2.0, 2.0, 30);
  MomentPath zero = MomentPath::constant(game.spec.grid, Vec::Zero(1));

  BestReplyMap phi(game.spec, BestReplyConfig{});
  FixedPointRun run = picard_iterate(zero, phi, PicardConfig{});

  CHECK(run.outcome == PicardOutcome::converged);
  CHECK(run.iterations == 1);  // one evaluation certified the fixed point
  CHECK(run.final_residual < 1e-8);
  // eta_star is the probed iterate itself, bitwise
  CHECK(sup_distance(run.eta_star, zero) == 0.0);
}

TEST_CASE("growing residuals drop the damping to one half, once") {
  games::RotationGame rot = games::build_rotation(true, 0.5, 1.0, 24);
  MomentPath eta0 = ramp_state(rot, 0.05);

  PicardConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iter = 12;

  SUBCASE("auto damping on") {
    BestReplyMap phi(rot.spec, BestReplyConfig{});
    FixedPointRun run = picard_iterate(eta0, phi, cfg);
    CHECK(run.damping_used == 0.5);
    CHECK(run.note.find("damping") != std::string::npos);
  }

  SUBCASE("auto damping off") {
    cfg.auto_damp = false;
    BestReplyMap phi(rot.spec, BestReplyConfig{});
    FixedPointRun run = picard_iterate(eta0, phi, cfg);
    CHECK(run.damping_used == 1.0);
  }
}

TEST_CASE("an image beyond the blow-up threshold ends the run as diverged") {
  games::RotationGame rot = games::build_rotation(true, 0.5, 1.0, 24);
  MomentPath eta0 = ramp_state(rot, 0.5);

  PicardConfig cfg;
  cfg.blowup_factor = 1e-4;  // far below any actual image norm
  BestReplyMap phi(rot.spec, BestReplyConfig{});
  FixedPointRun run = picard_iterate(eta0, phi, cfg);

  CHECK(run.outcome == PicardOutcome::diverged);
  CHECK_FALSE(run.note.empty());
}

TEST_CASE("probe classification separates the two-well equilibria") {
  games::TwoWellGame game = games::build_two_well(2.0, 2.0, 24);
  BestReplyMap phi(game.spec, BestReplyConfig{});

  StabilityConfig scfg;
  scfg.n_probes = 3;
  scfg.probe_max_iter = 150;

  SUBCASE("the zero equilibrium repels probes") {
    MomentPath zero = MomentPath::constant(game.spec.grid, Vec::Zero(1));
    StabilityEvidence ev = classify_stability(zero, phi, scfg);
    CHECK(ev.classification == StabilityClass::unstable);
    bool any_escape = false;
    for (const ProbeRecord& p : ev.probes)
      any_escape = any_escape || p.max_excursion > scfg.escape_factor * scfg.eps_probe;
    CHECK(any_escape);
  }

  SUBCASE("the symmetric branch attracts probes") {
    // land on the nonzero fixed point first
    games::MonotoneSolution mono = games::solve_el_monotone(2.0, 1e-12, 512);
    MomentPath start =
        MomentPath::constant(game.spec.grid, Vec::Constant(1, 0.9 * mono.turning_height));
    FixedPointRun run = picard_iterate(start, phi, PicardConfig{});
    REQUIRE(run.outcome == PicardOutcome::converged);
    CHECK(run.eta_star.at(2.0)[0] > 0.1);

    StabilityEvidence ev = classify_stability(run.eta_star, phi, scfg);
    CHECK(ev.classification == StabilityClass::asymptotically_stable);
    for (const ProbeRecord& p : ev.probes)
      CHECK(p.final_distance <= scfg.return_factor * scfg.eps_probe);
  }

  SUBCASE("a non-fixed path is rejected up front") {
    MomentPath off = MomentPath::constant(game.spec.grid, Vec::Constant(1, 0.3));
    CHECK_THROWS_AS(classify_stability(off, phi, scfg), PreconditionError);
  }
}

TEST_CASE("probes are seeded and extendable") {
  games::TwoWellGame game = games::build_two_well(2.0, 2.0, 24);
  BestReplyMap phi(game.spec, BestReplyConfig{});
  MomentPath zero = MomentPath::constant(game.spec.grid, Vec::Zero(1));

  StabilityConfig a;
  a.n_probes = 2;
  a.probe_max_iter = 40;
  StabilityEvidence ev1 = classify_stability(zero, phi, a);
  StabilityEvidence ev2 = classify_stability(zero, phi, a);
  REQUIRE(ev1.probes.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(ev1.probes[i].max_excursion == ev2.probes[i].max_excursion);
    CHECK(ev1.probes[i].final_distance == ev2.probes[i].final_distance);
    CHECK(ev1.probes[i].iterations == ev2.probes[i].iterations);
  }

  // more probes extend the experiment without changing the earlier draws
  StabilityConfig b = a;
  b.n_probes = 4;
  StabilityEvidence ev4 = classify_stability(zero, phi, b);
  REQUIRE(ev4.probes.size() == 4);
  for (size_t i = 0; i < 2; ++i)
    CHECK(ev4.probes[i].max_excursion == ev1.probes[i].max_excursion);

  // a different seed draws different probes
  StabilityConfig c = a;
  c.seed = 0x7777u;
  StabilityEvidence evc = classify_stability(zero, phi, c);
  bool differs = false;
  for (size_t i = 0; i < 2; ++i)
    differs = differs || evc.probes[i].max_excursion != ev1.probes[i].max_excursion;
  CHECK(differs);
}
