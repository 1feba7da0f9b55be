#pragma once

// Catalog of model games and control problems used by the tests and the
// command line harness: the scalar two-well game coupled through the
// barycenter, the planar rotation game with a closed-form best reply, the
// double-well terminal-cost control problem, a quadratic tracking problem,
// equilibrium synthesis around a prescribed trajectory, and closed-form
// certificates for two games that admit no equilibrium.

#include <optional>
#include <string>
#include <vector>

#include "mfg/core_model.hpp"
#include "mfg/pmp_solver.hpp"

namespace mfg::games {

// ---------------------------------------------------------------------------
// Scalar game: minimize int u^2 + 1/(1+x^2) + kappa (x - b)^2 dt with
// dynamics xdot = u, no terminal cost, every player starting at 0, coupled
// through the barycenter b.  Requires kappa > 1 and T > 2; in that regime the
// game has the zero equilibrium plus a symmetric pair.
struct TwoWellGame {
  GameSpec spec;
  double kappa = 0.0;
  double T = 0.0;
};

TwoWellGame build_two_well(double kappa, double T, int grid_steps);

// ---------------------------------------------------------------------------
// Planar game: minimize int |u|^2 dt + |x(T) - psi(b(T))|^2 with xdot = u,
// all players at the origin, coupled through the barycenter.  The best reply
// is exactly b -> (t / (1+T)) psi(b(T)), so iterating it reduces to a planar
// map applied to the terminal barycenter: the rotating variant contracts
// radii toward the unit circle (unstable equilibrium at 0), the plain variant
// contracts toward 0.
struct RotationGame {
  GameSpec spec;
  double T = 0.0;
  double theta0 = 0.0;
  bool rotating = true;

  Vec planar_map(const Vec& z) const;    // phi(z): the induced terminal map
  double radius_map(double r) const;     // its action on |z|
  Vec terminal_target(const Vec& z) const;  // psi(z) = ((1+T)/T) phi(z)
  MomentPath best_reply_closed_form(const MomentPath& b) const;
};

RotationGame build_rotation(bool rotating, double theta0, double T, int grid_steps);

// ---------------------------------------------------------------------------
// Scalar control problem: minimize int u^2 dt + (x(T)^2 - 1)^2 + tilt * x(T)
// with xdot = u.  For tilt = 0 and initial points near 0 the optimal set
// splits between the two wells; any nonzero tilt removes the tie.
GameSpec build_double_well(double T, int grid_steps, double tilt = 0.0);

// Candidate terminal points of the double-well problem from initial point
// xbar: real roots of 2 T y^3 + (1 - 2 T) y ... reduced at T = 1 to
// 2 y^3 - y = xbar.  Costs of the constant-control candidates included.
struct DoubleWellCandidates {
  std::vector<double> terminals;
  std::vector<double> costs;
};
DoubleWellCandidates double_well_candidates(double xbar, double T, double tilt = 0.0);

// Scalar tracking problem: minimize int u^2 dt + (x(T) - target)^2, xdot = u.
GameSpec build_lq_target(double target, double T, int grid_steps);

// ---------------------------------------------------------------------------
// The symmetric equilibria of the two-well game solve the reduced problem
// y'' = -y / (1+y^2)^2, y(0) = 0, y'(T) = 0, y > 0 on (0, T].  The solver
// shoots on the turning height c (the conserved energy fixes
// y'(0) = c / sqrt(1+c^2)) and bisects on y'(T; c).
struct MonotoneSolution {
  double turning_height = 0.0;  // M = y(T) at the root
  TimeGrid grid;
  Vec nodes;      // y at grid nodes
  Vec velocity;   // y' at grid nodes
  double terminal_gap = 0.0;  // |y(T) - M|
  double energy_drift = 0.0;  // max |E(t) - E(0)| along the orbit
};

MonotoneSolution solve_el_monotone(double T, double tol = 1e-12, int grid_steps = 1000);

// Conserved quantity of the reduced equation.
double orbit_energy(double y, double ydot);

// Verification route: with the substitution y = c sin(theta) the orbit
// obeys theta' = 1 / sqrt((1 + c^2 sin^2 theta)(1 + c^2)), which is smooth
// through the turning point.  Returns y sampled on the grid, descending
// symmetrically once past the turn; reports the turning time, or -1 when
// the turn falls outside the grid.
struct SqrtBranch {
  Vec nodes;
  double turning_time = 0.0;
};
SqrtBranch integrate_sqrt_branch(double c, const TimeGrid& grid);

// Time at which the rising branch with turning height c turns around,
// computed by quadrature of the smooth angular form.
double turning_time(double c);

// ---------------------------------------------------------------------------
// Equilibrium synthesis: given a control problem and one of its extremal
// trajectories, add the coupling kappa |x - b|^2 and put every player on that
// trajectory.  The trajectory is re-verified against the base optimality
// system before use.
struct SynthesizedMFG {
  GameSpec spec;
  MomentPath reference;      // the prescribed equilibrium path
  double kappa = 0.0;
  double base_pmp_residual = 0.0;
};

SynthesizedMFG synthesize_mfg(const GameSpec& base, const PMPTrajectory& pmp_solution,
                              double kappa);

// ---------------------------------------------------------------------------
// Closed-form certificates for a game with no equilibrium, pure or mixed in
// the strong sense: each player maximizes |x(T) - b(xi)|^2 with xdot = u in
// [-1, 1] and b(xi) = int_0^1 exp(-|zeta - xi|^2) x(T, zeta) dzeta.  The
// label-dependent kernel puts this outside the finite-moment interface, so
// the certificate is computed directly by quadrature.
struct KernelCertificate {
  double T = 0.0;
  // Zero field: every label ties between the endpoints -T and +T.
  double tie_mass = 0.0;
  double tie_cost_gap = 0.0;
  // Any selection from the tie induces a field bounded away from zero; the
  // all-right selection realizes min over labels of b(xi)/T below.
  double induced_field_min_over_T = 0.0;
  // A nonzero equilibrium would force int b(xi) x(T, xi) = -T int |b| < 0,
  // yet the kernel form is positive semidefinite.
  double equilibrium_form_value = 0.0;
  double gram_min_eigenvalue = 0.0;
  double reply_gap = 0.0;  // sup |reply terminal - candidate terminal|
  // Randomized play: the half/half mixture restores the zero field and keeps
  // both endpoints optimal.
  double mixture_field_sup = 0.0;
  double mixture_cost_gap = 0.0;
  int quadrature_points = 0;
  int gram_points = 0;
};

KernelCertificate no_solution_kernel(double T = 1.0, int quadrature_points = 2001,
                                     int gram_points = 201);

// Closed-form certificates for the terminal-constraint game with no
// equilibrium: minimize int u^2 dt + psi(x(T)) with xdot = u - b^2,
// |u| <= 1, x(T) in {0, T}, psi(0) = 0, psi(T) = -2T.  The zero field maps
// to the ramp x(t) = t; any nonzero field makes x(T) = T unreachable and the
// reply drops back to the zero-terminal branch, so the reply map alternates
// and has no fixed point.  The minimum cost jumps by T at b = 0.
struct TerminalConstraintCertificate {
  double T = 0.0;
  double zero_field_stay_cost = 0.0;   // branch x(T) = 0:  0
  double zero_field_move_cost = 0.0;   // branch x(T) = T:  -T
  double zero_field_reply_terminal = 0.0;  // = T (the ramp)
  double ramp_shortfall = 0.0;     // T - max reachable x(T) against the ramp
  double ramp_reply_cost = 0.0;    // cheapest zero-terminal reply cost
  double ramp_reply_terminal = 0.0;
  bool zero_field_not_fixed = false;
  bool ramp_not_fixed = false;
  double cost_jump_at_zero = 0.0;  // discontinuity of the value in b
};

TerminalConstraintCertificate no_solution_terminal(double T = 1.0,
                                                   int quadrature_points = 2001);

}  // namespace mfg::games
