#pragma once

// Open-loop optimal control of a single player against a frozen moment path.
//
// The optimality system is integrated backward from the terminal point: given
// a terminal state y, the adjoint starts at grad_psi(y) and the pair (x, p)
// runs back to t = 0 with the control eliminated pointwise.  Shooting on y
// matches x(0) to the player's start.  Several candidates can match; the cost
// functional then picks the optimal set.

#include <optional>
#include <vector>

#include "mfg/core_model.hpp"

namespace mfg {

// One extremal: states/adjoints/controls sampled at the grid nodes.
// controls[K] is the pointwise minimizer at the terminal node (diagnostic;
// it never enters the integration).
struct PMPTrajectory {
  TimeGrid grid;
  std::vector<Vec> states;
  std::vector<Vec> adjoints;
  std::vector<Vec> controls;
  double total_cost = 0.0;

  const Vec& terminal() const { return states.back(); }
  const Vec& initial() const { return states.front(); }
};

struct ShootingConfig {
  std::optional<Box> multistart_box;   // defaults to a ball around the target
  int multistart_per_axis = 9;
  double newton_tol = 1e-10;
  int max_newton_iter = 50;
  double jacobian_fd_step = 1e-6;      // relative; h = step * (1 + |y_j|)
  double jacobian_det_floor = 1e-8;    // abandon a start when |det| drops below
  double dedup_tol = 1e-6;
  double tie_tol = 1e-7;               // relative cost window for the optimal set
  double tie_separation = 0.1;         // terminal gap that counts as genuine multiplicity
  double blowup_limit = 1e8;
  std::vector<Vec> warm_starts;

  // When set and any warm start converges, the multi-start grid is skipped.
  // Safe only where the root structure is already known (derivative columns,
  // continuation); the full grid stays the default.
  bool warm_start_only = false;

  // Filled by the best-reply layer; candidates violating them are dropped
  // from the optimal set with a diagnostic.
  std::optional<double> state_bound;
  std::optional<double> control_bound_value;
};

// Everything the per-player solver needs, by reference.  The grid is the
// moment path's grid.
struct OcpContext {
  const ControlAffineDynamics& dynamics;
  const RunningCost& running_cost;
  const TerminalCost& terminal_cost;
  const MomentPath& eta;

  const TimeGrid& grid() const { return eta.grid(); }
};

// argmin_u [ L(t,x,u,eta) + p . f(t,x,u,eta) ] over the control box.
// Projected Newton from u_init (zeros if empty); the minimand is strictly
// convex in u so the solve is local-free.  Throws SolverError on stall.
Vec pointwise_control(double t, const Vec& x, const Vec& p, const Vec& eta_t,
                      const ControlAffineDynamics& dyn, const RunningCost& cost,
                      const Vec& u_init = Vec());

// Backward sweep from terminal state y.  The running cost is accumulated in
// an extra component so total_cost = psi(y, eta(T)) - c(0) needs no second
// pass.  Throws DivergenceError when the augmented state leaves the guard
// ball before reaching t = 0.
PMPTrajectory integrate_pmp_backward(const Vec& y, const OcpContext& ctx,
                                     double blowup_limit = 1e8);

// Same sweep with an explicit terminal adjoint instead of grad_psi(y), for
// terminal-constrained solves where transversality is replaced by a pin on
// the initial point.  total_cost still includes psi(y, eta(T)).
PMPTrajectory integrate_pmp_backward_free(const Vec& y, const Vec& terminal_adjoint,
                                          const OcpContext& ctx, double blowup_limit = 1e8);

// Forward re-integration of the state under the trajectory's controls,
// interpolated linearly between nodes.  Consistency diagnostic: the result
// should land on trajectory.terminal() up to integrator error.
Vec reintegrate_forward(const PMPTrajectory& traj, const OcpContext& ctx);

struct ShootingDiagnostics {
  int starts_tried = 0;
  int diverged = 0;            // backward sweep blew up
  int singular = 0;            // Jacobian determinant under the floor
  int stalled = 0;             // Newton hit the iteration cap
  int converged = 0;
};

// All terminal points y with x(0; y) = xbar found by damped-Newton shooting
// from a deterministic start set, deduplicated, sorted lexicographically.
// Throws NoCandidateError when every start fails.
std::vector<Vec> shoot(const Vec& xbar, const OcpContext& ctx, const ShootingConfig& cfg,
                       ShootingDiagnostics* diag = nullptr);

struct OCPSolution {
  std::vector<PMPTrajectory> candidates;   // all shooting roots, cost attached
  std::vector<int> optimal;                // indices into candidates, cost-tied
  bool multiplicity = false;               // optimal set spread past tie_separation
  int selected = -1;                       // lexicographically smallest terminal among optimal
  std::vector<std::string> notes;          // bound violations, dropped candidates

  const PMPTrajectory& best() const { return candidates[static_cast<size_t>(selected)]; }
};

OCPSolution solve_ocp(const Vec& xbar, const OcpContext& ctx, const ShootingConfig& cfg);

// Value of the terminal-constrained problem as a function of the terminal
// point: for each grid point y, the adjoint's terminal value is shot so the
// extremal from y lands on xbar at t = 0, and the entry records the total
// cost along that extremal.  Minima of the profile sit at the shooting roots
// of the unconstrained problem.
struct ValueProfilePoint {
  double y = 0.0;
  double cost = 0.0;
  bool ok = false;   // false when the constrained solve failed at this y
};

std::vector<ValueProfilePoint> scan_terminal_scalar(const Vec& xbar, const OcpContext& ctx,
                                                    double y_lo, double y_hi, int samples,
                                                    const ShootingConfig& cfg);

}  // namespace mfg
