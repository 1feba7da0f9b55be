#pragma once

// Independent cross-check for the per-player solve: transcribe the control
// problem with piecewise-constant controls on the same grid, integrate the
// state and running cost forward, and descend the exact discrete gradient
// (reverse accumulation through the integrator stages).  No adjoint ODE, no
// shooting; agreement with the backward solver is evidence, not tautology.

#include <cstdint>
#include <vector>

#include "mfg/pmp_solver.hpp"

namespace mfg {

struct DirectConfig {
  int starts = 64;             // first start is u == 0, rest random in the box
  double start_radius = 0.0;   // 0: control box when bounded, else 2*(1+|xbar|)
  int max_iter = 500;
  double accept_tol = 1e-7;    // projected-gradient residual to count a run
  double dedup_cost_tol = 1e-6;
  double dedup_point_tol = 1e-4;
  double blowup_limit = 1e10;
  uint64_t seed = 0x9e3779b97f4a7c15ull;
};

struct DirectSolution {
  Mat controls;             // control_dim x steps, one column per interval
  std::vector<Vec> states;  // grid nodes under those controls
  double cost = 0.0;
};

struct DirectResult {
  std::vector<DirectSolution> minima;  // distinct local minima, best first
  int failed_starts = 0;

  const DirectSolution& best() const { return minima.front(); }
};

// Cost of the transcribed problem at control matrix U; when grad is non-null
// it receives dJ/dU computed by reverse accumulation, exact for the discrete
// problem to roundoff.  Returns +inf when the forward pass leaves the guard
// ball (grad is zeroed in that case).
double direct_cost_and_gradient(const Vec& xbar, const OcpContext& ctx, const Mat& U, Mat* grad,
                                double blowup_limit = 1e10);

DirectResult solve_direct(const Vec& xbar, const OcpContext& ctx, const DirectConfig& cfg);

}  // namespace mfg
