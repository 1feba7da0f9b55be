#pragma once

// Linear stability of fixed points: finite-difference differential of the
// best-reply map on the grid-sampled moment space, closed-form spectrum for
// the barycenter-coupled scalar game, and a shooting scan for the eigenvalues
// of the linearized two-point boundary value problem.

#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "mfg/best_reply.hpp"
#include "mfg/core_model.hpp"
#include "mfg/fixed_point.hpp"
#include "mfg/pmp_solver.hpp"

namespace mfg {

// Central-difference Jacobian of eta -> Phi(eta) on the sample basis.  Sample
// (k, i) of the path maps to flat index k * N + i; the result is a dense
// (K+1)N x (K+1)N matrix.  step <= 0 selects 1e-5 * (1 + ||eta*||).
Mat jacobian_dphi(const MomentPath& eta_star, BestReplyMap& phi, double step = 0.0);

struct SpectrumReport {
  int dimension = 0;
  std::vector<std::complex<double>> eigenvalues;  // sorted by modulus, descending
  double spectral_radius = 0.0;
  double distance_to_one = 0.0;  // min |lambda - 1|
  std::optional<bool> consistent_with_probes;
};

SpectrumReport spectrum_of(const Mat& jacobian);

// True when the spectral verdict (radius vs 1) matches the probe verdict.
bool spectrum_matches_class(const SpectrumReport& report, StabilityClass cls);

// Leading eigenvector direction: unit-norm dominant real eigenvector sampled
// on the grid, sign-normalized to a nonnegative first significant entry.
Vec dominant_eigenvector(const Mat& jacobian);

struct AnalyticSpectrum {
  std::vector<double> eigenvalues;  // lambda_n, n = 1..n_max
  // Some lambda_n sits at a pole: kappa - 1 + ((2n-1) pi / (2T))^2 ~ 0.
  // Only reachable for kappa < 1.
  bool resonance = false;
};

// Spectrum of the linearized best-reply map for the scalar game with running
// cost kappa (x - b)^2 coupled through the barycenter, linearized at the zero
// fixed point: lambda_n = kappa / (kappa + ((2n-1) pi / (2T))^2 - 1) with
// eigenfunction sin((2n-1) pi t / (2T)).
AnalyticSpectrum analytic_spectrum_barycenter(double kappa, double T, int n_max);

// Samples of the n-th eigenfunction on a grid, normalized to sup norm 1.
Vec analytic_eigenfunction(int n, const TimeGrid& grid);

struct BvpScanConfig {
  double gamma_lo = -5.0;
  double gamma_hi = 5.0;
  int samples = 10000;         // mismatch evaluations across the range
  double exclusion = 1e-3;     // skip |gamma| below this (the map degenerates)
  double bisect_tol = 1e-10;
  int integration_steps = 2000;
};

// Eigenvalues gamma of the linearization at a nonzero fixed point y1 of the
// same game: values for which y'' = [kappa (1 - 1/gamma) + w(t)] y admits a
// nonzero solution with y(0) = 0, y'(T) = 0, where
// w = (3 y1^2 - 1) / (1 + y1^2)^3 along the fixed point.  Sign changes of
// y'(T; gamma) are bisected to bisect_tol.
std::vector<double> eigen_bvp_scan(const MomentPath& y1, double kappa, double T,
                                   const BvpScanConfig& cfg = {});

// Linearization of the two-point PMP system along a base trajectory:
// d/dt (X, P) = A(t) (X, P) with X(0) = 0 and P(T) = terminal_hessian X(T),
// plus the forcing direction injected by a unit barycenter perturbation.
struct LinearizedSystem {
  std::function<Mat(double)> coefficient;  // A(t), 2n x 2n
  Mat terminal_hessian;                    // D^2 psi at the base terminal point
  std::function<Vec(double)> forcing;      // d(rhs)/d(eta) direction, 2n
  int state_dim = 0;
};

LinearizedSystem linearize_pmp(const PMPTrajectory& base, const OcpContext& ctx);

// Determinant of the boundary operator P(T) - D^2 psi X(T) acting on the free
// initial adjoint; nonzero means the homogeneous problem only has the zero
// solution.
double transversal_determinant(const LinearizedSystem& sys, const TimeGrid& grid);

}  // namespace mfg
