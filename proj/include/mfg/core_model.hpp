#pragma once

// Model layer: time grid, moment paths, dynamics/cost/kernel/ensemble types,
// the assembled game description, and the validation utilities (derivative
// checks, a-priori radius/control/moment bounds) everything downstream
// leans on.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfg/numerics.hpp"

namespace mfg {

class TimeGrid {
 public:
  TimeGrid() : horizon_(1.0), steps_(1) {}
  TimeGrid(double horizon, int steps);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int size() const { return steps_ + 1; }  // node count
  double dt() const { return horizon_ / steps_; }
  // node(k) = k*T/K; node(K) == horizon exactly.
  double node(int k) const;

  bool operator==(const TimeGrid& o) const {
    return horizon_ == o.horizon_ && steps_ == o.steps_;
  }

 private:
  double horizon_;
  int steps_;
};

// Piecewise-linear path of moment values on a shared grid. Samples are the
// (N x K+1) matrix; evaluation off the grid interpolates, evaluation outside
// [0, T] (beyond a roundoff allowance) is a domain error.
class MomentPath {
 public:
  MomentPath() = default;
  MomentPath(TimeGrid grid, int n_moments);
  MomentPath(TimeGrid grid, Mat samples);

  static MomentPath constant(TimeGrid grid, const Vec& value);

  const TimeGrid& grid() const { return grid_; }
  int moment_count() const { return static_cast<int>(samples_.rows()); }
  Mat& samples() { return samples_; }
  const Mat& samples() const { return samples_; }

  Vec at(double t) const;
  double sup_norm() const;
  // Diagnostic only: max third divided difference, ~ sup |d^3 eta/dt^3|.
  double c3_seminorm() const;

 private:
  TimeGrid grid_;
  Mat samples_;
};

inline double sup_distance(const MomentPath& a, const MomentPath& b) {
  return (a.samples() - b.samples()).cwiseAbs().maxCoeff();
}

// f(t,x,u,eta) = drift(t,x,eta) + sum_i fields[i](t,x,eta) * u_i.
// State partials are optional; missing ones fall back to central
// differences of the assembled field.
struct ControlAffineDynamics {
  int state_dim = 0;
  int control_dim = 0;

  using FieldFn = std::function<Vec(double, const Vec&, const Vec&)>;
  using FieldDxFn = std::function<Mat(double, const Vec&, const Vec&)>;

  FieldFn drift;                    // f0(t, x, eta)
  std::vector<FieldFn> fields;      // f_1..f_m
  FieldDxFn drift_dx;               // optional
  std::vector<FieldDxFn> fields_dx; // optional, may be shorter than fields

  std::optional<Vec> control_lo, control_hi;  // box bounds on u
  std::optional<double> sublinear_c1;         // |f_i| <= c1 (|x|+1) declared

  Vec eval(double t, const Vec& x, const Vec& u, const Vec& eta) const;
  // n x m matrix whose columns are the control fields at (t, x, eta).
  Mat control_matrix(double t, const Vec& x, const Vec& eta) const;
  // d f / d x at fixed u; supplied partials when complete, else FD.
  Mat eval_dx(double t, const Vec& x, const Vec& u, const Vec& eta) const;

  bool has_bounds() const { return control_lo.has_value() || control_hi.has_value(); }
  Vec clamp(Vec u) const;
};

struct RunningCost {
  using ValueFn = std::function<double(double, const Vec&, const Vec&, const Vec&)>;
  using GradFn = std::function<Vec(double, const Vec&, const Vec&, const Vec&)>;
  using HessFn = std::function<Mat(double, const Vec&, const Vec&, const Vec&)>;

  ValueFn value;   // L(t, x, u, eta)
  GradFn grad_x;   // optional
  GradFn grad_u;   // optional
  HessFn hess_uu;  // optional
  double convexity_modulus = 0.0;          // delta_L > 0 (A2)
  std::optional<double> quadratic_lower_c2;  // L >= c2 (|u|^2 - 1) declared

  Vec eval_grad_x(double t, const Vec& x, const Vec& u, const Vec& eta) const;
  Vec eval_grad_u(double t, const Vec& x, const Vec& u, const Vec& eta) const;
  Mat eval_hess_uu(double t, const Vec& x, const Vec& u, const Vec& eta) const;
};

// Terminal cost psi(x, eta_T). The moment sample at the horizon is part of
// the signature because the rotation games pay |x - c(b(T))|^2; games with
// eta-independent terminal cost ignore the second argument.
struct TerminalCost {
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> gradient;  // optional
  std::function<Mat(const Vec&, const Vec&)> hessian;   // optional
  bool positive_declared = false;  // psi > 0 claimed on the reachable ball

  Vec eval_gradient(const Vec& x, const Vec& eta_T) const;
  Mat eval_hessian(const Vec& x, const Vec& eta_T) const;
};

struct MomentKernelSet {
  using KernelFn = std::function<double(double, const Vec&)>;
  using KernelGradFn = std::function<Vec(double, const Vec&)>;

  std::vector<KernelFn> kernels;      // phi_i(t, x)
  std::vector<KernelGradFn> grads;    // optional, may be shorter

  int count() const { return static_cast<int>(kernels.size()); }
  Vec eval(double t, const Vec& x) const;
  Vec eval_grad(int i, double t, const Vec& x) const;
};

struct PlayerEnsemble {
  std::vector<double> labels;          // xi_j in [0,1]
  std::vector<double> weights;         // w_j > 0, sum = 1
  std::vector<Vec> initial_points;     // xbar(xi_j)

  int size() const { return static_cast<int>(labels.size()); }
  double initial_sup_norm() const;

  // count midpoint nodes xi_j = (j+1/2)/count with uniform weights.
  static PlayerEnsemble midpoint(int count, const std::function<Vec(double)>& xbar);
};

struct Box {
  Vec lo, hi;
};

struct GameSpec {
  ControlAffineDynamics dynamics;
  RunningCost running_cost;
  TerminalCost terminal_cost;
  MomentKernelSet moments;
  PlayerEnsemble players;
  TimeGrid grid;

  // Builder-declared a-priori data. declared_radius short-circuits the
  // reachable-ball growth chain; shooting_box is the terminal-point
  // multi-start region.
  std::optional<double> declared_radius;
  std::optional<Box> shooting_box;

  // Builder's promise that every frozen-path control problem has a unique
  // optimum; repeated best-reply evaluations may then skip the multi-start
  // grid once a warm start converges.
  bool unique_optimum_declared = false;

  // Throws std::invalid_argument on any dimensional mismatch.
  void validate() const;
};

struct DerivativeCheck {
  std::string name;
  double max_rel_error = 0.0;
  bool ok = true;
  std::string failure;  // non-empty on non-finite values etc.
};

struct ValidationReport {
  std::vector<DerivativeCheck> checks;
  double flag_threshold = 1e-4;
  bool all_ok = true;
  const DerivativeCheck* find(const std::string& name) const;
};

// Compares every supplied partial against central finite differences at
// seeded random probes inside the reachable ball (x), the control box or a
// moderate box (u), and a moderate moment ball (eta). Also evaluates the
// declared structure flags (sublinearity, quadratic lower bound, L_uu
// positivity, psi positivity). Non-finite values become named failures.
ValidationReport check_derivatives(const GameSpec& spec, int probes, uint64_t seed);

// A-priori reachable radius beta0. Declared radius wins; otherwise the
// energy/Gronwall chain from the declared growth constants; otherwise the
// u == 0 flow with safety factor 2. The chain overestimates on purpose (it
// exponentiates the L2 control bound); it is a guard scale, not a sharp
// bound.
double reachable_radius(const GameSpec& spec);

// A-priori sup bound on pointwise-optimal controls, from stationarity
// L_u + p.f_u = 0, uniform convexity, and the adjoint growth estimate.
double control_bound(const GameSpec& spec);

// gamma0 = sqrt(sum_i max_{t, |x| <= beta0} |phi_i(t,x)|^2), grid maximized.
double moment_bound(const GameSpec& spec);

}  // namespace mfg
