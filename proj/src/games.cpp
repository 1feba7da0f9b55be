#include "mfg/games.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mfg/numerics.hpp"

namespace mfg::games {

namespace {

PlayerEnsemble single_player(const Vec& start) {
  PlayerEnsemble e;
  e.labels = {0.5};
  e.weights = {1.0};
  e.initial_points = {start};
  return e;
}

MomentKernelSet barycenter_kernels(int n) {
  MomentKernelSet set;
  for (int i = 0; i < n; ++i) {
    set.kernels.push_back([i](double, const Vec& x) { return x[i]; });
    set.grads.push_back([i, n](double, const Vec&) {
      Vec g = Vec::Zero(n);
      g[i] = 1.0;
      return g;
    });
  }
  return set;
}

ControlAffineDynamics integrator_dynamics(int n) {
  ControlAffineDynamics dyn;
  dyn.state_dim = n;
  dyn.control_dim = n;
  dyn.drift = [n](double, const Vec&, const Vec&) { return Vec::Zero(n); };
  dyn.drift_dx = [n](double, const Vec&, const Vec&) { return Mat::Zero(n, n); };
  for (int i = 0; i < n; ++i) {
    dyn.fields.push_back([i, n](double, const Vec&, const Vec&) {
      Vec f = Vec::Zero(n);
      f[i] = 1.0;
      return f;
    });
    dyn.fields_dx.push_back([n](double, const Vec&, const Vec&) { return Mat::Zero(n, n); });
  }
  dyn.sublinear_c1 = 1.0;
  return dyn;
}

// Real roots of a y^3 + b y^2 + c y + d = 0, ascending.  Trigonometric form
// for the three-root case, Cardano otherwise.
std::vector<double> solve_cubic(double a, double b, double c, double d) {
  if (a == 0.0) throw std::invalid_argument("solve_cubic: leading coefficient is zero");
  b /= a;
  c /= a;
  d /= a;
  const double p = c - b * b / 3.0;
  const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
  const double shift = -b / 3.0;
  const double disc = q * q / 4.0 + p * p * p / 27.0;

  std::vector<double> roots;
  if (disc > 0.0) {
    const double s = std::sqrt(disc);
    const double u = std::cbrt(-q / 2.0 + s);
    const double v = std::cbrt(-q / 2.0 - s);
    roots.push_back(shift + u + v);
  } else if (p == 0.0) {
    roots.push_back(shift);
  } else {
    const double r = std::sqrt(-p * p * p / 27.0);
    const double phi = std::acos(std::clamp(-q / (2.0 * r), -1.0, 1.0));
    const double m = 2.0 * std::sqrt(-p / 3.0);
    for (int k = 0; k < 3; ++k)
      roots.push_back(shift + m * std::cos((phi + 2.0 * M_PI * k) / 3.0));
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [](double x, double y) { return std::abs(x - y) < 1e-12; }),
              roots.end());
  return roots;
}

}  // namespace

TwoWellGame build_two_well(double kappa, double T, int grid_steps) {
  if (!(kappa > 1.0))
    throw std::invalid_argument("two-well game: kappa must exceed 1");
  // T >= 2 admits the boundary case used by the spectrum experiments; the
  // symmetric nonzero pair additionally needs T > 2, guarded where it is
  // actually constructed.
  if (!(T >= 2.0)) throw std::invalid_argument("two-well game: horizon must be at least 2");

  TwoWellGame game;
  game.kappa = kappa;
  game.T = T;

  GameSpec& spec = game.spec;
  spec.grid = TimeGrid(T, grid_steps);
  spec.dynamics = integrator_dynamics(1);

  RunningCost cost;
  cost.value = [kappa](double, const Vec& x, const Vec& u, const Vec& eta) {
    const double dx = x[0] - eta[0];
    return u[0] * u[0] + 1.0 / (1.0 + x[0] * x[0]) + kappa * dx * dx;
  };
  cost.grad_x = [kappa](double, const Vec& x, const Vec&, const Vec& eta) {
    const double s = 1.0 + x[0] * x[0];
    Vec g(1);
    g[0] = -2.0 * x[0] / (s * s) + 2.0 * kappa * (x[0] - eta[0]);
    return g;
  };
  cost.grad_u = [](double, const Vec&, const Vec& u, const Vec&) {
    return (2.0 * u).eval();
  };
  cost.hess_uu = [](double, const Vec&, const Vec&, const Vec&) {
    return (2.0 * Mat::Identity(1, 1)).eval();
  };
  cost.convexity_modulus = 2.0;
  cost.quadratic_lower_c2 = 1.0;
  spec.running_cost = cost;

  TerminalCost term;
  term.value = [](const Vec&, const Vec&) { return 0.0; };
  term.gradient = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
  term.hessian = [](const Vec&, const Vec&) { return Mat::Zero(1, 1).eval(); };
  spec.terminal_cost = term;

  spec.moments = barycenter_kernels(1);
  spec.players = single_player(Vec::Zero(1));
  spec.declared_radius = 6.0;
  Box box;
  box.lo = Vec::Constant(1, -4.0);
  box.hi = Vec::Constant(1, 4.0);
  spec.shooting_box = box;
  // kappa > 1 makes the running cost strictly convex in (x, u) jointly, so
  // the frozen-path problem has one optimum for every moment path.
  spec.unique_optimum_declared = true;
  return game;
}

Vec RotationGame::planar_map(const Vec& z) const {
  const double r2 = z.squaredNorm();
  if (!rotating) return z / (1.0 + r2);
  const double c = std::cos(theta0), s = std::sin(theta0);
  Vec out(2);
  out[0] = c * z[0] - s * z[1];
  out[1] = s * z[0] + c * z[1];
  return (2.0 / (1.0 + r2)) * out;
}

double RotationGame::radius_map(double r) const {
  return rotating ? 2.0 * r / (1.0 + r * r) : r / (1.0 + r * r);
}

Vec RotationGame::terminal_target(const Vec& z) const {
  return ((1.0 + T) / T) * planar_map(z);
}

MomentPath RotationGame::best_reply_closed_form(const MomentPath& b) const {
  const TimeGrid& grid = b.grid();
  const Vec y = planar_map(b.at(grid.horizon()));
  Mat samples(2, grid.size());
  for (int k = 0; k < grid.size(); ++k) samples.col(k) = (grid.node(k) / T) * y;
  return MomentPath(grid, std::move(samples));
}

RotationGame build_rotation(bool rotating, double theta0, double T, int grid_steps) {
  if (!(T > 0.0)) throw std::invalid_argument("rotation game: horizon must be positive");

  RotationGame game;
  game.T = T;
  game.theta0 = theta0;
  game.rotating = rotating;

  GameSpec& spec = game.spec;
  spec.grid = TimeGrid(T, grid_steps);
  spec.dynamics = integrator_dynamics(2);

  RunningCost cost;
  cost.value = [](double, const Vec&, const Vec& u, const Vec&) { return u.squaredNorm(); };
  cost.grad_x = [](double, const Vec&, const Vec&, const Vec&) {
    return Vec::Zero(2).eval();
  };
  cost.grad_u = [](double, const Vec&, const Vec& u, const Vec&) { return (2.0 * u).eval(); };
  cost.hess_uu = [](double, const Vec&, const Vec&, const Vec&) {
    return (2.0 * Mat::Identity(2, 2)).eval();
  };
  cost.convexity_modulus = 2.0;
  cost.quadratic_lower_c2 = 1.0;
  spec.running_cost = cost;

  // The terminal target is computed from the horizon sample of the moment
  // path; capture the map by value so the spec is self-contained.
  const RotationGame map_copy = game;
  TerminalCost term;
  term.value = [map_copy](const Vec& x, const Vec& eta_T) {
    return (x - map_copy.terminal_target(eta_T)).squaredNorm();
  };
  term.gradient = [map_copy](const Vec& x, const Vec& eta_T) {
    return (2.0 * (x - map_copy.terminal_target(eta_T))).eval();
  };
  term.hessian = [](const Vec&, const Vec&) { return (2.0 * Mat::Identity(2, 2)).eval(); };
  spec.terminal_cost = term;

  spec.moments = barycenter_kernels(2);
  spec.players = single_player(Vec::Zero(2));
  spec.declared_radius = 4.0;
  spec.unique_optimum_declared = true;
  return game;
}

GameSpec build_double_well(double T, int grid_steps, double tilt) {
  if (!(T > 0.0)) throw std::invalid_argument("double well: horizon must be positive");

  GameSpec spec;
  spec.grid = TimeGrid(T, grid_steps);
  spec.dynamics = integrator_dynamics(1);

  RunningCost cost;
  cost.value = [](double, const Vec&, const Vec& u, const Vec&) { return u[0] * u[0]; };
  cost.grad_x = [](double, const Vec&, const Vec&, const Vec&) {
    return Vec::Zero(1).eval();
  };
  cost.grad_u = [](double, const Vec&, const Vec& u, const Vec&) { return (2.0 * u).eval(); };
  cost.hess_uu = [](double, const Vec&, const Vec&, const Vec&) {
    return (2.0 * Mat::Identity(1, 1)).eval();
  };
  cost.convexity_modulus = 2.0;
  cost.quadratic_lower_c2 = 1.0;
  spec.running_cost = cost;

  TerminalCost term;
  term.value = [tilt](const Vec& x, const Vec&) {
    const double w = x[0] * x[0] - 1.0;
    return w * w + tilt * x[0];
  };
  term.gradient = [tilt](const Vec& x, const Vec&) {
    Vec g(1);
    g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) + tilt;
    return g;
  };
  term.hessian = [](const Vec& x, const Vec&) {
    Mat h(1, 1);
    h(0, 0) = 12.0 * x[0] * x[0] - 4.0;
    return h;
  };
  spec.terminal_cost = term;

  spec.moments = barycenter_kernels(1);
  spec.players = single_player(Vec::Zero(1));
  spec.declared_radius = 6.0;
  // Initial points near the symmetry axis split the optimal set between the
  // wells; that multiplicity is the object of interest here.
  spec.unique_optimum_declared = false;
  return spec;
}

DoubleWellCandidates double_well_candidates(double xbar, double T, double tilt) {
  if (!(T > 0.0)) throw std::invalid_argument("double well: horizon must be positive");
  // Constant-control extremals: u = (y - xbar)/T and stationarity in y give
  // 4 y^3 + (2/T - 4) y + (tilt - 2 xbar / T) = 0.
  DoubleWellCandidates out;
  out.terminals = solve_cubic(4.0, 0.0, 2.0 / T - 4.0, tilt - 2.0 * xbar / T);
  for (double y : out.terminals) {
    const double w = y * y - 1.0;
    out.costs.push_back((y - xbar) * (y - xbar) / T + w * w + tilt * y);
  }
  return out;
}

GameSpec build_lq_target(double target, double T, int grid_steps) {
  if (!(T > 0.0)) throw std::invalid_argument("lq target: horizon must be positive");

  GameSpec spec;
  spec.grid = TimeGrid(T, grid_steps);
  spec.dynamics = integrator_dynamics(1);

  RunningCost cost;
  cost.value = [](double, const Vec&, const Vec& u, const Vec&) { return u[0] * u[0]; };
  cost.grad_x = [](double, const Vec&, const Vec&, const Vec&) {
    return Vec::Zero(1).eval();
  };
  cost.grad_u = [](double, const Vec&, const Vec& u, const Vec&) { return (2.0 * u).eval(); };
  cost.hess_uu = [](double, const Vec&, const Vec&, const Vec&) {
    return (2.0 * Mat::Identity(1, 1)).eval();
  };
  cost.convexity_modulus = 2.0;
  cost.quadratic_lower_c2 = 1.0;
  spec.running_cost = cost;

  TerminalCost term;
  term.value = [target](const Vec& x, const Vec&) {
    const double d = x[0] - target;
    return d * d;
  };
  term.gradient = [target](const Vec& x, const Vec&) {
    Vec g(1);
    g[0] = 2.0 * (x[0] - target);
    return g;
  };
  term.hessian = [](const Vec&, const Vec&) { return (2.0 * Mat::Identity(1, 1)).eval(); };
  spec.terminal_cost = term;

  spec.moments = barycenter_kernels(1);
  spec.players = single_player(Vec::Zero(1));
  spec.declared_radius = 2.0 * (std::abs(target) + 1.0);
  spec.unique_optimum_declared = true;
  return spec;
}

double orbit_energy(double y, double ydot) {
  return 0.5 * ydot * ydot - 0.5 / (1.0 + y * y);
}

namespace {

// Integrate y'' = -y / (1+y^2)^2 from (0, c/sqrt(1+c^2)) and return the
// trajectory at the grid nodes.
struct ElOrbit {
  Vec y, v;
};

ElOrbit integrate_el(double c, const TimeGrid& grid) {
  auto rhs = [](double, const Vec& z, Vec& out) {
    const double s = 1.0 + z[0] * z[0];
    out[0] = z[1];
    out[1] = -z[0] / (s * s);
  };
  Rk4Stepper<decltype(rhs)> stepper(2);
  Vec z(2);
  z << 0.0, c / std::sqrt(1.0 + c * c);

  ElOrbit orbit;
  orbit.y.resize(grid.size());
  orbit.v.resize(grid.size());
  orbit.y[0] = z[0];
  orbit.v[0] = z[1];
  for (int k = 0; k < grid.steps(); ++k) {
    stepper.step(rhs, grid.node(k), grid.dt(), z);
    orbit.y[k + 1] = z[0];
    orbit.v[k + 1] = z[1];
  }
  return orbit;
}

}  // namespace

MonotoneSolution solve_el_monotone(double T, double tol, int grid_steps) {
  if (!(T > M_PI / 2.0))
    throw NoCandidateError("monotone branch: no turning solution for this horizon");
  if (grid_steps < 2) throw std::invalid_argument("monotone branch: grid too coarse");

  const TimeGrid grid(T, grid_steps);
  auto terminal_velocity = [&](double c) { return integrate_el(c, grid).v[grid.steps()]; };

  // v(T; c) < 0 once the orbit has turned before T (small c) and > 0 while it
  // is still rising (large c); bracket by walking from c = 1.
  double lo = 1.0, hi = 1.0;
  double flo = terminal_velocity(1.0);
  if (flo > 0.0) {
    hi = 1.0;
    while (flo > 0.0) {
      hi = lo;
      lo *= 0.5;
      if (lo < 1e-8)
        throw NoCandidateError("monotone branch: no sign change while shrinking c");
      flo = terminal_velocity(lo);
    }
  } else {
    while (terminal_velocity(hi) <= 0.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e8)
        throw NoCandidateError("monotone branch: no sign change while growing c");
    }
  }

  while (hi - lo > tol * (1.0 + hi)) {
    const double mid = 0.5 * (lo + hi);
    if (terminal_velocity(mid) <= 0.0) lo = mid;
    else hi = mid;
  }
  const double c = 0.5 * (lo + hi);

  ElOrbit orbit = integrate_el(c, grid);
  MonotoneSolution sol;
  sol.turning_height = c;
  sol.grid = grid;
  sol.nodes = orbit.y;
  sol.velocity = orbit.v;
  sol.terminal_gap = std::abs(orbit.y[grid.steps()] - c);
  const double e0 = orbit_energy(orbit.y[0], orbit.v[0]);
  double drift = 0.0;
  for (int k = 0; k <= grid.steps(); ++k)
    drift = std::max(drift, std::abs(orbit_energy(orbit.y[k], orbit.v[k]) - e0));
  sol.energy_drift = drift;
  return sol;
}

SqrtBranch integrate_sqrt_branch(double c, const TimeGrid& grid) {
  // Angular form y = c sin(theta): theta' = 1 / sqrt((1 + c^2 sin^2 th)(1 + c^2)).
  // Smooth through the turn, so it parameterizes the orbit globally.
  const double root = std::sqrt(1.0 + c * c);
  auto rhs = [c, root](double, const Vec& z, Vec& out) {
    const double s = c * std::sin(z[0]);
    out[0] = 1.0 / (root * std::sqrt(1.0 + s * s));
  };
  Rk4Stepper<decltype(rhs)> stepper(1);
  Vec z(1);
  z << 0.0;

  SqrtBranch branch;
  branch.nodes.resize(grid.size());
  branch.nodes[0] = 0.0;
  branch.turning_time = -1.0;
  double prev_theta = 0.0;
  for (int k = 0; k < grid.steps(); ++k) {
    stepper.step(rhs, grid.node(k), grid.dt(), z);
    branch.nodes[k + 1] = c * std::sin(z[0]);
    if (branch.turning_time < 0.0 && z[0] >= M_PI / 2.0) {
      const double frac = (M_PI / 2.0 - prev_theta) / (z[0] - prev_theta);
      branch.turning_time = grid.node(k) + frac * grid.dt();
    }
    prev_theta = z[0];
  }
  return branch;
}

double turning_time(double c) {
  // t*(c) = sqrt(1+c^2) * integral_0^{pi/2} sqrt(1 + c^2 sin^2 th) dth,
  // by composite Simpson on the smooth integrand.
  const int panels = 2048;
  const double h = (M_PI / 2.0) / panels;
  auto f = [c](double th) {
    const double s = c * std::sin(th);
    return std::sqrt(1.0 + s * s);
  };
  double sum = f(0.0) + f(M_PI / 2.0);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return std::sqrt(1.0 + c * c) * sum * h / 3.0;
}

SynthesizedMFG synthesize_mfg(const GameSpec& base, const PMPTrajectory& pmp_solution,
                              double kappa) {
  base.validate();
  if (!(kappa > 0.0)) throw std::invalid_argument("synthesize: kappa must be positive");
  if (!(pmp_solution.grid == base.grid))
    throw std::invalid_argument("synthesize: trajectory grid does not match the base game");
  const int n = base.dynamics.state_dim;

  // Reference moment path: every player rides the prescribed trajectory, so
  // the synthesized barycenter equals its state samples.
  Mat ref(n, base.grid.size());
  for (int k = 0; k < base.grid.size(); ++k) ref.col(k) = pmp_solution.states[static_cast<size_t>(k)];
  MomentPath reference(base.grid, ref);

  // Re-derive the extremal through the trajectory's terminal point under the
  // base costs and check it lands on the same initial point.  The base costs
  // see the synthesized (barycenter) moment layout here, so this builder is
  // for bases whose costs ignore the moment argument.
  double residual = 0.0;
  {
    OcpContext ctx{base.dynamics, base.running_cost, base.terminal_cost, reference};
    PMPTrajectory check = integrate_pmp_backward(pmp_solution.terminal(), ctx);
    residual = (check.initial() - pmp_solution.initial()).cwiseAbs().maxCoeff() /
               (1.0 + pmp_solution.initial().cwiseAbs().maxCoeff());
    if (!(residual < 1e-8)) {
      std::ostringstream os;
      os << "synthesize: trajectory fails the base optimality system, residual " << residual;
      throw PreconditionError(os.str());
    }
  }

  SynthesizedMFG out;
  out.kappa = kappa;
  out.base_pmp_residual = residual;

  GameSpec& spec = out.spec;
  spec = base;
  spec.moments = barycenter_kernels(n);
  spec.players = single_player(pmp_solution.initial());

  const RunningCost base_cost = base.running_cost;
  RunningCost cost = base_cost;
  cost.value = [base_cost, kappa, n](double t, const Vec& x, const Vec& u, const Vec& eta) {
    return base_cost.value(t, x, u, eta) + kappa * (x - eta.head(n)).squaredNorm();
  };
  cost.grad_x = [base_cost, kappa, n](double t, const Vec& x, const Vec& u, const Vec& eta) {
    return (base_cost.eval_grad_x(t, x, u, eta) + 2.0 * kappa * (x - eta.head(n))).eval();
  };
  spec.running_cost = cost;

  double ref_sup = 0.0;
  for (const auto& x : pmp_solution.states) ref_sup = std::max(ref_sup, x.cwiseAbs().maxCoeff());
  spec.declared_radius = std::max(base.declared_radius.value_or(0.0), 2.0 * (ref_sup + 1.0));
  // Strong coupling dominates any terminal nonconvexity, restoring a unique
  // frozen-path optimum.
  spec.unique_optimum_declared = kappa >= 10.0;

  out.reference = std::move(reference);
  return out;
}

KernelCertificate no_solution_kernel(double T, int quadrature_points, int gram_points) {
  if (!(T > 0.0)) throw std::invalid_argument("kernel certificate: T must be positive");
  if (quadrature_points < 3 || gram_points < 3)
    throw std::invalid_argument("kernel certificate: too few quadrature points");

  KernelCertificate cert;
  cert.T = T;
  cert.quadrature_points = quadrature_points;
  cert.gram_points = gram_points;

  const int q = quadrature_points;
  const double h = 1.0 / (q - 1);
  auto weight = [&](int i) { return (i == 0 || i == q - 1) ? 0.5 * h : h; };

  // Zero field: every label is indifferent between the endpoints +/-T, so
  // the tie carries the whole population.
  double gap = 0.0;
  for (int i = 0; i < q; ++i) {
    const double plus = T * T;   // |T - 0|^2
    const double minus = T * T;  // |-T - 0|^2
    gap = std::max(gap, std::abs(plus - minus));
  }
  cert.tie_mass = 1.0;
  cert.tie_cost_gap = gap;

  // All-right selection from the tie: x(T, zeta) = T.  The induced field is
  // T * (sqrt(pi)/2) (erf(1 - xi) + erf(xi)), minimized at the labels' ends.
  auto b_allright = [T](double xi) {
    return T * (std::sqrt(M_PI) / 2.0) * (std::erf(1.0 - xi) + std::erf(xi));
  };
  double bmin = std::numeric_limits<double>::infinity();
  double abs_integral = 0.0;
  for (int i = 0; i < q; ++i) {
    const double xi = i * h;
    const double b = b_allright(xi);
    bmin = std::min(bmin, b);
    abs_integral += weight(i) * std::abs(b);
  }
  cert.induced_field_min_over_T = bmin / T;

  // A field bounded away from zero forces the reply to the opposite
  // endpoint, so an equilibrium selection would make the kernel form
  // negative; its Gram discretization certifies positive semidefiniteness.
  cert.equilibrium_form_value = -T * abs_integral;
  cert.reply_gap = 2.0 * T;

  Mat gram(gram_points, gram_points);
  const double gw = 1.0 / gram_points;
  for (int j = 0; j < gram_points; ++j) {
    const double xj = (j + 0.5) * gw;
    for (int k = 0; k < gram_points; ++k) {
      const double xk = (k + 0.5) * gw;
      gram(j, k) = gw * gw * std::exp(-(xj - xk) * (xj - xk));
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
  cert.gram_min_eigenvalue = eig.eigenvalues().minCoeff();

  // Half/half randomization over the tie cancels the field exactly and keeps
  // both endpoints optimal, which is the mild solution.
  double mix_sup = 0.0, mix_gap = 0.0;
  for (int i = 0; i < q; ++i) {
    const double mean_terminal = 0.5 * T + 0.5 * (-T);
    double b = 0.0;
    for (int j = 0; j < q; ++j) {
      const double zj = j * h;
      const double xi = i * h;
      b += weight(j) * std::exp(-(zj - xi) * (zj - xi)) * mean_terminal;
    }
    mix_sup = std::max(mix_sup, std::abs(b));
    const double plus = (T - b) * (T - b);
    const double minus = (-T - b) * (-T - b);
    mix_gap = std::max(mix_gap, std::abs(plus - minus));
  }
  cert.mixture_field_sup = mix_sup;
  cert.mixture_cost_gap = mix_gap;
  return cert;
}

TerminalConstraintCertificate no_solution_terminal(double T, int quadrature_points) {
  if (!(T > 0.0)) throw std::invalid_argument("terminal certificate: T must be positive");
  if (T * T * T / 3.0 > T)
    throw std::invalid_argument(
        "terminal certificate: compensating the ramp needs T <= sqrt(3)");
  if (quadrature_points < 3)
    throw std::invalid_argument("terminal certificate: too few quadrature points");

  TerminalConstraintCertificate cert;
  cert.T = T;

  // Zero field, b = 0: staying at x = 0 costs 0, driving to x(T) = T with
  // u = 1 costs T + psi(T) = -T, so the reply is the ramp.
  cert.zero_field_stay_cost = 0.0;
  cert.zero_field_move_cost = T - 2.0 * T;
  cert.zero_field_reply_terminal = T;
  cert.zero_field_not_fixed = cert.zero_field_move_cost < cert.zero_field_stay_cost;

  // Against the ramp b(t) = t the drain b^2 integrates to T^3/3 > 0, so
  // x(T) = T is out of reach and the reply must take the zero-terminal
  // branch; the cheapest compensating control is constant.
  const int q = quadrature_points;
  const double h = T / (q - 1);
  double drain = 0.0;
  for (int i = 0; i < q; ++i) {
    const double w = (i == 0 || i == q - 1) ? 0.5 * h : h;
    const double t = i * h;
    drain += w * t * t;
  }
  cert.ramp_shortfall = drain;  // T - (T - drain)
  const double u = drain / T;
  cert.ramp_reply_cost = u * u * T;  // + psi(0) = 0
  cert.ramp_reply_terminal = u * T - drain;
  cert.ramp_not_fixed = true;  // the reply ends at 0, the ramp at T

  // Against any nonzero field the optimal cost is >= 0 and tends to 0 as the
  // field shrinks, while at the zero field it drops to -T.
  cert.cost_jump_at_zero = 0.0 - cert.zero_field_move_cost;
  return cert;
}

}  // namespace mfg::games
