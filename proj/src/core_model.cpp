#include "mfg/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfg {

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || steps < 1)
    throw std::invalid_argument("TimeGrid: need horizon > 0 and steps >= 1");
}

double TimeGrid::node(int k) const {
  if (k < 0 || k > steps_) throw std::out_of_range("TimeGrid::node: index");
  if (k == steps_) return horizon_;  // exact right endpoint
  return horizon_ * static_cast<double>(k) / static_cast<double>(steps_);
}

MomentPath::MomentPath(TimeGrid grid, int n_moments)
    : grid_(grid), samples_(Mat::Zero(n_moments, grid.size())) {}

MomentPath::MomentPath(TimeGrid grid, Mat samples) : grid_(grid), samples_(std::move(samples)) {
  if (samples_.cols() != grid_.size())
    throw std::invalid_argument("MomentPath: sample count != grid size");
}

MomentPath MomentPath::constant(TimeGrid grid, const Vec& value) {
  MomentPath p(grid, static_cast<int>(value.size()));
  p.samples_.colwise() = value;
  return p;
}

Vec MomentPath::at(double t) const {
  const double T = grid_.horizon();
  const double slack = 1e-9 * (1.0 + T);  // absorb integrator stage roundoff
  if (t < -slack || t > T + slack)
    throw std::domain_error("MomentPath::at: t outside [0, T]");
  t = std::min(std::max(t, 0.0), T);
  const double s = t / grid_.dt();
  const int k = std::min(static_cast<int>(s), grid_.steps() - 1);
  const double w = s - k;
  return samples_.col(k) * (1.0 - w) + samples_.col(k + 1) * w;
}

double MomentPath::sup_norm() const {
  return samples_.size() == 0 ? 0.0 : samples_.cwiseAbs().maxCoeff();
}

double MomentPath::c3_seminorm() const {
  const int K = grid_.steps();
  if (K < 3) return 0.0;
  const double h3 = std::pow(grid_.dt(), 3);
  double m = 0.0;
  for (int k = 0; k + 3 <= K; ++k) {
    const Vec d = samples_.col(k + 3) - 3.0 * samples_.col(k + 2) +
                  3.0 * samples_.col(k + 1) - samples_.col(k);
    m = std::max(m, d.cwiseAbs().maxCoeff() / h3);
  }
  return m;
}

Vec ControlAffineDynamics::eval(double t, const Vec& x, const Vec& u, const Vec& eta) const {
  Vec f = drift(t, x, eta);
  for (int i = 0; i < control_dim; ++i) f += fields[static_cast<size_t>(i)](t, x, eta) * u[i];
  return f;
}

Mat ControlAffineDynamics::control_matrix(double t, const Vec& x, const Vec& eta) const {
  Mat B(state_dim, control_dim);
  for (int i = 0; i < control_dim; ++i) B.col(i) = fields[static_cast<size_t>(i)](t, x, eta);
  return B;
}

Mat ControlAffineDynamics::eval_dx(double t, const Vec& x, const Vec& u, const Vec& eta) const {
  const bool complete = drift_dx && fields_dx.size() == fields.size() &&
                        std::all_of(fields_dx.begin(), fields_dx.end(),
                                    [](const FieldDxFn& f) { return static_cast<bool>(f); });
  if (complete) {
    Mat J = drift_dx(t, x, eta);
    for (int i = 0; i < control_dim; ++i) J += fields_dx[static_cast<size_t>(i)](t, x, eta) * u[i];
    return J;
  }
  return fd_jacobian([&](const Vec& xx) { return eval(t, xx, u, eta); }, x);
}

Vec ControlAffineDynamics::clamp(Vec u) const {
  if (control_lo) u = u.cwiseMax(*control_lo);
  if (control_hi) u = u.cwiseMin(*control_hi);
  return u;
}

Vec RunningCost::eval_grad_x(double t, const Vec& x, const Vec& u, const Vec& eta) const {
  if (grad_x) return grad_x(t, x, u, eta);
  return fd_gradient([&](const Vec& xx) { return value(t, xx, u, eta); }, x);
}

Vec RunningCost::eval_grad_u(double t, const Vec& x, const Vec& u, const Vec& eta) const {
  if (grad_u) return grad_u(t, x, u, eta);
  return fd_gradient([&](const Vec& uu) { return value(t, x, uu, eta); }, u);
}

Mat RunningCost::eval_hess_uu(double t, const Vec& x, const Vec& u, const Vec& eta) const {
  if (hess_uu) return hess_uu(t, x, u, eta);
  if (grad_u) return fd_jacobian([&](const Vec& uu) { return grad_u(t, x, uu, eta); }, u);
  return fd_hessian([&](const Vec& uu) { return value(t, x, uu, eta); }, u);
}

Vec TerminalCost::eval_gradient(const Vec& x, const Vec& eta_T) const {
  if (gradient) return gradient(x, eta_T);
  return fd_gradient([&](const Vec& xx) { return value(xx, eta_T); }, x);
}

Mat TerminalCost::eval_hessian(const Vec& x, const Vec& eta_T) const {
  if (hessian) return hessian(x, eta_T);
  if (gradient) return fd_jacobian([&](const Vec& xx) { return gradient(xx, eta_T); }, x);
  return fd_hessian([&](const Vec& xx) { return value(xx, eta_T); }, x);
}

Vec MomentKernelSet::eval(double t, const Vec& x) const {
  Vec v(count());
  for (int i = 0; i < count(); ++i) v[i] = kernels[static_cast<size_t>(i)](t, x);
  return v;
}

Vec MomentKernelSet::eval_grad(int i, double t, const Vec& x) const {
  if (i < static_cast<int>(grads.size()) && grads[static_cast<size_t>(i)])
    return grads[static_cast<size_t>(i)](t, x);
  return fd_gradient([&](const Vec& xx) { return kernels[static_cast<size_t>(i)](t, xx); }, x);
}

double PlayerEnsemble::initial_sup_norm() const {
  double r = 0.0;
  for (const Vec& x : initial_points) r = std::max(r, x.cwiseAbs().maxCoeff());
  return r;
}

PlayerEnsemble PlayerEnsemble::midpoint(int count, const std::function<Vec(double)>& xbar) {
  if (count < 1) throw std::invalid_argument("PlayerEnsemble::midpoint: count >= 1");
  PlayerEnsemble e;
  for (int j = 0; j < count; ++j) {
    const double xi = (j + 0.5) / count;
    e.labels.push_back(xi);
    e.weights.push_back(1.0 / count);
    e.initial_points.push_back(xbar(xi));
  }
  return e;
}

void GameSpec::validate() const {
  const int n = dynamics.state_dim;
  const int m = dynamics.control_dim;
  if (n < 1 || m < 1) throw std::invalid_argument("GameSpec: state/control dims >= 1");
  if (!dynamics.drift) throw std::invalid_argument("GameSpec: missing drift");
  if (static_cast<int>(dynamics.fields.size()) != m)
    throw std::invalid_argument("GameSpec: control field count != control dim");
  if (!running_cost.value) throw std::invalid_argument("GameSpec: missing running cost");
  if (!(running_cost.convexity_modulus > 0.0))
    throw std::invalid_argument("GameSpec: convexity modulus must be positive");
  if (!terminal_cost.value) throw std::invalid_argument("GameSpec: missing terminal cost");
  if (moments.count() < 1) throw std::invalid_argument("GameSpec: need at least one moment kernel");
  if (players.size() < 1) throw std::invalid_argument("GameSpec: empty ensemble");
  if (players.weights.size() != players.labels.size() ||
      players.initial_points.size() != players.labels.size())
    throw std::invalid_argument("GameSpec: ensemble arrays disagree");
  double wsum = 0.0;
  for (double w : players.weights) {
    if (!(w > 0.0)) throw std::invalid_argument("GameSpec: weights must be positive");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("GameSpec: weights must sum to 1");
  for (const Vec& x : players.initial_points)
    if (x.size() != n) throw std::invalid_argument("GameSpec: initial point dim != state dim");
  if (dynamics.control_lo && dynamics.control_lo->size() != m)
    throw std::invalid_argument("GameSpec: control_lo dim != control dim");
  if (dynamics.control_hi && dynamics.control_hi->size() != m)
    throw std::invalid_argument("GameSpec: control_hi dim != control dim");
  if (shooting_box && (shooting_box->lo.size() != n || shooting_box->hi.size() != n))
    throw std::invalid_argument("GameSpec: shooting box dim != state dim");

  // Cheap sanity evaluation at the first player's start, zero control.
  const Vec& x0 = players.initial_points.front();
  const Vec u0 = Vec::Zero(m);
  const Vec eta0 = Vec::Zero(moments.count());
  const Vec f = dynamics.eval(0.0, x0, u0, eta0);
  if (f.size() != n) throw std::invalid_argument("GameSpec: dynamics output dim != state dim");
  (void)running_cost.value(0.0, x0, u0, eta0);
  (void)terminal_cost.value(x0, eta0);
  for (int i = 0; i < moments.count(); ++i) (void)moments.kernels[static_cast<size_t>(i)](0.0, x0);
}

const DerivativeCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

double rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / (1.0 + std::abs(b(i, j))));
  return worst;
}

struct Probe {
  double t;
  Vec x, u, eta;
};

}  // namespace

ValidationReport check_derivatives(const GameSpec& spec, int probes, uint64_t seed) {
  spec.validate();
  const int n = spec.dynamics.state_dim;
  const int m = spec.dynamics.control_dim;
  const int N = spec.moments.count();
  const double T = spec.grid.horizon();

  const double rx = std::min(reachable_radius(spec), 10.0);
  double ru = 10.0;
  if (spec.dynamics.control_lo && spec.dynamics.control_hi)
    ru = std::max(spec.dynamics.control_lo->cwiseAbs().maxCoeff(),
                  spec.dynamics.control_hi->cwiseAbs().maxCoeff());
  const double re = std::min(rx, 10.0);  // moment probes share the state scale

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);

  std::vector<Probe> pts;
  pts.reserve(static_cast<size_t>(probes));
  for (int q = 0; q < probes; ++q) {
    Probe p;
    p.t = uni01(rng) * T;
    p.x = Vec::NullaryExpr(n, [&](Eigen::Index) { return rx * uni(rng); });
    if (p.x.norm() > rx && p.x.norm() > 0.0) p.x *= rx / p.x.norm();
    p.u = Vec::NullaryExpr(m, [&](Eigen::Index) { return ru * uni(rng); });
    p.u = spec.dynamics.clamp(p.u);
    p.eta = Vec::NullaryExpr(N, [&](Eigen::Index) { return re * uni(rng); });
    pts.push_back(std::move(p));
  }

  ValidationReport rep;
  auto run_check = [&](const std::string& name,
                       const std::function<Mat(const Probe&)>& supplied,
                       const std::function<Mat(const Probe&)>& reference) {
    DerivativeCheck c;
    c.name = name;
    for (const Probe& p : pts) {
      Mat a, b;
      try {
        a = supplied(p);
        b = reference(p);
      } catch (const std::exception& e) {
        c.ok = false;
        c.failure = std::string("evaluation threw: ") + e.what();
        break;
      }
      if (!a.allFinite() || !b.allFinite()) {
        std::ostringstream os;
        os << "non-finite value at t=" << p.t << " x=[" << p.x.transpose() << "]";
        c.ok = false;
        c.failure = os.str();
        break;
      }
      c.max_rel_error = std::max(c.max_rel_error, rel_err(a, b));
    }
    if (c.failure.empty()) c.ok = c.max_rel_error <= rep.flag_threshold;
    rep.checks.push_back(std::move(c));
  };

  const auto& dyn = spec.dynamics;
  if (dyn.drift_dx)
    run_check("dynamics.drift_dx",
              [&](const Probe& p) { return dyn.drift_dx(p.t, p.x, p.eta); },
              [&](const Probe& p) {
                return fd_jacobian([&](const Vec& xx) { return dyn.drift(p.t, xx, p.eta); }, p.x);
              });
  for (size_t i = 0; i < dyn.fields_dx.size(); ++i) {
    if (!dyn.fields_dx[i]) continue;
    run_check("dynamics.field_dx[" + std::to_string(i) + "]",
              [&, i](const Probe& p) { return dyn.fields_dx[i](p.t, p.x, p.eta); },
              [&, i](const Probe& p) {
                return fd_jacobian([&](const Vec& xx) { return dyn.fields[i](p.t, xx, p.eta); },
                                   p.x);
              });
  }

  const auto& L = spec.running_cost;
  auto Lval = [&](const Probe& p, const Vec& x, const Vec& u) { return L.value(p.t, x, u, p.eta); };
  if (L.grad_x)
    run_check("running_cost.grad_x",
              [&](const Probe& p) { return Mat(L.grad_x(p.t, p.x, p.u, p.eta)); },
              [&](const Probe& p) {
                return Mat(fd_gradient([&](const Vec& xx) { return Lval(p, xx, p.u); }, p.x));
              });
  if (L.grad_u)
    run_check("running_cost.grad_u",
              [&](const Probe& p) { return Mat(L.grad_u(p.t, p.x, p.u, p.eta)); },
              [&](const Probe& p) {
                return Mat(fd_gradient([&](const Vec& uu) { return Lval(p, p.x, uu); }, p.u));
              });
  if (L.hess_uu)
    run_check("running_cost.hess_uu",
              [&](const Probe& p) { return L.hess_uu(p.t, p.x, p.u, p.eta); },
              [&](const Probe& p) {
                if (L.grad_u)
                  return fd_jacobian(
                      [&](const Vec& uu) { return L.grad_u(p.t, p.x, uu, p.eta); }, p.u);
                return fd_hessian([&](const Vec& uu) { return Lval(p, p.x, uu); }, p.u);
              });

  const auto& psi = spec.terminal_cost;
  if (psi.gradient)
    run_check("terminal_cost.gradient",
              [&](const Probe& p) { return Mat(psi.gradient(p.x, p.eta)); },
              [&](const Probe& p) {
                return Mat(fd_gradient([&](const Vec& xx) { return psi.value(xx, p.eta); }, p.x));
              });
  if (psi.hessian)
    run_check("terminal_cost.hessian",
              [&](const Probe& p) { return psi.hessian(p.x, p.eta); },
              [&](const Probe& p) {
                if (psi.gradient)
                  return fd_jacobian([&](const Vec& xx) { return psi.gradient(xx, p.eta); }, p.x);
                return fd_hessian([&](const Vec& xx) { return psi.value(xx, p.eta); }, p.x);
              });

  for (size_t i = 0; i < spec.moments.grads.size(); ++i) {
    if (!spec.moments.grads[i]) continue;
    run_check("moments.grad[" + std::to_string(i) + "]",
              [&, i](const Probe& p) { return Mat(spec.moments.grads[i](p.t, p.x)); },
              [&, i](const Probe& p) {
                return Mat(fd_gradient(
                    [&](const Vec& xx) { return spec.moments.kernels[i](p.t, xx); }, p.x));
              });
  }

  // Structure flags. These are declared claims, so a violation is a flag on
  // the declaration, reported through the same channel.
  if (dyn.sublinear_c1) {
    DerivativeCheck c;
    c.name = "dynamics.sublinear_growth";
    double worst = 0.0;
    for (const Probe& p : pts) {
      const double cap = *dyn.sublinear_c1 * (p.x.norm() + 1.0);
      for (const auto& f : dyn.fields)
        worst = std::max(worst, f(p.t, p.x, p.eta).norm() - cap);
      worst = std::max(worst, dyn.drift(p.t, p.x, p.eta).norm() - cap);
    }
    c.max_rel_error = std::max(0.0, worst);
    c.ok = worst <= 0.0;
    rep.checks.push_back(std::move(c));
  }
  if (L.quadratic_lower_c2) {
    DerivativeCheck c;
    c.name = "running_cost.quadratic_lower_bound";
    double worst = 0.0;
    for (const Probe& p : pts) {
      const double lhs = L.value(p.t, p.x, p.u, p.eta);
      const double rhs = *L.quadratic_lower_c2 * (p.u.squaredNorm() - 1.0);
      worst = std::max(worst, rhs - lhs);
    }
    c.max_rel_error = std::max(0.0, worst);
    c.ok = worst <= 1e-12;
    rep.checks.push_back(std::move(c));
  }
  {
    DerivativeCheck c;
    c.name = "running_cost.uniform_convexity";
    double min_eig = std::numeric_limits<double>::infinity();
    for (const Probe& p : pts) {
      const Mat H = L.eval_hess_uu(p.t, p.x, p.u, p.eta);
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    c.max_rel_error = min_eig;  // reported value: smallest eigenvalue seen
    c.ok = min_eig >= L.convexity_modulus - 1e-8;
    rep.checks.push_back(std::move(c));
  }
  if (psi.positive_declared) {
    DerivativeCheck c;
    c.name = "terminal_cost.positivity";
    double worst = std::numeric_limits<double>::infinity();
    for (const Probe& p : pts) worst = std::min(worst, psi.value(p.x, p.eta));
    c.max_rel_error = worst;
    c.ok = worst > 0.0;
    rep.checks.push_back(std::move(c));
  }

  rep.all_ok = std::all_of(rep.checks.begin(), rep.checks.end(),
                           [](const DerivativeCheck& c) { return c.ok; });
  return rep;
}

namespace {

// u == 0 flow of each player, sup over nodes and players.
double zero_control_sup(const GameSpec& spec, std::vector<Vec>* terminals = nullptr) {
  const int n = spec.dynamics.state_dim;
  const Vec u0 = Vec::Zero(spec.dynamics.control_dim);
  const Vec eta0 = Vec::Zero(spec.moments.count());
  double sup = 0.0;
  for (const Vec& xbar : spec.players.initial_points) {
    Vec z = xbar;
    auto rhs = [&](double t, const Vec& x, Vec& dz) { dz = spec.dynamics.eval(t, x, u0, eta0); };
    Rk4Stepper<decltype(rhs)> stepper(n);
    sup = std::max(sup, z.cwiseAbs().maxCoeff());
    for (int k = 0; k < spec.grid.steps(); ++k) {
      stepper.step(rhs, spec.grid.node(k), spec.grid.dt(), z);
      sup = std::max(sup, z.cwiseAbs().maxCoeff());
    }
    if (terminals) terminals->push_back(z);
  }
  return sup;
}

}  // namespace

double reachable_radius(const GameSpec& spec) {
  if (spec.declared_radius) return *spec.declared_radius;
  const double T = spec.grid.horizon();
  if (spec.dynamics.sublinear_c1 && spec.running_cost.quadratic_lower_c2) {
    // Energy chain: cost of u==0 bounds the optimal cost, the c2 lower bound
    // turns that into an L2 control bound, Gronwall closes the ball.
    const double c1 = *spec.dynamics.sublinear_c1;
    const double c2 = *spec.running_cost.quadratic_lower_c2;
    const Vec u0 = Vec::Zero(spec.dynamics.control_dim);
    const Vec eta0 = Vec::Zero(spec.moments.count());
    double J0 = 0.0;
    for (const Vec& xbar : spec.players.initial_points) {
      Vec z(spec.dynamics.state_dim + 1);
      z.head(spec.dynamics.state_dim) = xbar;
      z[spec.dynamics.state_dim] = 0.0;
      auto rhs = [&](double t, const Vec& zz, Vec& dz) {
        const Vec x = zz.head(spec.dynamics.state_dim);
        dz.head(spec.dynamics.state_dim) = spec.dynamics.eval(t, x, u0, eta0);
        dz[spec.dynamics.state_dim] = spec.running_cost.value(t, x, u0, eta0);
      };
      Rk4Stepper<decltype(rhs)> stepper(z.size());
      for (int k = 0; k < spec.grid.steps(); ++k)
        stepper.step(rhs, spec.grid.node(k), spec.grid.dt(), z);
      const double cost = z[spec.dynamics.state_dim] +
                          spec.terminal_cost.value(z.head(spec.dynamics.state_dim), eta0);
      J0 = std::max(J0, cost);
    }
    const double beta1 = std::max(0.0, J0) / c2 + T;
    const double r = spec.players.initial_sup_norm();
    const double m = spec.dynamics.control_dim;
    return (r + 1.0) * std::exp(0.5 * c1 * (beta1 + (m + 2.0) * T)) - 1.0;
  }
  return 2.0 * (zero_control_sup(spec) + 1.0);
}

double control_bound(const GameSpec& spec) {
  const double beta0 = reachable_radius(spec);
  const double r = std::min(beta0, 50.0);  // sample box; bound stays a diagnostic scale
  const int n = spec.dynamics.state_dim;
  const double T = spec.grid.horizon();
  const Vec u0 = Vec::Zero(spec.dynamics.control_dim);

  const int nx = (n == 1) ? 401 : 41;
  const int nt = 11;
  double max_Lx = 0.0, max_grad_psi = 0.0, max_fx = 0.0, max_field = 0.0, max_Lu0 = 0.0;
  std::vector<double> axis = centered_linspace(-r, r, nx);
  const Vec eta0 = Vec::Zero(spec.moments.count());
  Vec x(n);
  auto visit = [&](const Vec& xx, double t) {
    max_Lx = std::max(max_Lx, spec.running_cost.eval_grad_x(t, xx, u0, eta0).norm());
    max_Lu0 = std::max(max_Lu0, spec.running_cost.eval_grad_u(t, xx, u0, eta0).norm());
    max_fx = std::max(max_fx, spec.dynamics.eval_dx(t, xx, u0, eta0).norm());
    for (const auto& f : spec.dynamics.fields)
      max_field = std::max(max_field, f(t, xx, eta0).norm());
    max_grad_psi = std::max(max_grad_psi, spec.terminal_cost.eval_gradient(xx, eta0).norm());
  };
  for (int it = 0; it < nt; ++it) {
    const double t = T * it / (nt - 1);
    if (n == 1) {
      for (double a : axis) {
        x[0] = a;
        visit(x, t);
      }
    } else {
      std::vector<double> ax2 = centered_linspace(-r, r, nx);
      for (double a : axis)
        for (double b : ax2) {
          x[0] = a;
          x[1] = b;
          for (int d = 2; d < n; ++d) x[d] = 0.0;
          visit(x, t);
        }
    }
  }
  const double sigma0 = (max_grad_psi + T * max_Lx) * std::exp(T * max_fx);
  const double m = spec.dynamics.control_dim;
  return (max_Lu0 + sigma0 * max_field * std::sqrt(m)) / spec.running_cost.convexity_modulus;
}

double moment_bound(const GameSpec& spec) {
  const double beta0 = reachable_radius(spec);
  const int n = spec.dynamics.state_dim;
  const double T = spec.grid.horizon();
  const int nt = 101;
  const int nx = (n == 1) ? 4001 : 201;
  std::vector<double> axis = centered_linspace(-beta0, beta0, nx);
  Vec x(n);
  Vec maxabs = Vec::Zero(spec.moments.count());
  auto visit = [&](const Vec& xx, double t) {
    if (xx.norm() > beta0) return;  // ball, not box
    for (int i = 0; i < spec.moments.count(); ++i)
      maxabs[i] = std::max(maxabs[i], std::abs(spec.moments.kernels[static_cast<size_t>(i)](t, xx)));
  };
  for (int it = 0; it < nt; ++it) {
    const double t = T * it / (nt - 1);
    if (n == 1) {
      for (double a : axis) {
        x[0] = a;
        visit(x, t);
      }
    } else {
      for (double a : axis)
        for (double b : axis) {
          x[0] = a;
          x[1] = b;
          for (int d = 2; d < n; ++d) x[d] = 0.0;
          visit(x, t);
        }
    }
  }
  return maxabs.norm();
}

}  // namespace mfg
