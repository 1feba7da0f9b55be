#include "mfg/pmp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mfg {

namespace {

// Failure context for the control subproblem: enough state to reproduce the
// offending solve from the message alone.
std::string state_suffix(double t, const Vec& x, const Vec& p, const Vec& u,
                         const Vec& residual, double tol) {
  std::ostringstream os;
  os << " (t=" << t << ", |x|=" << x.cwiseAbs().maxCoeff()
     << ", |p|=" << p.cwiseAbs().maxCoeff() << ", |u|=" << u.cwiseAbs().maxCoeff()
     << ", residual=" << residual.cwiseAbs().maxCoeff() << ", tol=" << tol << ")";
  return os.str();
}

}  // namespace

Vec pointwise_control(double t, const Vec& x, const Vec& p, const Vec& eta_t,
                      const ControlAffineDynamics& dyn, const RunningCost& cost,
                      const Vec& u_init) {
  const int m = dyn.control_dim;

  // Affine part of the Hamiltonian gradient: constant in u for these dynamics.
  Vec g(m);
  for (int i = 0; i < m; ++i) g[i] = p.dot(dyn.fields[static_cast<size_t>(i)](t, x, eta_t));

  Vec u = (u_init.size() == m) ? dyn.clamp(u_init) : dyn.clamp(Vec::Zero(m));
  const double tol = 1e-12 * (1.0 + g.cwiseAbs().maxCoeff());

  auto merit = [&](const Vec& uu) { return cost.value(t, x, uu, eta_t) + g.dot(uu); };

  Vec grad(m), residual(m), step(m), u_next(m);
  for (int it = 0; it < 50; ++it) {
    grad = cost.eval_grad_u(t, x, u, eta_t) + g;
    residual = u - dyn.clamp(u - grad);
    if (residual.cwiseAbs().maxCoeff() <= tol) return u;

    const Mat H = cost.eval_hess_uu(t, x, u, eta_t);
    step = H.ldlt().solve(-grad);
    if (!all_finite(step)) step = -grad;

    const double m0 = merit(u);
    // Near the minimizer the quadratic improvement drops below one ulp of the
    // merit; the decrease test must tolerate that or it rejects exact Newton
    // steps.
    const double flat = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(m0));
    double lam = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      u_next = dyn.clamp(u + lam * step);
      const double m1 = merit(u_next);
      if (std::isfinite(m1) && m1 <= m0 + 1e-4 * grad.dot(u_next - u) + flat) {
        accepted = true;
        break;
      }
      lam *= 0.5;
    }
    if (accepted && (u_next.array() != u.array()).any()) {
      u = u_next;
      continue;
    }
    // Within ~sqrt(eps * |merit|) of the minimizer the true decrease of a
    // full Newton step drops below the evaluation noise of the merit itself,
    // so the test above either rejects every step or "accepts" one too short
    // to change u.  The projected-gradient residual still resolves down to
    // machine epsilon; hand the decision to it.
    u_next = dyn.clamp(u + step);
    grad = cost.eval_grad_u(t, x, u_next, eta_t) + g;
    const Vec res_next = u_next - dyn.clamp(u_next - grad);
    if (res_next.cwiseAbs().maxCoeff() < residual.cwiseAbs().maxCoeff()) {
      u = u_next;
      continue;
    }
    if (residual.cwiseAbs().maxCoeff() <= 1e3 * tol) return u;
    throw SolverError("pointwise control: line search stalled" + state_suffix(t, x, p, u, residual, tol));
  }
  grad = cost.eval_grad_u(t, x, u, eta_t) + g;
  residual = u - dyn.clamp(u - grad);
  if (residual.cwiseAbs().maxCoeff() <= 1e3 * tol) return u;
  throw SolverError("pointwise control: no convergence in 50 iterations" + state_suffix(t, x, p, u, residual, tol));
}

namespace {

// Augmented right-hand side z = (x, p, c):
//   x' = f(t, x, u*, eta),  p' = -f_x^T p - L_x,  c' = L,
// with u* the pointwise Hamiltonian minimizer.  The last accepted control
// warm-starts the next solve; stages are close so one Newton step usually
// suffices.
struct BackwardRhs {
  const OcpContext& ctx;
  Vec u_warm;

  explicit BackwardRhs(const OcpContext& c)
      : ctx(c), u_warm(Vec::Zero(c.dynamics.control_dim)) {}

  void operator()(double t, const Vec& z, Vec& dz) {
    const int n = ctx.dynamics.state_dim;
    const Vec x = z.head(n);
    const Vec p = z.segment(n, n);
    const Vec eta_t = ctx.eta.at(t);
    const Vec u = pointwise_control(t, x, p, eta_t, ctx.dynamics, ctx.running_cost, u_warm);
    u_warm = u;
    dz.head(n) = ctx.dynamics.eval(t, x, u, eta_t);
    dz.segment(n, n) = -ctx.dynamics.eval_dx(t, x, u, eta_t).transpose() * p -
                       ctx.running_cost.eval_grad_x(t, x, u, eta_t);
    dz[2 * n] = ctx.running_cost.value(t, x, u, eta_t);
  }
};

// Hot path for shooting: backward sweep returning only x(0), no per-node
// storage and no control resampling.
Vec backward_initial_state(const Vec& y, const Vec& pT, const OcpContext& ctx, double blowup) {
  const TimeGrid& grid = ctx.grid();
  const int n = ctx.dynamics.state_dim;
  BackwardRhs rhs(ctx);
  Rk4Stepper<BackwardRhs> stepper(2 * n + 1);
  Vec z(2 * n + 1);
  z.head(n) = y;
  z.segment(n, n) = pT;
  z[2 * n] = 0.0;
  for (int k = grid.steps(); k >= 1; --k) {
    stepper.step(rhs, grid.node(k), -grid.dt(), z);
    if (!all_finite(z) || z.cwiseAbs().maxCoeff() > blowup)
      throw DivergenceError("backward sweep left the guard ball", grid.node(k - 1));
  }
  return z.head(n);
}

PMPTrajectory backward_sweep(const Vec& y, const Vec& pT, const OcpContext& ctx, double blowup) {
  const TimeGrid& grid = ctx.grid();
  const int n = ctx.dynamics.state_dim;
  const int K = grid.steps();

  PMPTrajectory traj{grid, {}, {}, {}, 0.0};
  traj.states.assign(static_cast<size_t>(K) + 1, Vec());
  traj.adjoints.assign(static_cast<size_t>(K) + 1, Vec());
  traj.controls.assign(static_cast<size_t>(K) + 1, Vec());

  BackwardRhs rhs(ctx);
  Rk4Stepper<BackwardRhs> stepper(2 * n + 1);
  Vec z(2 * n + 1);
  z.head(n) = y;
  z.segment(n, n) = pT;
  z[2 * n] = 0.0;
  traj.states[static_cast<size_t>(K)] = y;
  traj.adjoints[static_cast<size_t>(K)] = pT;
  for (int k = K; k >= 1; --k) {
    stepper.step(rhs, grid.node(k), -grid.dt(), z);
    if (!all_finite(z) || z.cwiseAbs().maxCoeff() > blowup)
      throw DivergenceError("backward sweep left the guard ball", grid.node(k - 1));
    traj.states[static_cast<size_t>(k) - 1] = z.head(n);
    traj.adjoints[static_cast<size_t>(k) - 1] = z.segment(n, n);
  }

  Vec u_warm = Vec::Zero(ctx.dynamics.control_dim);
  for (int k = 0; k <= K; ++k) {
    const double t = grid.node(k);
    u_warm = pointwise_control(t, traj.states[static_cast<size_t>(k)],
                               traj.adjoints[static_cast<size_t>(k)], ctx.eta.at(t),
                               ctx.dynamics, ctx.running_cost, u_warm);
    traj.controls[static_cast<size_t>(k)] = u_warm;
  }

  const Vec eta_T = ctx.eta.at(grid.horizon());
  traj.total_cost = ctx.terminal_cost.value(y, eta_T) - z[2 * n];
  return traj;
}

}  // namespace

PMPTrajectory integrate_pmp_backward(const Vec& y, const OcpContext& ctx, double blowup_limit) {
  const Vec eta_T = ctx.eta.at(ctx.grid().horizon());
  return backward_sweep(y, ctx.terminal_cost.eval_gradient(y, eta_T), ctx, blowup_limit);
}

PMPTrajectory integrate_pmp_backward_free(const Vec& y, const Vec& terminal_adjoint,
                                          const OcpContext& ctx, double blowup_limit) {
  return backward_sweep(y, terminal_adjoint, ctx, blowup_limit);
}

Vec reintegrate_forward(const PMPTrajectory& traj, const OcpContext& ctx) {
  const TimeGrid& grid = traj.grid;
  const int K = grid.steps();
  auto u_at = [&](double t) -> Vec {
    t = std::min(std::max(t, 0.0), grid.horizon());
    const double s = t / grid.dt();
    const int k = std::min(static_cast<int>(s), K - 1);
    const double w = s - k;
    return traj.controls[static_cast<size_t>(k)] * (1.0 - w) +
           traj.controls[static_cast<size_t>(k) + 1] * w;
  };
  auto rhs = [&](double t, const Vec& x, Vec& dx) {
    dx = ctx.dynamics.eval(t, x, u_at(t), ctx.eta.at(t));
  };
  Rk4Stepper<decltype(rhs)> stepper(ctx.dynamics.state_dim);
  Vec x = traj.initial();
  for (int k = 0; k < K; ++k) stepper.step(rhs, grid.node(k), grid.dt(), x);
  return x;
}

namespace {

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

}  // namespace

std::vector<Vec> shoot(const Vec& xbar, const OcpContext& ctx, const ShootingConfig& cfg,
                       ShootingDiagnostics* diag) {
  const int n = ctx.dynamics.state_dim;
  if (xbar.size() != n) throw std::invalid_argument("shoot: target dim != state dim");
  ShootingDiagnostics local;
  ShootingDiagnostics& d = diag ? *diag : local;

  auto F = [&](const Vec& y) -> Vec {
    const Vec eta_T = ctx.eta.at(ctx.grid().horizon());
    const Vec pT = ctx.terminal_cost.eval_gradient(y, eta_T);
    return backward_initial_state(y, pT, ctx, cfg.blowup_limit) - xbar;
  };
  const double ftol = cfg.newton_tol * (1.0 + xbar.cwiseAbs().maxCoeff());

  auto drive = [&](Vec y) -> std::optional<Vec> {
    ++d.starts_tried;
    Vec Fy;
    try {
      Fy = F(y);
    } catch (const DivergenceError&) {
      ++d.diverged;
      return std::nullopt;
    } catch (const SolverError&) {
      // a control subproblem failed along this candidate; drop the start
      ++d.stalled;
      return std::nullopt;
    }
    Mat J(n, n);
    Vec yp(n);
    for (int it = 0;; ++it) {
      if (Fy.cwiseAbs().maxCoeff() <= ftol) {
        ++d.converged;
        return y;
      }
      if (it >= cfg.max_newton_iter) {
        ++d.stalled;
        return std::nullopt;
      }
      try {
        for (int j = 0; j < n; ++j) {
          const double h = cfg.jacobian_fd_step * (1.0 + std::abs(y[j]));
          yp = y;
          yp[j] = y[j] + h;
          const Vec Fp = F(yp);
          yp[j] = y[j] - h;
          const Vec Fm = F(yp);
          J.col(j) = (Fp - Fm) / (2.0 * h);
        }
      } catch (const DivergenceError&) {
        ++d.diverged;
        return std::nullopt;
      } catch (const SolverError&) {
        ++d.stalled;
        return std::nullopt;
      }
      if (std::abs(J.determinant()) < cfg.jacobian_det_floor) {
        ++d.singular;
        return std::nullopt;
      }
      const Vec step = J.fullPivLu().solve(-Fy);
      const double f0 = Fy.norm();
      double lam = 1.0;
      bool moved = false;
      for (int bt = 0; bt < 30; ++bt) {
        try {
          const Vec y_new = y + lam * step;
          const Vec F_new = F(y_new);
          if (F_new.norm() < f0) {
            y = y_new;
            Fy = F_new;
            moved = true;
            break;
          }
        } catch (const SolverError&) {
          // shrink and retry
        }
        lam *= 0.5;
      }
      if (!moved) {
        ++d.stalled;
        return std::nullopt;
      }
    }
  };

  std::vector<Vec> found;
  for (const Vec& w : cfg.warm_starts)
    if (w.size() == n)
      if (auto r = drive(w)) found.push_back(*r);

  if (!(cfg.warm_start_only && !found.empty())) {
    // Endpoint of the uncontrolled flow: a natural candidate when the
    // terminal cost is weak.
    try {
      const Vec u0 = Vec::Zero(ctx.dynamics.control_dim);
      auto rhs = [&](double t, const Vec& x, Vec& dx) {
        dx = ctx.dynamics.eval(t, x, u0, ctx.eta.at(t));
      };
      Rk4Stepper<decltype(rhs)> stepper(n);
      Vec x = xbar;
      bool fine = true;
      for (int k = 0; k < ctx.grid().steps(); ++k) {
        stepper.step(rhs, ctx.grid().node(k), ctx.grid().dt(), x);
        if (!all_finite(x) || x.cwiseAbs().maxCoeff() > cfg.blowup_limit) {
          fine = false;
          break;
        }
      }
      if (fine)
        if (auto r = drive(x)) found.push_back(*r);
    } catch (const SolverError&) {
      // skip the extra start
    }

    Box box;
    if (cfg.multistart_box) {
      box = *cfg.multistart_box;
    } else {
      const double r = 2.0 * (1.0 + xbar.cwiseAbs().maxCoeff());
      box.lo = xbar.array() - r;
      box.hi = xbar.array() + r;
    }
    const int axes = std::min(n, 2);
    std::vector<std::vector<double>> grids(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
      grids[static_cast<size_t>(j)] =
          (j < axes) ? centered_linspace(box.lo[j], box.hi[j], cfg.multistart_per_axis)
                     : std::vector<double>{0.5 * (box.lo[j] + box.hi[j])};
    std::vector<size_t> idx(static_cast<size_t>(n), 0);
    Vec y0(n);
    for (;;) {
      for (int j = 0; j < n; ++j) y0[j] = grids[static_cast<size_t>(j)][idx[static_cast<size_t>(j)]];
      if (auto r = drive(y0)) found.push_back(*r);
      int j = n - 1;
      for (; j >= 0; --j) {
        if (++idx[static_cast<size_t>(j)] < grids[static_cast<size_t>(j)].size()) break;
        idx[static_cast<size_t>(j)] = 0;
      }
      if (j < 0) break;
    }
  }

  if (found.empty())
    throw NoCandidateError("shooting: no start converged (tried " +
                           std::to_string(d.starts_tried) + ")");

  std::sort(found.begin(), found.end(), lex_less);
  std::vector<Vec> unique;
  for (const Vec& y : found) {
    bool dup = false;
    for (const Vec& u : unique)
      if ((y - u).cwiseAbs().maxCoeff() <= cfg.dedup_tol) {
        dup = true;
        break;
      }
    if (!dup) unique.push_back(y);
  }
  return unique;
}

OCPSolution solve_ocp(const Vec& xbar, const OcpContext& ctx, const ShootingConfig& cfg) {
  OCPSolution sol;
  const std::vector<Vec> roots = shoot(xbar, ctx, cfg);
  sol.candidates.reserve(roots.size());
  for (const Vec& y : roots)
    sol.candidates.push_back(integrate_pmp_backward(y, ctx, cfg.blowup_limit));

  double jmin = std::numeric_limits<double>::infinity();
  for (const auto& c : sol.candidates) jmin = std::min(jmin, c.total_cost);
  const double window = cfg.tie_tol * (1.0 + std::abs(jmin));
  for (int i = 0; i < static_cast<int>(sol.candidates.size()); ++i)
    if (sol.candidates[static_cast<size_t>(i)].total_cost <= jmin + window)
      sol.optimal.push_back(i);

  for (size_t a = 0; a < sol.optimal.size() && !sol.multiplicity; ++a)
    for (size_t b = a + 1; b < sol.optimal.size(); ++b) {
      const Vec& ya = sol.candidates[static_cast<size_t>(sol.optimal[a])].terminal();
      const Vec& yb = sol.candidates[static_cast<size_t>(sol.optimal[b])].terminal();
      if ((ya - yb).cwiseAbs().maxCoeff() >= cfg.tie_separation) {
        sol.multiplicity = true;
        break;
      }
    }

  // Candidates are sorted lexicographically by terminal point, so the first
  // optimal index is the tie-break selection.
  sol.selected = sol.optimal.front();

  const double slack = 1e-9;
  for (int i : sol.optimal) {
    const auto& traj = sol.candidates[static_cast<size_t>(i)];
    if (cfg.state_bound) {
      double sup = 0.0;
      for (const Vec& x : traj.states) sup = std::max(sup, x.norm());
      if (sup > *cfg.state_bound * (1.0 + slack))
        sol.notes.push_back("optimal candidate " + std::to_string(i) +
                            " exceeds the a-priori state bound: " + std::to_string(sup) + " > " +
                            std::to_string(*cfg.state_bound));
    }
    if (cfg.control_bound_value) {
      double sup = 0.0;
      for (const Vec& u : traj.controls) sup = std::max(sup, u.norm());
      if (sup > *cfg.control_bound_value * (1.0 + slack))
        sol.notes.push_back("optimal candidate " + std::to_string(i) +
                            " exceeds the a-priori control bound: " + std::to_string(sup) +
                            " > " + std::to_string(*cfg.control_bound_value));
    }
  }
  return sol;
}

std::vector<ValueProfilePoint> scan_terminal_scalar(const Vec& xbar, const OcpContext& ctx,
                                                    double y_lo, double y_hi, int samples,
                                                    const ShootingConfig& cfg) {
  if (ctx.dynamics.state_dim != 1)
    throw std::invalid_argument("scan_terminal_scalar: scalar state only");
  if (samples < 2) throw std::invalid_argument("scan_terminal_scalar: need >= 2 samples");

  const Vec eta_T = ctx.eta.at(ctx.grid().horizon());
  std::vector<ValueProfilePoint> out;
  out.reserve(static_cast<size_t>(samples));

  Vec yv(1), sv(1);
  std::optional<double> sigma_prev;
  for (int i = 0; i < samples; ++i) {
    ValueProfilePoint pt;
    pt.y = y_lo + (y_hi - y_lo) * i / (samples - 1);
    yv[0] = pt.y;

    // Continuation along the scan; the unconstrained transversality value
    // seeds the first point.
    double sigma = sigma_prev ? *sigma_prev : ctx.terminal_cost.eval_gradient(yv, eta_T)[0];

    auto G = [&](double s) -> double {
      sv[0] = s;
      return backward_initial_state(yv, sv, ctx, cfg.blowup_limit)[0] - xbar[0];
    };
    const double gtol = cfg.newton_tol * (1.0 + std::abs(xbar[0]));
    try {
      double g = G(sigma);
      for (int it = 0; it < cfg.max_newton_iter && std::abs(g) > gtol; ++it) {
        const double h = cfg.jacobian_fd_step * (1.0 + std::abs(sigma));
        const double dg = (G(sigma + h) - G(sigma - h)) / (2.0 * h);
        if (!std::isfinite(dg) || std::abs(dg) < cfg.jacobian_det_floor) break;
        const double step = -g / dg;
        double lam = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 30; ++bt) {
          try {
            const double g_new = G(sigma + lam * step);
            if (std::abs(g_new) < std::abs(g)) {
              sigma += lam * step;
              g = g_new;
              moved = true;
              break;
            }
          } catch (const SolverError&) {
          }
          lam *= 0.5;
        }
        if (!moved) break;
      }
      if (std::abs(g) <= gtol) {
        sv[0] = sigma;
        const PMPTrajectory traj = integrate_pmp_backward_free(yv, sv, ctx, cfg.blowup_limit);
        pt.cost = traj.total_cost;
        pt.ok = true;
        sigma_prev = sigma;
      }
    } catch (const SolverError&) {
      // leave pt.ok false
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace mfg
