#include "mfg/direct_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace mfg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Augmented stage value F = (f, L) at one integrator stage.
struct StageEval {
  Vec a;  // augmented point (x, c)
  Vec s;  // F at that point
};

}  // namespace

double direct_cost_and_gradient(const Vec& xbar, const OcpContext& ctx, const Mat& U, Mat* grad,
                                double blowup_limit) {
  const int n = ctx.dynamics.state_dim;
  const int m = ctx.dynamics.control_dim;
  const TimeGrid& grid = ctx.grid();
  const int K = grid.steps();
  if (U.rows() != m || U.cols() != K)
    throw std::invalid_argument("direct transcription: control matrix shape");
  const double h = grid.dt();

  auto F = [&](double t, const Vec& z, const Vec& u, Vec& out) {
    const Vec x = z.head(n);
    const Vec eta = ctx.eta.at(t);
    out.head(n) = ctx.dynamics.eval(t, x, u, eta);
    out[n] = ctx.running_cost.value(t, x, u, eta);
  };

  // Forward pass, stages retained for the reverse sweep.
  StageEval st{Vec(n + 1), Vec(n + 1)};
  std::array<StageEval, 4> local{st, st, st, st};
  std::vector<std::array<StageEval, 4>> stages;
  if (grad) stages.assign(static_cast<size_t>(K), local);  // pre-sized stage vectors
  Vec z(n + 1);
  z.head(n) = xbar;
  z[n] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double t = grid.node(k);
    const Vec u = U.col(k);
    auto& sk = grad ? stages[static_cast<size_t>(k)] : local;
    sk[0].a = z;
    F(t, sk[0].a, u, sk[0].s);
    sk[1].a = z + (h / 2.0) * sk[0].s;
    F(t + h / 2.0, sk[1].a, u, sk[1].s);
    sk[2].a = z + (h / 2.0) * sk[1].s;
    F(t + h / 2.0, sk[2].a, u, sk[2].s);
    sk[3].a = z + h * sk[2].s;
    F(t + h, sk[3].a, u, sk[3].s);
    z += (h / 6.0) * (sk[0].s + 2.0 * sk[1].s + 2.0 * sk[2].s + sk[3].s);
    if (!all_finite(z) || z.cwiseAbs().maxCoeff() > blowup_limit) {
      if (grad) grad->setZero(m, K);
      return kInf;
    }
  }

  const Vec eta_T = ctx.eta.at(grid.horizon());
  const Vec xT = z.head(n);
  const double J = z[n] + ctx.terminal_cost.value(xT, eta_T);
  if (!grad) return J;

  grad->resize(m, K);
  // Pull dJ/dz back through each step.  Stage sensitivities follow the
  // forward dependency chain in reverse; c never feeds back into F, so
  // F_z^T g = (f_x^T g_x + L_x g_c, 0).
  Vec lam(n + 1);
  lam.head(n) = ctx.terminal_cost.eval_gradient(xT, eta_T);
  lam[n] = 1.0;

  Vec gx(n + 1);
  auto pull_z = [&](double t, const StageEval& se, const Vec& u, const Vec& g) -> Vec {
    const Vec x = se.a.head(n);
    const Vec eta = ctx.eta.at(t);
    gx.head(n) = ctx.dynamics.eval_dx(t, x, u, eta).transpose() * g.head(n) +
                 ctx.running_cost.eval_grad_x(t, x, u, eta) * g[n];
    gx[n] = 0.0;
    return gx;
  };
  auto pull_u = [&](double t, const StageEval& se, const Vec& u, const Vec& g) -> Vec {
    const Vec x = se.a.head(n);
    const Vec eta = ctx.eta.at(t);
    return ctx.dynamics.control_matrix(t, x, eta).transpose() * g.head(n) +
           ctx.running_cost.eval_grad_u(t, x, u, eta) * g[n];
  };

  for (int k = K - 1; k >= 0; --k) {
    const double t = grid.node(k);
    const double t2 = t + h / 2.0;
    const double t4 = t + h;
    const Vec u = U.col(k);
    const auto& sk = stages[static_cast<size_t>(k)];

    const Vec gs4 = (h / 6.0) * lam;
    const Vec ga4 = pull_z(t4, sk[3], u, gs4);
    const Vec gs3 = (h / 3.0) * lam + h * ga4;
    const Vec ga3 = pull_z(t2, sk[2], u, gs3);
    const Vec gs2 = (h / 3.0) * lam + (h / 2.0) * ga3;
    const Vec ga2 = pull_z(t2, sk[1], u, gs2);
    const Vec gs1 = (h / 6.0) * lam + (h / 2.0) * ga2;
    const Vec ga1 = pull_z(t, sk[0], u, gs1);

    grad->col(k) = pull_u(t, sk[0], u, gs1) + pull_u(t2, sk[1], u, gs2) +
                   pull_u(t2, sk[2], u, gs3) + pull_u(t4, sk[3], u, gs4);
    lam += ga1 + ga2 + ga3 + ga4;
  }
  return J;
}

namespace {

std::vector<Vec> forward_nodes(const Vec& xbar, const OcpContext& ctx, const Mat& U) {
  const int n = ctx.dynamics.state_dim;
  const TimeGrid& grid = ctx.grid();
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<size_t>(grid.size()));
  Vec x = xbar;
  nodes.push_back(x);
  for (int k = 0; k < grid.steps(); ++k) {
    const Vec u = U.col(k);
    auto rhs = [&](double t, const Vec& xx, Vec& dx) {
      dx = ctx.dynamics.eval(t, xx, u, ctx.eta.at(t));
    };
    Rk4Stepper<decltype(rhs)> stepper(n);
    stepper.step(rhs, grid.node(k), grid.dt(), x);
    nodes.push_back(x);
  }
  return nodes;
}

Mat clamp_controls(const ControlAffineDynamics& dyn, Mat U) {
  if (dyn.control_lo)
    for (Eigen::Index k = 0; k < U.cols(); ++k) U.col(k) = U.col(k).cwiseMax(*dyn.control_lo);
  if (dyn.control_hi)
    for (Eigen::Index k = 0; k < U.cols(); ++k) U.col(k) = U.col(k).cwiseMin(*dyn.control_hi);
  return U;
}

}  // namespace

DirectResult solve_direct(const Vec& xbar, const OcpContext& ctx, const DirectConfig& cfg) {
  const int n = ctx.dynamics.state_dim;
  const int m = ctx.dynamics.control_dim;
  if (xbar.size() != n) throw std::invalid_argument("solve_direct: start dim != state dim");
  const int K = ctx.grid().steps();

  double r = cfg.start_radius;
  if (r <= 0.0) {
    if (ctx.dynamics.control_lo && ctx.dynamics.control_hi)
      r = std::max(ctx.dynamics.control_lo->cwiseAbs().maxCoeff(),
                   ctx.dynamics.control_hi->cwiseAbs().maxCoeff());
    else
      r = 2.0 * (1.0 + xbar.cwiseAbs().maxCoeff());
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  struct Found {
    Mat U;
    double cost;
  };
  std::vector<Found> found;
  DirectResult result;

  for (int s = 0; s < cfg.starts; ++s) {
    Mat U = Mat::Zero(m, K);
    if (s > 0)
      U = clamp_controls(ctx.dynamics,
                         Mat::NullaryExpr(m, K, [&](Eigen::Index, Eigen::Index) {
                           return r * uni(rng);
                         }));

    Mat G(m, K), Gn(m, K);
    double J = direct_cost_and_gradient(xbar, ctx, U, &G, cfg.blowup_limit);
    if (!std::isfinite(J)) {
      ++result.failed_starts;
      continue;
    }

    double step = 1.0 / (1.0 + G.cwiseAbs().maxCoeff());
    bool converged = false;
    for (int it = 0; it < cfg.max_iter; ++it) {
      const Mat R = U - clamp_controls(ctx.dynamics, U - G);
      if (R.cwiseAbs().maxCoeff() <= cfg.accept_tol * (1.0 + G.cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
      // Backtracking projected descent; non-finite trial costs only shrink
      // the step.
      double lam = step;
      bool moved = false;
      Mat U_new;
      double J_new = kInf;
      for (int bt = 0; bt < 50; ++bt) {
        U_new = clamp_controls(ctx.dynamics, U - lam * G);
        const double decrease = (U - U_new).squaredNorm() / std::max(lam, 1e-300);
        J_new = direct_cost_and_gradient(xbar, ctx, U_new, nullptr, cfg.blowup_limit);
        if (std::isfinite(J_new) && J_new <= J - 1e-4 * decrease) {
          moved = true;
          break;
        }
        lam *= 0.5;
      }
      if (!moved) break;

      const double J2 = direct_cost_and_gradient(xbar, ctx, U_new, &Gn, cfg.blowup_limit);
      if (!std::isfinite(J2)) break;
      // Barzilai-Borwein scaling for the next trial step.
      const Mat dU = U_new - U;
      const Mat dG = Gn - G;
      const double sy = (dU.array() * dG.array()).sum();
      step = (sy > 0.0) ? std::clamp(dU.squaredNorm() / sy, 1e-12, 1e6) : 2.0 * lam;
      U = U_new;
      G = Gn;
      J = J2;
    }

    if (!converged) {
      ++result.failed_starts;
      continue;
    }
    found.push_back({U, J});
  }

  if (found.empty()) throw NoCandidateError("direct transcription: every start failed");

  std::sort(found.begin(), found.end(),
            [](const Found& a, const Found& b) { return a.cost < b.cost; });

  for (const Found& f : found) {
    std::vector<Vec> nodes = forward_nodes(xbar, ctx, f.U);
    bool dup = false;
    for (const DirectSolution& kept : result.minima) {
      const bool close_cost =
          std::abs(f.cost - kept.cost) <= cfg.dedup_cost_tol * (1.0 + std::abs(kept.cost));
      const bool close_point =
          (nodes.back() - kept.states.back()).cwiseAbs().maxCoeff() <= cfg.dedup_point_tol;
      if (close_cost && close_point) {
        dup = true;
        break;
      }
    }
    if (!dup) result.minima.push_back({f.U, std::move(nodes), f.cost});
  }
  return result;
}

}  // namespace mfg
