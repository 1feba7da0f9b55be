#include "mfg/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfg/numerics.hpp"

namespace mfg {

namespace {

Vec flatten(const MomentPath& p) {
  const int n = p.moment_count();
  const int nodes = p.grid().size();
  Vec v(static_cast<Eigen::Index>(n) * nodes);
  for (int k = 0; k < nodes; ++k)
    for (int i = 0; i < n; ++i) v[static_cast<Eigen::Index>(k) * n + i] = p.samples()(i, k);
  return v;
}

}  // namespace

Mat jacobian_dphi(const MomentPath& eta_star, BestReplyMap& phi, double step) {
  const int n = eta_star.moment_count();
  const int nodes = eta_star.grid().size();
  const Eigen::Index dim = static_cast<Eigen::Index>(n) * nodes;
  const double h = step > 0.0 ? step : 1e-5 * (1.0 + eta_star.sup_norm());

  // Seed the warm-start cache so every column solve starts next to its root.
  phi(eta_star);

  Mat jac(dim, dim);
  for (int k = 0; k < nodes; ++k) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(k) * n + i;
      MomentPath up(eta_star.grid(), eta_star.samples());
      up.samples()(i, k) += h;
      MomentPath dn(eta_star.grid(), eta_star.samples());
      dn.samples()(i, k) -= h;
      jac.col(col) = (flatten(phi(up)) - flatten(phi(dn))) / (2.0 * h);
    }
  }
  return jac;
}

SpectrumReport spectrum_of(const Mat& jacobian) {
  if (jacobian.rows() != jacobian.cols())
    throw std::invalid_argument("spectrum: matrix must be square");

  Eigen::EigenSolver<Mat> solver(jacobian);
  if (solver.info() != Eigen::Success)
    throw SolverError("spectrum: eigenvalue iteration failed to converge");

  SpectrumReport report;
  report.dimension = static_cast<int>(jacobian.rows());
  report.eigenvalues.resize(static_cast<size_t>(jacobian.rows()));
  for (Eigen::Index i = 0; i < jacobian.rows(); ++i)
    report.eigenvalues[static_cast<size_t>(i)] = solver.eigenvalues()[i];

  std::sort(report.eigenvalues.begin(), report.eigenvalues.end(),
            [](const std::complex<double>& a, const std::complex<double>& b) {
              const double ma = std::abs(a), mb = std::abs(b);
              if (ma != mb) return ma > mb;
              if (a.real() != b.real()) return a.real() > b.real();
              return a.imag() > b.imag();
            });

  report.spectral_radius =
      report.eigenvalues.empty() ? 0.0 : std::abs(report.eigenvalues.front());
  report.distance_to_one = std::numeric_limits<double>::infinity();
  for (const auto& ev : report.eigenvalues)
    report.distance_to_one = std::min(report.distance_to_one, std::abs(ev - 1.0));
  return report;
}

bool spectrum_matches_class(const SpectrumReport& report, StabilityClass cls) {
  switch (cls) {
    case StabilityClass::unstable: return report.spectral_radius > 1.0;
    case StabilityClass::asymptotically_stable: return report.spectral_radius < 1.0;
    case StabilityClass::stable: return report.spectral_radius <= 1.0 + 1e-6;
  }
  return false;
}

Vec dominant_eigenvector(const Mat& jacobian) {
  Eigen::EigenSolver<Mat> solver(jacobian);
  if (solver.info() != Eigen::Success)
    throw SolverError("spectrum: eigenvalue iteration failed to converge");

  Eigen::Index lead = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < jacobian.rows(); ++i) {
    const double m = std::abs(solver.eigenvalues()[i]);
    if (m > best) {
      best = m;
      lead = i;
    }
  }
  Vec v = solver.eigenvectors().col(lead).real();
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  const double peak = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-8 * peak) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  return v;
}

AnalyticSpectrum analytic_spectrum_barycenter(double kappa, double T, int n_max) {
  if (n_max < 1) throw std::invalid_argument("analytic spectrum: n_max must be >= 1");
  if (!(T > 0.0)) throw std::invalid_argument("analytic spectrum: T must be positive");

  AnalyticSpectrum out;
  out.eigenvalues.reserve(static_cast<size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    const double mu = (2.0 * n - 1.0) * M_PI / (2.0 * T);
    const double denom = kappa + mu * mu - 1.0;
    if (std::abs(denom) <= 1e-9 * (1.0 + std::abs(kappa))) out.resonance = true;
    out.eigenvalues.push_back(kappa / denom);
  }
  return out;
}

Vec analytic_eigenfunction(int n, const TimeGrid& grid) {
  if (n < 1) throw std::invalid_argument("analytic eigenfunction: n must be >= 1");
  const double omega = (2.0 * n - 1.0) * M_PI / (2.0 * grid.horizon());
  Vec v(grid.size());
  for (int k = 0; k < grid.size(); ++k) v[k] = std::sin(omega * grid.node(k));
  return v;
}

namespace {

// y'(T; gamma) for y'' = [kappa (1 - 1/gamma) + w(t)] y, y(0) = 0, y'(0) = 1.
double bvp_mismatch(double gamma, const MomentPath& y1, double kappa, double T, int steps) {
  const double shift = kappa * (1.0 - 1.0 / gamma);
  auto rhs = [&](double t, const Vec& z, Vec& out) {
    const double y = y1.at(t)[0];
    const double s = 1.0 + y * y;
    const double w = (3.0 * y * y - 1.0) / (s * s * s);
    out[0] = z[1];
    out[1] = (shift + w) * z[0];
  };
  Rk4Stepper<decltype(rhs)> stepper(2);
  Vec z(2);
  z << 0.0, 1.0;
  const double h = T / steps;
  for (int k = 0; k < steps; ++k) stepper.step(rhs, k * h, h, z);
  return z[1];
}

}  // namespace

std::vector<double> eigen_bvp_scan(const MomentPath& y1, double kappa, double T,
                                   const BvpScanConfig& cfg) {
  if (cfg.samples < 2) throw std::invalid_argument("bvp scan: need at least two samples");
  if (!(cfg.gamma_hi > cfg.gamma_lo))
    throw std::invalid_argument("bvp scan: empty gamma range");

  auto mismatch = [&](double g) { return bvp_mismatch(g, y1, kappa, T, cfg.integration_steps); };

  std::vector<double> roots;
  const double dg = (cfg.gamma_hi - cfg.gamma_lo) / (cfg.samples - 1);

  bool have_prev = false;
  double prev_g = 0.0, prev_m = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    const double g = cfg.gamma_lo + i * dg;
    if (std::abs(g) <= cfg.exclusion) {
      have_prev = false;  // the map degenerates at gamma = 0; break the chain
      continue;
    }
    const double m = mismatch(g);
    if (have_prev && (prev_g < 0.0) != (g < 0.0)) {
      have_prev = false;  // never bracket across the singular point
    }
    if (have_prev) {
      if (m == 0.0) {
        roots.push_back(g);
      } else if (prev_m * m < 0.0) {
        double lo = prev_g, hi = g, flo = prev_m;
        while (hi - lo > cfg.bisect_tol) {
          const double mid = 0.5 * (lo + hi);
          const double fm = mismatch(mid);
          if (fm == 0.0) {
            lo = hi = mid;
            break;
          }
          if (flo * fm < 0.0) hi = mid;
          else {
            lo = mid;
            flo = fm;
          }
        }
        roots.push_back(0.5 * (lo + hi));
      }
    } else if (m == 0.0) {
      roots.push_back(g);
    }
    prev_g = g;
    prev_m = m;
    have_prev = true;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

LinearizedSystem linearize_pmp(const PMPTrajectory& base, const OcpContext& ctx) {
  const int n = ctx.dynamics.state_dim;
  const TimeGrid grid = base.grid;

  auto interp = [grid](const std::vector<Vec>& nodes, double t) {
    const double s = std::clamp(t / grid.dt(), 0.0, static_cast<double>(grid.steps()));
    const int k = std::min(static_cast<int>(s), grid.steps() - 1);
    const double a = s - k;
    return ((1.0 - a) * nodes[static_cast<size_t>(k)] +
            a * nodes[static_cast<size_t>(k + 1)])
        .eval();
  };

  // Combined right-hand side of the optimality system at frozen eta, with the
  // control eliminated pointwise.  The dynamics and cost objects are owned by
  // the caller's game description and must outlive the returned system; only
  // their addresses are kept.
  const ControlAffineDynamics* dyn = &ctx.dynamics;
  const RunningCost* cost = &ctx.running_cost;
  auto rhs = [dyn, cost, n](double t, const Vec& x, const Vec& p, const Vec& eta_t) {
    Vec u = pointwise_control(t, x, p, eta_t, *dyn, *cost);
    Vec g(2 * n);
    g.head(n) = dyn->eval(t, x, u, eta_t);
    Mat fx = dyn->eval_dx(t, x, u, eta_t);
    g.tail(n) = -fx.transpose() * p - cost->eval_grad_x(t, x, u, eta_t);
    return g;
  };

  LinearizedSystem sys;
  sys.state_dim = n;

  // Capture the pieces by value so the system outlives the call.
  const MomentPath eta = ctx.eta;
  auto states = base.states;
  auto adjoints = base.adjoints;

  sys.coefficient = [=](double t) {
    const Vec x0 = interp(states, t);
    const Vec p0 = interp(adjoints, t);
    const Vec e0 = eta.at(t);
    Mat a(2 * n, 2 * n);
    for (int j = 0; j < 2 * n; ++j) {
      Vec xp = x0, pp = p0, xm = x0, pm = p0;
      double& up = j < n ? xp[j] : pp[j - n];
      double& um = j < n ? xm[j] : pm[j - n];
      const double h = fd_step(up);
      up += h;
      um -= h;
      a.col(j) = (rhs(t, xp, pp, e0) - rhs(t, xm, pm, e0)) / (2.0 * h);
    }
    return a;
  };

  sys.forcing = [=](double t) {
    const Vec x0 = interp(states, t);
    const Vec p0 = interp(adjoints, t);
    const Vec e0 = eta.at(t);
    const double h = fd_step(e0.cwiseAbs().maxCoeff());
    const Vec ones = Vec::Ones(e0.size());
    return ((rhs(t, x0, p0, e0 + h * ones) - rhs(t, x0, p0, e0 - h * ones)) / (2.0 * h))
        .eval();
  };

  sys.terminal_hessian =
      ctx.terminal_cost.eval_hessian(base.terminal(), eta.at(grid.horizon()));
  return sys;
}

double transversal_determinant(const LinearizedSystem& sys, const TimeGrid& grid) {
  const int n = sys.state_dim;
  const int dim = 2 * n * n;  // n columns of (X, P) stacked

  auto rhs = [&sys, n](double t, const Vec& z, Vec& out) {
    const Mat a = sys.coefficient(t);
    for (int j = 0; j < n; ++j)
      out.segment(2 * n * j, 2 * n) = a * z.segment(2 * n * j, 2 * n);
  };

  Rk4Stepper<decltype(rhs)> stepper(dim);
  Vec z = Vec::Zero(dim);
  for (int j = 0; j < n; ++j) z[2 * n * j + n + j] = 1.0;  // X(0) = 0, P(0) = e_j

  for (int k = 0; k < grid.steps(); ++k) stepper.step(rhs, grid.node(k), grid.dt(), z);

  Mat m(n, n);
  for (int j = 0; j < n; ++j) {
    const Vec xj = z.segment(2 * n * j, n);
    const Vec pj = z.segment(2 * n * j + n, n);
    m.col(j) = pj - sys.terminal_hessian * xj;
  }
  return m.determinant();
}

}  // namespace mfg
