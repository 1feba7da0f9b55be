#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integration left the numeric range (state sup-norm past the guard).
struct DivergenceError : SolverError {
  double when;
  explicit DivergenceError(const std::string& what, double t)
      : SolverError(what), when(t) {}
};

// A documented pre-condition failed (bad input, not a numeric breakdown).
struct PreconditionError : SolverError {
  using SolverError::SolverError;
};

// A solve produced no usable candidate (empty multi-start, empty scan, ...).
struct NoCandidateError : SolverError {
  using SolverError::SolverError;
};

// Step for central differences. One convention everywhere so derivative
// checks and fallbacks agree about what "finite difference" means.
inline double fd_step(double x) { return 1e-6 * (1.0 + std::abs(x)); }

// Central-difference gradient of a scalar function of a vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j]);
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central-difference Jacobian of a vector function of a vector.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x) {
  Vec xp = x;
  Mat J;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j]);
    xp[j] = x[j] + h;
    const Vec fp = f(xp);
    xp[j] = x[j] - h;
    const Vec fm = f(xp);
    xp[j] = x[j];
    if (J.size() == 0) J.resize(fp.size(), x.size());
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

// Second-difference Hessian of a scalar function. Larger step than first
// differences: truncation and roundoff balance near h ~ 1e-4.
inline Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x) {
  const Eigen::Index n = x.size();
  Mat H(n, n);
  Vec xp = x;
  auto step = [&](Eigen::Index j) { return 1e-4 * (1.0 + std::abs(x[j])); };
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = step(i);
    xp[i] = x[i] + hi;
    const double fp = f(xp);
    xp[i] = x[i] - hi;
    const double fm = f(xp);
    xp[i] = x[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double hj = step(j);
      xp[i] = x[i] + hi; xp[j] = x[j] + hj; const double fpp = f(xp);
      xp[j] = x[j] - hj;                    const double fpm = f(xp);
      xp[i] = x[i] - hi;                    const double fmm = f(xp);
      xp[j] = x[j] + hj;                    const double fmp = f(xp);
      xp[i] = x[i]; xp[j] = x[j];
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  }
  return H;
}

// Classical fixed-step RK4 with preallocated stage buffers. h may be
// negative (backward integration uses the same formula).
template <class Rhs>
class Rk4Stepper {
 public:
  explicit Rk4Stepper(Eigen::Index dim)
      : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  void step(Rhs& rhs, double t, double h, Vec& z) {
    rhs(t, z, k1_);
    tmp_ = z + (h / 2.0) * k1_;
    rhs(t + h / 2.0, tmp_, k2_);
    tmp_ = z + (h / 2.0) * k2_;
    rhs(t + h / 2.0, tmp_, k3_);
    tmp_ = z + h * k3_;
    rhs(t + h, tmp_, k4_);
    z += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Vec k1_, k2_, k3_, k4_, tmp_;
};

// n points, symmetric about the midpoint so that mirrored boxes produce
// exactly mirrored grids (needed for the bitwise oddness guarantees).
inline std::vector<double> centered_linspace(double lo, double hi, int n) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  if (n == 1) {
    out.push_back(0.5 * (lo + hi));
    return out;
  }
  const double mid = 0.5 * (lo + hi);
  const double halfspan = 0.5 * (hi - lo);
  for (int i = 0; i < n; ++i) {
    const double s = (2.0 * i - (n - 1)) / (n - 1);  // in [-1, 1], symmetric
    out.push_back(mid + s * halfspan);
  }
  return out;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace mfg
