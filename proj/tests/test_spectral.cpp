#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "mfg/games.hpp"
#include "mfg/spectral.hpp"

using namespace mfg;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("explicit matrices: ordering, radius, distance to one, class check") {
  Mat J = Mat::Zero(3, 3);
  J(0, 0) = 0.3;
  J(1, 1) = -0.5;
  J(2, 2) = 2.0;

  SpectrumReport rep = spectrum_of(J);
  CHECK(rep.dimension == 3);
  REQUIRE(rep.eigenvalues.size() == 3);
  CHECK(std::abs(rep.eigenvalues[0]) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(rep.eigenvalues[1]) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(rep.eigenvalues[2]) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rep.spectral_radius == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rep.distance_to_one == doctest::Approx(0.7).epsilon(1e-12));

  CHECK(spectrum_matches_class(rep, StabilityClass::unstable));
  CHECK_FALSE(spectrum_matches_class(rep, StabilityClass::asymptotically_stable));

  Mat C = Mat::Zero(2, 2);
  C(0, 0) = 0.5;
  C(1, 1) = 0.3;
  SpectrumReport contracting = spectrum_of(C);
  CHECK(spectrum_matches_class(contracting, StabilityClass::asymptotically_stable));
  CHECK_FALSE(spectrum_matches_class(contracting, StabilityClass::unstable));

  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1.0;
  Vec v = dominant_eigenvector(D);
  CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(v[1]) < 1e-12);
}

TEST_CASE("closed-form barycenter spectrum and its resonance flag") {
  AnalyticSpectrum s = analytic_spectrum_barycenter(2.0, 2.0, 4);
  REQUIRE(s.eigenvalues.size() == 4);
  CHECK_FALSE(s.resonance);

  // lambda_n = kappa / (kappa + ((2n-1) pi / (2T))^2 - 1), frozen decimals
  CHECK(s.eigenvalues[0] == doctest::Approx(1.2369729163176724).epsilon(1e-14));
  CHECK(s.eigenvalues[1] == doctest::Approx(0.30526649687916235).epsilon(1e-12));
  CHECK(s.eigenvalues[2] == doctest::Approx(0.1217933569285751).epsilon(1e-12));
  CHECK(s.eigenvalues[3] == doctest::Approx(0.06404988004138219).epsilon(1e-12));
  for (size_t i = 0; i + 1 < s.eigenvalues.size(); ++i)
    CHECK(s.eigenvalues[i] > s.eigenvalues[i + 1]);

  // longer horizon: the top eigenvalue moves further past 1
  AnalyticSpectrum s3 = analytic_spectrum_barycenter(2.0, 3.0, 1);
  CHECK(s3.eigenvalues[0] == doctest::Approx(1.5697).epsilon(1e-4));
  CHECK(s3.eigenvalues[0] > s.eigenvalues[0]);

  // kappa < 1 admits a pole when (1 - kappa) = ((2n-1) pi / (2T))^2
  AnalyticSpectrum pole = analytic_spectrum_barycenter(0.5, kPi / std::sqrt(2.0), 3);
  CHECK(pole.resonance);
}

TEST_CASE("eigenfunctions are sup-normalized sine quarter-waves") {
  TimeGrid grid(2.0, 40);

  Vec v1 = analytic_eigenfunction(1, grid);
  CHECK(v1.size() == grid.size());
  CHECK(v1.cwiseAbs().maxCoeff() == 1.0);
  CHECK(v1[0] == 0.0);
  CHECK(v1[grid.steps()] == doctest::Approx(1.0).epsilon(1e-14));  // sin(pi/2)

  Vec v2 = analytic_eigenfunction(2, grid);
  CHECK(v2.cwiseAbs().maxCoeff() == 1.0);
  // grid maximum of |sin(3 pi t / 4)| over the nodes
  double m = 0.0;
  for (int k = 0; k <= grid.steps(); ++k)
    m = std::max(m, std::abs(std::sin(3.0 * kPi * grid.node(k) / 4.0)));
  for (int k = 0; k <= grid.steps(); ++k)
    CHECK(v2[k] == doctest::Approx(std::sin(3.0 * kPi * grid.node(k) / 4.0) / m).epsilon(1e-13));
}

TEST_CASE("bvp shooting scan recovers the closed-form spectrum on the zero path") {
  const double kappa = 2.0, T = 2.0;
  MomentPath zero = MomentPath::constant(TimeGrid(T, 100), Vec::Zero(1));

  BvpScanConfig cfg;
  cfg.gamma_lo = 0.05;
  cfg.gamma_hi = 5.0;
  cfg.samples = 4000;
  cfg.integration_steps = 1000;
  std::vector<double> found = eigen_bvp_scan(zero, kappa, T, cfg);

  const double frozen[] = {1.2369729163176724, 0.30526649687916235, 0.1217933569285751,
                           0.06404988004138219};
  REQUIRE(found.size() == 4);
  for (double gamma : found) {
    double best = 1e9;
    for (double ref : frozen) best = std::min(best, std::abs(gamma - ref));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("finite-difference jacobian of the rotation reply sees only the terminal") {
  games::RotationGame rot = games::build_rotation(true, kPi / 4, 1.0, 12);
  MomentPath zero = MomentPath::constant(rot.spec.grid, Vec::Zero(2));
  BestReplyMap phi(rot.spec, BestReplyConfig{});

  Mat J = jacobian_dphi(zero, phi);
  const int K = rot.spec.grid.steps();
  const int N = 2;
  REQUIRE(J.rows() == (K + 1) * N);
  REQUIRE(J.cols() == (K + 1) * N);

  // the reply reads only eta(T): interior columns vanish identically
  CHECK(J.leftCols(K * N).cwiseAbs().maxCoeff() < 1e-10);

  // terminal block at row-node j is (t_j / T) * 2 R(theta0)
  Mat R(2, 2);
  R << std::cos(kPi / 4), -std::sin(kPi / 4), std::sin(kPi / 4), std::cos(kPi / 4);
  for (int j = 0; j <= K; ++j) {
    const double tj = rot.spec.grid.node(j);
    Mat block = J.block(j * N, K * N, N, N);
    CHECK((block - 2.0 * tj * R).cwiseAbs().maxCoeff() < 1e-6);
  }

  // nonzero spectrum: the pair 2 exp(+-i theta0)
  SpectrumReport rep = spectrum_of(J);
  CHECK(rep.spectral_radius == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(std::abs(std::abs(std::arg(rep.eigenvalues[0])) - kPi / 4) < 1e-6);
  CHECK(spectrum_matches_class(rep, StabilityClass::unstable));
}

TEST_CASE("two-well jacobian approaches the closed-form top eigenpair") {
  games::TwoWellGame game = games::build_two_well(2.0, 2.0, 16);
  MomentPath zero = MomentPath::constant(game.spec.grid, Vec::Zero(1));
  BestReplyMap phi(game.spec, BestReplyConfig{});

  Mat J = jacobian_dphi(zero, phi);
  SpectrumReport rep = spectrum_of(J);

  AnalyticSpectrum exact = analytic_spectrum_barycenter(2.0, 2.0, 1);
  CHECK(rep.spectral_radius == doctest::Approx(exact.eigenvalues[0]).epsilon(5e-3));

  Vec lead = dominant_eigenvector(J);
  Vec ref = analytic_eigenfunction(1, game.spec.grid);
  ref /= ref.norm();  // dominant_eigenvector is 2-norm normalized
  CHECK((lead - ref).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("transversal determinant of the tracking problem is exactly 1 + T") {
  const double T = 1.0;
  GameSpec spec = games::build_lq_target(1.0, T, 50);
  MomentPath zero = MomentPath::constant(spec.grid, Vec::Zero(1));
  OcpContext ctx{spec.dynamics, spec.running_cost, spec.terminal_cost, zero};
  OCPSolution sol = solve_ocp(Vec::Zero(1), ctx, ShootingConfig{});

  LinearizedSystem sys = linearize_pmp(sol.best(), ctx);
  CHECK(sys.state_dim == 1);
  CHECK(sys.terminal_hessian(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

  // X' = -P/2, P' = 0, X(0) = 0, P(0) = q: boundary operator q (1 + T); the
  // coefficient matrix is nilpotent so the integrator commits no error
  const double det = transversal_determinant(sys, spec.grid);
  CHECK(det == doctest::Approx(1.0 + T).epsilon(1e-12));
}
