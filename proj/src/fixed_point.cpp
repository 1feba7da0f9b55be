#include "mfg/fixed_point.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "mfg/numerics.hpp"

namespace mfg {

const char* to_string(PicardOutcome o) {
  switch (o) {
    case PicardOutcome::converged: return "converged";
    case PicardOutcome::max_iter: return "max_iter";
    case PicardOutcome::diverged: return "diverged";
  }
  return "unknown";
}

const char* to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::asymptotically_stable: return "asymptotically_stable";
    case StabilityClass::stable: return "stable";
    case StabilityClass::unstable: return "unstable";
  }
  return "unknown";
}

FixedPointRun picard_iterate(const MomentPath& eta0, BestReplyMap& phi,
                             const PicardConfig& cfg) {
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0))
    throw std::invalid_argument("picard: damping must lie in (0, 1]");
  if (cfg.max_iter < 1) throw std::invalid_argument("picard: max_iter must be >= 1");

  const double blowup = cfg.blowup_factor * phi.moment_radius();
  double theta = cfg.damping;

  FixedPointRun run;
  run.damping_used = theta;
  MomentPath eta = eta0;
  if (cfg.record_history) run.history.push_back(eta);

  for (int k = 1; k <= cfg.max_iter; ++k) {
    MomentPath image;
    try {
      image = phi(eta);
    } catch (const DivergenceError& e) {
      run.outcome = PicardOutcome::diverged;
      std::ostringstream os;
      os << "best reply diverged at iteration " << k << ": " << e.what();
      run.note = os.str();
      break;
    } catch (const NoCandidateError& e) {
      run.outcome = PicardOutcome::diverged;
      std::ostringstream os;
      os << "best reply lost all candidates at iteration " << k << ": " << e.what();
      run.note = os.str();
      break;
    }
    run.iterations = k;

    const double rho = sup_distance(image, eta);
    run.residuals.push_back(rho);

    if (rho < cfg.tol) {
      // eta is the point whose residual was just measured; report that point
      // so final_residual is literally ||Phi(eta_star) - eta_star||.
      run.outcome = PicardOutcome::converged;
      break;
    }
    if (image.sup_norm() > blowup) {
      run.outcome = PicardOutcome::diverged;
      std::ostringstream os;
      os << "moment path norm " << image.sup_norm() << " exceeded " << blowup
         << " at iteration " << k;
      run.note = os.str();
      break;
    }
    if (cfg.auto_damp && theta == 1.0 && run.residuals.size() >= 2 &&
        rho > run.residuals[run.residuals.size() - 2]) {
      theta = 0.5;
      run.note = "residual grew under the undamped map; damping dropped to 0.5";
    }

    if (theta == 1.0) {
      eta = std::move(image);
    } else {
      eta = MomentPath(eta.grid(),
                       (1.0 - theta) * eta.samples() + theta * image.samples());
    }
    if (cfg.record_history) run.history.push_back(eta);
  }

  run.eta_star = std::move(eta);
  run.final_residual = run.residuals.empty() ? 0.0 : run.residuals.back();
  run.damping_used = theta;
  return run;
}

FixedPointRun picard_iterate(const MomentPath& eta0, const GameSpec& spec,
                             const PicardConfig& cfg, const BestReplyConfig& reply_cfg) {
  BestReplyMap phi(spec, reply_cfg);
  return picard_iterate(eta0, phi, cfg);
}

StabilityEvidence classify_stability(const MomentPath& eta_star, BestReplyMap& phi,
                                     const StabilityConfig& cfg) {
  if (cfg.n_probes < 1) throw std::invalid_argument("stability: n_probes must be >= 1");
  if (!(cfg.eps_probe > 0.0)) throw std::invalid_argument("stability: eps_probe must be > 0");

  StabilityEvidence ev;
  ev.eps_probe = cfg.eps_probe;

  // The experiment must not depend on what the map solved before it: drop
  // the warm starts here and before each probe, so repeated runs on the same
  // map reproduce bitwise.
  phi.clear_warm_starts();
  {
    MomentPath image = phi(eta_star);
    ev.fixed_point_residual = sup_distance(image, eta_star);
    if (!(ev.fixed_point_residual < cfg.fp_tol)) {
      std::ostringstream os;
      os << "stability probe requires a fixed point: residual "
         << ev.fixed_point_residual << " >= " << cfg.fp_tol;
      throw PreconditionError(os.str());
    }
  }

  const double eps = cfg.eps_probe;
  const double escape = cfg.escape_factor * eps;
  const double blowup = 10.0 * phi.moment_radius();
  const int rows = eta_star.moment_count();
  const int cols = eta_star.grid().size();

  // One sequential generator: probe i is unchanged when n_probes grows.
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  bool any_escape = false;
  bool all_returned = true;

  for (int probe = 0; probe < cfg.n_probes; ++probe) {
    phi.clear_warm_starts();
    Mat d(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) d(r, c) = unit(rng);
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > 0.0) d /= dmax;
    else d.setOnes();

    MomentPath eta(eta_star.grid(), eta_star.samples() + eps * d);

    ProbeRecord rec;
    rec.max_excursion = eps;
    rec.outcome = PicardOutcome::max_iter;

    // Undamped iteration of the raw map; damping would change the very
    // object whose stability is being measured.
    for (int k = 1; k <= cfg.probe_max_iter; ++k) {
      MomentPath image;
      try {
        image = phi(eta);
      } catch (const SolverError&) {
        rec.outcome = PicardOutcome::diverged;
        break;
      }
      rec.iterations = k;
      const double rho = sup_distance(image, eta);
      eta = std::move(image);
      rec.max_excursion = std::max(rec.max_excursion, sup_distance(eta, eta_star));

      if (rho < cfg.fp_tol) {
        rec.outcome = PicardOutcome::converged;
        break;
      }
      if (rec.max_excursion > escape || eta.sup_norm() > blowup) {
        // Probe left the neighborhood under scrutiny; no need to follow it.
        rec.outcome = PicardOutcome::diverged;
        break;
      }
    }
    rec.final_distance = sup_distance(eta, eta_star);

    if (rec.max_excursion > escape) any_escape = true;
    if (!(rec.final_distance <= cfg.return_factor * eps)) all_returned = false;
    ev.probes.push_back(rec);
  }

  if (any_escape) ev.classification = StabilityClass::unstable;
  else if (all_returned) ev.classification = StabilityClass::asymptotically_stable;
  else ev.classification = StabilityClass::stable;
  return ev;
}

}  // namespace mfg
