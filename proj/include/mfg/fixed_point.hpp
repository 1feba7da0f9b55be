#pragma once

// Damped Picard iteration on the best-reply map and probe-based stability
// classification of its fixed points.

#include <cstdint>
#include <string>
#include <vector>

#include "mfg/best_reply.hpp"
#include "mfg/core_model.hpp"

namespace mfg {

enum class PicardOutcome { converged, max_iter, diverged };

const char* to_string(PicardOutcome o);

struct PicardConfig {
  double tol = 1e-8;
  int max_iter = 500;
  double damping = 1.0;  // eta <- (1-theta) eta + theta Phi(eta)
  // Drop the damping to 0.5 once if an undamped run sees the residual grow.
  bool auto_damp = true;
  // Declare divergence when ||Phi(eta)|| exceeds this multiple of the map's
  // a-priori moment bound.
  double blowup_factor = 10.0;
  bool record_history = true;
};

struct FixedPointRun {
  std::vector<MomentPath> history;  // eta^(0), eta^(1), ... (when recorded)
  // residuals[k] = ||Phi(eta^(k)) - eta^(k)|| in sup norm, measured before
  // any damping is applied.
  std::vector<double> residuals;
  PicardOutcome outcome = PicardOutcome::max_iter;
  MomentPath eta_star;  // the iterate at which the run stopped
  int iterations = 0;   // number of best-reply evaluations
  double final_residual = 0.0;
  double damping_used = 1.0;  // damping in effect at the end
  std::string note;
};

// Iterate eta <- (1-theta) eta + theta Phi(eta) from eta0.  On convergence
// eta_star is the iterate whose measured residual dropped below tol, so
// final_residual is exactly ||Phi(eta_star) - eta_star||.
FixedPointRun picard_iterate(const MomentPath& eta0, BestReplyMap& phi,
                             const PicardConfig& cfg = {});

// Convenience form building its own map.
FixedPointRun picard_iterate(const MomentPath& eta0, const GameSpec& spec,
                             const PicardConfig& cfg = {},
                             const BestReplyConfig& reply_cfg = {});

enum class StabilityClass { asymptotically_stable, stable, unstable };

const char* to_string(StabilityClass c);

struct StabilityConfig {
  double eps_probe = 1e-3;
  int n_probes = 8;
  std::uint64_t seed = 0x5eedu;
  double return_factor = 0.1;   // asymptotic if final distance <= factor * eps
  double escape_factor = 10.0;  // unstable if any excursion > factor * eps
  int probe_max_iter = 200;
  double fp_tol = 1e-8;  // precondition on the candidate fixed point
};

struct ProbeRecord {
  double max_excursion = 0.0;   // sup-norm distance from the fixed point
  double final_distance = 0.0;  // distance at the end of the probe run
  int iterations = 0;
  // converged: settled below the residual tolerance somewhere.
  // diverged: left the escape_factor * eps neighborhood (followed no further).
  // max_iter: still inside after the probe budget.
  PicardOutcome outcome = PicardOutcome::max_iter;
};

struct StabilityEvidence {
  StabilityClass classification = StabilityClass::stable;
  std::vector<ProbeRecord> probes;
  double eps_probe = 0.0;
  double fixed_point_residual = 0.0;
};

// Classify a verified fixed point by iterating the undamped map from seeded
// random perturbations eta* + eps * d, ||d|| = 1 in sup norm.  Probes are
// drawn sequentially from one generator, so raising n_probes extends the
// experiment without changing earlier probes; warm starts are cleared before
// each probe, so the evidence is bitwise independent of the map's prior call
// history.  Throws PreconditionError if ||Phi(eta*) - eta*|| >= fp_tol.
StabilityEvidence classify_stability(const MomentPath& eta_star, BestReplyMap& phi,
                                     const StabilityConfig& cfg = {});

}  // namespace mfg
