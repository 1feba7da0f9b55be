#pragma once

// Experiment harness: configuration with file/env/flag layering, artifact
// writers (CSV and JSON with the resolved configuration echoed into every
// file), experiment drivers, and the command line front end.
//
// Exit codes across all drivers: 0 success / converged, 1 configuration or
// I/O error, 2 diverged, 3 iteration budget exhausted.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/best_reply.hpp"
#include "mfg/core_model.hpp"
#include "mfg/fixed_point.hpp"
#include "mfg/games.hpp"
#include "mfg/spectral.hpp"

namespace mfg::cli {

using nlohmann::json;

struct GameConfig {
  std::string name = "two_well";  // two_well | rotation | double_well | lq_target | synthesized
  double kappa = 2.0;             // coupling weight (two_well, synthesized)
  double T = 3.0;
  double theta0 = 0.7853981633974483;  // rotation angle (pi/4)
  bool rotating = true;                // rotation variant selector
  double tilt = 0.0;                   // double_well terminal tilt
  double target = 1.0;                 // lq_target terminal target
};

struct ExperimentConfig {
  GameConfig game;
  int grid_steps = 200;
  std::uint64_t seed = 0x5eedu;
  std::string out_dir = "out";

  // shooting / best reply
  double shooting_tol = 1e-10;
  int multistart_per_axis = 9;
  bool enforce_bounds = true;

  // fixed point iteration
  double picard_tol = 1e-8;
  int picard_max_iter = 500;
  double damping = 1.0;
  bool auto_damp = true;

  // stability probes
  double eps_probe = 1e-3;
  int n_probes = 8;
  int probe_max_iter = 200;

  // spectrum
  double jacobian_step = 0.0;  // 0 selects 1e-5 (1 + ||eta*||)
  int spectrum_top = 3;

  // multiplicity scan
  double scan_lo = -2.0;
  double scan_hi = 2.0;
  int scan_points = 101;
  double nu = 10.0;

  // structural stability probe
  std::vector<double> deltas = {1e-1, 1e-2, 1e-3};
  std::string bump_target = "psi";  // psi | running | drift | start
  double bump_center = 0.8;
  double bump_radius = 1.0;

  // initial moment path: "zero", "constant" (uses eta0_value) or "reference"
  std::string eta0 = "zero";
  double eta0_value = 0.0;

  json to_json() const;
  static ExperimentConfig from_json(const json& j);

  // Layering: defaults, then the config file (if nonempty), then environment
  // variables MFG_<FIELD> (nested fields via __, e.g. MFG_GAME__KAPPA=4).
  // Values are parsed as JSON when possible, else taken as strings.
  static ExperimentConfig load(const std::string& config_path);
  static void apply_env(json& tree, const char* prefix = "MFG_");
};

// Resolved game bundle: the spec plus optional closed-form companions.
struct GameBundle {
  GameSpec spec;
  std::string description;
  // Set when the game has a known analytic spectrum at the zero equilibrium.
  bool has_barycenter_spectrum = false;
  double kappa = 0.0;
  double T = 0.0;
  // Set for the rotation game (closed-form reply map).
  std::optional<games::RotationGame> rotation;
  // Set for the synthesized game: the prescribed equilibrium path.
  std::optional<MomentPath> reference;
};

GameBundle build_game(const ExperimentConfig& cfg);

// eta0 = "zero" | "constant" | "reference" (the latter only for games that
// carry a reference path).
MomentPath initial_path(const ExperimentConfig& cfg, const GameBundle& bundle);

// ---------------------------------------------------------------------------
// Artifacts.  Every file starts with '#'-prefixed lines echoing the resolved
// configuration; CSV bodies are comma separated with '.' decimals and 17
// significant digits.

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const json& config_echo,
            const std::vector<std::string>& header);
  ~CsvWriter();
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& values);

 private:
  struct Impl;
  Impl* impl_;
};

void write_json_report(const std::string& path, const json& config_echo, const json& body);

std::string format_sig17(double v);

// Per-player summary of a best-reply evaluation.
void write_player_csv(const std::string& path, const json& config_echo,
                      const GameSpec& spec, const BestReplyOutput& out);

// ---------------------------------------------------------------------------
// Structural stability probe: perturb one game ingredient by delta times a
// fixed C^2 bump, re-run the fixed point iteration warm-started at the
// baseline equilibrium, and record the player-averaged trajectory distance
//   d(delta) = sup_t sum_j w_j |x_j^delta(t) - x_j^0(t)|.

// Canonical compactly supported C^2 profile on [-2, 2], normalized so that
// max(|B|, |B'|, |B''|) = 1 at unit radius.
double c2_bump(double s);

struct BumpSpec {
  std::string target = "psi";  // psi | running | drift | start
  Vec center;
  double radius = 1.0;
  Vec direction;  // used for drift and start targets
};

// The perturbed game: target ingredient shifted by delta * bump.
GameSpec apply_bump(const GameSpec& spec, const BumpSpec& bump, double delta);

struct ProbePoint {
  double delta = 0.0;
  double distance = 0.0;
  double residual = 0.0;
  int iterations = 0;
  PicardOutcome outcome = PicardOutcome::max_iter;
};

struct StructuralProbeReport {
  std::string bump_description;
  std::vector<ProbePoint> points;
  double fitted_slope = 0.0;  // log-log slope of distance against delta
  double reference_exponent = 2.0 / 3.0;
  bool all_converged = false;
  double baseline_residual = 0.0;  // ||Phi(baseline) - baseline|| before probing
};

StructuralProbeReport probe_structural_stability(const GameSpec& spec,
                                                 const MomentPath& baseline,
                                                 const BumpSpec& bump,
                                                 const std::vector<double>& deltas,
                                                 const BestReplyConfig& reply_cfg,
                                                 const PicardConfig& picard_cfg);

// ---------------------------------------------------------------------------
// Drivers.  Each writes its artifacts under cfg.out_dir and logs one-line
// progress to `log`; the return value is the process exit code.

int run_fixed_point(const ExperimentConfig& cfg, std::ostream& log);
int run_spectrum(const ExperimentConfig& cfg, std::ostream& log);
int run_multiplicity_scan(const ExperimentConfig& cfg, std::ostream& log);
int run_probe_stability(const ExperimentConfig& cfg, std::ostream& log);
int run_verify(const ExperimentConfig& cfg, std::ostream& log);
int run_check_derivatives(const ExperimentConfig& cfg, std::ostream& log);
int run_demo(const std::string& name, const ExperimentConfig& cfg, std::ostream& log);

// Full command line entry point.
int run_cli(int argc, char** argv);

}  // namespace mfg::cli
