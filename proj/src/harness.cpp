#include "mfg/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "mfg/direct_oracle.hpp"
#include "mfg/numerics.hpp"
#include "mfg/pmp_solver.hpp"

extern char** environ;

namespace mfg::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration.

json ExperimentConfig::to_json() const {
  json g{{"name", game.name},     {"kappa", game.kappa}, {"T", game.T},
         {"theta0", game.theta0}, {"rotating", game.rotating},
         {"tilt", game.tilt},     {"target", game.target}};
  return json{{"game", g},
              {"grid_steps", grid_steps},
              {"seed", seed},
              {"out_dir", out_dir},
              {"shooting_tol", shooting_tol},
              {"multistart_per_axis", multistart_per_axis},
              {"enforce_bounds", enforce_bounds},
              {"picard_tol", picard_tol},
              {"picard_max_iter", picard_max_iter},
              {"damping", damping},
              {"auto_damp", auto_damp},
              {"eps_probe", eps_probe},
              {"n_probes", n_probes},
              {"probe_max_iter", probe_max_iter},
              {"jacobian_step", jacobian_step},
              {"spectrum_top", spectrum_top},
              {"scan_lo", scan_lo},
              {"scan_hi", scan_hi},
              {"scan_points", scan_points},
              {"nu", nu},
              {"deltas", deltas},
              {"bump_target", bump_target},
              {"bump_center", bump_center},
              {"bump_radius", bump_radius},
              {"eta0", eta0},
              {"eta0_value", eta0_value}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::invalid_argument("unknown config key " + where + item.key());
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  static const std::set<std::string> top = {
      "game",        "grid_steps",    "seed",          "out_dir",
      "shooting_tol", "multistart_per_axis", "enforce_bounds",
      "picard_tol",  "picard_max_iter", "damping",     "auto_damp",
      "eps_probe",   "n_probes",      "probe_max_iter", "jacobian_step",
      "spectrum_top", "scan_lo",      "scan_hi",       "scan_points",
      "nu",          "deltas",        "bump_target",   "bump_center",
      "bump_radius", "eta0",          "eta0_value"};
  static const std::set<std::string> game_keys = {"name",     "kappa", "T",     "theta0",
                                                  "rotating", "tilt",  "target"};
  reject_unknown(j, top, "");

  ExperimentConfig c;
  if (j.contains("game")) {
    const json& g = j.at("game");
    reject_unknown(g, game_keys, "game.");
    c.game.name = g.value("name", c.game.name);
    c.game.kappa = g.value("kappa", c.game.kappa);
    c.game.T = g.value("T", c.game.T);
    c.game.theta0 = g.value("theta0", c.game.theta0);
    c.game.rotating = g.value("rotating", c.game.rotating);
    c.game.tilt = g.value("tilt", c.game.tilt);
    c.game.target = g.value("target", c.game.target);
  }
  c.grid_steps = j.value("grid_steps", c.grid_steps);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.shooting_tol = j.value("shooting_tol", c.shooting_tol);
  c.multistart_per_axis = j.value("multistart_per_axis", c.multistart_per_axis);
  c.enforce_bounds = j.value("enforce_bounds", c.enforce_bounds);
  c.picard_tol = j.value("picard_tol", c.picard_tol);
  c.picard_max_iter = j.value("picard_max_iter", c.picard_max_iter);
  c.damping = j.value("damping", c.damping);
  c.auto_damp = j.value("auto_damp", c.auto_damp);
  c.eps_probe = j.value("eps_probe", c.eps_probe);
  c.n_probes = j.value("n_probes", c.n_probes);
  c.probe_max_iter = j.value("probe_max_iter", c.probe_max_iter);
  c.jacobian_step = j.value("jacobian_step", c.jacobian_step);
  c.spectrum_top = j.value("spectrum_top", c.spectrum_top);
  c.scan_lo = j.value("scan_lo", c.scan_lo);
  c.scan_hi = j.value("scan_hi", c.scan_hi);
  c.scan_points = j.value("scan_points", c.scan_points);
  c.nu = j.value("nu", c.nu);
  if (j.contains("deltas")) c.deltas = j.at("deltas").get<std::vector<double>>();
  c.bump_target = j.value("bump_target", c.bump_target);
  c.bump_center = j.value("bump_center", c.bump_center);
  c.bump_radius = j.value("bump_radius", c.bump_radius);
  c.eta0 = j.value("eta0", c.eta0);
  c.eta0_value = j.value("eta0_value", c.eta0_value);

  if (c.grid_steps < 2) throw std::invalid_argument("config: grid_steps must be >= 2");
  if (c.scan_points < 1) throw std::invalid_argument("config: scan_points must be >= 1");
  return c;
}

void ExperimentConfig::apply_env(json& tree, const char* prefix) {
  const std::string pre(prefix);
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.compare(0, pre.size(), pre) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(pre.size(), eq - pre.size());
    const std::string value = entry.substr(eq + 1);

    std::string pointer;
    std::string part;
    std::istringstream parts(name);
    // split on "__" by scanning
    size_t pos = 0;
    while (pos <= name.size()) {
      const auto sep = name.find("__", pos);
      part = name.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
      std::transform(part.begin(), part.end(), part.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      pointer += "/" + part;
      if (sep == std::string::npos) break;
      pos = sep + 2;
    }

    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = json(value);
    tree[json::json_pointer(pointer)] = parsed;
  }
}

ExperimentConfig ExperimentConfig::load(const std::string& config_path) {
  json tree = ExperimentConfig{}.to_json();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("config: cannot open " + config_path);
    json file_tree;
    in >> file_tree;
    tree.merge_patch(file_tree);
  }
  apply_env(tree);
  return from_json(tree);
}

// ---------------------------------------------------------------------------
// Game construction.

GameBundle build_game(const ExperimentConfig& cfg) {
  const GameConfig& g = cfg.game;
  GameBundle bundle;
  bundle.kappa = g.kappa;
  bundle.T = g.T;

  if (g.name == "two_well") {
    auto game = games::build_two_well(g.kappa, g.T, cfg.grid_steps);
    bundle.spec = std::move(game.spec);
    bundle.has_barycenter_spectrum = true;
    std::ostringstream os;
    os << "two-well barycenter game, kappa=" << g.kappa << ", T=" << g.T;
    bundle.description = os.str();
  } else if (g.name == "rotation") {
    auto game = games::build_rotation(g.rotating, g.theta0, g.T, cfg.grid_steps);
    bundle.spec = game.spec;
    bundle.rotation = std::move(game);
    std::ostringstream os;
    os << "planar reply-map game, " << (g.rotating ? "rotating" : "plain")
       << " variant, T=" << g.T;
    bundle.description = os.str();
  } else if (g.name == "double_well") {
    bundle.spec = games::build_double_well(g.T, cfg.grid_steps, g.tilt);
    std::ostringstream os;
    os << "double-well terminal-cost control problem, T=" << g.T << ", tilt=" << g.tilt;
    bundle.description = os.str();
  } else if (g.name == "lq_target") {
    bundle.spec = games::build_lq_target(g.target, g.T, cfg.grid_steps);
    std::ostringstream os;
    os << "quadratic tracking problem, target=" << g.target << ", T=" << g.T;
    bundle.description = os.str();
  } else if (g.name == "synthesized") {
    // Base problem: the double well at tilt 0; prescribe its right-well
    // optimum and add the coupling.
    GameSpec base = games::build_double_well(g.T, cfg.grid_steps, 0.0);
    MomentPath zero = MomentPath::constant(base.grid, Vec::Zero(1));
    OcpContext ctx{base.dynamics, base.running_cost, base.terminal_cost, zero};
    ShootingConfig sc;
    sc.newton_tol = cfg.shooting_tol;
    OCPSolution sol = solve_ocp(Vec::Zero(1), ctx, sc);
    const PMPTrajectory* right = nullptr;
    for (int i : sol.optimal) {
      const auto& cand = sol.candidates[static_cast<size_t>(i)];
      if (cand.terminal()[0] > 0.0) right = &cand;
    }
    if (right == nullptr)
      throw SolverError("synthesized game: no right-well optimum found in the base problem");
    auto synth = games::synthesize_mfg(base, *right, g.kappa);
    bundle.spec = std::move(synth.spec);
    bundle.reference = std::move(synth.reference);
    std::ostringstream os;
    os << "double-well optimum synthesized into an equilibrium, kappa=" << g.kappa
       << ", T=" << g.T << ", base residual " << synth.base_pmp_residual;
    bundle.description = os.str();
  } else {
    throw std::invalid_argument(
        "config: unknown game '" + g.name +
        "' (expected two_well, rotation, double_well, lq_target, synthesized)");
  }
  return bundle;
}

MomentPath initial_path(const ExperimentConfig& cfg, const GameBundle& bundle) {
  const int n = bundle.spec.moments.count();
  if (cfg.eta0 == "zero") return MomentPath::constant(bundle.spec.grid, Vec::Zero(n));
  if (cfg.eta0 == "constant")
    return MomentPath::constant(bundle.spec.grid, Vec::Constant(n, cfg.eta0_value));
  if (cfg.eta0 == "reference") {
    if (!bundle.reference)
      throw std::invalid_argument("config: this game carries no reference path");
    return *bundle.reference;
  }
  throw std::invalid_argument("config: eta0 must be 'zero', 'constant' or 'reference'");
}

// ---------------------------------------------------------------------------
// Artifacts.

std::string format_sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path, const json& config_echo,
                     const std::vector<std::string>& header)
    : impl_(new Impl) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw std::invalid_argument("csv: cannot open " + path);
  }
  impl_->out << "# config " << config_echo.dump() << "\n";
  for (size_t i = 0; i < header.size(); ++i)
    impl_->out << header[i] << (i + 1 < header.size() ? "," : "\n");
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<double>& values) {
  for (size_t i = 0; i < values.size(); ++i)
    impl_->out << format_sig17(values[i]) << (i + 1 < values.size() ? "," : "\n");
}

void CsvWriter::row_mixed(const std::vector<std::string>& values) {
  for (size_t i = 0; i < values.size(); ++i)
    impl_->out << values[i] << (i + 1 < values.size() ? "," : "\n");
}

void write_json_report(const std::string& path, const json& config_echo, const json& body) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("report: cannot open " + path);
  json doc{{"config", config_echo}, {"report", body}};
  out << doc.dump(2) << "\n";
}

void write_player_csv(const std::string& path, const json& config_echo,
                      const GameSpec& spec, const BestReplyOutput& out) {
  const int n = spec.dynamics.state_dim;
  std::vector<std::string> header = {"player", "label", "weight", "group", "tie", "cost"};
  for (int i = 0; i < n; ++i) header.push_back("terminal_" + std::to_string(i));

  CsvWriter csv(path, config_echo, header);
  for (int j = 0; j < spec.players.size(); ++j) {
    const auto& sol = out.solution_for(j);
    const auto& best = sol.best();
    std::vector<std::string> row = {std::to_string(j),
                                    format_sig17(spec.players.labels[static_cast<size_t>(j)]),
                                    format_sig17(spec.players.weights[static_cast<size_t>(j)]),
                                    std::to_string(out.player_group[static_cast<size_t>(j)]),
                                    sol.multiplicity ? "1" : "0",
                                    format_sig17(best.total_cost)};
    for (int i = 0; i < n; ++i) row.push_back(format_sig17(best.terminal()[i]));
    csv.row_mixed(row);
  }
}

// ---------------------------------------------------------------------------
// Structural stability probe.

double c2_bump(double s) {
  const double a = std::abs(s);
  if (a >= 2.0) return 0.0;
  if (a <= 1.0) return (2.0 / 3.0 - a * a + a * a * a / 2.0) / 2.0;
  const double w = 2.0 - a;
  return w * w * w / 12.0;
}

namespace {

double c2_bump_deriv(double s) {
  const double a = std::abs(s);
  const double sign = s < 0.0 ? -1.0 : 1.0;
  if (a >= 2.0) return 0.0;
  if (a <= 1.0) return sign * (-2.0 * a + 1.5 * a * a) / 2.0;
  const double w = 2.0 - a;
  return sign * (-w * w / 2.0) / 2.0;
}

// Radial bump with unit C^2 norm (normalized by the one-dimensional profile
// sups: max(1/3, 1/(3r), 1/r^2) before scaling).
struct RadialBump {
  Vec center;
  double radius = 1.0;
  double norm = 1.0;

  RadialBump(Vec c, double r) : center(std::move(c)), radius(r) {
    norm = std::max({1.0 / 3.0, 1.0 / (3.0 * r), 1.0 / (r * r)});
  }

  double value(const Vec& x) const {
    return c2_bump((x - center).norm() / radius) / norm;
  }
  Vec grad(const Vec& x) const {
    const Vec d = x - center;
    const double dist = d.norm();
    if (dist < 1e-12) return Vec::Zero(d.size());
    return (c2_bump_deriv(dist / radius) / (norm * radius)) * (d / dist);
  }
};

}  // namespace

GameSpec apply_bump(const GameSpec& spec, const BumpSpec& bump, double delta) {
  GameSpec out = spec;
  const int n = spec.dynamics.state_dim;
  Vec center = bump.center.size() == n ? bump.center : Vec::Zero(n);
  if (!(bump.radius > 0.0)) throw std::invalid_argument("bump: radius must be positive");
  RadialBump b(center, bump.radius);

  if (bump.target == "psi") {
    const TerminalCost base = spec.terminal_cost;
    out.terminal_cost.value = [base, b, delta](const Vec& x, const Vec& eta_T) {
      return base.value(x, eta_T) + delta * b.value(x);
    };
    out.terminal_cost.gradient = [base, b, delta](const Vec& x, const Vec& eta_T) {
      return (base.eval_gradient(x, eta_T) + delta * b.grad(x)).eval();
    };
    out.terminal_cost.hessian = nullptr;  // finite differences of the sum
  } else if (bump.target == "running") {
    const RunningCost base = spec.running_cost;
    out.running_cost.value = [base, b, delta](double t, const Vec& x, const Vec& u,
                                              const Vec& eta) {
      return base.value(t, x, u, eta) + delta * b.value(x);
    };
    out.running_cost.grad_x = [base, b, delta](double t, const Vec& x, const Vec& u,
                                               const Vec& eta) {
      return (base.eval_grad_x(t, x, u, eta) + delta * b.grad(x)).eval();
    };
  } else if (bump.target == "drift") {
    Vec dir = bump.direction.size() == n ? bump.direction : Vec::Unit(n, 0);
    const auto base = spec.dynamics.drift;
    out.dynamics.drift = [base, b, delta, dir](double t, const Vec& x, const Vec& eta) {
      return (base(t, x, eta) + (delta * b.value(x)) * dir).eval();
    };
    out.dynamics.drift_dx = nullptr;  // fall back to differencing the sum
  } else if (bump.target == "start") {
    Vec dir = bump.direction.size() == n ? bump.direction : Vec::Unit(n, 0);
    for (auto& p : out.players.initial_points) p += delta * dir;
  } else {
    throw std::invalid_argument("bump: target must be psi, running, drift or start");
  }
  return out;
}

StructuralProbeReport probe_structural_stability(const GameSpec& spec,
                                                 const MomentPath& baseline,
                                                 const BumpSpec& bump,
                                                 const std::vector<double>& deltas,
                                                 const BestReplyConfig& reply_cfg,
                                                 const PicardConfig& picard_cfg) {
  StructuralProbeReport report;
  {
    std::ostringstream os;
    os << bump.target << " bump";
    if (bump.target != "start") {
      os << " centered at [";
      Vec c = bump.center.size() == spec.dynamics.state_dim ? bump.center
                                                            : Vec::Zero(spec.dynamics.state_dim);
      for (Eigen::Index i = 0; i < c.size(); ++i) os << (i ? ", " : "") << c[i];
      os << "], radius " << bump.radius << ", unit C2 norm";
    } else {
      os << " (initial-point shift)";
    }
    report.bump_description = os.str();
  }

  BestReplyMap phi0(spec, reply_cfg);
  BestReplyOutput base_out = phi0.apply(baseline);
  report.baseline_residual = sup_distance(base_out.eta_new, baseline);

  const auto& weights = spec.players.weights;
  const int nodes = spec.grid.size();

  for (double delta : deltas) {
    ProbePoint pt;
    pt.delta = delta;
    GameSpec bumped = apply_bump(spec, bump, delta);
    BestReplyMap phi(bumped, reply_cfg);
    FixedPointRun run = picard_iterate(baseline, phi, picard_cfg);
    pt.outcome = run.outcome;
    pt.iterations = run.iterations;
    pt.residual = run.final_residual;
    if (run.outcome == PicardOutcome::converged) {
      BestReplyOutput out = phi.apply(run.eta_star);
      double dist = 0.0;
      for (int k = 0; k < nodes; ++k) {
        double dk = 0.0;
        for (size_t j = 0; j < weights.size(); ++j) {
          const auto& xd = out.solution_for(static_cast<int>(j)).best().states[static_cast<size_t>(k)];
          const auto& x0 =
              base_out.solution_for(static_cast<int>(j)).best().states[static_cast<size_t>(k)];
          dk += weights[j] * (xd - x0).norm();
        }
        dist = std::max(dist, dk);
      }
      pt.distance = dist;
    }
    report.points.push_back(pt);
  }

  report.all_converged =
      std::all_of(report.points.begin(), report.points.end(),
                  [](const ProbePoint& p) { return p.outcome == PicardOutcome::converged; });

  // Log-log regression over the converged, nonzero distances.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& p : report.points) {
    if (p.outcome != PicardOutcome::converged || !(p.distance > 0.0)) continue;
    const double lx = std::log(p.delta), ly = std::log(p.distance);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m >= 2) {
    const double denom = m * sxx - sx * sx;
    report.fitted_slope = denom != 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Drivers.

namespace {

int exit_code(PicardOutcome o) {
  switch (o) {
    case PicardOutcome::converged: return 0;
    case PicardOutcome::diverged: return 2;
    case PicardOutcome::max_iter: return 3;
  }
  return 1;
}

BestReplyConfig reply_config(const ExperimentConfig& cfg) {
  BestReplyConfig bc;
  bc.shooting.newton_tol = cfg.shooting_tol;
  bc.shooting.multistart_per_axis = cfg.multistart_per_axis;
  bc.enforce_bounds = cfg.enforce_bounds;
  return bc;
}

PicardConfig picard_config(const ExperimentConfig& cfg) {
  PicardConfig pc;
  pc.tol = cfg.picard_tol;
  pc.max_iter = cfg.picard_max_iter;
  pc.damping = cfg.damping;
  pc.auto_damp = cfg.auto_damp;
  return pc;
}

StabilityConfig stability_config(const ExperimentConfig& cfg) {
  StabilityConfig sc;
  sc.eps_probe = cfg.eps_probe;
  sc.n_probes = cfg.n_probes;
  sc.probe_max_iter = cfg.probe_max_iter;
  sc.seed = cfg.seed;
  sc.fp_tol = cfg.picard_tol;
  return sc;
}

json run_to_json(const FixedPointRun& run) {
  return json{{"outcome", to_string(run.outcome)},
              {"iterations", run.iterations},
              {"final_residual", run.final_residual},
              {"damping_used", run.damping_used},
              {"note", run.note}};
}

}  // namespace

int run_fixed_point(const ExperimentConfig& cfg, std::ostream& log) {
  GameBundle bundle = build_game(cfg);
  BestReplyMap phi(bundle.spec, reply_config(cfg));
  MomentPath eta0 = initial_path(cfg, bundle);
  FixedPointRun run = picard_iterate(eta0, phi, picard_config(cfg));

  const json echo = cfg.to_json();
  {
    CsvWriter csv(cfg.out_dir + "/residuals.csv", echo, {"iteration", "residual"});
    for (size_t i = 0; i < run.residuals.size(); ++i)
      csv.row({static_cast<double>(i + 1), run.residuals[i]});
  }
  {
    std::vector<std::string> header = {"t"};
    for (int i = 0; i < run.eta_star.moment_count(); ++i)
      header.push_back("eta_" + std::to_string(i));
    CsvWriter csv(cfg.out_dir + "/eta_star.csv", echo, header);
    for (int k = 0; k < bundle.spec.grid.size(); ++k) {
      std::vector<double> row = {bundle.spec.grid.node(k)};
      for (int i = 0; i < run.eta_star.moment_count(); ++i)
        row.push_back(run.eta_star.samples()(i, k));
      csv.row(row);
    }
  }

  json body = run_to_json(run);
  body["game"] = bundle.description;
  body["moment_radius"] = phi.moment_radius();
  try {
    BestReplyOutput last = phi.apply(run.eta_star);
    write_player_csv(cfg.out_dir + "/players.csv", echo, bundle.spec, last);
    body["tie_mass"] = last.tie_mass;
    body["selection_rule"] = last.selection_rule;
  } catch (const SolverError& e) {
    body["player_summary_error"] = e.what();
  }
  write_json_report(cfg.out_dir + "/fixed_point.json", echo, body);

  log << "fixed-point: " << to_string(run.outcome) << " after " << run.iterations
      << " best-reply evaluations, residual " << run.final_residual << "\n";
  return exit_code(run.outcome);
}

int run_spectrum(const ExperimentConfig& cfg, std::ostream& log) {
  GameBundle bundle = build_game(cfg);
  BestReplyMap phi(bundle.spec, reply_config(cfg));
  MomentPath eta0 = initial_path(cfg, bundle);
  FixedPointRun run = picard_iterate(eta0, phi, picard_config(cfg));
  if (run.outcome != PicardOutcome::converged) {
    log << "spectrum: fixed point iteration " << to_string(run.outcome)
        << "; no spectrum computed\n";
    return exit_code(run.outcome);
  }

  Mat jac = jacobian_dphi(run.eta_star, phi, cfg.jacobian_step);
  SpectrumReport rep = spectrum_of(jac);
  StabilityEvidence ev = classify_stability(run.eta_star, phi, stability_config(cfg));
  rep.consistent_with_probes = spectrum_matches_class(rep, ev.classification);

  const json echo = cfg.to_json();
  std::optional<AnalyticSpectrum> ana;
  if (bundle.has_barycenter_spectrum && run.eta_star.sup_norm() < 1e-6)
    ana = analytic_spectrum_barycenter(bundle.kappa, bundle.T, cfg.spectrum_top);

  {
    CsvWriter csv(cfg.out_dir + "/spectrum.csv", echo,
                  {"n", "lambda_re", "lambda_im", "lambda_analytic", "abs_err"});
    const int rows = std::min<int>(cfg.spectrum_top, static_cast<int>(rep.eigenvalues.size()));
    for (int i = 0; i < rows; ++i) {
      const auto ev_i = rep.eigenvalues[static_cast<size_t>(i)];
      double a = std::numeric_limits<double>::quiet_NaN();
      double err = std::numeric_limits<double>::quiet_NaN();
      if (ana && i < static_cast<int>(ana->eigenvalues.size())) {
        a = ana->eigenvalues[static_cast<size_t>(i)];
        err = std::abs(ev_i - a);
      }
      csv.row({static_cast<double>(i + 1), ev_i.real(), ev_i.imag(), a, err});
    }
  }

  json body{{"game", bundle.description},
            {"dimension", rep.dimension},
            {"spectral_radius", rep.spectral_radius},
            {"distance_to_one", rep.distance_to_one},
            {"classification", to_string(ev.classification)},
            {"consistent_with_probes", *rep.consistent_with_probes},
            {"fixed_point_residual", run.final_residual}};
  if (ana) body["resonance"] = ana->resonance;
  write_json_report(cfg.out_dir + "/spectrum.json", echo, body);

  log << "spectrum: radius " << rep.spectral_radius << ", probes say "
      << to_string(ev.classification)
      << (*rep.consistent_with_probes ? " (consistent)" : " (MISMATCH)") << "\n";
  return 0;
}

int run_multiplicity_scan(const ExperimentConfig& cfg, std::ostream& log) {
  GameBundle bundle = build_game(cfg);
  if (bundle.spec.dynamics.state_dim != 1)
    throw std::invalid_argument("scan: initial-point sweep is one dimensional");

  MomentPath eta = initial_path(cfg, bundle);
  std::vector<Vec> grid;
  grid.reserve(static_cast<size_t>(cfg.scan_points));
  for (int i = 0; i < cfg.scan_points; ++i) {
    const double x = cfg.scan_points == 1
                         ? 0.5 * (cfg.scan_lo + cfg.scan_hi)
                         : cfg.scan_lo + (cfg.scan_hi - cfg.scan_lo) * i / (cfg.scan_points - 1);
    grid.push_back(Vec::Constant(1, x));
  }

  ShootingConfig sc = reply_config(cfg).shooting;
  MultiplicityReport rep = multiplicity_scan(bundle.spec, eta, grid, cfg.nu, sc);

  const json echo = cfg.to_json();
  {
    CsvWriter csv(cfg.out_dir + "/scan.csv", echo,
                  {"index", "xbar", "ok", "flagged", "separation", "cost_gap", "candidates",
                   "optimal"});
    for (size_t i = 0; i < rep.points.size(); ++i) {
      const auto& p = rep.points[i];
      csv.row({static_cast<double>(i), p.xbar[0], p.ok ? 1.0 : 0.0, p.flagged ? 1.0 : 0.0,
               p.separation, p.cost_gap, static_cast<double>(p.candidate_count),
               static_cast<double>(p.optimal_count)});
    }
  }
  json body{{"game", bundle.description},
            {"measure", rep.measure},
            {"flagged_count", rep.flagged.size()},
            {"failures", rep.failures},
            {"nu", rep.nu},
            {"points", rep.points.size()}};
  write_json_report(cfg.out_dir + "/scan.json", echo, body);

  log << "scan: " << rep.flagged.size() << "/" << rep.points.size()
      << " initial points carry a split optimum (measure " << rep.measure << ", "
      << rep.failures << " failures)\n";
  return 0;
}

int run_probe_stability(const ExperimentConfig& cfg, std::ostream& log) {
  GameBundle bundle = build_game(cfg);
  BestReplyMap phi(bundle.spec, reply_config(cfg));
  MomentPath eta0 = initial_path(cfg, bundle);
  FixedPointRun run = picard_iterate(eta0, phi, picard_config(cfg));
  if (run.outcome != PicardOutcome::converged) {
    log << "probe-stability: baseline iteration " << to_string(run.outcome) << "\n";
    return exit_code(run.outcome);
  }

  BumpSpec bump;
  bump.target = cfg.bump_target;
  bump.center = Vec::Constant(bundle.spec.dynamics.state_dim, cfg.bump_center);
  bump.radius = cfg.bump_radius;

  StructuralProbeReport rep = probe_structural_stability(
      bundle.spec, run.eta_star, bump, cfg.deltas, reply_config(cfg), picard_config(cfg));

  const json echo = cfg.to_json();
  {
    CsvWriter csv(cfg.out_dir + "/probes.csv", echo,
                  {"delta", "distance", "residual", "iterations", "outcome_code"});
    for (const auto& p : rep.points)
      csv.row({p.delta, p.distance, p.residual, static_cast<double>(p.iterations),
               static_cast<double>(exit_code(p.outcome))});
  }
  json body{{"game", bundle.description},
            {"bump", rep.bump_description},
            {"baseline_residual", rep.baseline_residual},
            {"fitted_slope", rep.fitted_slope},
            {"reference_exponent", rep.reference_exponent},
            {"all_converged", rep.all_converged}};
  write_json_report(cfg.out_dir + "/probe.json", echo, body);

  log << "probe-stability: " << rep.bump_description << ", slope " << rep.fitted_slope
      << (rep.all_converged ? "" : " (some probes did not converge)") << "\n";
  if (rep.all_converged) return 0;
  for (const auto& p : rep.points)
    if (p.outcome == PicardOutcome::diverged) return 2;
  return 3;
}

namespace {

struct VerifyCase {
  std::string name;
  GameSpec spec;
  Vec eta_value;  // frozen constant moment path
  Vec xbar;
};

}  // namespace

int run_verify(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<VerifyCase> cases;
  {
    VerifyCase c;
    c.name = "lq_target";
    c.spec = games::build_lq_target(1.0, 1.0, cfg.grid_steps);
    c.eta_value = Vec::Zero(1);
    c.xbar = Vec::Zero(1);
    cases.push_back(std::move(c));
  }
  {
    VerifyCase c;
    c.name = "double_well_tied";
    c.spec = games::build_double_well(1.0, cfg.grid_steps, 0.0);
    c.eta_value = Vec::Zero(1);
    c.xbar = Vec::Zero(1);
    cases.push_back(std::move(c));
  }
  {
    VerifyCase c;
    c.name = "double_well_offset";
    c.spec = games::build_double_well(1.0, cfg.grid_steps, 0.0);
    c.eta_value = Vec::Zero(1);
    c.xbar = Vec::Constant(1, 0.5);
    cases.push_back(std::move(c));
  }
  {
    VerifyCase c;
    c.name = "two_well_frozen";
    c.spec = games::build_two_well(2.0, 2.0, cfg.grid_steps).spec;
    c.eta_value = Vec::Constant(1, 0.3);
    c.xbar = Vec::Zero(1);
    cases.push_back(std::move(c));
  }
  {
    VerifyCase c;
    c.name = "rotation_frozen";
    c.spec = games::build_rotation(true, cfg.game.theta0, 1.0, cfg.grid_steps).spec;
    c.eta_value = Vec(2);
    c.eta_value << 0.3, 0.2;
    c.xbar = Vec::Zero(2);
    cases.push_back(std::move(c));
  }

  const double rel_cost_tol = 1e-3;
  const double terminal_tol = 1e-2;

  const json echo = cfg.to_json();
  CsvWriter csv(cfg.out_dir + "/verify.csv", echo,
                {"case_index", "cost_pmp", "cost_direct", "rel_cost_gap", "terminal_gap",
                 "pass"});
  json rows = json::array();
  bool all_pass = true;

  for (size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& c = cases[ci];
    MomentPath eta = MomentPath::constant(c.spec.grid, c.eta_value);
    OcpContext ctx{c.spec.dynamics, c.spec.running_cost, c.spec.terminal_cost, eta};

    ShootingConfig sc;
    sc.newton_tol = cfg.shooting_tol;
    sc.multistart_per_axis = cfg.multistart_per_axis;
    OCPSolution pmp = solve_ocp(c.xbar, ctx, sc);

    DirectConfig dc;
    dc.seed = cfg.seed;
    dc.starts = 24;
    DirectResult direct = solve_direct(c.xbar, ctx, dc);

    const double cost_pmp = pmp.best().total_cost;
    const double cost_direct = direct.best().cost;
    const double rel_gap = std::abs(cost_pmp - cost_direct) / (1.0 + std::abs(cost_direct));

    // Compare against the nearest direct minimum: with a tied optimal set the
    // two routes may legitimately pick different representatives.
    double terminal_gap = std::numeric_limits<double>::infinity();
    for (const auto& m : direct.minima) {
      double local = std::numeric_limits<double>::infinity();
      for (int oi : pmp.optimal) {
        const auto& cand = pmp.candidates[static_cast<size_t>(oi)];
        local = std::min(local,
                         (cand.terminal() - m.states.back()).cwiseAbs().maxCoeff());
      }
      terminal_gap = std::min(terminal_gap, local);
    }

    const bool pass = rel_gap <= rel_cost_tol && terminal_gap <= terminal_tol;
    all_pass = all_pass && pass;

    csv.row({static_cast<double>(ci), cost_pmp, cost_direct, rel_gap, terminal_gap,
             pass ? 1.0 : 0.0});
    rows.push_back(json{{"case", c.name},
                        {"cost_pmp", cost_pmp},
                        {"cost_direct", cost_direct},
                        {"rel_cost_gap", rel_gap},
                        {"terminal_gap", terminal_gap},
                        {"pmp_candidates", pmp.candidates.size()},
                        {"direct_minima", direct.minima.size()},
                        {"pass", pass}});
    log << "verify[" << c.name << "]: pmp " << cost_pmp << " vs direct " << cost_direct
        << " (rel gap " << rel_gap << ", terminal gap " << terminal_gap << ") "
        << (pass ? "ok" : "FAIL") << "\n";
  }

  write_json_report(cfg.out_dir + "/verify.json", echo,
                    json{{"cases", rows},
                         {"rel_cost_tol", rel_cost_tol},
                         {"terminal_tol", terminal_tol},
                         {"all_pass", all_pass}});
  return all_pass ? 0 : 2;
}

int run_check_derivatives(const ExperimentConfig& cfg, std::ostream& log) {
  GameBundle bundle = build_game(cfg);
  ValidationReport rep = check_derivatives(bundle.spec, 50, cfg.seed);

  const json echo = cfg.to_json();
  json rows = json::array();
  for (const auto& c : rep.checks)
    rows.push_back(json{{"name", c.name},
                        {"max_rel_error", c.max_rel_error},
                        {"ok", c.ok},
                        {"failure", c.failure}});
  write_json_report(cfg.out_dir + "/check_derivatives.json", echo,
                    json{{"game", bundle.description},
                         {"flag_threshold", rep.flag_threshold},
                         {"all_ok", rep.all_ok},
                         {"checks", rows}});

  log << "check-derivatives: " << (rep.all_ok ? "all supplied derivatives agree"
                                              : "derivative disagreement flagged")
      << " (threshold " << rep.flag_threshold << ")\n";
  return rep.all_ok ? 0 : 2;
}

int run_demo(const std::string& name, const ExperimentConfig& cfg, std::ostream& log) {
  const json echo = cfg.to_json();
  if (name == "two_well") {
    auto sol = games::solve_el_monotone(cfg.game.T, 1e-12, 1000);
    log << "monotone branch: turning height " << sol.turning_height << ", terminal gap "
        << sol.terminal_gap << ", energy drift " << sol.energy_drift << "\n";
    ExperimentConfig run_cfg = cfg;
    run_cfg.eta0 = "constant";
    run_cfg.eta0_value = 0.9 * sol.turning_height;
    const int code = run_fixed_point(run_cfg, log);
    write_json_report(cfg.out_dir + "/demo.json", echo,
                      json{{"demo", name},
                           {"turning_height", sol.turning_height},
                           {"energy_drift", sol.energy_drift},
                           {"fixed_point_exit", code}});
    return code;
  }
  if (name == "rotation") {
    auto game = games::build_rotation(cfg.game.rotating, cfg.game.theta0, cfg.game.T,
                                      cfg.grid_steps);
    double r = 0.05;
    json radii = json::array();
    for (int k = 0; k < 30; ++k) {
      radii.push_back(r);
      r = game.radius_map(r);
    }
    log << "planar radius map from 0.05: reaches " << r << " after 30 steps\n";
    write_json_report(cfg.out_dir + "/demo.json", echo,
                      json{{"demo", name}, {"radii", radii}, {"final", r}});
    return 0;
  }
  if (name == "double_well") {
    auto tied = games::double_well_candidates(0.0, cfg.game.T, cfg.game.tilt);
    json body{{"demo", name}, {"terminals", tied.terminals}, {"costs", tied.costs}};
    log << "double well at 0: " << tied.terminals.size() << " stationary terminals\n";
    write_json_report(cfg.out_dir + "/demo.json", echo, body);
    return 0;
  }
  if (name == "no_solution") {
    auto kc = games::no_solution_kernel();
    auto tc = games::no_solution_terminal();
    log << "kernel game: tie mass " << kc.tie_mass << ", induced field min/T "
        << kc.induced_field_min_over_T << ", gram min eig " << kc.gram_min_eigenvalue << "\n";
    log << "terminal game: reply to zero field ends at " << tc.zero_field_reply_terminal
        << " with cost " << tc.zero_field_move_cost << "; cost jump " << tc.cost_jump_at_zero
        << "\n";
    write_json_report(
        cfg.out_dir + "/demo.json", echo,
        json{{"demo", name},
             {"kernel",
              json{{"tie_mass", kc.tie_mass},
                   {"tie_cost_gap", kc.tie_cost_gap},
                   {"induced_field_min_over_T", kc.induced_field_min_over_T},
                   {"equilibrium_form_value", kc.equilibrium_form_value},
                   {"gram_min_eigenvalue", kc.gram_min_eigenvalue},
                   {"mixture_field_sup", kc.mixture_field_sup}}},
             {"terminal", json{{"stay_cost", tc.zero_field_stay_cost},
                               {"move_cost", tc.zero_field_move_cost},
                               {"ramp_shortfall", tc.ramp_shortfall},
                               {"ramp_reply_cost", tc.ramp_reply_cost},
                               {"cost_jump", tc.cost_jump_at_zero}}}});
    return 0;
  }
  if (name == "synthesized") {
    ExperimentConfig run_cfg = cfg;
    run_cfg.game.name = "synthesized";
    if (run_cfg.game.T > 1.5) run_cfg.game.T = 1.0;
    if (run_cfg.game.kappa < 10.0) run_cfg.game.kappa = 50.0;
    run_cfg.eta0 = "reference";
    return run_fixed_point(run_cfg, log);
  }
  log << "unknown demo '" << name
      << "' (available: two_well, rotation, double_well, no_solution, synthesized)\n";
  return 1;
}

// ---------------------------------------------------------------------------
// Command line.

int run_cli(int argc, char** argv) {
  CLI::App app{"first-order mean field games: best replies, fixed points, spectra"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file");
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--seed", seed_flag, "override the experiment seed");
  std::optional<int> grid_flag;
  app.add_option("--grid", grid_flag, "override the number of grid steps");
  std::optional<std::string> out_flag;
  app.add_option("--out", out_flag, "override the output directory");

  std::string demo_name;
  CLI::App* demo = app.add_subcommand("demo", "run a named showcase");
  demo->add_option("name", demo_name, "two_well | rotation | double_well | no_solution | synthesized")
      ->required();
  CLI::App* fixed_point = app.add_subcommand("fixed-point", "iterate the best reply to a fixed point");
  CLI::App* spectrum = app.add_subcommand("spectrum", "differentiate the best reply at a fixed point");
  CLI::App* scan = app.add_subcommand("scan-multiplicity", "sweep initial points for split optima");
  CLI::App* probe = app.add_subcommand("probe-stability", "re-solve under small structural bumps");
  CLI::App* verify = app.add_subcommand("verify", "cross-check the shooting solver against direct transcription");
  CLI::App* check = app.add_subcommand("check-derivatives", "compare supplied derivatives with finite differences");
  // let the shared flags be written after the subcommand name
  for (CLI::App* s : {demo, fixed_point, spectrum, scan, probe, verify, check}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (seed_flag) cfg.seed = *seed_flag;
    if (grid_flag) cfg.grid_steps = *grid_flag;
    if (out_flag) cfg.out_dir = *out_flag;

    std::ostream& log = std::cout;
    if (demo->parsed()) return run_demo(demo_name, cfg, log);
    if (fixed_point->parsed()) return run_fixed_point(cfg, log);
    if (spectrum->parsed()) return run_spectrum(cfg, log);
    if (scan->parsed()) return run_multiplicity_scan(cfg, log);
    if (probe->parsed()) return run_probe_stability(cfg, log);
    if (verify->parsed()) return run_verify(cfg, log);
    if (check->parsed()) return run_check_derivatives(cfg, log);
    return 1;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mfg::cli
