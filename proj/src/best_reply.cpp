#include "mfg/best_reply.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "mfg/numerics.hpp"

namespace mfg {

namespace {

std::vector<double> key_of(const Vec& x) {
  return std::vector<double>(x.data(), x.data() + x.size());
}

}  // namespace

BestReplyMap::BestReplyMap(const GameSpec& spec, BestReplyConfig cfg)
    : spec_(spec), cfg_(std::move(cfg)) {
  spec_.validate();
  beta0_ = reachable_radius(spec_);
  alpha_ = control_bound(spec_);
  gamma0_ = moment_bound(spec_);

  // Group players sharing a bitwise-identical initial point; the map orders
  // groups lexicographically, which keeps every later loop deterministic.
  std::map<std::vector<double>, int> index;
  const auto& pts = spec_.players.initial_points;
  player_group_.resize(pts.size());
  for (size_t j = 0; j < pts.size(); ++j) {
    auto key = key_of(pts[j]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(std::move(key), static_cast<int>(group_points_.size())).first;
      group_points_.push_back(pts[j]);
      groups_.emplace_back();
    }
    player_group_[j] = it->second;
    groups_[static_cast<size_t>(it->second)].push_back(static_cast<int>(j));
  }
  warm_roots_.resize(groups_.size());
}

void BestReplyMap::clear_warm_starts() {
  for (auto& w : warm_roots_) w.clear();
}

BestReplyOutput BestReplyMap::apply(const MomentPath& eta) {
  if (!(eta.grid() == spec_.grid))
    throw std::invalid_argument("best reply: moment path grid does not match the game grid");
  if (eta.moment_count() != spec_.moments.count())
    throw std::invalid_argument("best reply: moment path row count does not match the kernel set");

  ShootingConfig sc = cfg_.shooting;
  if (!sc.multistart_box && spec_.shooting_box) sc.multistart_box = spec_.shooting_box;
  if (cfg_.enforce_bounds) {
    if (!sc.state_bound) sc.state_bound = beta0_;
    if (!sc.control_bound_value) sc.control_bound_value = alpha_;
  }

  OcpContext ctx{spec_.dynamics, spec_.running_cost, spec_.terminal_cost, eta};
  const TimeGrid& grid = spec_.grid;
  const int nodes = grid.size();
  const int n_moments = spec_.moments.count();

  BestReplyOutput out;
  out.player_group = player_group_;
  out.group_solutions.reserve(groups_.size());

  // Kernel images of each group's selected trajectory.
  std::vector<Mat> group_moments;
  group_moments.reserve(groups_.size());

  for (size_t g = 0; g < groups_.size(); ++g) {
    ShootingConfig group_sc = sc;
    if (cfg_.warm_start) {
      group_sc.warm_starts = warm_roots_[g];
      group_sc.warm_start_only =
          spec_.unique_optimum_declared && !warm_roots_[g].empty();
    }

    OCPSolution sol = solve_ocp(group_points_[g], ctx, group_sc);

    if (cfg_.warm_start) {
      warm_roots_[g].clear();
      for (const auto& cand : sol.candidates) warm_roots_[g].push_back(cand.terminal());
    }

    const PMPTrajectory& traj = sol.best();
    Mat m(n_moments, nodes);
    for (int k = 0; k < nodes; ++k)
      m.col(k) = spec_.moments.eval(grid.node(k), traj.states[static_cast<size_t>(k)]);
    group_moments.push_back(std::move(m));
    out.group_solutions.push_back(std::move(sol));
  }

  Mat samples = Mat::Zero(n_moments, nodes);
  double tie_mass = 0.0;
  for (size_t j = 0; j < player_group_.size(); ++j) {
    const int g = player_group_[j];
    const double w = spec_.players.weights[j];
    samples += w * group_moments[static_cast<size_t>(g)];
    if (out.group_solutions[static_cast<size_t>(g)].multiplicity) tie_mass += w;
  }
  out.eta_new = MomentPath(grid, std::move(samples));
  out.tie_mass = tie_mass;
  return out;
}

BestReplyOutput apply_best_reply(const MomentPath& eta, const GameSpec& spec,
                                 const BestReplyConfig& cfg) {
  BestReplyMap phi(spec, cfg);
  return phi.apply(eta);
}

MultiplicityReport multiplicity_scan(const GameSpec& spec, const MomentPath& eta,
                                     const std::vector<Vec>& initial_grid, double nu,
                                     const ShootingConfig& shooting) {
  if (nu <= 0.0) throw std::invalid_argument("multiplicity scan: nu must be positive");
  spec.validate();

  ShootingConfig sc = shooting;
  sc.tie_separation = 1.0 / nu;
  OcpContext ctx{spec.dynamics, spec.running_cost, spec.terminal_cost, eta};

  MultiplicityReport report;
  report.nu = nu;
  report.points.reserve(initial_grid.size());

  for (size_t i = 0; i < initial_grid.size(); ++i) {
    MultiplicityPoint pt;
    pt.xbar = initial_grid[i];
    try {
      OCPSolution sol = solve_ocp(initial_grid[i], ctx, sc);
      pt.ok = true;
      pt.flagged = sol.multiplicity;
      pt.candidate_count = static_cast<int>(sol.candidates.size());
      pt.optimal_count = static_cast<int>(sol.optimal.size());
      double cost_lo = 0.0, cost_hi = 0.0;
      bool first = true;
      for (int a : sol.optimal) {
        const auto& ta = sol.candidates[static_cast<size_t>(a)];
        if (first) {
          cost_lo = cost_hi = ta.total_cost;
          first = false;
        } else {
          cost_lo = std::min(cost_lo, ta.total_cost);
          cost_hi = std::max(cost_hi, ta.total_cost);
        }
        for (int b : sol.optimal) {
          if (b <= a) continue;
          const auto& tb = sol.candidates[static_cast<size_t>(b)];
          pt.separation = std::max(
              pt.separation, (ta.terminal() - tb.terminal()).cwiseAbs().maxCoeff());
        }
      }
      pt.cost_gap = cost_hi - cost_lo;
      if (pt.flagged) report.flagged.push_back(static_cast<int>(i));
    } catch (const SolverError&) {
      pt.ok = false;
      ++report.failures;
    }
    report.points.push_back(std::move(pt));
  }

  report.measure = initial_grid.empty()
                       ? 0.0
                       : static_cast<double>(report.flagged.size()) /
                             static_cast<double>(initial_grid.size());
  return report;
}

}  // namespace mfg
