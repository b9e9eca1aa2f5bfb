#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpccq/cq.hpp"
#include "mpccq/multipliers.hpp"
#include "mpccq/system.hpp"

namespace mpccq {

enum class StationarityVerdict { Stationary, NotStationaryWithinModel, Incomplete };

std::string to_string(StationarityVerdict v);

struct MStationarityReport {
  StationarityVerdict verdict = StationarityVerdict::NotStationaryWithinModel;
  MultiplierVector multipliers;
  std::vector<double> objective_vertex;  // the subdifferential vertex of f that closed
  double residual = 0.0;
  bool conservative = false;
  std::vector<std::string> notes;
};

/// Mordukhovich stationarity at a feasible point: for each objective
/// subdifferential vertex and each complementarity branch case, solve the
/// multiplier feasibility system with the sign pattern (lam_g >= 0 on active
/// inequalities, lam_H = 0 on I*, lam_G = 0 on K*, branch disjunction on J*,
/// eta in the normal cone). Feasibility, not optimization: multipliers are
/// accepted within a 1e6 box.
MStationarityReport check_mstationarity(const FeasibilitySystem& sys, const Expression& f,
                                        const Eigen::VectorXd& x, double tol = 1e-8,
                                        const ProbeCaps& caps = {});

struct PatternSearchOptions {
  double initial_step = 0.25;
  double min_step = 1e-10;
  long long max_evals = 200000;
};

/// Derivative-free compass search with projection after every trial step.
Eigen::VectorXd pattern_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                               const Eigen::VectorXd& start,
                               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project,
                               const PatternSearchOptions& options, long long* evals_used = nullptr);

struct PenaltyTraceEntry {
  double k = 0.0;
  double phi0_value = 0.0;
  double objective = 0.0;
};

struct PenaltyResult {
  Eigen::VectorXd point;
  std::vector<PenaltyTraceEntry> trace;
  bool budget_exhausted = false;
  bool phi0_stalled = false;  // residual did not approach zero
};

/// Desk-scale penalized scheme: for each k in the schedule, approximately
/// minimize f + (k/2) phi0^2 + 0.5|x - anchor|^2 over the product set by
/// projected pattern search, warm-started across the schedule. `anchor`
/// defaults to the start point.
PenaltyResult solve_penalized(const FeasibilitySystem& sys, const Expression& f,
                              const Eigen::VectorXd& x0, const std::vector<double>& schedule,
                              const PatternSearchOptions& options = {},
                              const std::optional<Eigen::VectorXd>& anchor = std::nullopt);

}  // namespace mpccq
