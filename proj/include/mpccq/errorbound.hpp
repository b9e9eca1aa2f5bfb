#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mpccq/cq.hpp"
#include "mpccq/stationarity.hpp"
#include "mpccq/system.hpp"

namespace mpccq {

enum class ResidualVariant { Full, StrictComplementarity };

struct VariantPreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Aggregate residual with l1 norms: sum of inequality violations, absolute
/// equality residuals, and per-pair l1 distances to the complementarity set.
/// The strict-complementarity variant replaces the pair distances by |G_i| on
/// I* and |H_i| on K* of the anchor, and requires J* empty there.
double residual_phi(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                    ResidualVariant variant, const std::optional<Eigen::VectorXd>& anchor = {},
                    double tol = 1e-8);

enum class DistanceMethod { Grid, PenaltyProjection };

struct DistanceOptions {
  DistanceMethod method = DistanceMethod::Grid;
  // grid: per-variable closed box and odd point count (anchor-centred grids
  // then contain the centre exactly)
  Eigen::VectorXd box_lo, box_hi;
  int points_per_dim = 21;
  double feas_tol = 1e-8;
  // penalty projection
  std::vector<double> schedule = {1e2, 1e4, 1e6, 1e8};
  PatternSearchOptions search;

  static DistanceOptions centered_grid(const Eigen::VectorXd& center, double half_width,
                                       int points_per_dim);
};

struct DistanceResult {
  double distance = std::numeric_limits<double>::infinity();
  bool budget_exhausted = false;
  bool upper_bound_only = false;
  DistanceMethod method = DistanceMethod::Grid;
};

/// Distance from x to the feasible set: exhaustive over a box grid filtered
/// by feasibility (exact to grid resolution), or the penalized projection of
/// 0.5|z - x|^2 driven to feasibility.
DistanceResult distance_to_feasible(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                    const DistanceOptions& options);

struct ErrorBoundReport {
  double alpha_hat = 0.0;  // max observed d_F / phi; infinite if phi vanished with d_F > tol
  bool trivial = false;    // every sample was feasible
  bool diverging = false;  // ratio grew as the radius shrank
  int sample_count = 0;
  int admitted_count = 0;
  Eigen::VectorXd worst_sample;
  bool strict_complementarity = false;
  ResidualVariant variant = ResidualVariant::Full;
  std::vector<std::pair<double, double>> per_radius_max;  // (radius, max ratio)
  std::vector<std::string> hypothesis_notes;
  DistanceMethod distance_method = DistanceMethod::Grid;
};

/// Empirical error-bound modulus around a feasible anchor: samples the
/// product set on shrinking shells, computes d_F / phi per sample with
/// phi > phi_floor, and reports the maximum together with whether a
/// certifiable hypothesis route (full rank, or relaxed CQ with regularity and
/// strict complementarity) applies.
ErrorBoundReport estimate_error_bound_modulus(const FeasibilitySystem& sys,
                                              const Eigen::VectorXd& anchor,
                                              const SamplingPlan& plan,
                                              ResidualVariant variant,
                                              const DistanceOptions& dist,
                                              double phi_floor = 1e-16, double tol = 1e-8);

}  // namespace mpccq
