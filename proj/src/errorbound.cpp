#include "mpccq/errorbound.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mpccq/vcalc.hpp"

namespace mpccq {

double residual_phi(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                    ResidualVariant variant, const std::optional<Eigen::VectorXd>& anchor,
                    double tol) {
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  double total = 0.0;
  for (const auto& e : sys.g) total += std::max(0.0, eval(e, pt));
  for (const auto& e : sys.h) total += std::abs(eval(e, pt));
  if (variant == ResidualVariant::Full) {
    for (int i = 0; i < sys.num_pairs(); ++i)
      total += dist_omega(eval(sys.G[static_cast<std::size_t>(i)], pt),
                          eval(sys.H[static_cast<std::size_t>(i)], pt), OmegaNorm::L1);
    return total;
  }
  if (!anchor)
    throw VariantPreconditionError("strict-complementarity residual needs an anchor point");
  auto idx = active_index_sets(sys, *anchor, tol);
  if (!idx.J.empty())
    throw VariantPreconditionError("strict complementarity fails at the anchor (biactive pair)");
  for (int i : idx.I) total += std::abs(eval(sys.G[static_cast<std::size_t>(i)], pt));
  for (int i : idx.K) total += std::abs(eval(sys.H[static_cast<std::size_t>(i)], pt));
  return total;
}

DistanceOptions DistanceOptions::centered_grid(const Eigen::VectorXd& center, double half_width,
                                               int points_per_dim) {
  DistanceOptions o;
  o.method = DistanceMethod::Grid;
  o.box_lo = center.array() - half_width;
  o.box_hi = center.array() + half_width;
  o.points_per_dim = points_per_dim | 1;  // odd, so the centre is a grid point
  return o;
}

DistanceResult distance_to_feasible(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                    const DistanceOptions& options) {
  DistanceResult res;
  res.method = options.method;
  if (options.method == DistanceMethod::Grid) {
    const int d = sys.dim();
    if (options.box_lo.size() != d || options.box_hi.size() != d)
      throw std::invalid_argument("grid box dimension mismatch");
    const int n = std::max(2, options.points_per_dim);
    std::vector<int> pick(static_cast<std::size_t>(d), 0);
    Eigen::VectorXd z(d);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
      for (int i = 0; i < d; ++i) {
        const double t = static_cast<double>(pick[static_cast<std::size_t>(i)]) / (n - 1);
        z(i) = options.box_lo(i) + t * (options.box_hi(i) - options.box_lo(i));
      }
      if (is_feasible(sys, z, options.feas_tol).feasible)
        best = std::min(best, (z - x).norm());
      int i = 0;
      while (i < d) {
        if (++pick[static_cast<std::size_t>(i)] < n) break;
        pick[static_cast<std::size_t>(i)] = 0;
        ++i;
      }
      if (i == d) break;
    }
    res.distance = best;
    return res;
  }
  // penalized projection of 0.5|z - x|^2
  auto pr = solve_penalized(sys, nullptr, x, options.schedule, options.search, x);
  res.distance = (pr.point - x).norm();
  res.budget_exhausted = pr.budget_exhausted;
  res.upper_bound_only = pr.budget_exhausted || pr.phi0_stalled;
  return res;
}

ErrorBoundReport estimate_error_bound_modulus(const FeasibilitySystem& sys,
                                              const Eigen::VectorXd& anchor,
                                              const SamplingPlan& plan, ResidualVariant variant,
                                              const DistanceOptions& dist, double phi_floor,
                                              double tol) {
  ErrorBoundReport rep;
  rep.variant = variant;
  rep.distance_method = dist.method;
  auto idx = active_index_sets(sys, anchor, tol);
  rep.strict_complementarity = idx.J.empty();

  // hypothesis route: full rank alone, or relaxed CQ + regularity + strict
  // complementarity
  auto fr = check_fullrank(sys, anchor, tol);
  if (fr.verdict == CQVerdict::Holds) {
    rep.hypothesis_notes.push_back("full-rank route applies: the bound is certified");
  } else {
    bool regular = true;
    for (const auto& gi : sys.g)
      if (!is_smooth(gi)) regular = false;
    for (const auto& b : sys.blocks)
      if (!b.is_everywhere_regular()) regular = false;
    if (!regular)
      rep.hypothesis_notes.push_back(
          "hypothesis unverified: nonsmooth inequalities or irregular blocks");
    if (!rep.strict_complementarity)
      rep.hypothesis_notes.push_back("hypothesis unverified: biactive pair at the anchor");
    if (regular && rep.strict_complementarity)
      rep.hypothesis_notes.push_back(
          "relaxed-CQ route applicable if the dependence probe reports no violation");
  }

  std::mt19937_64 rng(plan.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = sys.dim();
  bool bad_pair = false;  // phi ~ 0 with d_F > tol
  for (double radius : plan.radii) {
    double radius_max = 0.0;
    for (int j = 0; j < plan.points_per_radius; ++j) {
      Eigen::VectorXd u(d);
      for (int i = 0; i < d; ++i) u(i) = gauss(rng);
      if (u.norm() < 1e-12) continue;
      Eigen::VectorXd z = sys.project_onto_C(anchor + (radius / u.norm()) * u);
      ++rep.sample_count;
      const double phi = residual_phi(sys, z, variant, anchor, tol);
      if (phi <= phi_floor) {
        // grid distances are only resolution-exact; a directly feasible
        // sample contributes nothing rather than a spurious infinity
        if (!is_feasible(sys, z, tol).feasible) bad_pair = true;
        continue;
      }
      const double dF = distance_to_feasible(sys, z, dist).distance;
      ++rep.admitted_count;
      const double ratio = dF / phi;
      radius_max = std::max(radius_max, ratio);
      if (ratio > rep.alpha_hat) {
        rep.alpha_hat = ratio;
        rep.worst_sample = z;
      }
    }
    rep.per_radius_max.emplace_back(radius, radius_max);
  }
  if (bad_pair) {
    rep.alpha_hat = std::numeric_limits<double>::infinity();
    rep.hypothesis_notes.push_back("a sample had zero residual but positive distance");
  }
  if (rep.admitted_count == 0) {
    rep.trivial = true;
    rep.hypothesis_notes.push_back("trivial bound: all samples feasible");
  }
  // divergence heuristic: the smallest admitted radius dominates the largest
  double first = 0.0, last = 0.0;
  for (const auto& [r0, m] : rep.per_radius_max)
    if (m > 0) {
      if (first == 0.0) first = m;
      last = m;
    }
  if (first > 0 && last > 100 * first) rep.diverging = true;
  return rep;
}

}  // namespace mpccq
