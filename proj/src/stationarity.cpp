#include "mpccq/stationarity.hpp"

#include <algorithm>
#include <cmath>

#include "mpccq/vcalc.hpp"

namespace mpccq {

std::string to_string(StationarityVerdict v) {
  switch (v) {
    case StationarityVerdict::Stationary:
      return "stationary";
    case StationarityVerdict::NotStationaryWithinModel:
      return "not-stationary-within-model";
    case StationarityVerdict::Incomplete:
      return "incomplete";
  }
  return "?";
}

MStationarityReport check_mstationarity(const FeasibilitySystem& sys, const Expression& f,
                                        const Eigen::VectorXd& x, double tol,
                                        const ProbeCaps& caps) {
  MStationarityReport rep;
  auto idx = active_index_sets(sys, x, tol);

  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  auto fverts = subdifferential_vertices(f, pt, tol);
  if (!fverts.exact) rep.conservative = true;

  bool outer = false;
  auto base = g_vertex_columns(sys, x, idx.active_g, tol, outer);
  if (outer) rep.conservative = true;
  std::vector<int> all_h(sys.h.size());
  for (std::size_t i = 0; i < all_h.size(); ++i) all_h[i] = static_cast<int>(i);
  auto hcols = h_columns(sys, x, all_h);
  auto pcols = pair_columns(sys, x, idx.I, idx.K, idx.J, idx.J);
  base.insert(base.end(), hcols.begin(), hcols.end());
  base.insert(base.end(), pcols.begin(), pcols.end());

  std::vector<NormalConeDescription> cones;
  const auto offsets = sys.block_offsets();
  for (std::size_t b = 0; b < sys.blocks.size(); ++b)
    cones.push_back(sys.blocks[b].normal_cone(x.segment(offsets[b], sys.blocks[b].dim()),
                                              std::max(tol, 1e-8)));
  bool capped = false;
  auto combos = chart_combinations(cones, caps.combo_cap, capped);
  bool incomplete = capped;

  const double box = 1e6;  // multiplier magnitude bound
  for (const auto& fv : fverts.vertices) {
    Eigen::VectorXd v0 = Eigen::Map<const Eigen::VectorXd>(fv.data(), sys.dim());
    for (const auto& combo : combos) {
      auto cols = base;
      for (std::size_t b = 0; b < cones.size(); ++b) {
        if (cones[b].charts.empty()) continue;
        auto cc = chart_columns(sys, static_cast<int>(b),
                                cones[b].charts[static_cast<std::size_t>(combo[b])]);
        cols.insert(cols.end(), cc.begin(), cc.end());
      }
      bool case_capped = false;
      auto cases = enumerate_pair_cases(cols, caps.branch_cap, case_capped);
      if (case_capped) incomplete = true;
      for (const auto& pc : cases) {
        std::vector<int> keep;
        for (std::size_t j = 0; j < cols.size(); ++j)
          if (pc.include[j]) keep.push_back(static_cast<int>(j));
        Eigen::MatrixXd A(sys.dim(), static_cast<int>(keep.size()));
        std::vector<bool> nonneg;
        for (std::size_t q = 0; q < keep.size(); ++q) {
          A.col(static_cast<int>(q)) = cols[static_cast<std::size_t>(keep[q])].v;
          nonneg.push_back(pc.nonneg[static_cast<std::size_t>(keep[q])]);
        }
        auto fr = linalg::solve_linear_feasibility(A, -v0, nonneg);
        if (!fr.feasible) continue;
        if (keep.empty() && v0.lpNorm<Eigen::Infinity>() > tol) continue;
        if (fr.x.size() > 0 && fr.x.lpNorm<Eigen::Infinity>() > box) continue;
        std::vector<double> mult(cols.size(), 0.0);
        for (std::size_t q = 0; q < keep.size(); ++q)
          mult[static_cast<std::size_t>(keep[q])] = fr.x(static_cast<int>(q));
        Eigen::VectorXd resid = v0;
        for (std::size_t j = 0; j < cols.size(); ++j) resid += mult[j] * cols[j].v;
        if (resid.lpNorm<Eigen::Infinity>() > tol) continue;
        rep.verdict = StationarityVerdict::Stationary;
        rep.multipliers = recombine(sys, idx, cols, mult);
        rep.objective_vertex = fv;
        rep.residual = resid.lpNorm<Eigen::Infinity>();
        return rep;
      }
    }
  }
  rep.verdict =
      incomplete ? StationarityVerdict::Incomplete : StationarityVerdict::NotStationaryWithinModel;
  if (rep.conservative)
    rep.notes.push_back("subdifferential sets are outer estimates; verdict is conservative");
  return rep;
}

Eigen::VectorXd pattern_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                               const Eigen::VectorXd& start,
                               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project,
                               const PatternSearchOptions& options, long long* evals_used) {
  long long evals = 0;
  Eigen::VectorXd x = project(start);
  double fx = objective(x);
  ++evals;
  double h = options.initial_step;
  const int d = static_cast<int>(x.size());
  while (h > options.min_step && evals < options.max_evals) {
    bool improved = false;
    for (int i = 0; i < d && evals < options.max_evals; ++i) {
      for (double s : {1.0, -1.0}) {
        Eigen::VectorXd cand = x;
        cand(i) += s * h;
        cand = project(cand);
        const double fc = objective(cand);
        ++evals;
        if (fc < fx - 1e-13 * (1.0 + std::abs(fx))) {
          x = cand;
          fx = fc;
          improved = true;
        }
      }
    }
    if (!improved) h *= 0.5;
  }
  if (evals_used) *evals_used += evals;
  return x;
}

PenaltyResult solve_penalized(const FeasibilitySystem& sys, const Expression& f,
                              const Eigen::VectorXd& x0, const std::vector<double>& schedule,
                              const PatternSearchOptions& options,
                              const std::optional<Eigen::VectorXd>& anchor) {
  PenaltyResult res;
  Eigen::VectorXd prox = anchor.value_or(x0);
  Eigen::VectorXd x = sys.project_onto_C(x0);
  auto project = [&](const Eigen::VectorXd& z) { return sys.project_onto_C(z); };
  long long evals = 0;
  for (double k : schedule) {
    auto objective = [&](const Eigen::VectorXd& z) {
      const double p = phi0(sys, z);
      double fz = 0.0;
      if (f) fz = eval(f, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
      return fz + 0.5 * k * p * p + 0.5 * (z - prox).squaredNorm();
    };
    PatternSearchOptions o = options;
    x = pattern_search(objective, x, project, o, &evals);
    PenaltyTraceEntry e;
    e.k = k;
    e.phi0_value = phi0(sys, x);
    e.objective = objective(x);
    res.trace.push_back(e);
    if (evals >= options.max_evals) {
      res.budget_exhausted = true;
      break;
    }
  }
  res.point = x;
  if (!res.trace.empty() && res.trace.back().phi0_value > 1e-3) res.phi0_stalled = true;
  return res;
}

}  // namespace mpccq
