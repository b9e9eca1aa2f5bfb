#include "mpccq/cq.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mpccq/vcalc.hpp"

namespace mpccq {

std::string to_string(CQVerdict v) {
  switch (v) {
    case CQVerdict::Holds:
      return "holds";
    case CQVerdict::Fails:
      return "fails";
    case CQVerdict::NoViolationFound:
      return "no-violation-found";
    case CQVerdict::ViolatedWithWitness:
      return "violated-with-witness";
    case CQVerdict::Incomplete:
      return "incomplete";
  }
  return "?";
}

SamplingPlan SamplingPlan::defaults() {
  SamplingPlan p;
  for (int k = 0; k <= 12; ++k) p.radii.push_back(1e-2 * std::pow(0.5, k));
  return p;
}

std::vector<Eigen::VectorXd> SamplingPlan::sample(const FeasibilitySystem& sys,
                                                  const Eigen::VectorXd& anchor) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  const int d = static_cast<int>(anchor.size());
  for (double r : radii) {
    for (int j = 0; j < points_per_radius; ++j) {
      Eigen::VectorXd u(d);
      for (int i = 0; i < d; ++i) u(i) = gauss(rng);
      const double n = u.norm();
      if (n < 1e-12) continue;
      pts.push_back(sys.project_onto_C(anchor + (r / n) * u));
    }
  }
  return pts;
}

namespace {

std::optional<AbnormalCertificate> finish_certificate(const FeasibilitySystem& sys,
                                                      const IndexSets& idx,
                                                      const std::vector<FamilyColumn>& cols,
                                                      std::vector<double> multipliers) {
  double total = 0.0;
  for (double m : multipliers) total += std::abs(m);
  if (total <= 1e-14) return std::nullopt;
  for (double& m : multipliers) m /= total;
  Eigen::VectorXd resid = Eigen::VectorXd::Zero(sys.dim());
  for (std::size_t j = 0; j < cols.size(); ++j) resid += multipliers[j] * cols[j].v;
  if (resid.lpNorm<Eigen::Infinity>() > 1e-8) return std::nullopt;
  auto mv = recombine(sys, idx, cols, multipliers);
  if (tuple_norm(mv) <= 1e-9) return std::nullopt;  // zero tuple, not a certificate
  AbnormalCertificate cert;
  cert.multipliers = std::move(mv);
  cert.residual = resid.lpNorm<Eigen::Infinity>();
  for (const auto& c : cols) {
    cert.labels.push_back(c.label);
    cert.columns.push_back(c.v);
  }
  cert.column_multipliers = std::move(multipliers);
  return cert;
}

/// Search for a nonzero sign-patterned annihilating tuple over the columns.
/// The plain column search pins one multiplier; if its hits recombine to a
/// zero tuple (possible with positively dependent chart rays), retry with one
/// normal-cone coordinate pinned to +-1 instead.
std::optional<AbnormalCertificate> search_certificate(const FeasibilitySystem& sys,
                                                      const IndexSets& idx,
                                                      const std::vector<FamilyColumn>& cols,
                                                      const ProbeCaps& caps, bool& incomplete) {
  if (cols.empty()) return std::nullopt;
  auto base = linalg::positive_dependence_certificate(to_specs(cols), caps.branch_cap);
  if (!base) return std::nullopt;
  if (base->incomplete) incomplete = true;
  if (auto cert = finish_certificate(sys, idx, cols, base->multipliers)) return cert;

  const int d = sys.dim();
  const auto offsets = sys.block_offsets();
  bool capped = false;
  auto cases = enumerate_pair_cases(cols, caps.branch_cap, capped);
  if (capped) incomplete = true;
  for (const auto& pc : cases) {
    std::vector<int> keep;
    for (std::size_t j = 0; j < cols.size(); ++j)
      if (pc.include[j]) keep.push_back(static_cast<int>(j));
    if (keep.empty()) continue;
    for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
      const int bdim = sys.blocks[b].dim();
      for (int t = 0; t < bdim; ++t) {
        for (double s : {1.0, -1.0}) {
          Eigen::MatrixXd A(d + 1, static_cast<int>(keep.size()));
          std::vector<bool> nonneg;
          for (std::size_t q = 0; q < keep.size(); ++q) {
            const auto& c = cols[static_cast<std::size_t>(keep[q])];
            A.col(static_cast<int>(q)).head(d) = c.v;
            const bool chart_of_b = (c.kind == FamilyColumn::Kind::ChartRay ||
                                     c.kind == FamilyColumn::Kind::ChartLine) &&
                                    c.index == static_cast<int>(b);
            A(d, static_cast<int>(q)) = chart_of_b ? c.v(offsets[b] + t) : 0.0;
            nonneg.push_back(pc.nonneg[static_cast<std::size_t>(keep[q])]);
          }
          Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
          rhs(d) = s;
          auto fr = linalg::solve_linear_feasibility(A, rhs, nonneg);
          if (!fr.feasible) continue;
          std::vector<double> mult(cols.size(), 0.0);
          for (std::size_t q = 0; q < keep.size(); ++q)
            mult[static_cast<std::size_t>(keep[q])] = fr.x(static_cast<int>(q));
          if (auto cert = finish_certificate(sys, idx, cols, mult)) return cert;
        }
      }
    }
  }
  return std::nullopt;
}

Eigen::VectorXd nearest_vertex(const Expression& e, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& ref, double tol) {
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  auto vs = subdifferential_vertices(e, pt, tol);
  Eigen::VectorXd best;
  double bestd = std::numeric_limits<double>::infinity();
  for (const auto& vert : vs.vertices) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(vert.data(), x.size());
    const double dd = (v - ref).norm();
    if (dd < bestd) {
      bestd = dd;
      best = v;
    }
  }
  return best;
}

/// Nearest point of the block normal cone at a sampled point to a target eta
/// block, embedded back into the ambient space.
Eigen::VectorXd project_eta_block(const FeasibilitySystem& sys, int block,
                                  const Eigen::VectorXd& point, const Eigen::VectorXd& eta_block,
                                  double tol) {
  const auto offsets = sys.block_offsets();
  const auto& set = sys.blocks[static_cast<std::size_t>(block)];
  Eigen::VectorXd slice = point.segment(offsets[static_cast<std::size_t>(block)], set.dim());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(set.dim());
  try {
    auto cone = set.normal_cone(slice, std::max(tol, 1e-8));
    double bestd = std::numeric_limits<double>::infinity();
    for (const auto& chart : cone.charts) {
      Eigen::VectorXd p = chart_project(chart, eta_block);
      const double dd = (p - eta_block).norm();
      if (dd < bestd) {
        bestd = dd;
        best = p;
      }
    }
  } catch (const PointNotInSet&) {
    // sampled point drifted off the set; use the zero selection
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(point.size());
  full.segment(offsets[static_cast<std::size_t>(block)], set.dim()) = best;
  return full;
}

std::vector<int> subset_from_mask(const std::vector<int>& universe, unsigned long long mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < universe.size(); ++i)
    if (mask & (1ull << i)) out.push_back(universe[i]);
  return out;
}

struct EqualityFamily {
  std::vector<Eigen::VectorXd> vectors;
  std::vector<std::string> labels;
  std::vector<char> kind;  // 'h', 'G', 'H'
  std::vector<int> index;
};

EqualityFamily equality_side_family(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                    const IndexSets& idx) {
  EqualityFamily f;
  for (std::size_t i = 0; i < sys.h.size(); ++i) {
    f.vectors.push_back(eval_gradient(sys.h[i], x));
    f.labels.push_back("h" + std::to_string(i));
    f.kind.push_back('h');
    f.index.push_back(static_cast<int>(i));
  }
  for (int i : idx.I) {
    f.vectors.push_back(eval_gradient(sys.G[static_cast<std::size_t>(i)], x));
    f.labels.push_back("G" + std::to_string(i));
    f.kind.push_back('G');
    f.index.push_back(i);
  }
  for (int i : idx.K) {
    f.vectors.push_back(eval_gradient(sys.H[static_cast<std::size_t>(i)], x));
    f.labels.push_back("H" + std::to_string(i));
    f.kind.push_back('H');
    f.index.push_back(i);
  }
  return f;
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& vs, int dim) {
  Eigen::MatrixXd M(static_cast<int>(vs.size()), dim);
  for (int i = 0; i < M.rows(); ++i) M.row(i) = vs[static_cast<std::size_t>(i)];
  return M;
}

}  // namespace

CQReport check_lcq(const FeasibilitySystem& sys) {
  CQReport r;
  r.check = "lcq";
  bool ok = true;
  auto scan = [&](const std::vector<Expression>& es, const std::string& name) {
    for (std::size_t i = 0; i < es.size(); ++i)
      if (!is_affine(es[i])) {
        ok = false;
        r.notes.push_back(name + std::to_string(i) + " is not affine");
      }
  };
  scan(sys.g, "g");
  scan(sys.h, "h");
  scan(sys.G, "G");
  scan(sys.H, "H");
  for (std::size_t b = 0; b < sys.blocks.size(); ++b)
    if (!sys.blocks[b].is_polyhedral()) {
      ok = false;
      r.notes.push_back("block " + std::to_string(b) + " is not polyhedral");
    }
  r.verdict = ok ? CQVerdict::Holds : CQVerdict::Fails;
  return r;
}

CQReport check_fullrank(const FeasibilitySystem& sys, const Eigen::VectorXd& x, double tol) {
  CQReport r;
  r.check = "fullrank";
  auto idx = active_index_sets(sys, x, tol);
  auto fam = equality_side_family(sys, x, idx);
  r.rank = linalg::numerical_rank(fam.vectors, tol);
  r.rank_target = sys.dim();
  if (r.rank.rank == sys.dim()) {
    r.verdict = CQVerdict::Holds;
    r.implication_chain = {"equality-side rank equals the ambient dimension",
                           "full rank implies RCPLD and the error bound"};
  } else {
    r.verdict = CQVerdict::NoViolationFound;
    r.notes.push_back("rank " + std::to_string(r.rank.rank) + " < dimension " +
                      std::to_string(sys.dim()) + "; this route neither proves nor refutes");
  }
  return r;
}

CQReport check_nnamcq(const FeasibilitySystem& sys, const Eigen::VectorXd& x, double tol,
                      const ProbeCaps& caps) {
  CQReport r;
  r.check = "nnamcq";
  auto idx = active_index_sets(sys, x, tol);

  bool outer = false;
  auto base = g_vertex_columns(sys, x, idx.active_g, tol, outer);
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
  for (const auto& combo : combos) {
    auto cols = base;
    for (std::size_t b = 0; b < cones.size(); ++b) {
      if (cones[b].charts.empty()) continue;
      auto cc = chart_columns(sys, static_cast<int>(b),
                              cones[b].charts[static_cast<std::size_t>(combo[b])]);
      cols.insert(cols.end(), cc.begin(), cc.end());
    }
    if (auto cert = search_certificate(sys, idx, cols, caps, incomplete)) {
      r.verdict = CQVerdict::Fails;
      r.certificate = std::move(*cert);
      return r;
    }
  }
  if (incomplete) {
    r.verdict = CQVerdict::Incomplete;
    r.notes.push_back("branch or chart enumeration capped before exhaustion");
  } else if (outer) {
    r.verdict = CQVerdict::NoViolationFound;
    r.conservative = true;
    r.notes.push_back(
        "no certificate over the outer-estimate vertex sets; holds cannot be certified");
  } else {
    r.verdict = CQVerdict::Holds;
  }
  return r;
}

namespace {

/// Short-circuit ladder shared by the sampled probes. The NNAMCQ route only
/// applies to the positive-linear-dependence probe.
bool probe_short_circuit(const FeasibilitySystem& sys, const Eigen::VectorXd& x, double tol,
                         const ProbeCaps& caps, bool rcpld_routes, CQReport& r) {
  if (rcpld_routes) {
    auto fr = check_fullrank(sys, x, tol);
    if (fr.verdict == CQVerdict::Holds) {
      r.verdict = CQVerdict::NoViolationFound;
      r.implication_chain = {"full rank holds at the anchor", "full rank implies RCPLD"};
      r.rank = fr.rank;
      return true;
    }
  }
  auto lr = check_lcq(sys);
  if (lr.verdict == CQVerdict::Holds) {
    r.verdict = CQVerdict::NoViolationFound;
    r.implication_chain = {"all constraints affine and all blocks polyhedral (LCQ)",
                           "LCQ implies RCRCQ"};
    if (rcpld_routes) r.implication_chain.push_back("RCRCQ implies RCPLD");
    return true;
  }
  if (rcpld_routes) {
    auto nn = check_nnamcq(sys, x, tol, caps);
    if (nn.verdict == CQVerdict::Holds) {
      r.verdict = CQVerdict::NoViolationFound;
      r.implication_chain = {"no nonzero abnormal multiplier at the anchor",
                             "NNAMCQ implies RCPLD (the dependence premise is vacuous)"};
      return true;
    }
  }
  return false;
}

}  // namespace

CQReport probe_rcpld(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                     const SamplingPlan& plan, double tol, const ProbeCaps& caps) {
  CQReport r;
  r.check = "rcpld";
  auto idx = active_index_sets(sys, x, tol);
  if (probe_short_circuit(sys, x, tol, caps, true, r)) return r;

  auto samples = plan.sample(sys, x);

  // (i) rank stability of {grad h} + {grad G on I*} + {grad H on K*}
  auto fam0 = equality_side_family(sys, x, idx);
  const int r0 = linalg::numerical_rank(fam0.vectors, tol).rank;
  for (const auto& xk : samples) {
    auto famk = equality_side_family(sys, xk, idx);
    const int rk = linalg::numerical_rank(famk.vectors, tol).rank;
    if (rk != r0) {
      RankWitness w;
      w.point = xk;
      w.labels = fam0.labels;
      w.anchor_family = stack_rows(fam0.vectors, sys.dim());
      w.sample_family = stack_rows(famk.vectors, sys.dim());
      w.anchor_rank = r0;
      w.sample_rank = rk;
      w.note = "equality-side rank changed near the anchor (condition (i))";
      r.witnesses.push_back(std::move(w));
      r.verdict = CQVerdict::ViolatedWithWitness;
      return r;
    }
  }

  // (ii) basis subsets and abnormal certificates
  auto basis_pos = linalg::select_basis(fam0.vectors, tol);
  std::vector<int> I1, I2, I3;
  for (int p : basis_pos) {
    const auto sp = static_cast<std::size_t>(p);
    if (fam0.kind[sp] == 'h')
      I1.push_back(fam0.index[sp]);
    else if (fam0.kind[sp] == 'G')
      I2.push_back(fam0.index[sp]);
    else
      I3.push_back(fam0.index[sp]);
  }

  std::vector<NormalConeDescription> cones;
  const auto offsets = sys.block_offsets();
  for (std::size_t b = 0; b < sys.blocks.size(); ++b)
    cones.push_back(sys.blocks[b].normal_cone(x.segment(offsets[b], sys.blocks[b].dim()),
                                              std::max(tol, 1e-8)));
  bool capped = false;
  auto combos = chart_combinations(cones, caps.combo_cap, capped);
  bool incomplete = capped;

  const auto& Ig = idx.active_g;
  const auto& Jp = idx.J;
  if (Ig.size() > 20 || Jp.size() > 10) {
    r.verdict = CQVerdict::Incomplete;
    r.notes.push_back("index sets too large for subset enumeration");
    return r;
  }
  const unsigned long long n4 = 1ull << Ig.size();
  const unsigned long long nJ = 1ull << Jp.size();
  long long budget = caps.subset_cap;

  for (unsigned long long m4 = 0; m4 < n4 && !incomplete; ++m4) {
    auto I4 = subset_from_mask(Ig, m4);
    for (unsigned long long m5 = 0; m5 < nJ && !incomplete; ++m5) {
      auto I5 = subset_from_mask(Jp, m5);
      for (unsigned long long m6 = 0; m6 < nJ && !incomplete; ++m6) {
        auto I6 = subset_from_mask(Jp, m6);
        if (--budget < 0) {
          incomplete = true;
          break;
        }

        bool outer = false;
        auto cols = g_vertex_columns(sys, x, I4, tol, outer);
        if (outer) r.conservative = true;
        auto hc = h_columns(sys, x, I1);
        cols.insert(cols.end(), hc.begin(), hc.end());
        std::vector<int> freeG = I2, freeH = I3, brG, brH;
        for (int i : I5) {
          if (std::find(I6.begin(), I6.end(), i) != I6.end())
            brG.push_back(i);
          else
            freeG.push_back(i);
        }
        for (int i : I6) {
          if (std::find(I5.begin(), I5.end(), i) != I5.end())
            brH.push_back(i);
          else
            freeH.push_back(i);
        }
        auto pc = pair_columns(sys, x, freeG, freeH, brG, brH);
        cols.insert(cols.end(), pc.begin(), pc.end());

        for (const auto& combo : combos) {
          auto full = cols;
          for (std::size_t b = 0; b < cones.size(); ++b) {
            if (cones[b].charts.empty()) continue;
            auto cc = chart_columns(sys, static_cast<int>(b),
                                    cones[b].charts[static_cast<std::size_t>(combo[b])]);
            full.insert(full.end(), cc.begin(), cc.end());
          }
          auto cert = search_certificate(sys, idx, full, caps, incomplete);
          if (!cert) continue;

          std::vector<int> gIdxG = I2, gIdxH = I3;
          gIdxG.insert(gIdxG.end(), I5.begin(), I5.end());
          gIdxH.insert(gIdxH.end(), I6.begin(), I6.end());

          std::vector<int> Lblocks;
          for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
            Eigen::VectorXd etab =
                cert->multipliers.eta.segment(offsets[b], sys.blocks[b].dim());
            if (etab.norm() > 1e-9) Lblocks.push_back(static_cast<int>(b));
          }

          auto anchor_ref = [&](int gi) {
            if (!cert->multipliers.g_vertices[static_cast<std::size_t>(gi)].empty()) {
              const auto& vv = cert->multipliers.g_vertices[static_cast<std::size_t>(gi)];
              return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(vv.data(), sys.dim()));
            }
            std::span<const double> pt0(x.data(), static_cast<std::size_t>(x.size()));
            auto vs = subdifferential_vertices(sys.g[static_cast<std::size_t>(gi)], pt0, tol);
            return Eigen::VectorXd(
                Eigen::Map<const Eigen::VectorXd>(vs.vertices.front().data(), sys.dim()));
          };

          std::vector<Eigen::VectorXd> anchor_family;
          std::vector<std::string> labels;
          for (int gi : I4) {
            anchor_family.push_back(anchor_ref(gi));
            labels.push_back("g" + std::to_string(gi));
          }
          for (int i : I1) {
            anchor_family.push_back(eval_gradient(sys.h[static_cast<std::size_t>(i)], x));
            labels.push_back("h" + std::to_string(i));
          }
          for (int i : gIdxG) {
            anchor_family.push_back(eval_gradient(sys.G[static_cast<std::size_t>(i)], x));
            labels.push_back("G" + std::to_string(i));
          }
          for (int i : gIdxH) {
            anchor_family.push_back(eval_gradient(sys.H[static_cast<std::size_t>(i)], x));
            labels.push_back("H" + std::to_string(i));
          }
          for (int b : Lblocks) {
            Eigen::VectorXd full_eta = Eigen::VectorXd::Zero(sys.dim());
            full_eta.segment(offsets[static_cast<std::size_t>(b)],
                             sys.blocks[static_cast<std::size_t>(b)].dim()) =
                cert->multipliers.eta.segment(offsets[static_cast<std::size_t>(b)],
                                              sys.blocks[static_cast<std::size_t>(b)].dim());
            anchor_family.push_back(full_eta);
            labels.push_back("nu" + std::to_string(b));
          }

          for (const auto& xk : samples) {
            const double rk = std::max(1e-9, (xk - x).norm());
            double gap = 0.0;
            std::vector<Eigen::VectorXd> family;
            for (int gi : I4) {
              Eigen::VectorXd vk =
                  nearest_vertex(sys.g[static_cast<std::size_t>(gi)], xk, anchor_ref(gi), tol);
              gap = std::max(gap, (vk - anchor_ref(gi)).norm());
              family.push_back(std::move(vk));
            }
            for (int i : I1)
              family.push_back(eval_gradient(sys.h[static_cast<std::size_t>(i)], xk));
            for (int i : gIdxG)
              family.push_back(eval_gradient(sys.G[static_cast<std::size_t>(i)], xk));
            for (int i : gIdxH)
              family.push_back(eval_gradient(sys.H[static_cast<std::size_t>(i)], xk));
            for (int b : Lblocks) {
              Eigen::VectorXd etab = cert->multipliers.eta.segment(
                  offsets[static_cast<std::size_t>(b)],
                  sys.blocks[static_cast<std::size_t>(b)].dim());
              Eigen::VectorXd nuk = project_eta_block(sys, b, xk, etab, tol);
              Eigen::VectorXd full_eta = Eigen::VectorXd::Zero(sys.dim());
              full_eta.segment(offsets[static_cast<std::size_t>(b)],
                               sys.blocks[static_cast<std::size_t>(b)].dim()) = etab;
              gap = std::max(gap, (nuk - full_eta).norm());
              family.push_back(std::move(nuk));
            }
            // a convergent sequence of selections must approach the anchor
            // selections; mismatched branches are not admissible witnesses
            if (gap > std::max(100.0 * rk, 1e-9)) continue;
            const int want = static_cast<int>(family.size());
            const int got = linalg::numerical_rank(family, tol).rank;
            if (got == want) {
              RankWitness w;
              w.point = xk;
              w.labels = labels;
              w.anchor_family = stack_rows(anchor_family, sys.dim());
              w.sample_family = stack_rows(family, sys.dim());
              w.anchor_rank = linalg::numerical_rank(anchor_family, tol).rank;
              w.sample_rank = got;
              w.note =
                  "certificate family became linearly independent at a sampled point "
                  "(condition (ii)); selections by nearest-distance pairing";
              r.witnesses.push_back(std::move(w));
              r.certificate = std::move(*cert);
              r.verdict = CQVerdict::ViolatedWithWitness;
              return r;
            }
          }
        }
      }
    }
  }

  r.verdict = incomplete ? CQVerdict::Incomplete : CQVerdict::NoViolationFound;
  if (incomplete) {
    r.explored_fraction = 0.5;  // capped enumeration, coarse figure
    r.notes.push_back("subset enumeration capped");
  }
  return r;
}

CQReport probe_rcrcq(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                     const SamplingPlan& plan, double tol, const ProbeCaps& caps) {
  CQReport r;
  r.check = "rcrcq";
  auto idx = active_index_sets(sys, x, tol);
  if (probe_short_circuit(sys, x, tol, caps, false, r)) return r;

  auto samples = plan.sample(sys, x);
  const auto offsets = sys.block_offsets();

  std::vector<NormalConeDescription> cones;
  for (std::size_t b = 0; b < sys.blocks.size(); ++b)
    cones.push_back(sys.blocks[b].normal_cone(x.segment(offsets[b], sys.blocks[b].dim()),
                                              std::max(tol, 1e-8)));

  // anchor generator menu per block: the zero selection plus unit generators
  std::vector<std::vector<Eigen::VectorXd>> eta_menu(sys.blocks.size());
  for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
    eta_menu[b].push_back(Eigen::VectorXd::Zero(sys.blocks[b].dim()));
    for (const auto& chart : cones[b].charts)
      for (const auto& gen : chart.generators()) {
        if (eta_menu[b].size() > 12) break;
        eta_menu[b].push_back(gen);
      }
  }

  std::span<const double> pt0(x.data(), static_cast<std::size_t>(x.size()));
  std::vector<std::vector<Eigen::VectorXd>> g_vertex_menu;
  for (int i : idx.active_g) {
    auto vs = subdifferential_vertices(sys.g[static_cast<std::size_t>(i)], pt0, tol);
    if (!vs.exact) r.conservative = true;
    std::vector<Eigen::VectorXd> menu;
    for (const auto& v : vs.vertices)
      menu.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), sys.dim()));
    g_vertex_menu.push_back(std::move(menu));
  }

  const auto& Ig = idx.active_g;
  const auto& Jp = idx.J;
  const std::size_t nblocks = sys.blocks.size();
  if (Ig.size() > 16 || Jp.size() > 8 || nblocks > 12) {
    r.verdict = CQVerdict::Incomplete;
    r.notes.push_back("index sets too large for subset enumeration");
    return r;
  }
  long long budget = caps.subset_cap;
  bool incomplete = false;
  std::optional<RankWitness> pending;  // mismatch whose selections did not converge exactly

  std::vector<int> block_universe(nblocks);
  for (std::size_t b = 0; b < nblocks; ++b) block_universe[b] = static_cast<int>(b);

  // largest inequality subsets first, so a found witness carries the full family
  const unsigned long long n4 = 1ull << Ig.size();
  for (unsigned long long m4r = 0; m4r < n4 && !incomplete; ++m4r) {
    const unsigned long long m4 = n4 - 1 - m4r;
    auto I4 = subset_from_mask(Ig, m4);
    std::vector<int> vpos;
    for (int gi : I4)
      vpos.push_back(static_cast<int>(std::find(Ig.begin(), Ig.end(), gi) - Ig.begin()));
    std::vector<std::size_t> vpick(I4.size(), 0);
    while (!incomplete) {
      for (unsigned long long m5 = 0; m5 < (1ull << Jp.size()) && !incomplete; ++m5) {
        auto I5 = subset_from_mask(Jp, m5);
        for (unsigned long long m6 = 0; m6 < (1ull << Jp.size()) && !incomplete; ++m6) {
          auto I6 = subset_from_mask(Jp, m6);
          for (unsigned long long mL = 0; mL < (1ull << nblocks) && !incomplete; ++mL) {
            auto L = subset_from_mask(block_universe, mL);
            std::vector<std::size_t> epick(L.size(), 0);
            while (true) {
              if (--budget < 0) {
                incomplete = true;
                break;
              }
              std::vector<Eigen::VectorXd> anchor;
              std::vector<std::string> labels;
              for (std::size_t q = 0; q < I4.size(); ++q) {
                anchor.push_back(g_vertex_menu[static_cast<std::size_t>(vpos[q])][vpick[q]]);
                labels.push_back("g" + std::to_string(I4[q]));
              }
              for (std::size_t i = 0; i < sys.h.size(); ++i) {
                anchor.push_back(eval_gradient(sys.h[i], x));
                labels.push_back("h" + std::to_string(i));
              }
              std::vector<int> Gset = idx.I, Hset = idx.K;
              Gset.insert(Gset.end(), I5.begin(), I5.end());
              Hset.insert(Hset.end(), I6.begin(), I6.end());
              for (int i : Gset) {
                anchor.push_back(eval_gradient(sys.G[static_cast<std::size_t>(i)], x));
                labels.push_back("G" + std::to_string(i));
              }
              for (int i : Hset) {
                anchor.push_back(eval_gradient(sys.H[static_cast<std::size_t>(i)], x));
                labels.push_back("H" + std::to_string(i));
              }
              std::vector<Eigen::VectorXd> eta_star(L.size());
              for (std::size_t q = 0; q < L.size(); ++q) {
                eta_star[q] = eta_menu[static_cast<std::size_t>(L[q])][epick[q]];
                Eigen::VectorXd full = Eigen::VectorXd::Zero(sys.dim());
                full.segment(offsets[static_cast<std::size_t>(L[q])],
                             sys.blocks[static_cast<std::size_t>(L[q])].dim()) = eta_star[q];
                anchor.push_back(full);
                labels.push_back("nu" + std::to_string(L[q]));
              }
              const int rank_anchor = linalg::numerical_rank(anchor, tol).rank;

              for (const auto& xk : samples) {
                const double rk = std::max(1e-8, (xk - x).norm());
                std::vector<std::vector<Eigen::VectorXd>> cand(L.size());
                for (std::size_t q = 0; q < L.size(); ++q) {
                  const int b = L[q];
                  const int bdim = sys.blocks[static_cast<std::size_t>(b)].dim();
                  if (eta_star[q].norm() > 1e-12) {
                    cand[q].push_back(
                        project_eta_block(sys, b, xk, eta_star[q], tol)
                            .segment(offsets[static_cast<std::size_t>(b)], bdim));
                  } else {
                    Eigen::VectorXd slice =
                        xk.segment(offsets[static_cast<std::size_t>(b)], bdim);
                    try {
                      auto conek = sys.blocks[static_cast<std::size_t>(b)].normal_cone(
                          slice, std::max(tol, 1e-8));
                      for (const auto& chart : conek.charts)
                        for (const auto& gen : chart.generators()) {
                          if (cand[q].size() >= 8) break;
                          cand[q].push_back(rk * gen);
                        }
                    } catch (const PointNotInSet&) {
                    }
                    if (cand[q].empty()) cand[q].push_back(Eigen::VectorXd::Zero(bdim));
                  }
                }
                std::vector<std::size_t> cpick(L.size(), 0);
                while (true) {
                  std::vector<Eigen::VectorXd> family;
                  for (std::size_t q = 0; q < I4.size(); ++q)
                    family.push_back(nearest_vertex(
                        sys.g[static_cast<std::size_t>(I4[q])], xk,
                        g_vertex_menu[static_cast<std::size_t>(vpos[q])][vpick[q]], tol));
                  for (std::size_t i = 0; i < sys.h.size(); ++i)
                    family.push_back(eval_gradient(sys.h[i], xk));
                  for (int i : Gset)
                    family.push_back(eval_gradient(sys.G[static_cast<std::size_t>(i)], xk));
                  for (int i : Hset)
                    family.push_back(eval_gradient(sys.H[static_cast<std::size_t>(i)], xk));
                  for (std::size_t q = 0; q < L.size(); ++q) {
                    Eigen::VectorXd full = Eigen::VectorXd::Zero(sys.dim());
                    full.segment(offsets[static_cast<std::size_t>(L[q])],
                                 sys.blocks[static_cast<std::size_t>(L[q])].dim()) =
                        cand[q][cpick[q]];
                    family.push_back(full);
                  }
                  const int rank_sample = linalg::numerical_rank(family, tol).rank;
                  if (rank_sample != rank_anchor) {
                    // selections must converge: the vertex picks should match
                    // the anchor picks and projected normals should be close
                    double gap = 0.0;
                    for (std::size_t q = 0; q < I4.size(); ++q)
                      gap = std::max(
                          gap, (family[q] -
                                g_vertex_menu[static_cast<std::size_t>(vpos[q])][vpick[q]])
                                   .norm());
                    for (std::size_t q = 0; q < L.size(); ++q)
                      if (eta_star[q].norm() > 1e-12)
                        gap = std::max(gap, (cand[q][cpick[q]] - eta_star[q]).norm());
                    RankWitness w;
                    w.point = xk;
                    w.labels = labels;
                    w.anchor_family = stack_rows(anchor, sys.dim());
                    w.sample_family = stack_rows(family, sys.dim());
                    w.anchor_rank = rank_anchor;
                    w.sample_rank = rank_sample;
                    w.note = "rank changed along a converging selection";
                    if (gap <= 1e-6) {
                      r.witnesses.push_back(std::move(w));
                      r.verdict = CQVerdict::ViolatedWithWitness;
                      return r;
                    }
                    if (!pending && gap <= 100.0 * rk) {
                      w.note += "; selection gap " + std::to_string(gap);
                      pending = std::move(w);
                    }
                  }
                  std::size_t q = 0;
                  while (q < L.size()) {
                    if (++cpick[q] < cand[q].size()) break;
                    cpick[q] = 0;
                    ++q;
                  }
                  if (q == L.size()) break;
                }
              }

              std::size_t q = 0;
              while (q < L.size()) {
                if (++epick[q] < eta_menu[static_cast<std::size_t>(L[q])].size()) break;
                epick[q] = 0;
                ++q;
              }
              if (q == L.size()) break;
            }
          }
        }
      }
      if (I4.empty()) break;
      std::size_t q = 0;
      while (q < I4.size()) {
        if (++vpick[q] < g_vertex_menu[static_cast<std::size_t>(vpos[q])].size()) break;
        vpick[q] = 0;
        ++q;
      }
      if (q == I4.size()) break;
    }
  }

  if (pending) {
    r.witnesses.push_back(std::move(*pending));
    r.verdict = CQVerdict::ViolatedWithWitness;
    return r;
  }
  r.verdict = incomplete ? CQVerdict::Incomplete : CQVerdict::NoViolationFound;
  if (incomplete) {
    r.explored_fraction = 0.5;
    r.notes.push_back("subset enumeration capped");
  }
  return r;
}

}  // namespace mpccq
