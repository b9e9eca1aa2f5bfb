#include "mpccq/system.hpp"

#include <algorithm>
#include <cmath>

namespace mpccq {

std::vector<int> FeasibilitySystem::block_offsets() const {
  std::vector<int> off;
  int o = 0;
  for (const auto& b : blocks) {
    off.push_back(o);
    o += b.dim();
  }
  off.push_back(o);
  return off;
}

void FeasibilitySystem::validate() const {
  const int d = dim();
  if (G.size() != H.size()) throw SetError("G/H pair count mismatch");
  for (const auto& e : h)
    if (!is_smooth(e)) throw SetError("equality constraints must be smooth");
  for (const auto& e : G)
    if (!is_smooth(e)) throw SetError("G must be smooth");
  for (const auto& e : H)
    if (!is_smooth(e)) throw SetError("H must be smooth");
  int total = 0;
  for (const auto& b : blocks) total += b.dim();
  if (total != d) throw SetError("catalog blocks do not partition the variable list");
  auto check_vars = [&](const std::vector<Expression>& es) {
    for (const auto& e : es)
      if (max_var_index(e) >= d) throw SetError("expression references unknown variable");
  };
  check_vars(g);
  check_vars(h);
  check_vars(G);
  check_vars(H);
}

Eigen::VectorXd FeasibilitySystem::block_slice(const Eigen::VectorXd& x, int block) const {
  auto off = block_offsets();
  return x.segment(off[static_cast<std::size_t>(block)],
                   blocks[static_cast<std::size_t>(block)].dim());
}

Eigen::VectorXd FeasibilitySystem::project_onto_C(const Eigen::VectorXd& x) const {
  Eigen::VectorXd p = x;
  auto off = block_offsets();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Eigen::VectorXd slice = x.segment(off[b], blocks[b].dim());
    p.segment(off[b], blocks[b].dim()) = blocks[b].project(slice);
  }
  return p;
}

bool FeasibilitySystem::in_C(const Eigen::VectorXd& x, double tol) const {
  auto off = block_offsets();
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (!blocks[b].contains(x.segment(off[b], blocks[b].dim()), tol)) return false;
  return true;
}

std::vector<double> eval_all(const std::vector<Expression>& exprs, const Eigen::VectorXd& x) {
  std::vector<double> out;
  out.reserve(exprs.size());
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  for (const auto& e : exprs) out.push_back(eval(e, pt));
  return out;
}

Eigen::VectorXd eval_gradient(const Expression& e, const Eigen::VectorXd& x) {
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  auto grad = gradient(e, pt);
  return Eigen::Map<Eigen::VectorXd>(grad.data(), static_cast<int>(grad.size()));
}

ResidualBreakdown residuals(const FeasibilitySystem& sys, const Eigen::VectorXd& x) {
  ResidualBreakdown r;
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  for (const auto& e : sys.g) r.g_violation.push_back(std::max(0.0, eval(e, pt)));
  for (const auto& e : sys.h) r.h_violation.push_back(std::abs(eval(e, pt)));
  for (int i = 0; i < sys.num_pairs(); ++i) {
    const double a = eval(sys.G[static_cast<std::size_t>(i)], pt);
    const double b = eval(sys.H[static_cast<std::size_t>(i)], pt);
    // inf-norm distance of (a, b) to the complementarity pair set
    r.comp_violation.push_back(std::abs(std::min(a, b)));
  }
  auto off = sys.block_offsets();
  for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
    Eigen::VectorXd slice = x.segment(off[b], sys.blocks[b].dim());
    const double d = (slice - sys.blocks[b].project(slice)).norm();
    r.set_distance = std::max(r.set_distance, d);
  }
  double m = r.set_distance;
  for (double v : r.g_violation) m = std::max(m, v);
  for (double v : r.h_violation) m = std::max(m, v);
  for (double v : r.comp_violation) m = std::max(m, v);
  r.max_residual = m;
  return r;
}

FeasibilityVerdict is_feasible(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                               double tol) {
  FeasibilityVerdict v;
  v.breakdown = residuals(sys, x);
  v.feasible = v.breakdown.max_residual <= tol;
  return v;
}

IndexSets active_index_sets(const FeasibilitySystem& sys, const Eigen::VectorXd& x, double tol) {
  auto fv = is_feasible(sys, x, tol);
  if (!fv.feasible)
    throw InfeasiblePointError("active_index_sets at infeasible point, residual " +
                               std::to_string(fv.breakdown.max_residual));
  IndexSets s;
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < sys.g.size(); ++i)
    if (std::abs(eval(sys.g[i], pt)) <= tol) s.active_g.push_back(static_cast<int>(i));
  for (int i = 0; i < sys.num_pairs(); ++i) {
    const double a = eval(sys.G[static_cast<std::size_t>(i)], pt);
    const double b = eval(sys.H[static_cast<std::size_t>(i)], pt);
    if (std::abs(a) <= tol && std::abs(b) <= tol)
      s.J.push_back(i);
    else if (std::abs(a) <= tol && b > tol)
      s.I.push_back(i);
    else if (a > tol && std::abs(b) <= tol)
      s.K.push_back(i);
    else
      throw InfeasiblePointError("complementarity pair " + std::to_string(i) +
                                 " is not on the pair set");
  }
  return s;
}

}  // namespace mpccq
