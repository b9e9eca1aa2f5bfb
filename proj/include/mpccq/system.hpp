#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mpccq/expr.hpp"
#include "mpccq/sets.hpp"

namespace mpccq {

struct InfeasiblePointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The feasibility system: g(x) <= 0 (g possibly nonsmooth), h(x) = 0,
/// (G(x), H(x)) in the complementarity set, x in a product of catalog sets.
struct FeasibilitySystem {
  std::vector<std::string> vars;
  std::vector<Expression> g;
  std::vector<Expression> h;
  std::vector<Expression> G;
  std::vector<Expression> H;
  std::vector<CatalogSet> blocks;

  int dim() const { return static_cast<int>(vars.size()); }
  int num_pairs() const { return static_cast<int>(G.size()); }
  std::vector<int> block_offsets() const;

  /// Checks smoothness of h/G/H, pair sizes and block partition.
  void validate() const;

  Eigen::VectorXd block_slice(const Eigen::VectorXd& x, int block) const;
  Eigen::VectorXd project_onto_C(const Eigen::VectorXd& x) const;
  bool in_C(const Eigen::VectorXd& x, double tol) const;
};

struct IndexSets {
  std::vector<int> active_g;  // indices with g_i ~ 0
  std::vector<int> I;         // G_i = 0 < H_i
  std::vector<int> J;         // G_i = H_i = 0
  std::vector<int> K;         // G_i > H_i = 0
};

struct ResidualBreakdown {
  std::vector<double> g_violation;     // max(0, g_i)
  std::vector<double> h_violation;     // |h_i|
  std::vector<double> comp_violation;  // inf-norm distance of (G_i, H_i) to the pair set
  double set_distance = 0.0;           // distance to C, worst block
  double max_residual = 0.0;
};

ResidualBreakdown residuals(const FeasibilitySystem& sys, const Eigen::VectorXd& x);

struct FeasibilityVerdict {
  bool feasible = false;
  ResidualBreakdown breakdown;
};

FeasibilityVerdict is_feasible(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                               double tol = 1e-8);

/// Active-set partition at a feasible point. Throws InfeasiblePointError when
/// the worst residual exceeds tol.
IndexSets active_index_sets(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                            double tol = 1e-8);

std::vector<double> eval_all(const std::vector<Expression>& exprs, const Eigen::VectorXd& x);
Eigen::VectorXd eval_gradient(const Expression& e, const Eigen::VectorXd& x);

}  // namespace mpccq
