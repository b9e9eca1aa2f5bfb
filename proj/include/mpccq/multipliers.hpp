#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mpccq/linalg.hpp"
#include "mpccq/system.hpp"

namespace mpccq {

/// One column of a multiplier family: a vector together with its role and
/// sign constraint. Columns are the presented vectors of dependence
/// certificates and stationarity systems.
struct FamilyColumn {
  enum class Kind { GVertex, H, PairG, PairH, ChartRay, ChartLine };
  Eigen::VectorXd v;
  Kind kind = Kind::H;
  int index = -1;  // constraint index, or block index for chart columns
  int sub = 0;     // vertex / generator position
  linalg::SignConstraint sign = linalg::SignConstraint::Free;
  int pair_id = -1;
  std::string label;
};

/// Multipliers in the (lambda^g, lambda^h, lambda^G, lambda^H, eta) layout,
/// recombined from column multipliers.
struct MultiplierVector {
  std::vector<double> lambda_g;
  std::vector<double> lambda_h;
  std::vector<double> lambda_G;
  std::vector<double> lambda_H;
  std::vector<std::vector<double>> g_vertices;  // effective subdifferential element per g
  Eigen::VectorXd eta;
  std::vector<std::string> branch;  // per pair: "I", "K", "J:lamG=0", "J:lamH=0", "J:both>=0"
};

/// Columns for the active inequalities: one nonnegative column per
/// subdifferential vertex of each g_i in `indices` (so conic combinations of
/// vertices realize every lambda_i^g * v_i^* with v_i^* in the hull).
/// `outer_estimate` is set when any vertex set is not exact.
std::vector<FamilyColumn> g_vertex_columns(const FeasibilitySystem& sys,
                                           const Eigen::VectorXd& x,
                                           const std::vector<int>& indices, double tol,
                                           bool& outer_estimate);

std::vector<FamilyColumn> h_columns(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                    const std::vector<int>& indices);

/// Columns -grad G_i (sign Free for i in I*, branch-paired for J* pairs) and
/// -grad H_i analogously; `free_G`/`free_H` get Free columns, `branch_pairs`
/// get paired columns carrying the complementarity disjunction.
std::vector<FamilyColumn> pair_columns(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                       const std::vector<int>& free_G,
                                       const std::vector<int>& free_H,
                                       const std::vector<int>& branch_pairs_G,
                                       const std::vector<int>& branch_pairs_H);

/// Chart columns of one chart combination: rays as Nonneg, lineality as Free,
/// embedded at the block offset.
std::vector<FamilyColumn> chart_columns(const FeasibilitySystem& sys, int block,
                                        const ConeChart& chart);

/// All chart combinations across blocks (cartesian product of per-block chart
/// lists), capped. Each element is one chart index per block.
std::vector<std::vector<int>> chart_combinations(const std::vector<NormalConeDescription>& cones,
                                                 long long cap, bool& capped);

/// Recombine column multipliers into the per-constraint layout.
MultiplierVector recombine(const FeasibilitySystem& sys, const IndexSets& idx,
                           const std::vector<FamilyColumn>& cols,
                           const std::vector<double>& multipliers);

/// One resolved case of the per-pair complementarity disjunction: which
/// columns stay and which must be nonnegative.
struct PairCase {
  std::vector<bool> include;
  std::vector<bool> nonneg;
};

/// Enumerates lamG=0 / lamH=0 / both-nonnegative per branch pair (the closure
/// of "both positive or product zero"), capped at `cap` total cases.
std::vector<PairCase> enumerate_pair_cases(const std::vector<FamilyColumn>& cols, long long cap,
                                           bool& capped);

std::vector<linalg::VectorSpec> to_specs(const std::vector<FamilyColumn>& cols);

/// Max-norm of the tuple (lambda^g, lambda^h, lambda^G, lambda^H, eta); a
/// valid abnormal certificate must have this nonzero.
double tuple_norm(const MultiplierVector& m);

}  // namespace mpccq
