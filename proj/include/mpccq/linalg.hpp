#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace mpccq::linalg {

struct RankReport {
  int rank = 0;
  std::vector<double> singular_values;  // descending
  double tol = 1e-8;                    // relative threshold used
};

/// Singular-value thresholded rank: count of sigma_i > tol * sigma_max.
/// The zero (or empty) matrix has rank 0.
RankReport numerical_rank(const Eigen::MatrixXd& M, double tol = 1e-8);
RankReport numerical_rank(const std::vector<Eigen::VectorXd>& vectors, double tol = 1e-8);

Eigen::MatrixXd rows_matrix(const std::vector<Eigen::VectorXd>& vectors);

/// Greedy independent spanning subset, lowest admissible index first.
std::vector<int> select_basis(const std::vector<Eigen::VectorXd>& vectors, double tol = 1e-8);

struct CaratheodoryResult {
  std::vector<int> kept_extras;            // ascending indices into extras
  std::vector<double> base_coefficients;   // over base, in order
  std::vector<double> extra_coefficients;  // aligned with kept_extras
};

struct InconsistentDecomposition : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sign-preserving reduction of v = sum(base) + sum(alphas * extras) to a
/// representation over base plus an independent extra subset whose
/// coefficients keep the sign of the corresponding alpha. While the active
/// family is dependent, coefficients are shifted along a null-space direction
/// until an extra hits zero (no retained sign flips) and that extra is
/// dropped; ties drop every extra that reaches zero, and the direction is
/// chosen so the lowest index drops first.
CaratheodoryResult caratheodory_reduce(const Eigen::VectorXd& v,
                                       const std::vector<Eigen::VectorXd>& base,
                                       const std::vector<Eigen::VectorXd>& extras,
                                       const std::vector<double>& alphas, double tol = 1e-9);

struct FeasibilityResult {
  bool feasible = false;
  Eigen::VectorXd x;
};

/// Phase-one simplex for: exists x with A x = b, x_i >= 0 on masked entries,
/// remaining entries free. Bland's rule, dense tableau.
FeasibilityResult solve_linear_feasibility(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                           const std::vector<bool>& nonneg);

enum class SignConstraint { Free, Nonneg, BranchG, BranchH };

struct VectorSpec {
  Eigen::VectorXd v;
  SignConstraint sign = SignConstraint::Free;
  int pair_id = -1;  // links BranchG/BranchH entries of one complementarity pair
};

struct DependenceCertificate {
  std::vector<double> multipliers;  // aligned with the presented vectors
  double residual = 0.0;            // ||sum multipliers * vectors||_inf after normalization
  std::vector<std::string> branch_case;  // chosen case per pair id, e.g. "lamG=0"
  bool incomplete = false;               // branch enumeration was capped
};

/// Searches for a nonzero multiplier vector annihilating the family under the
/// sign pattern: Nonneg entries >= 0, Free entries unrestricted, and each
/// branch pair restricted to lamG=0, lamH=0, or both >= 0 (the closure of the
/// "both positive or product zero" disjunction). Multipliers are normalized
/// to sum |lambda| = 1. Deterministic: cases and pivots are explored in fixed
/// order and the first certificate is returned.
std::optional<DependenceCertificate> positive_dependence_certificate(
    const std::vector<VectorSpec>& vectors, long long branch_cap = 531441 /* 3^12 */);

}  // namespace mpccq::linalg
