#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mpccq/system.hpp"

namespace mpccq {

enum class OmegaBranch { AZeroBPos, APosBZero, BothZero };

struct OmegaNormalCone {
  OmegaBranch branch = OmegaBranch::BothZero;
  NormalConeDescription cone;  // dim 2
};

/// Limiting normal cone of the scalar complementarity set at (a, b) on the
/// set: the full first-coordinate line when a = 0 < b, the full second line
/// when a > 0 = b, and at the corner the closed negative quadrant together
/// with both coordinate lines.
OmegaNormalCone normal_cone_omega(double a, double b, double tol = 1e-8);

enum class OmegaNorm { L1, LInf };

/// Closed-form distance from (a, b) to the complementarity set.
double dist_omega(double a, double b, OmegaNorm norm);

/// Euclidean projection onto the complementarity set; ties prefer the
/// first-axis candidate.
std::pair<double, double> project_omega(double a, double b);

/// Aggregate functional residual: sum of inequality violations, absolute
/// equality residuals and |min(G_i, H_i)| terms. Set membership in C is not
/// included.
double phi0(const FeasibilitySystem& sys, const Eigen::VectorXd& x);

struct Phi0Certificate {
  double value = 0.0;
  std::vector<double> lambda_g;                    // per inequality, zero off A(x)
  std::vector<std::vector<double>> g_vertices;     // chosen vertex per inequality (empty if unused)
  std::vector<double> lambda_h;
  std::vector<double> lambda_G;
  std::vector<double> lambda_H;
  std::vector<std::string> pair_branch;            // "I" / "J" / "K" per pair
  Eigen::VectorXd vector;                          // assembled subgradient
  bool truncated = false;                          // enumeration hit the cap
};

/// Finite generator family for the subdifferential of phi0 at x: one
/// certificate per branch/sign/vertex choice consistent with the multiplier
/// pattern of the aggregate residual. The subdifferential is contained in the
/// convex hull of the emitted vectors.
std::vector<Phi0Certificate> phi0_subdifferential_elements(const FeasibilitySystem& sys,
                                                           const Eigen::VectorXd& x,
                                                           double tol = 1e-9,
                                                           std::size_t cap = 4096);

}  // namespace mpccq
