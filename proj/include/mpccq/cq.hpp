#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpccq/multipliers.hpp"
#include "mpccq/system.hpp"

namespace mpccq {

enum class CQVerdict { Holds, Fails, NoViolationFound, ViolatedWithWitness, Incomplete };

std::string to_string(CQVerdict v);

/// Ball sampling around an anchor: geometric radii, fixed count of uniformly
/// drawn directions per radius, projected into the product set.
struct SamplingPlan {
  std::vector<double> radii;
  int points_per_radius = 16;
  std::uint64_t seed = 20260810;

  static SamplingPlan defaults();  // 1e-2 * 0.5^k, k = 0..12
  std::vector<Eigen::VectorXd> sample(const FeasibilitySystem& sys,
                                      const Eigen::VectorXd& anchor) const;
};

struct ProbeCaps {
  long long branch_cap = 531441;  // 3^12, shared with the certificate search
  long long subset_cap = 4096;    // 2^12 index subsets
  long long combo_cap = 4096;     // chart / generator combinations
};

struct AbnormalCertificate {
  MultiplierVector multipliers;
  double residual = 0.0;
  std::vector<std::string> labels;
  std::vector<double> column_multipliers;
  std::vector<Eigen::VectorXd> columns;
};

struct RankWitness {
  Eigen::VectorXd point;
  std::vector<std::string> labels;
  Eigen::MatrixXd anchor_family;  // family vectors as rows
  Eigen::MatrixXd sample_family;
  int anchor_rank = 0;
  int sample_rank = 0;
  std::string note;
};

struct CQReport {
  std::string check;
  CQVerdict verdict = CQVerdict::NoViolationFound;
  std::vector<std::string> implication_chain;
  std::vector<std::string> notes;
  bool conservative = false;     // outer-estimate subdifferentials involved
  double explored_fraction = 1.0;
  linalg::RankReport rank;       // full-rank route
  int rank_target = -1;
  std::optional<AbnormalCertificate> certificate;
  std::vector<RankWitness> witnesses;
};

/// No nonzero abnormal multiplier: searches for a sign-patterned annihilating
/// multiplier tuple over active inequality vertices, equality gradients,
/// complementarity gradients and normal-cone charts. "fails" carries the
/// certificate; "holds" is downgraded to "no-violation-found" when vertex
/// sets are outer estimates.
CQReport check_nnamcq(const FeasibilitySystem& sys, const Eigen::VectorXd& x, double tol = 1e-8,
                      const ProbeCaps& caps = {});

/// Rank of {grad h} + {grad G on I*} + {grad H on K*}; "holds" iff the rank
/// equals the ambient dimension, which implies both the relaxed CQ and the
/// error bound.
CQReport check_fullrank(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                        double tol = 1e-8);

/// Syntactic linearity: all constraint expressions affine and every catalog
/// block polyhedral (or a finite union of polyhedra).
CQReport check_lcq(const FeasibilitySystem& sys);

/// Sampled probe of the relaxed constant positive linear dependence CQ:
/// part (i) rank stability of the equality-side family, part (ii) persistence
/// of linear dependence for every sign-feasible abnormal certificate,
/// re-assembled with matched vertex and normal-cone selections at sampled
/// points. Verdicts are three-valued; "no-violation-found" is not a proof.
CQReport probe_rcpld(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                     const SamplingPlan& plan = SamplingPlan::defaults(), double tol = 1e-8,
                     const ProbeCaps& caps = {});

/// Sampled probe of the relaxed constant rank CQ: rank comparison of the
/// augmented families at the anchor versus sampled points over capped subset,
/// vertex and normal-generator selections.
CQReport probe_rcrcq(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                     const SamplingPlan& plan = SamplingPlan::defaults(), double tol = 1e-8,
                     const ProbeCaps& caps = {});

}  // namespace mpccq
