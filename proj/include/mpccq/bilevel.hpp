#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mpccq/linalg.hpp"
#include "mpccq/system.hpp"

namespace mpccq {

struct EmptyFeasibleSet : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct YDependsOnX : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bilevel program data: upper objective and constraints over (x, y), lower
/// objective and constraints (smooth, twice differentiable in y), a catalog
/// set for the upper block, and a declared lower box for grid searches.
struct BilevelProgram {
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  Expression F;                       // upper objective
  std::vector<Expression> G;          // upper inequalities <= 0
  std::vector<Expression> H;          // upper equalities = 0
  Expression f;                       // lower objective
  std::vector<Expression> g;          // lower inequalities <= 0
  std::vector<Expression> h;          // lower equalities = 0
  std::vector<CatalogSet> x_blocks;   // abstract set for x; empty means free
  Eigen::VectorXd y_lo, y_hi;         // declared lower search box
  int grid_points = 2001;

  int dx() const { return static_cast<int>(x_names.size()); }
  int sy() const { return static_cast<int>(y_names.size()); }
  int num_lower_ineq() const { return static_cast<int>(g.size()); }
  int num_lower_eq() const { return static_cast<int>(h.size()); }

  void validate() const;
  /// True when the lower feasible set does not reference the upper variables.
  bool lower_feasible_set_x_free() const;
};

struct ValueFunctionSample {
  Eigen::VectorXd x;
  double value = 0.0;
  std::vector<Eigen::VectorXd> minimizers;  // clustered argmin approximation
  int grid_points = 0;
  double cluster_tol = 1e-4;
};

/// Lower-level optimal value by exhaustive grid minimization over the
/// declared box (constraint boundary roots included as candidates) with one
/// local refinement pass from every near-minimal candidate.
ValueFunctionSample value_function(const BilevelProgram& blp, const Eigen::VectorXd& x,
                                   int grid_points = 0);

/// Gradient generators of the value function when the lower feasible set is
/// independent of x: one partial-x gradient of f per clustered minimizer,
/// pruned to convex-hull vertices. Throws YDependsOnX otherwise.
std::vector<Eigen::VectorXd> danskin_generators(const BilevelProgram& blp,
                                                const Eigen::VectorXd& x, int grid_points = 0);

struct WGenerators {
  std::vector<Eigen::VectorXd> generators;
  bool mfcq_ok = true;
  std::vector<std::string> notes;
};

/// Multiplier-based generators of the value-function subdifferential: per
/// minimizer, the lower-level multiplier polytope is vertex-enumerated over
/// basic active-set patterns and each vertex contributes
/// grad_x f + u grad_x g + v grad_x h.
WGenerators w_generators(const BilevelProgram& blp, const Eigen::VectorXd& x,
                         int grid_points = 0, double tol = 1e-8);

enum class ValueOracleMode { Auto, Danskin, Multiplier };

/// Value-function oracle for expression trees: evaluation calls the grid
/// minimizer (cached per upper point), subdifferential vertices come from the
/// Danskin or multiplier generators. Danskin vertices are exact; multiplier
/// vertices are outer estimates.
class ValueOracle : public ExprOracle {
 public:
  ValueOracle(std::shared_ptr<const BilevelProgram> blp, int grid_points, ValueOracleMode mode);

  std::string name() const override;
  double value(std::span<const double> point) const override;
  std::vector<std::vector<double>> gradient_vertices(std::span<const double> point) const override;
  bool vertices_exact() const override;

  ValueFunctionSample sample_at(const Eigen::VectorXd& x) const;
  bool danskin_applicable() const { return danskin_; }

 private:
  struct Entry {
    ValueFunctionSample sample;
    std::vector<Eigen::VectorXd> generators;
  };
  const Entry& lookup(const Eigen::VectorXd& x) const;

  std::shared_ptr<const BilevelProgram> blp_;
  int grid_points_;
  bool danskin_;
  mutable std::map<std::vector<std::uint64_t>, Entry> cache_;
  mutable std::mutex mutex_;
};

/// The combined program over (x, y, u, v): the value-function inequality
/// f - V <= 0, the upper constraints, the lower stationarity equations and
/// the complementarity pairs (-g_i, u_i).
struct CombinedProgram {
  FeasibilitySystem system;
  Expression objective;
  std::shared_ptr<ValueOracle> oracle;
  int dx = 0, sy = 0, num_lower_ineq = 0, num_lower_eq = 0;
};

CombinedProgram build_combined_program(const BilevelProgram& blp, int grid_points = 0,
                                       ValueOracleMode mode = ValueOracleMode::Auto);

/// Active-set partition of the complementarity pairs (g_i = 0 & u_i > 0 on
/// I*, both zero on J*, g_i < 0 & u_i = 0 on K*) at a combined-program point.
IndexSets cp_index_sets(const BilevelProgram& blp, const Eigen::VectorXd& point,
                        double tol = 1e-8);

struct MatrixReport {
  Eigen::MatrixXd matrix;
  linalg::RankReport rank;
  int target = -1;  // negative when no target applies
  bool meets_target = false;
  std::vector<std::string> row_labels;
};

/// Stacked [grad h; grad H; grad g on I*] over (x, y); the target is full
/// column rank dx + sy.
MatrixReport matrix_SJ(const BilevelProgram& blp, const Eigen::VectorXd& point,
                       double tol = 1e-8);

/// The second-order block matrix with columns (x, y | y-gradients of lower
/// equalities | y-gradients of g on I* + J*); target rank
/// dx + sy + #lower-ineq + #lower-eq - |K*|.
MatrixReport matrix_Jstar(const BilevelProgram& blp, const Eigen::VectorXd& point,
                          double tol = 1e-8);

/// The augmented constant-rank test matrix with the unit-row block on
/// K* + I4 and the optional objective row alpha * (grad f - (w, 0)).
MatrixReport matrix_Jprime(const BilevelProgram& blp, const Eigen::VectorXd& point, int alpha,
                           const Eigen::VectorXd& w, double tol = 1e-8,
                           const std::optional<std::vector<int>>& I2 = std::nullopt,
                           const std::vector<int>& I3 = {}, const std::vector<int>& I4 = {});

/// Exact penalty residual of the combined program (l1 norms):
/// (f - V)_+ + |H| + |h| + G_+ + |grad_y L| + sum of pair distances.
double phi_cp(const BilevelProgram& blp, const Eigen::VectorXd& point, const ValueOracle& oracle);

}  // namespace mpccq
