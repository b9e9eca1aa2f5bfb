#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpccq {

struct ExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Evaluation outside a node's domain (ln of a nonpositive value, division by zero).
struct ExprDomainError : ExprError {
  using ExprError::ExprError;
};
/// Symbolic differentiation requested through a max/min/abs/oracle node.
struct NonsmoothNodeError : ExprError {
  using ExprError::ExprError;
};

enum class ExprKind {
  Constant,
  Variable,
  Add,
  Sub,
  Mul,
  Div,
  Pow,  // integer exponent only
  Exp,
  Ln,
  Max,
  Min,
  Abs,
  Oracle,
};

class ExprNode;
using Expression = std::shared_ptr<const ExprNode>;

/// Externally computed scalar term (e.g. a lower-level optimal value) that can
/// sit inside an expression tree. It supplies values and generalized-gradient
/// vertices; symbolic differentiation through it is rejected.
class ExprOracle {
 public:
  virtual ~ExprOracle() = default;
  virtual std::string name() const = 0;
  virtual double value(std::span<const double> point) const = 0;
  /// Generator vertices of the Clarke subdifferential at `point`, each of
  /// length point.size().
  virtual std::vector<std::vector<double>> gradient_vertices(std::span<const double> point) const = 0;
  /// True when the vertex list is known to generate the subdifferential
  /// exactly rather than an outer estimate.
  virtual bool vertices_exact() const = 0;
};

class ExprNode {
 public:
  ExprKind kind = ExprKind::Constant;
  std::vector<Expression> args;
  double value = 0.0;     // Constant
  int var = -1;           // Variable
  std::string var_name;   // Variable
  long long exponent = 1; // Pow
  std::shared_ptr<const ExprOracle> oracle;
};

Expression constant(double v);
Expression variable(int index, std::string name);
Expression add(Expression a, Expression b);
Expression sub(Expression a, Expression b);
Expression mul(Expression a, Expression b);
Expression div(Expression a, Expression b);
Expression pow_int(Expression base, long long exponent);
Expression exp(Expression a);
Expression ln(Expression a);
Expression max_of(std::vector<Expression> args);
Expression min_of(std::vector<Expression> args);
Expression abs(Expression a);
Expression oracle_term(std::shared_ptr<const ExprOracle> oracle);
Expression negate(Expression a);

double eval(const Expression& e, std::span<const double> point);

/// True when the tree contains no max/min/abs/oracle node.
bool is_smooth(const Expression& e);
/// Structural affinity test (constants of any shape fold as degree zero).
bool is_affine(const Expression& e);
bool is_constant(const Expression& e);
/// Largest variable index referenced, or -1 for a closed expression.
int max_var_index(const Expression& e);

/// Exact partial derivative as a new expression. Throws NonsmoothNodeError if
/// the tree contains a max/min/abs/oracle node.
Expression derivative(const Expression& e, int var);

/// Gradient of a smooth expression at a point.
std::vector<double> gradient(const Expression& e, std::span<const double> point);

struct SubdifferentialVertexSet {
  std::vector<std::vector<double>> vertices;  // each of length dim
  bool exact = true;
};

/// Generator vertices of the Clarke subdifferential at `point`. Branch
/// activity inside max/min/abs is decided with `tol`; ties emit both branches,
/// so the set over-approximates rather than misses generators. The `exact`
/// flag is set when every nonsmooth primitive sits at most one level above
/// smooth subexpressions.
SubdifferentialVertexSet subdifferential_vertices(const Expression& e,
                                                  std::span<const double> point,
                                                  double tol = 1e-9);

std::string to_string(const Expression& e);

}  // namespace mpccq
