#include "mpccq/expr.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mpccq {

namespace {

Expression node(ExprKind kind, std::vector<Expression> args) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->args = std::move(args);
  return n;
}

bool const_value(const Expression& e, double& out) {
  if (e->kind == ExprKind::Constant) {
    out = e->value;
    return true;
  }
  return false;
}

}  // namespace

Expression constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Constant;
  n->value = v;
  return n;
}

Expression variable(int index, std::string name) {
  if (index < 0) throw ExprError("variable index must be nonnegative");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Variable;
  n->var = index;
  n->var_name = std::move(name);
  return n;
}

Expression add(Expression a, Expression b) {
  double ca, cb;
  if (const_value(a, ca) && const_value(b, cb)) return constant(ca + cb);
  if (const_value(a, ca) && ca == 0.0) return b;
  if (const_value(b, cb) && cb == 0.0) return a;
  return node(ExprKind::Add, {std::move(a), std::move(b)});
}

Expression sub(Expression a, Expression b) {
  double ca, cb;
  if (const_value(a, ca) && const_value(b, cb)) return constant(ca - cb);
  if (const_value(b, cb) && cb == 0.0) return a;
  return node(ExprKind::Sub, {std::move(a), std::move(b)});
}

Expression mul(Expression a, Expression b) {
  double ca, cb;
  if (const_value(a, ca) && const_value(b, cb)) return constant(ca * cb);
  if (const_value(a, ca)) {
    if (ca == 0.0) return constant(0.0);
    if (ca == 1.0) return b;
  }
  if (const_value(b, cb)) {
    if (cb == 0.0) return constant(0.0);
    if (cb == 1.0) return a;
  }
  return node(ExprKind::Mul, {std::move(a), std::move(b)});
}

Expression div(Expression a, Expression b) {
  double ca, cb;
  if (const_value(b, cb)) {
    if (cb == 0.0) throw ExprDomainError("division by constant zero");
    if (const_value(a, ca)) return constant(ca / cb);
    if (cb == 1.0) return a;
  }
  if (const_value(a, ca) && ca == 0.0) return constant(0.0);
  return node(ExprKind::Div, {std::move(a), std::move(b)});
}

Expression pow_int(Expression base, long long exponent) {
  if (exponent == 0) return constant(1.0);
  if (exponent == 1) return base;
  double cb;
  if (const_value(base, cb)) return constant(std::pow(cb, static_cast<double>(exponent)));
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Pow;
  n->args = {std::move(base)};
  n->exponent = exponent;
  return n;
}

Expression exp(Expression a) {
  double ca;
  if (const_value(a, ca)) return constant(std::exp(ca));
  return node(ExprKind::Exp, {std::move(a)});
}

Expression ln(Expression a) {
  double ca;
  if (const_value(a, ca)) {
    if (ca <= 0.0) throw ExprDomainError("ln of nonpositive constant");
    return constant(std::log(ca));
  }
  return node(ExprKind::Ln, {std::move(a)});
}

Expression max_of(std::vector<Expression> args) {
  if (args.size() < 2) throw ExprError("max needs at least two arguments");
  return node(ExprKind::Max, std::move(args));
}

Expression min_of(std::vector<Expression> args) {
  if (args.size() < 2) throw ExprError("min needs at least two arguments");
  return node(ExprKind::Min, std::move(args));
}

Expression abs(Expression a) {
  double ca;
  if (const_value(a, ca)) return constant(std::abs(ca));
  return node(ExprKind::Abs, {std::move(a)});
}

Expression oracle_term(std::shared_ptr<const ExprOracle> oracle) {
  if (!oracle) throw ExprError("null oracle");
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Oracle;
  n->oracle = std::move(oracle);
  return n;
}

Expression negate(Expression a) { return sub(constant(0.0), std::move(a)); }

double eval(const Expression& e, std::span<const double> point) {
  switch (e->kind) {
    case ExprKind::Constant:
      return e->value;
    case ExprKind::Variable:
      if (e->var >= static_cast<int>(point.size()))
        throw ExprError("point too short for variable " + e->var_name);
      return point[e->var];
    case ExprKind::Add:
      return eval(e->args[0], point) + eval(e->args[1], point);
    case ExprKind::Sub:
      return eval(e->args[0], point) - eval(e->args[1], point);
    case ExprKind::Mul:
      return eval(e->args[0], point) * eval(e->args[1], point);
    case ExprKind::Div: {
      const double num = eval(e->args[0], point);
      const double den = eval(e->args[1], point);
      if (den == 0.0) throw ExprDomainError("division by zero");
      return num / den;
    }
    case ExprKind::Pow: {
      const double b = eval(e->args[0], point);
      if (b == 0.0 && e->exponent < 0) throw ExprDomainError("zero base with negative exponent");
      return std::pow(b, static_cast<double>(e->exponent));
    }
    case ExprKind::Exp:
      return std::exp(eval(e->args[0], point));
    case ExprKind::Ln: {
      const double a = eval(e->args[0], point);
      if (a <= 0.0) throw ExprDomainError("ln of nonpositive value");
      return std::log(a);
    }
    case ExprKind::Max: {
      double m = eval(e->args[0], point);
      for (std::size_t i = 1; i < e->args.size(); ++i) m = std::max(m, eval(e->args[i], point));
      return m;
    }
    case ExprKind::Min: {
      double m = eval(e->args[0], point);
      for (std::size_t i = 1; i < e->args.size(); ++i) m = std::min(m, eval(e->args[i], point));
      return m;
    }
    case ExprKind::Abs:
      return std::abs(eval(e->args[0], point));
    case ExprKind::Oracle:
      return e->oracle->value(point);
  }
  throw ExprError("unreachable expression kind");
}

bool is_smooth(const Expression& e) {
  switch (e->kind) {
    case ExprKind::Max:
    case ExprKind::Min:
    case ExprKind::Abs:
    case ExprKind::Oracle:
      return false;
    default:
      for (const auto& a : e->args)
        if (!is_smooth(a)) return false;
      return true;
  }
}

bool is_constant(const Expression& e) {
  if (e->kind == ExprKind::Variable) return false;
  if (e->kind == ExprKind::Oracle) return false;
  for (const auto& a : e->args)
    if (!is_constant(a)) return false;
  return true;
}

bool is_affine(const Expression& e) {
  switch (e->kind) {
    case ExprKind::Constant:
      return true;
    case ExprKind::Variable:
      return true;
    case ExprKind::Add:
    case ExprKind::Sub:
      return is_affine(e->args[0]) && is_affine(e->args[1]);
    case ExprKind::Mul:
      return (is_constant(e->args[0]) && is_affine(e->args[1])) ||
             (is_constant(e->args[1]) && is_affine(e->args[0]));
    case ExprKind::Div:
      return is_affine(e->args[0]) && is_constant(e->args[1]);
    case ExprKind::Pow:
      return is_constant(e->args[0]) || e->exponent == 1 || e->exponent == 0;
    case ExprKind::Exp:
    case ExprKind::Ln:
    case ExprKind::Max:
    case ExprKind::Min:
    case ExprKind::Abs:
      return is_constant(e);
    case ExprKind::Oracle:
      return false;
  }
  return false;
}

int max_var_index(const Expression& e) {
  int m = e->kind == ExprKind::Variable ? e->var : -1;
  for (const auto& a : e->args) m = std::max(m, max_var_index(a));
  return m;
}

Expression derivative(const Expression& e, int var) {
  switch (e->kind) {
    case ExprKind::Constant:
      return constant(0.0);
    case ExprKind::Variable:
      return constant(e->var == var ? 1.0 : 0.0);
    case ExprKind::Add:
      return add(derivative(e->args[0], var), derivative(e->args[1], var));
    case ExprKind::Sub:
      return sub(derivative(e->args[0], var), derivative(e->args[1], var));
    case ExprKind::Mul:
      return add(mul(derivative(e->args[0], var), e->args[1]),
                 mul(e->args[0], derivative(e->args[1], var)));
    case ExprKind::Div:
      // (a/b)' = a'/b - a b'/b^2
      return sub(div(derivative(e->args[0], var), e->args[1]),
                 div(mul(e->args[0], derivative(e->args[1], var)), pow_int(e->args[1], 2)));
    case ExprKind::Pow:
      return mul(mul(constant(static_cast<double>(e->exponent)), pow_int(e->args[0], e->exponent - 1)),
                 derivative(e->args[0], var));
    case ExprKind::Exp:
      return mul(exp(e->args[0]), derivative(e->args[0], var));
    case ExprKind::Ln:
      return div(derivative(e->args[0], var), e->args[0]);
    case ExprKind::Max:
    case ExprKind::Min:
    case ExprKind::Abs:
    case ExprKind::Oracle:
      throw NonsmoothNodeError("cannot differentiate through " + to_string(e) +
                               "; use subdifferential_vertices");
  }
  throw ExprError("unreachable expression kind");
}

std::vector<double> gradient(const Expression& e, std::span<const double> point) {
  auto vs = subdifferential_vertices(e, point);
  if (vs.vertices.size() != 1)
    throw NonsmoothNodeError("gradient requested at a nondifferentiable point");
  return vs.vertices.front();
}

namespace {

struct VertexResult {
  double value = 0.0;
  std::vector<std::vector<double>> vertices;
  bool smooth = true;  // structurally smooth subtree
  bool exact = true;
};

constexpr std::size_t kVertexCap = 512;

void dedupe(std::vector<std::vector<double>>& vs) {
  std::sort(vs.begin(), vs.end());
  vs.erase(std::unique(vs.begin(), vs.end(),
                       [](const auto& a, const auto& b) {
                         for (std::size_t i = 0; i < a.size(); ++i)
                           if (std::abs(a[i] - b[i]) > 1e-12) return false;
                         return true;
                       }),
           vs.end());
}

VertexResult combine(const VertexResult& a, const VertexResult& b, double fa, double fb,
                     double value, bool& capped) {
  VertexResult r;
  r.value = value;
  r.smooth = a.smooth && b.smooth;
  // Clarke-hull generators survive linear combination exactly when at most
  // one operand is nonsmooth.
  r.exact = a.exact && b.exact && (a.smooth || b.smooth);
  for (const auto& va : a.vertices)
    for (const auto& vb : b.vertices) {
      std::vector<double> v(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) v[i] = fa * va[i] + fb * vb[i];
      r.vertices.push_back(std::move(v));
      if (r.vertices.size() > kVertexCap) {
        capped = true;
        r.exact = false;
        dedupe(r.vertices);
        if (r.vertices.size() > kVertexCap) r.vertices.resize(kVertexCap);
      }
    }
  dedupe(r.vertices);
  return r;
}

VertexResult scale(const VertexResult& a, double factor, double value) {
  VertexResult r;
  r.value = value;
  r.smooth = a.smooth;
  r.exact = a.exact;
  r.vertices.reserve(a.vertices.size());
  for (const auto& va : a.vertices) {
    std::vector<double> v(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) v[i] = factor * va[i];
    r.vertices.push_back(std::move(v));
  }
  dedupe(r.vertices);
  return r;
}

VertexResult vertices_rec(const Expression& e, std::span<const double> point, double tol,
                          bool& capped) {
  const std::size_t dim = point.size();
  switch (e->kind) {
    case ExprKind::Constant: {
      VertexResult r;
      r.value = e->value;
      r.vertices = {std::vector<double>(dim, 0.0)};
      return r;
    }
    case ExprKind::Variable: {
      if (e->var >= static_cast<int>(dim))
        throw ExprError("point too short for variable " + e->var_name);
      VertexResult r;
      r.value = point[e->var];
      r.vertices = {std::vector<double>(dim, 0.0)};
      r.vertices[0][e->var] = 1.0;
      return r;
    }
    case ExprKind::Add: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      auto b = vertices_rec(e->args[1], point, tol, capped);
      return combine(a, b, 1.0, 1.0, a.value + b.value, capped);
    }
    case ExprKind::Sub: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      auto b = vertices_rec(e->args[1], point, tol, capped);
      return combine(a, b, 1.0, -1.0, a.value - b.value, capped);
    }
    case ExprKind::Mul: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      auto b = vertices_rec(e->args[1], point, tol, capped);
      auto r = combine(a, b, b.value, a.value, a.value * b.value, capped);
      if (!(a.smooth && b.smooth) &&
          !(is_constant(e->args[0]) || is_constant(e->args[1])))
        r.exact = false;
      return r;
    }
    case ExprKind::Div: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      auto b = vertices_rec(e->args[1], point, tol, capped);
      if (b.value == 0.0) throw ExprDomainError("division by zero");
      auto r = combine(a, b, 1.0 / b.value, -a.value / (b.value * b.value),
                       a.value / b.value, capped);
      if (!(a.smooth && b.smooth) && !is_constant(e->args[1])) r.exact = false;
      return r;
    }
    case ExprKind::Pow: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      if (a.value == 0.0 && e->exponent < 0)
        throw ExprDomainError("zero base with negative exponent");
      const double f = std::pow(a.value, static_cast<double>(e->exponent));
      const double fp = static_cast<double>(e->exponent) *
                        std::pow(a.value, static_cast<double>(e->exponent - 1));
      return scale(a, fp, f);
    }
    case ExprKind::Exp: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      const double f = std::exp(a.value);
      return scale(a, f, f);
    }
    case ExprKind::Ln: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      if (a.value <= 0.0) throw ExprDomainError("ln of nonpositive value");
      return scale(a, 1.0 / a.value, std::log(a.value));
    }
    case ExprKind::Max:
    case ExprKind::Min: {
      std::vector<VertexResult> parts;
      parts.reserve(e->args.size());
      for (const auto& arg : e->args) parts.push_back(vertices_rec(arg, point, tol, capped));
      double best = parts[0].value;
      for (const auto& p : parts)
        best = e->kind == ExprKind::Max ? std::max(best, p.value) : std::min(best, p.value);
      VertexResult r;
      r.value = best;
      r.smooth = false;
      bool all_children_smooth = true;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].smooth) all_children_smooth = false;
        if (std::abs(parts[i].value - best) <= tol)
          for (auto& v : parts[i].vertices) r.vertices.push_back(v);
      }
      dedupe(r.vertices);
      bool children_exact = true;
      for (const auto& p : parts) children_exact = children_exact && p.exact;
      r.exact = all_children_smooth && children_exact;
      return r;
    }
    case ExprKind::Abs: {
      auto a = vertices_rec(e->args[0], point, tol, capped);
      VertexResult r;
      r.value = std::abs(a.value);
      r.smooth = false;
      r.exact = a.smooth && a.exact;
      if (a.value > tol) {
        r.vertices = a.vertices;
      } else if (a.value < -tol) {
        r = scale(a, -1.0, r.value);
        r.smooth = false;
        r.exact = a.smooth && a.exact;
      } else {
        for (const auto& v : a.vertices) {
          r.vertices.push_back(v);
          std::vector<double> neg(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) neg[i] = -v[i];
          r.vertices.push_back(std::move(neg));
        }
        dedupe(r.vertices);
      }
      return r;
    }
    case ExprKind::Oracle: {
      VertexResult r;
      r.value = e->oracle->value(point);
      r.smooth = false;
      r.exact = e->oracle->vertices_exact();
      r.vertices = e->oracle->gradient_vertices(point);
      for (const auto& v : r.vertices)
        if (v.size() != dim) throw ExprError("oracle gradient has wrong dimension");
      dedupe(r.vertices);
      return r;
    }
  }
  throw ExprError("unreachable expression kind");
}

}  // namespace

SubdifferentialVertexSet subdifferential_vertices(const Expression& e,
                                                  std::span<const double> point, double tol) {
  bool capped = false;
  auto r = vertices_rec(e, point, tol, capped);
  SubdifferentialVertexSet out;
  out.vertices = std::move(r.vertices);
  out.exact = r.exact && !capped;
  return out;
}

std::string to_string(const Expression& e) {
  std::ostringstream os;
  switch (e->kind) {
    case ExprKind::Constant:
      os << e->value;
      break;
    case ExprKind::Variable:
      os << (e->var_name.empty() ? "v" + std::to_string(e->var) : e->var_name);
      break;
    case ExprKind::Add:
      os << "(" << to_string(e->args[0]) << " + " << to_string(e->args[1]) << ")";
      break;
    case ExprKind::Sub:
      os << "(" << to_string(e->args[0]) << " - " << to_string(e->args[1]) << ")";
      break;
    case ExprKind::Mul:
      os << "(" << to_string(e->args[0]) << " * " << to_string(e->args[1]) << ")";
      break;
    case ExprKind::Div:
      os << "(" << to_string(e->args[0]) << " / " << to_string(e->args[1]) << ")";
      break;
    case ExprKind::Pow:
      os << to_string(e->args[0]) << "^" << e->exponent;
      break;
    case ExprKind::Exp:
      os << "exp(" << to_string(e->args[0]) << ")";
      break;
    case ExprKind::Ln:
      os << "ln(" << to_string(e->args[0]) << ")";
      break;
    case ExprKind::Max:
    case ExprKind::Min: {
      os << (e->kind == ExprKind::Max ? "max{" : "min{");
      for (std::size_t i = 0; i < e->args.size(); ++i)
        os << (i ? ", " : "") << to_string(e->args[i]);
      os << "}";
      break;
    }
    case ExprKind::Abs:
      os << "|" << to_string(e->args[0]) << "|";
      break;
    case ExprKind::Oracle:
      os << e->oracle->name();
      break;
  }
  return os.str();
}

}  // namespace mpccq
