#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "mpccq/expr.hpp"
#include "mpccq/system.hpp"

namespace helpers {

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

/// h = 2x1 + x2 = 0, g = x1 + x2 - max{1/2, x3} - x4 + 1 <= 0,
/// C = sawtooth graph x segment (0,1)-(1,0).
inline mpccq::FeasibilitySystem sawtooth_system() {
  using namespace mpccq;
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2", "x3", "x4"};
  auto x1 = variable(0, "x1"), x2 = variable(1, "x2"), x3 = variable(2, "x3"),
       x4 = variable(3, "x4");
  sys.h = {add(mul(constant(2), x1), x2)};
  sys.g = {add(sub(sub(add(x1, x2), max_of({constant(0.5), x3})), x4), constant(1))};
  sys.blocks.emplace_back(CatalogSet::Variant{SawtoothGraph{}});
  Segment seg;
  seg.p0 = vec({0, 1});
  seg.p1 = vec({1, 0});
  sys.blocks.emplace_back(CatalogSet::Variant{seg});
  sys.validate();
  return sys;
}

}  // namespace helpers

#include "mpccq/bilevel.hpp"

namespace helpers {

/// min F(x,y) s.t. x in [-3,2], x^2 + y - 2 = 0, y solves
/// min y^3 - 3y s.t. x - y <= 0, y - 3 <= 0.
inline mpccq::BilevelProgram cubic_bilevel(mpccq::Expression F = nullptr) {
  using namespace mpccq;
  BilevelProgram blp;
  blp.x_names = {"x"};
  blp.y_names = {"y"};
  auto x = variable(0, "x"), y = variable(1, "y");
  blp.F = F ? F : add(x, y);
  blp.H = {sub(add(pow_int(x, 2), y), constant(2))};
  blp.f = sub(pow_int(y, 3), mul(constant(3), y));
  blp.g = {sub(x, y), sub(y, constant(3))};
  Box b;
  b.lo = vec({-3});
  b.hi = vec({2});
  blp.x_blocks.emplace_back(CatalogSet::Variant{b});
  blp.y_lo = vec({-3.5});
  blp.y_hi = vec({3.5});
  blp.validate();
  return blp;
}

/// min F(x,y) s.t. x1 - x2 + y - 1/2 = 0, y solves
/// min (x1 - x2) e^y s.t. -y - ln2 <= 0, y - ln2 <= 0.
inline mpccq::BilevelProgram exp_bilevel() {
  using namespace mpccq;
  BilevelProgram blp;
  blp.x_names = {"x1", "x2"};
  blp.y_names = {"y"};
  auto x1 = variable(0, "x1"), x2 = variable(1, "x2"), y = variable(2, "y");
  blp.F = add(x1, y);
  blp.H = {sub(add(sub(x1, x2), y), constant(0.5))};
  blp.f = sub(mul(x1, exp(y)), mul(x2, exp(y)));
  const double l2 = std::log(2.0);
  blp.g = {sub(negate(y), constant(l2)), sub(y, constant(l2))};
  blp.y_lo = vec({-1});
  blp.y_hi = vec({1});
  blp.validate();
  return blp;
}

/// Deterministic random smooth expression over `nvars` variables.
inline mpccq::Expression random_smooth_expr(std::mt19937_64& rng, int nvars, int depth) {
  using namespace mpccq;
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_int_distribution<int> pick_var(0, nvars - 1);
  if (depth == 0) {
    if (rng() % 3 == 0) return constant(coef(rng));
    const int v = pick_var(rng);
    return variable(v, "x" + std::to_string(v));
  }
  switch (rng() % 8) {
    case 0:
      return add(random_smooth_expr(rng, nvars, depth - 1), random_smooth_expr(rng, nvars, depth - 1));
    case 1:
      return sub(random_smooth_expr(rng, nvars, depth - 1), random_smooth_expr(rng, nvars, depth - 1));
    case 2:
      return mul(random_smooth_expr(rng, nvars, depth - 1), random_smooth_expr(rng, nvars, depth - 1));
    case 3: {
      // keep denominators away from zero
      auto den = add(mul(random_smooth_expr(rng, nvars, depth - 1),
                         random_smooth_expr(rng, nvars, depth - 1)),
                     constant(0.0));
      return div(random_smooth_expr(rng, nvars, depth - 1),
                 add(mul(den, den), constant(1.5)));
    }
    case 4:
      return pow_int(random_smooth_expr(rng, nvars, depth - 1), 2 + static_cast<long long>(rng() % 2));
    case 5: {
      auto a = random_smooth_expr(rng, nvars, depth - 1);
      return exp(mul(constant(0.25), a));
    }
    case 6: {
      auto a = random_smooth_expr(rng, nvars, depth - 1);
      return ln(add(mul(a, a), constant(1.0)));
    }
    default:
      return mul(constant(coef(rng)), random_smooth_expr(rng, nvars, depth - 1));
  }
}

}  // namespace helpers
