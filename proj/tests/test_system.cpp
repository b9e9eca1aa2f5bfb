#include <doctest.h>

#include "mpccq/system.hpp"
#include "test_helpers.hpp"

using namespace mpccq;
using helpers::vec;

TEST_CASE("sawtooth system feasibility") {
  auto sys = helpers::sawtooth_system();
  auto v = is_feasible(sys, vec({0, 0, 0.5, 0.5}));
  CHECK(v.feasible);
  CHECK(v.breakdown.max_residual <= 1e-12);

  auto bad = is_feasible(sys, vec({0.5, 0, 0.5, 0.5}));
  CHECK(!bad.feasible);
  CHECK(bad.breakdown.h_violation[0] == doctest::Approx(1.0));
}

TEST_CASE("violating h by one reports residual one") {
  FeasibilitySystem sys;
  sys.vars = {"x1"};
  sys.h = {variable(0, "x1")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{1}});
  sys.validate();
  auto v = is_feasible(sys, vec({1.0}));
  CHECK(!v.feasible);
  CHECK(v.breakdown.max_residual == doctest::Approx(1.0));
}

TEST_CASE("active index sets partition the pairs") {
  FeasibilitySystem sys;
  sys.vars = {"a", "b", "c", "d"};
  sys.G = {variable(0, "a"), variable(2, "c")};
  sys.H = {variable(1, "b"), variable(3, "d")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{4}});
  sys.validate();

  auto s = active_index_sets(sys, vec({0, 1, 2, 0}));
  CHECK(s.I == std::vector<int>{0});
  CHECK(s.K == std::vector<int>{1});
  CHECK(s.J.empty());

  auto sboth = active_index_sets(sys, vec({0, 0, 0, 0}));
  CHECK(sboth.J == std::vector<int>{0, 1});

  CHECK_THROWS_AS(active_index_sets(sys, vec({1, 1, 0, 0})), InfeasiblePointError);
}

TEST_CASE("all index sets empty for strictly slack inequalities") {
  FeasibilitySystem sys;
  sys.vars = {"x"};
  sys.g = {sub(variable(0, "x"), constant(5))};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{1}});
  sys.validate();
  auto s = active_index_sets(sys, vec({0.0}));
  CHECK(s.active_g.empty());
  CHECK(s.I.empty());
  CHECK(s.J.empty());
  CHECK(s.K.empty());
}

TEST_CASE("active sets on the sawtooth example") {
  auto sys = helpers::sawtooth_system();
  auto s = active_index_sets(sys, vec({0, 0, 0.5, 0.5}));
  CHECK(s.active_g == std::vector<int>{0});  // g = 0 at the anchor
}

TEST_CASE("projection onto the product set") {
  auto sys = helpers::sawtooth_system();
  Eigen::VectorXd p = sys.project_onto_C(vec({0.02, -0.3, 0.7, 0.7}));
  CHECK(sys.in_C(p, 1e-9));
  // segment block projects onto the line x3 + x4 = 1
  CHECK(p(2) + p(3) == doctest::Approx(1.0));
}
