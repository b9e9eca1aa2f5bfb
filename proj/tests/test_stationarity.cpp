#include <doctest.h>

#include <cmath>
#include <random>

#include "mpccq/stationarity.hpp"
#include "mpccq/bilevel.hpp"
#include "test_helpers.hpp"

using namespace mpccq;
using helpers::vec;

TEST_CASE("m-stationarity at the cubic combined-program solutions") {
  auto cp = build_combined_program(helpers::cubic_bilevel());
  for (auto pt : {vec({-2, -2, 9, 0}), vec({-1, 1, 0, 0})}) {
    auto rep = check_mstationarity(cp.system, cp.objective, pt);
    REQUIRE(rep.verdict == StationarityVerdict::Stationary);
    CHECK(rep.residual <= 1e-8);

    // substitute the multipliers back
    auto idx = active_index_sets(cp.system, pt);
    Eigen::VectorXd resid =
        Eigen::Map<const Eigen::VectorXd>(rep.objective_vertex.data(), cp.system.dim());
    for (std::size_t i = 0; i < cp.system.g.size(); ++i)
      if (rep.multipliers.lambda_g[i] != 0.0)
        resid += rep.multipliers.lambda_g[i] *
                 Eigen::Map<const Eigen::VectorXd>(rep.multipliers.g_vertices[i].data(),
                                                   cp.system.dim());
    for (std::size_t i = 0; i < cp.system.h.size(); ++i)
      resid += rep.multipliers.lambda_h[i] * eval_gradient(cp.system.h[i], pt);
    for (int i = 0; i < cp.system.num_pairs(); ++i) {
      resid -= rep.multipliers.lambda_G[static_cast<std::size_t>(i)] *
               eval_gradient(cp.system.G[static_cast<std::size_t>(i)], pt);
      resid -= rep.multipliers.lambda_H[static_cast<std::size_t>(i)] *
               eval_gradient(cp.system.H[static_cast<std::size_t>(i)], pt);
    }
    resid += rep.multipliers.eta;
    CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-8);

    // branch soundness: lambda_H vanishes on I*, lambda_G on K*
    for (int i : idx.I) CHECK(rep.multipliers.lambda_H[static_cast<std::size_t>(i)] == 0.0);
    for (int i : idx.K) CHECK(rep.multipliers.lambda_G[static_cast<std::size_t>(i)] == 0.0);
    for (int i : idx.J) {
      const double lG = rep.multipliers.lambda_G[static_cast<std::size_t>(i)];
      const double lH = rep.multipliers.lambda_H[static_cast<std::size_t>(i)];
      CHECK(((lG > 0 && lH > 0) || lG * lH == 0.0));
    }
  }
}

TEST_CASE("interior minimum of a smooth quadratic is stationary with zero multipliers") {
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  auto f = add(pow_int(variable(0, "x1"), 2), pow_int(variable(1, "x2"), 2));
  auto rep = check_mstationarity(sys, f, vec({0, 0}));
  CHECK(rep.verdict == StationarityVerdict::Stationary);
  CHECK(rep.residual <= 1e-12);
}

TEST_CASE("a nonvanishing gradient with no constraints is not stationary") {
  FeasibilitySystem sys;
  sys.vars = {"x1"};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{1}});
  sys.validate();
  auto rep = check_mstationarity(sys, variable(0, "x1"), vec({0.7}));
  CHECK(rep.verdict == StationarityVerdict::NotStationaryWithinModel);
}

TEST_CASE("penalized scheme drives a simple equality to feasibility") {
  FeasibilitySystem sys;
  sys.vars = {"x1"};
  sys.h = {variable(0, "x1")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{1}});
  sys.validate();
  auto f = pow_int(variable(0, "x1"), 2);
  auto res = solve_penalized(sys, f, vec({0.5}), {1, 10, 100, 1e3, 1e4, 1e6});
  CHECK(std::abs(res.point(0)) <= 1e-4);
  CHECK(res.trace.back().phi0_value <= 1e-4);
  CHECK(!res.phi0_stalled);
  // the residual trace is non-increasing along the schedule
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].phi0_value <= res.trace[i - 1].phi0_value + 1e-12);
}

TEST_CASE("large penalty weight keeps iterates near the combined-program solution") {
  // local exactness: with a large weight the anchor is a local minimizer of
  // the penalized objective, so the solver stays put and direct sampling
  // finds no nearby point with a smaller penalized value
  auto blp = helpers::cubic_bilevel();
  auto cp = build_combined_program(blp);
  Eigen::VectorXd anchor = vec({-2, -2, 9, 0});

  PatternSearchOptions opts;
  opts.initial_step = 1e-3;
  opts.max_evals = 30000;
  auto res = solve_penalized(cp.system, cp.objective, anchor, {1e6}, opts, anchor);
  CHECK((res.point - anchor).norm() <= 1e-3);
  CHECK(res.trace.back().phi0_value <= 1e-3);

  const double mu = 100.0;
  auto penalized = [&](const Eigen::VectorXd& z) {
    return eval(cp.objective, std::span<const double>(z.data(), 4)) +
           mu * phi_cp(blp, z, *cp.oracle);
  };
  const double at_anchor = penalized(anchor);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0, 1);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd d(4);
    for (int i = 0; i < 4; ++i) d(i) = gauss(rng);
    d *= 1e-3 / d.norm();
    CHECK(penalized(anchor + d) >= at_anchor - 1e-10);
  }
}

TEST_CASE("an infeasible toy is flagged") {
  FeasibilitySystem sys;
  sys.vars = {"x1"};
  sys.h = {add(pow_int(variable(0, "x1"), 2), constant(1))};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{1}});
  sys.validate();
  auto res = solve_penalized(sys, nullptr, vec({0.3}), {1, 10, 100});
  CHECK(res.phi0_stalled);
  CHECK(res.trace.back().phi0_value >= 0.9);
}

TEST_CASE("biactive pair stationarity uses the branch cases") {
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.G = {variable(0, "x1")};
  sys.H = {variable(1, "x2")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();

  // min x1 + x2 over the pair set: the origin is the global minimizer and the
  // multipliers land in the both-positive branch
  auto f1 = add(variable(0, "x1"), variable(1, "x2"));
  auto r1 = check_mstationarity(sys, f1, vec({0, 0}));
  REQUIRE(r1.verdict == StationarityVerdict::Stationary);
  CHECK(r1.multipliers.lambda_G[0] == doctest::Approx(1.0));
  CHECK(r1.multipliers.lambda_H[0] == doctest::Approx(1.0));

  // min x1 - x2: the origin is not even a local minimizer and no branch
  // admits multipliers
  auto f2 = sub(variable(0, "x1"), variable(1, "x2"));
  auto r2 = check_mstationarity(sys, f2, vec({0, 0}));
  CHECK(r2.verdict == StationarityVerdict::NotStationaryWithinModel);

  // min -x1: descent along the first ray is blocked only by the K-branch
  // pattern, which is admissible here (lambda_G free once lambda_H = 0)
  auto f3 = negate(variable(0, "x1"));
  auto r3 = check_mstationarity(sys, f3, vec({0, 0}));
  CHECK(r3.verdict == StationarityVerdict::Stationary);
}
