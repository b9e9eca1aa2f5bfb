#include <doctest.h>

#include <cmath>
#include <random>

#include "mpccq/cq.hpp"
#include "mpccq/bilevel.hpp"
#include "test_helpers.hpp"

using namespace mpccq;
using helpers::vec;

namespace {

Eigen::VectorXd reconstruct(const AbnormalCertificate& c) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(c.columns.front().size());
  for (std::size_t i = 0; i < c.columns.size(); ++i)
    r += c.column_multipliers[i] * c.columns[i];
  return r;
}

}  // namespace

TEST_CASE("nnamcq fails on the sawtooth system with a checkable certificate") {
  auto sys = helpers::sawtooth_system();
  auto rep = check_nnamcq(sys, vec({0, 0, 0.5, 0.5}));
  REQUIRE(rep.verdict == CQVerdict::Fails);
  REQUIRE(rep.certificate.has_value());
  const auto& c = *rep.certificate;
  CHECK(c.residual <= 1e-8);
  CHECK(reconstruct(c).lpNorm<Eigen::Infinity>() <= 1e-8);
  // scale so lambda_g = 1: then mu = -1 and eta = (1, 0, 1, 1)
  const double lg = c.multipliers.lambda_g[0];
  REQUIRE(lg > 0);
  CHECK(c.multipliers.lambda_h[0] / lg == doctest::Approx(-1.0));
  Eigen::VectorXd eta = c.multipliers.eta / lg;
  CHECK(eta(0) == doctest::Approx(1.0));
  CHECK(eta(1) == doctest::Approx(0.0));
  CHECK(eta(2) == doctest::Approx(1.0));
  CHECK(eta(3) == doctest::Approx(1.0));
  // chosen vertex is the steep branch
  REQUIRE(!c.multipliers.g_vertices[0].empty());
  CHECK(c.multipliers.g_vertices[0] == std::vector<double>{1, 1, -1, -1});
}

TEST_CASE("nnamcq holds for a single equality over the plane") {
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.h = {variable(0, "x1")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  auto rep = check_nnamcq(sys, vec({0, 1}));
  CHECK(rep.verdict == CQVerdict::Holds);
}

TEST_CASE("nnamcq always fails on combined programs") {
  auto cp51 = build_combined_program(helpers::cubic_bilevel());
  auto r51 = check_nnamcq(cp51.system, vec({-2, -2, 9, 0}));
  CHECK(r51.verdict == CQVerdict::Fails);
  CHECK(r51.certificate->residual <= 1e-8);

  auto cp52 = build_combined_program(helpers::exp_bilevel());
  auto r52 = check_nnamcq(cp52.system, vec({0, 0, 0.5, 0, 0}));
  CHECK(r52.verdict == CQVerdict::Fails);
  CHECK(r52.certificate->residual <= 1e-8);
}

TEST_CASE("full-rank check on the cubic combined program") {
  auto cp = build_combined_program(helpers::cubic_bilevel());
  auto rep = check_fullrank(cp.system, vec({-2, -2, 9, 0}));
  CHECK(rep.verdict == CQVerdict::Holds);
  CHECK(rep.rank.rank == 4);
  CHECK(!rep.implication_chain.empty());

  // also full rank at the second solution point
  auto rep2 = check_fullrank(cp.system, vec({-1, 1, 0, 0}));
  CHECK(rep2.verdict == CQVerdict::Holds);
}

TEST_CASE("full-rank check reports no-violation when rank is deficient") {
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.h = {variable(0, "x1")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  auto rep = check_fullrank(sys, vec({0, 0}));
  CHECK(rep.verdict == CQVerdict::NoViolationFound);
  CHECK(rep.rank.rank == 1);
}

TEST_CASE("lcq classification") {
  FeasibilitySystem affine;
  affine.vars = {"x1", "x2"};
  affine.g = {sub(add(variable(0, "x1"), variable(1, "x2")), constant(1))};
  affine.h = {sub(variable(0, "x1"), variable(1, "x2"))};
  Box b;
  b.lo = vec({-1, -1});
  b.hi = vec({1, 1});
  affine.blocks.emplace_back(CatalogSet::Variant{b});
  affine.validate();
  CHECK(check_lcq(affine).verdict == CQVerdict::Holds);

  CHECK(check_lcq(helpers::sawtooth_system()).verdict == CQVerdict::Fails);

  auto cp = build_combined_program(helpers::cubic_bilevel());
  CHECK(check_lcq(cp.system).verdict == CQVerdict::Fails);
}

TEST_CASE("rcpld probe reports no violation on the sawtooth system") {
  auto sys = helpers::sawtooth_system();
  auto rep = probe_rcpld(sys, vec({0, 0, 0.5, 0.5}));
  CHECK(rep.verdict == CQVerdict::NoViolationFound);
}

TEST_CASE("rcpld short-circuits through full rank on the combined program") {
  auto cp = build_combined_program(helpers::cubic_bilevel());
  auto rep = probe_rcpld(cp.system, vec({-2, -2, 9, 0}));
  CHECK(rep.verdict == CQVerdict::NoViolationFound);
  REQUIRE(!rep.implication_chain.empty());
  CHECK(rep.implication_chain.front().find("full rank") != std::string::npos);
}

TEST_CASE("rcrcq probe finds the rank-jump violation on the sawtooth system") {
  auto sys = helpers::sawtooth_system();
  auto rep = probe_rcrcq(sys, vec({0, 0, 0.5, 0.5}));
  REQUIRE(rep.verdict == CQVerdict::ViolatedWithWitness);
  REQUIRE(!rep.witnesses.empty());
  const auto& w = rep.witnesses.front();
  CHECK(w.sample_rank == 3);
  CHECK(w.anchor_rank == 2);
  // stored witness matrices reproduce the reported ranks
  CHECK(linalg::numerical_rank(w.sample_family).rank == w.sample_rank);
  CHECK(linalg::numerical_rank(w.anchor_family).rank == w.anchor_rank);
}

TEST_CASE("rcrcq probe reports no violation on the exponential combined program") {
  auto cp = build_combined_program(helpers::exp_bilevel());
  auto rep = probe_rcrcq(cp.system, vec({0, 0, 0.5, 0, 0}));
  CHECK(rep.verdict == CQVerdict::NoViolationFound);
}

TEST_CASE("affine systems short-circuit both probes through LCQ") {
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.g = {sub(variable(0, "x1"), constant(0))};
  Polyhedron p;  // x1 + x2 <= 1 and its reverse: the line segment closure
  p.A = Eigen::MatrixXd(2, 2);
  p.A << 1, 1, -1, -1;
  p.b = vec({1, 1});
  sys.blocks.emplace_back(CatalogSet::Variant{p});
  sys.validate();
  auto r1 = probe_rcrcq(sys, vec({0, 0.2}));
  CHECK(r1.verdict == CQVerdict::NoViolationFound);
  CHECK(!r1.implication_chain.empty());
  auto r2 = probe_rcpld(sys, vec({0, 0.2}));
  CHECK(r2.verdict == CQVerdict::NoViolationFound);
}

namespace {

/// Randomized affine feasible system with a known anchor.
FeasibilitySystem random_affine_system(std::mt19937_64& rng, Eigen::VectorXd& anchor,
                                       bool force_fullrank) {
  std::uniform_real_distribution<double> unif(-1, 1);
  const int d = 2 + static_cast<int>(rng() % 3);
  FeasibilitySystem sys;
  for (int i = 0; i < d; ++i) sys.vars.push_back("x" + std::to_string(i + 1));
  anchor = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) anchor(i) = unif(rng);

  auto affine_with_value = [&](double value_at_anchor) {
    std::vector<double> coef(static_cast<std::size_t>(d));
    for (auto& c : coef) c = unif(rng);
    double at = 0;
    for (int i = 0; i < d; ++i) at += coef[static_cast<std::size_t>(i)] * anchor(i);
    Expression e = constant(value_at_anchor - at);
    for (int i = 0; i < d; ++i)
      e = add(e, mul(constant(coef[static_cast<std::size_t>(i)]),
                     variable(i, "x" + std::to_string(i + 1))));
    return e;
  };

  const int ng = static_cast<int>(rng() % 3);
  for (int i = 0; i < ng; ++i)
    sys.g.push_back(affine_with_value(rng() % 2 ? 0.0 : -0.5 - unif(rng) * 0.5));
  const int nh = force_fullrank ? d : static_cast<int>(rng() % 2);
  if (force_fullrank) {
    // identity-like equalities guarantee rank d
    for (int i = 0; i < d; ++i) {
      Expression e = sub(variable(i, "x" + std::to_string(i + 1)), constant(anchor(i)));
      sys.h.push_back(e);
    }
  } else {
    for (int i = 0; i < nh; ++i) sys.h.push_back(affine_with_value(0.0));
  }
  const int np = static_cast<int>(rng() % 2);
  for (int i = 0; i < np; ++i) {
    // branch choice: I (G=0<H), K (G>0=H) or J (both zero)
    const int mode = static_cast<int>(rng() % 3);
    if (mode == 0) {
      sys.G.push_back(affine_with_value(0.0));
      sys.H.push_back(affine_with_value(0.5 + 0.5 * std::abs(unif(rng))));
    } else if (mode == 1) {
      sys.G.push_back(affine_with_value(0.5 + 0.5 * std::abs(unif(rng))));
      sys.H.push_back(affine_with_value(0.0));
    } else {
      sys.G.push_back(affine_with_value(0.0));
      sys.H.push_back(affine_with_value(0.0));
    }
  }
  Box b;
  b.lo = anchor.array() - 2.0;
  b.hi = anchor.array() + 2.0;
  sys.blocks.emplace_back(CatalogSet::Variant{b});
  sys.validate();
  return sys;
}

}  // namespace

TEST_CASE("implication chain on a randomized affine corpus") {
  std::mt19937_64 rng(20260810);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd anchor;
    const bool force_fullrank = t % 2 == 0;
    auto sys = random_affine_system(rng, anchor, force_fullrank);
    REQUIRE(is_feasible(sys, anchor).feasible);

    auto lcq = check_lcq(sys);
    REQUIRE(lcq.verdict == CQVerdict::Holds);
    auto rcrcq = probe_rcrcq(sys, anchor);
    CHECK(rcrcq.verdict != CQVerdict::ViolatedWithWitness);
    auto rcpld = probe_rcpld(sys, anchor);
    CHECK(rcpld.verdict != CQVerdict::ViolatedWithWitness);

    auto fr = check_fullrank(sys, anchor);
    if (fr.verdict == CQVerdict::Holds)
      CHECK(probe_rcpld(sys, anchor).verdict != CQVerdict::ViolatedWithWitness);
  }
}

TEST_CASE("rcpld persistence at nearby feasible points of the sawtooth system") {
  auto sys = helpers::sawtooth_system();
  for (int j = 1; j <= 10; ++j) {
    const double x3 = 0.5 - 7e-5 * j;
    Eigen::VectorXd p = vec({0, 0, x3, 1 - x3});
    REQUIRE(is_feasible(sys, p).feasible);
    CHECK((p - vec({0, 0, 0.5, 0.5})).norm() <= 1e-3);
    auto rep = probe_rcpld(sys, p);
    CHECK(rep.verdict != CQVerdict::ViolatedWithWitness);
  }
}

TEST_CASE("rcpld full probe on the exponential combined program") {
  // no short circuit applies here: the equality-side rank is 4 < 5, the
  // system is nonlinear, and the abnormal-multiplier check fails, so the
  // dependence condition is probed directly
  auto cp = build_combined_program(helpers::exp_bilevel());
  Eigen::VectorXd anchor = helpers::vec({0, 0, 0.5, 0, 0});
  CHECK(check_fullrank(cp.system, anchor).verdict == CQVerdict::NoViolationFound);
  auto rep = probe_rcpld(cp.system, anchor);
  CHECK(rep.verdict == CQVerdict::NoViolationFound);
  CHECK(rep.implication_chain.empty());
}

TEST_CASE("rcpld probe detects a rank drop in the equality family") {
  // h1 = x1, h2 = x1 + x2^2: gradients coincide at the origin and split at
  // every nearby point with x2 != 0
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.h = {variable(0, "x1"),
           add(variable(0, "x1"), pow_int(variable(1, "x2"), 2))};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  auto rep = probe_rcpld(sys, vec({0, 0}));
  REQUIRE(rep.verdict == CQVerdict::ViolatedWithWitness);
  REQUIRE(!rep.witnesses.empty());
  CHECK(rep.witnesses.front().anchor_rank == 1);
  CHECK(rep.witnesses.front().sample_rank == 2);
  CHECK(rep.witnesses.front().note.find("condition (i)") != std::string::npos);
}

TEST_CASE("rcpld probe detects dependence loss for active inequalities") {
  // the parabola pocket: g1 = x2 - x1^2, g2 = -x2, both active at the origin
  // with opposite vertical gradients; nearby the pair tilts and becomes
  // independent
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.g = {sub(variable(1, "x2"), pow_int(variable(0, "x1"), 2)),
           negate(variable(1, "x2"))};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  CHECK(check_nnamcq(sys, vec({0, 0})).verdict == CQVerdict::Fails);
  auto rep = probe_rcpld(sys, vec({0, 0}));
  REQUIRE(rep.verdict == CQVerdict::ViolatedWithWitness);
  REQUIRE(!rep.witnesses.empty());
  CHECK(rep.witnesses.front().sample_rank == 2);
  CHECK(rep.witnesses.front().anchor_rank <= 1);
  CHECK(rep.witnesses.front().note.find("condition (ii)") != std::string::npos);

  auto rc = probe_rcrcq(sys, vec({0, 0}));
  CHECK(rc.verdict == CQVerdict::ViolatedWithWitness);
}

TEST_CASE("biactive pair: abnormal search respects the branch disjunction") {
  // (G, H) = (x1 + x1^3, x2) at the origin: no sign-feasible annihilator
  // exists, and the cubic term keeps the linear-CQ short circuit out of play
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.G = {add(variable(0, "x1"), pow_int(variable(0, "x1"), 3))};
  sys.H = {variable(1, "x2")};
  sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{2}});
  sys.validate();
  auto nn = check_nnamcq(sys, vec({0, 0}));
  CHECK(nn.verdict == CQVerdict::Holds);
  // and the dependence probe short-circuits through it
  auto rp = probe_rcpld(sys, vec({0, 0}));
  CHECK(rp.verdict == CQVerdict::NoViolationFound);
  REQUIRE(!rp.implication_chain.empty());
  CHECK(rp.implication_chain.front().find("abnormal") != std::string::npos);
}

TEST_CASE("affine system over a polyhedral union short-circuits the probes") {
  auto boxpoly = [](double x0, double x1, double y0, double y1) {
    Polyhedron p;
    p.A = Eigen::MatrixXd(4, 2);
    p.A << -1, 0, 1, 0, 0, -1, 0, 1;
    p.b = vec({-x0, x1, -y0, y1});
    return p;
  };
  PolyUnion u;
  u.members = {boxpoly(0, 2, 0, 1), boxpoly(0, 1, 0, 2)};
  FeasibilitySystem sys;
  sys.vars = {"x1", "x2"};
  sys.g = {sub(add(variable(0, "x1"), variable(1, "x2")), constant(2))};
  sys.blocks.emplace_back(CatalogSet::Variant{u});
  sys.validate();
  CHECK(check_lcq(sys).verdict == CQVerdict::Holds);
  Eigen::VectorXd anchor = vec({1, 1});
  auto rc = probe_rcrcq(sys, anchor);
  CHECK(rc.verdict == CQVerdict::NoViolationFound);
  CHECK(!rc.implication_chain.empty());
  CHECK(probe_rcpld(sys, anchor).verdict == CQVerdict::NoViolationFound);
}
