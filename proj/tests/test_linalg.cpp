#include <doctest.h>

#include <functional>
#include <random>

#include "mpccq/linalg.hpp"
#include "test_helpers.hpp"

using namespace mpccq;
using helpers::vec;

TEST_CASE("numerical rank of the worked matrices") {
  Eigen::MatrixXd SJ(2, 2);
  SJ << -4, 1, 1, -1;
  CHECK(linalg::numerical_rank(SJ).rank == 2);

  Eigen::MatrixXd Jt(2, 2);
  Jt << 0, 6, -2, 1;
  CHECK(linalg::numerical_rank(Jt).rank == 2);

  CHECK(linalg::numerical_rank(Eigen::MatrixXd::Zero(3, 4)).rank == 0);
  CHECK(linalg::numerical_rank(Eigen::MatrixXd(0, 0)).rank == 0);
}

TEST_CASE("rank is invariant under permutation and row scaling") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-1, 1);
  for (int t = 0; t < 50; ++t) {
    const int m = 2 + static_cast<int>(rng() % 5), n = 2 + static_cast<int>(rng() % 5);
    Eigen::MatrixXd M(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = unif(rng);
    const int r0 = linalg::numerical_rank(M).rank;
    Eigen::MatrixXd P = M.colwise().reverse();
    CHECK(linalg::numerical_rank(P).rank == r0);
    Eigen::MatrixXd S = M;
    for (int i = 0; i < m; ++i) S.row(i) *= std::pow(10.0, (i % 5) - 2.0);
    auto rep = linalg::numerical_rank(S);
    const double cond = rep.singular_values.front() /
                        std::max(rep.singular_values.back(), 1e-300);
    if (cond <= 1e6) CHECK(rep.rank == r0);
  }
}

TEST_CASE("select_basis is greedy and deterministic") {
  std::vector<Eigen::VectorXd> single = {vec({2, 1, 0, 0})};
  CHECK(linalg::select_basis(single) == std::vector<int>{0});

  std::vector<Eigen::VectorXd> three = {vec({1, 0}), vec({2, 0}), vec({0, 1})};
  CHECK(linalg::select_basis(three) == std::vector<int>{0, 2});

  std::vector<Eigen::VectorXd> sj = {vec({-4, 1}), vec({1, -1})};
  CHECK(linalg::select_basis(sj) == std::vector<int>{0, 1});
}

TEST_CASE("caratheodory examples") {
  SUBCASE("trivial base multiple") {
    auto r = linalg::caratheodory_reduce(vec({2, 0}), {vec({1, 0})}, {}, {});
    CHECK(r.kept_extras.empty());
    REQUIRE(r.base_coefficients.size() == 1);
    CHECK(r.base_coefficients[0] == doctest::Approx(2.0));
  }
  SUBCASE("parallel extras, lowest index drops") {
    auto r = linalg::caratheodory_reduce(vec({1, 3}), {vec({1, 0})},
                                         {vec({0, 1}), vec({0, 2})}, {1, 1});
    REQUIRE(r.kept_extras == std::vector<int>{1});
    CHECK(r.extra_coefficients[0] == doctest::Approx(1.5));
    CHECK(r.base_coefficients[0] == doctest::Approx(1.0));
  }
  SUBCASE("opposite extras cancel to nothing") {
    auto r = linalg::caratheodory_reduce(vec({0, 0}), {}, {vec({1, 0}), vec({-1, 0})}, {1, 1});
    CHECK(r.kept_extras.empty());
  }
  SUBCASE("inconsistent decomposition is rejected") {
    CHECK_THROWS_AS(linalg::caratheodory_reduce(vec({0, 0, 1}), {vec({1, 0, 0})},
                                                {vec({0, 1, 0})}, {1}),
                    linalg::InconsistentDecomposition);
  }
}

TEST_CASE("caratheodory randomized post-conditions") {
  std::mt19937_64 rng(20260810);
  std::uniform_real_distribution<double> unif(-1, 1);
  std::uniform_real_distribution<double> coef(0.2, 2.0);
  const int trials = 200;  // the acceptance suite runs the full 1e3 sweep
  for (int t = 0; t < trials; ++t) {
    const int d = 2 + static_cast<int>(rng() % 7);
    const int nb = static_cast<int>(rng() % std::min(4, d));
    const int ne = 1 + static_cast<int>(rng() % 6);
    std::vector<Eigen::VectorXd> base;
    while (static_cast<int>(base.size()) < nb) {
      Eigen::VectorXd v(d);
      for (int i = 0; i < d; ++i) v(i) = unif(rng);
      base.push_back(v);
      if (linalg::numerical_rank(base).rank < static_cast<int>(base.size())) base.pop_back();
    }
    std::vector<Eigen::VectorXd> extras;
    std::vector<double> alphas;
    for (int e = 0; e < ne; ++e) {
      Eigen::VectorXd v(d);
      for (int i = 0; i < d; ++i) v(i) = unif(rng);
      extras.push_back(v);
      alphas.push_back((rng() % 2 ? 1 : -1) * coef(rng));
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < nb; ++i) v += unif(rng) * base[static_cast<std::size_t>(i)];
    for (int e = 0; e < ne; ++e) v += alphas[static_cast<std::size_t>(e)] * extras[static_cast<std::size_t>(e)];

    auto r = linalg::caratheodory_reduce(v, base, extras, alphas);

    Eigen::VectorXd recon = Eigen::VectorXd::Zero(d);
    std::vector<Eigen::VectorXd> family = base;
    for (int i = 0; i < nb; ++i) recon += r.base_coefficients[static_cast<std::size_t>(i)] * base[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < r.kept_extras.size(); ++k) {
      const int e = r.kept_extras[k];
      recon += r.extra_coefficients[k] * extras[static_cast<std::size_t>(e)];
      family.push_back(extras[static_cast<std::size_t>(e)]);
      CHECK(r.extra_coefficients[k] * alphas[static_cast<std::size_t>(e)] > 0.0);
    }
    CHECK((recon - v).norm() <= 1e-9 * std::max(1.0, v.norm()));
    CHECK(linalg::numerical_rank(family).rank == static_cast<int>(family.size()));
  }
}

TEST_CASE("linear feasibility solver") {
  Eigen::MatrixXd A(2, 3);
  A << 1, 0, 1, 0, 1, 1;
  Eigen::VectorXd b = vec({1, 2});
  auto r = linalg::solve_linear_feasibility(A, b, {true, true, true});
  REQUIRE(r.feasible);
  CHECK((A * r.x - b).norm() <= 1e-9);
  CHECK(r.x.minCoeff() >= -1e-12);

  // x1 + x2 = -1 with x >= 0 is infeasible
  Eigen::MatrixXd A2(1, 2);
  A2 << 1, 1;
  CHECK(!linalg::solve_linear_feasibility(A2, vec({-1}), {true, true}).feasible);

  // but feasible when one variable is free
  CHECK(linalg::solve_linear_feasibility(A2, vec({-1}), {true, false}).feasible);
}

TEST_CASE("positive dependence certificates") {
  SUBCASE("opposite nonnegative vectors") {
    std::vector<linalg::VectorSpec> fam;
    fam.push_back({vec({1, 0}), linalg::SignConstraint::Nonneg, -1});
    fam.push_back({vec({-1, 0}), linalg::SignConstraint::Nonneg, -1});
    auto c = linalg::positive_dependence_certificate(fam);
    REQUIRE(c.has_value());
    CHECK(c->multipliers[0] == doctest::Approx(0.5));
    CHECK(c->multipliers[1] == doctest::Approx(0.5));
    CHECK(c->residual <= 1e-8);
  }
  SUBCASE("independent vectors admit no certificate") {
    std::vector<linalg::VectorSpec> fam;
    fam.push_back({vec({1, 0}), linalg::SignConstraint::Free, -1});
    fam.push_back({vec({0, 1}), linalg::SignConstraint::Free, -1});
    CHECK(!linalg::positive_dependence_certificate(fam).has_value());
  }
  SUBCASE("branch pair enumeration") {
    // -G and -H point oppositely; only the lamH=0 case with free lamG works
    std::vector<linalg::VectorSpec> fam;
    fam.push_back({vec({1, 1}), linalg::SignConstraint::Nonneg, -1});
    fam.push_back({vec({-1, -1}), linalg::SignConstraint::BranchG, 0});
    fam.push_back({vec({0, 1}), linalg::SignConstraint::BranchH, 0});
    auto c = linalg::positive_dependence_certificate(fam);
    REQUIRE(c.has_value());
    Eigen::VectorXd resid = c->multipliers[0] * vec({1, 1}) +
                            c->multipliers[1] * vec({-1, -1}) + c->multipliers[2] * vec({0, 1});
    CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("no-certificate outcomes are confirmed by grid search") {
  // whenever the search reports none on small families, a simplex-grid scan
  // over normalized multipliers finds no small residual either
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-1, 1);
  int none_count = 0;
  for (int t = 0; t < 40; ++t) {
    std::vector<linalg::VectorSpec> fam;
    const int n = 2 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) {
      linalg::VectorSpec s;
      s.v = vec({unif(rng), unif(rng)});
      s.sign = (rng() % 2) ? linalg::SignConstraint::Nonneg : linalg::SignConstraint::Free;
      fam.push_back(s);
    }
    auto c = linalg::positive_dependence_certificate(fam);
    if (c.has_value()) {
      Eigen::VectorXd resid = Eigen::VectorXd::Zero(2);
      double total = 0;
      for (std::size_t i = 0; i < fam.size(); ++i) {
        resid += c->multipliers[i] * fam[i].v;
        total += std::abs(c->multipliers[i]);
      }
      CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-8);
      CHECK(total == doctest::Approx(1.0));
      continue;
    }
    ++none_count;
    // grid over the multiplier simplex with step 0.01 in up to 4 coordinates
    double best = 1e300;
    const int steps = 100;
    std::vector<int> idx(fam.size(), 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t k, int remaining) {
      if (k + 1 == fam.size()) {
        idx[k] = remaining;
        for (int signs = 0; signs < (1 << fam.size()); ++signs) {
          Eigen::VectorXd resid = Eigen::VectorXd::Zero(2);
          bool ok = true;
          for (std::size_t i = 0; i < fam.size(); ++i) {
            double m = idx[i] / double(steps);
            if (signs & (1 << i)) {
              if (fam[i].sign == linalg::SignConstraint::Nonneg) { ok = false; break; }
              m = -m;
            }
            resid += m * fam[i].v;
          }
          if (ok) best = std::min(best, resid.lpNorm<Eigen::Infinity>());
        }
        return;
      }
      for (int v = 0; v <= remaining; ++v) {
        idx[k] = v;
        rec(k + 1, remaining - v);
      }
    };
    rec(0, steps);
    CHECK(best > 1e-3);
  }
  CHECK(none_count > 0);
}
