#include "mpccq/multipliers.hpp"

#include <algorithm>
#include <cmath>

namespace mpccq {

std::vector<FamilyColumn> g_vertex_columns(const FeasibilitySystem& sys,
                                           const Eigen::VectorXd& x,
                                           const std::vector<int>& indices, double tol,
                                           bool& outer_estimate) {
  std::vector<FamilyColumn> cols;
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  for (int i : indices) {
    auto vs = subdifferential_vertices(sys.g[static_cast<std::size_t>(i)], pt, tol);
    if (!vs.exact) outer_estimate = true;
    for (std::size_t j = 0; j < vs.vertices.size(); ++j) {
      FamilyColumn c;
      c.v = Eigen::Map<const Eigen::VectorXd>(vs.vertices[j].data(), sys.dim());
      c.kind = FamilyColumn::Kind::GVertex;
      c.index = i;
      c.sub = static_cast<int>(j);
      c.sign = linalg::SignConstraint::Nonneg;
      c.label = "g" + std::to_string(i) + ":v" + std::to_string(j);
      cols.push_back(std::move(c));
    }
  }
  return cols;
}

std::vector<FamilyColumn> h_columns(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                    const std::vector<int>& indices) {
  std::vector<FamilyColumn> cols;
  for (int i : indices) {
    FamilyColumn c;
    c.v = eval_gradient(sys.h[static_cast<std::size_t>(i)], x);
    c.kind = FamilyColumn::Kind::H;
    c.index = i;
    c.sign = linalg::SignConstraint::Free;
    c.label = "h" + std::to_string(i);
    cols.push_back(std::move(c));
  }
  return cols;
}

std::vector<FamilyColumn> pair_columns(const FeasibilitySystem& sys, const Eigen::VectorXd& x,
                                       const std::vector<int>& free_G,
                                       const std::vector<int>& free_H,
                                       const std::vector<int>& branch_pairs_G,
                                       const std::vector<int>& branch_pairs_H) {
  std::vector<FamilyColumn> cols;
  auto push = [&](int i, bool is_G, linalg::SignConstraint sign, int pair) {
    FamilyColumn c;
    const auto& e = is_G ? sys.G[static_cast<std::size_t>(i)] : sys.H[static_cast<std::size_t>(i)];
    c.v = -eval_gradient(e, x);
    c.kind = is_G ? FamilyColumn::Kind::PairG : FamilyColumn::Kind::PairH;
    c.index = i;
    c.sign = sign;
    c.pair_id = pair;
    c.label = (is_G ? "G" : "H") + std::to_string(i);
    cols.push_back(std::move(c));
  };
  for (int i : free_G) push(i, true, linalg::SignConstraint::Free, -1);
  for (int i : free_H) push(i, false, linalg::SignConstraint::Free, -1);
  for (int i : branch_pairs_G) push(i, true, linalg::SignConstraint::BranchG, i);
  for (int i : branch_pairs_H) push(i, false, linalg::SignConstraint::BranchH, i);
  return cols;
}

std::vector<FamilyColumn> chart_columns(const FeasibilitySystem& sys, int block,
                                        const ConeChart& chart) {
  std::vector<FamilyColumn> cols;
  const auto offsets = sys.block_offsets();
  const int off = offsets[static_cast<std::size_t>(block)];
  const int d = sys.dim();
  auto embed = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(d);
    full.segment(off, v.size()) = v;
    return full;
  };
  for (int j = 0; j < chart.rays.cols(); ++j) {
    FamilyColumn c;
    c.v = embed(chart.rays.col(j));
    c.kind = FamilyColumn::Kind::ChartRay;
    c.index = block;
    c.sub = j;
    c.sign = linalg::SignConstraint::Nonneg;
    c.label = "C" + std::to_string(block) + ":r" + std::to_string(j);
    cols.push_back(std::move(c));
  }
  for (int j = 0; j < chart.lineality.cols(); ++j) {
    FamilyColumn c;
    c.v = embed(chart.lineality.col(j));
    c.kind = FamilyColumn::Kind::ChartLine;
    c.index = block;
    c.sub = j;
    c.sign = linalg::SignConstraint::Free;
    c.label = "C" + std::to_string(block) + ":l" + std::to_string(j);
    cols.push_back(std::move(c));
  }
  return cols;
}

std::vector<std::vector<int>> chart_combinations(const std::vector<NormalConeDescription>& cones,
                                                 long long cap, bool& capped) {
  std::vector<std::vector<int>> combos;
  std::vector<int> cur(cones.size(), 0);
  long long total = 1;
  for (const auto& c : cones) total *= std::max<std::size_t>(1, c.charts.size());
  if (total > cap) capped = true;
  while (static_cast<long long>(combos.size()) < std::min(total, cap)) {
    combos.push_back(cur);
    std::size_t k = 0;
    while (k < cones.size()) {
      if (++cur[k] < static_cast<int>(std::max<std::size_t>(1, cones[k].charts.size()))) break;
      cur[k] = 0;
      ++k;
    }
    if (k == cones.size()) break;
  }
  return combos;
}

MultiplierVector recombine(const FeasibilitySystem& sys, const IndexSets& idx,
                           const std::vector<FamilyColumn>& cols,
                           const std::vector<double>& multipliers) {
  MultiplierVector m;
  m.lambda_g.assign(sys.g.size(), 0.0);
  m.lambda_h.assign(sys.h.size(), 0.0);
  m.lambda_G.assign(static_cast<std::size_t>(sys.num_pairs()), 0.0);
  m.lambda_H.assign(static_cast<std::size_t>(sys.num_pairs()), 0.0);
  m.g_vertices.resize(sys.g.size());
  m.eta = Eigen::VectorXd::Zero(sys.dim());

  std::vector<Eigen::VectorXd> g_accum(sys.g.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto& c = cols[j];
    const double mu = multipliers[j];
    const auto ci = static_cast<std::size_t>(c.index);
    switch (c.kind) {
      case FamilyColumn::Kind::GVertex:
        m.lambda_g[ci] += mu;
        if (g_accum[ci].size() == 0) g_accum[ci] = Eigen::VectorXd::Zero(sys.dim());
        g_accum[ci] += mu * c.v;
        break;
      case FamilyColumn::Kind::H:
        m.lambda_h[ci] += mu;
        break;
      case FamilyColumn::Kind::PairG:
        m.lambda_G[ci] += mu;
        break;
      case FamilyColumn::Kind::PairH:
        m.lambda_H[ci] += mu;
        break;
      case FamilyColumn::Kind::ChartRay:
      case FamilyColumn::Kind::ChartLine:
        m.eta += mu * c.v;
        break;
    }
  }
  for (std::size_t i = 0; i < sys.g.size(); ++i) {
    if (std::abs(m.lambda_g[i]) > 1e-14 && g_accum[i].size() > 0) {
      Eigen::VectorXd v = g_accum[i] / m.lambda_g[i];
      m.g_vertices[i].assign(v.data(), v.data() + v.size());
    }
  }
  for (int p = 0; p < sys.num_pairs(); ++p) {
    std::string b;
    if (std::find(idx.I.begin(), idx.I.end(), p) != idx.I.end())
      b = "I";
    else if (std::find(idx.K.begin(), idx.K.end(), p) != idx.K.end())
      b = "K";
    else {
      const double lG = m.lambda_G[static_cast<std::size_t>(p)];
      const double lH = m.lambda_H[static_cast<std::size_t>(p)];
      if (lG > 1e-12 && lH > 1e-12)
        b = "J:both>=0";
      else if (std::abs(lG) <= 1e-12)
        b = "J:lamG=0";
      else
        b = "J:lamH=0";
    }
    m.branch.push_back(b);
  }
  return m;
}

std::vector<linalg::VectorSpec> to_specs(const std::vector<FamilyColumn>& cols) {
  std::vector<linalg::VectorSpec> specs;
  specs.reserve(cols.size());
  for (const auto& c : cols) specs.push_back({c.v, c.sign, c.pair_id});
  return specs;
}

std::vector<PairCase> enumerate_pair_cases(const std::vector<FamilyColumn>& cols, long long cap,
                                           bool& capped) {
  std::vector<int> pair_ids;
  for (const auto& c : cols)
    if (c.pair_id >= 0 &&
        std::find(pair_ids.begin(), pair_ids.end(), c.pair_id) == pair_ids.end())
      pair_ids.push_back(c.pair_id);
  std::sort(pair_ids.begin(), pair_ids.end());
  const int npairs = static_cast<int>(pair_ids.size());
  long long total = 1;
  for (int i = 0; i < npairs; ++i) {
    total *= 3;
    if (total > cap) {
      capped = true;
      total = cap;
      break;
    }
  }
  std::vector<PairCase> cases;
  std::vector<int> cur(static_cast<std::size_t>(npairs), 0);
  while (static_cast<long long>(cases.size()) < total) {
    PairCase pc;
    pc.include.assign(cols.size(), true);
    pc.nonneg.assign(cols.size(), false);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& c = cols[j];
      pc.nonneg[j] = c.sign == linalg::SignConstraint::Nonneg;
      if (c.pair_id >= 0) {
        const int pi = static_cast<int>(
            std::lower_bound(pair_ids.begin(), pair_ids.end(), c.pair_id) - pair_ids.begin());
        const int mode = cur[static_cast<std::size_t>(pi)];
        if (mode == 0 && c.sign == linalg::SignConstraint::BranchG) pc.include[j] = false;
        if (mode == 1 && c.sign == linalg::SignConstraint::BranchH) pc.include[j] = false;
        if (mode == 2) pc.nonneg[j] = true;
      }
    }
    cases.push_back(std::move(pc));
    if (npairs == 0) break;
    int k = npairs - 1;
    while (k >= 0 && cur[static_cast<std::size_t>(k)] == 2) {
      cur[static_cast<std::size_t>(k)] = 0;
      --k;
    }
    if (k < 0) break;
    ++cur[static_cast<std::size_t>(k)];
  }
  return cases;
}

double tuple_norm(const MultiplierVector& m) {
  double n = m.eta.size() ? m.eta.lpNorm<Eigen::Infinity>() : 0.0;
  for (double v : m.lambda_g) n = std::max(n, std::abs(v));
  for (double v : m.lambda_h) n = std::max(n, std::abs(v));
  for (double v : m.lambda_G) n = std::max(n, std::abs(v));
  for (double v : m.lambda_H) n = std::max(n, std::abs(v));
  return n;
}

}  // namespace mpccq
