#include "mpccq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace mpccq::linalg {

Eigen::MatrixXd rows_matrix(const std::vector<Eigen::VectorXd>& vectors) {
  if (vectors.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd M(static_cast<int>(vectors.size()), vectors.front().size());
  for (int i = 0; i < M.rows(); ++i) M.row(i) = vectors[static_cast<std::size_t>(i)];
  return M;
}

RankReport numerical_rank(const Eigen::MatrixXd& M, double tol) {
  RankReport r;
  r.tol = tol;
  if (M.rows() == 0 || M.cols() == 0) return r;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  r.singular_values.assign(s.data(), s.data() + s.size());
  const double smax = s.size() ? s(0) : 0.0;
  if (smax <= 0.0) return r;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol * smax) ++r.rank;
  return r;
}

RankReport numerical_rank(const std::vector<Eigen::VectorXd>& vectors, double tol) {
  return numerical_rank(rows_matrix(vectors), tol);
}

std::vector<int> select_basis(const std::vector<Eigen::VectorXd>& vectors, double tol) {
  std::vector<int> chosen;
  std::vector<Eigen::VectorXd> q;  // orthonormal
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const double norm = vectors[i].norm();
    if (norm <= 1e-14) continue;
    Eigen::VectorXd r = vectors[i];
    for (const auto& u : q) r -= u.dot(r) * u;
    // second pass for numerical orthogonality
    for (const auto& u : q) r -= u.dot(r) * u;
    if (r.norm() > tol * norm) {
      q.push_back(r / r.norm());
      chosen.push_back(static_cast<int>(i));
    }
  }
  return chosen;
}

CaratheodoryResult caratheodory_reduce(const Eigen::VectorXd& v,
                                       const std::vector<Eigen::VectorXd>& base,
                                       const std::vector<Eigen::VectorXd>& extras,
                                       const std::vector<double>& alphas, double tol) {
  if (extras.size() != alphas.size())
    throw std::invalid_argument("extras/alphas size mismatch");
  for (double a : alphas)
    if (a == 0.0) throw std::invalid_argument("alphas must be nonzero");

  const int d = static_cast<int>(v.size());
  const int nb = static_cast<int>(base.size());
  const double scale = std::max(1.0, v.norm());

  // initial coefficients: base part from least squares of the residual
  Eigen::VectorXd target = v;
  for (std::size_t i = 0; i < extras.size(); ++i) target -= alphas[i] * extras[i];
  Eigen::VectorXd cbase(nb);
  if (nb > 0) {
    Eigen::MatrixXd B(d, nb);
    for (int j = 0; j < nb; ++j) B.col(j) = base[static_cast<std::size_t>(j)];
    cbase = B.colPivHouseholderQr().solve(target);
    if ((B * cbase - target).norm() > tol * scale)
      throw InconsistentDecomposition("v is not in the stated span");
  } else if (target.norm() > tol * scale) {
    throw InconsistentDecomposition("v is not in the stated span");
  }

  std::vector<int> active(extras.size());
  for (std::size_t i = 0; i < extras.size(); ++i) active[i] = static_cast<int>(i);
  std::vector<double> coeff(alphas);

  auto family_matrix = [&]() {
    Eigen::MatrixXd F(d, nb + static_cast<int>(active.size()));
    for (int j = 0; j < nb; ++j) F.col(j) = base[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < active.size(); ++k)
      F.col(nb + static_cast<int>(k)) = extras[static_cast<std::size_t>(active[k])];
    return F;
  };

  while (!active.empty()) {
    Eigen::MatrixXd F = family_matrix();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const int cols = static_cast<int>(F.cols());
    if (smax <= 0.0) {
      // all columns are zero vectors; every extra reduces away
      active.clear();
      coeff.clear();
      break;
    }
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
      if (s(i) > 1e-10 * smax) ++rank;
    if (cols - rank == 0) break;
    Eigen::VectorXd gamma = svd.matrixV().col(cols - 1);

    double gmax = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k)
      gmax = std::max(gmax, std::abs(gamma(nb + static_cast<int>(k))));
    if (gmax <= 1e-12)
      throw InconsistentDecomposition("base family is linearly dependent");

    // crossing parameters t_k = coeff_k / gamma_k; moving coeff -= t*gamma
    // zeroes extra k at t = t_k
    std::vector<std::pair<double, int>> pos, neg;  // (t, active position)
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double g = gamma(nb + static_cast<int>(k));
      if (std::abs(g) <= 1e-12) continue;
      const double t = coeff[k] / g;
      if (t > 0)
        pos.emplace_back(t, static_cast<int>(k));
      else
        neg.emplace_back(t, static_cast<int>(k));
    }

    auto first_drop = [&](std::vector<std::pair<double, int>>& cand, bool positive) {
      double tstar = positive ? 1e300 : -1e300;
      for (auto& [t, k] : cand)
        tstar = positive ? std::min(tstar, t) : std::max(tstar, t);
      std::vector<int> drops;
      for (auto& [t, k] : cand)
        if (std::abs(t - tstar) <= 1e-12 * std::max(1.0, std::abs(tstar))) drops.push_back(k);
      std::sort(drops.begin(), drops.end());
      return std::make_pair(tstar, drops);
    };

    double tstar;
    std::vector<int> drops;
    if (pos.empty() && neg.empty())
      throw InconsistentDecomposition("no crossing found in null direction");
    if (neg.empty()) {
      std::tie(tstar, drops) = first_drop(pos, true);
    } else if (pos.empty()) {
      std::tie(tstar, drops) = first_drop(neg, false);
    } else {
      auto [tp, dp] = first_drop(pos, true);
      auto [tn, dn] = first_drop(neg, false);
      // deterministic: prefer the direction dropping the lowest extra index
      if (active[static_cast<std::size_t>(dp.front())] <=
          active[static_cast<std::size_t>(dn.front())]) {
        tstar = tp;
        drops = dp;
      } else {
        tstar = tn;
        drops = dn;
      }
    }

    for (int j = 0; j < nb; ++j) cbase(j) -= tstar * gamma(j);
    for (std::size_t k = 0; k < active.size(); ++k)
      coeff[k] -= tstar * gamma(nb + static_cast<int>(k));
    for (auto it = drops.rbegin(); it != drops.rend(); ++it) {
      active.erase(active.begin() + *it);
      coeff.erase(coeff.begin() + *it);
    }
    // retained coefficients must keep their alpha sign
    for (std::size_t k = 0; k < active.size(); ++k)
      if (coeff[k] * alphas[static_cast<std::size_t>(active[k])] <= 0.0)
        throw InconsistentDecomposition("sign flip during reduction");
  }

  CaratheodoryResult result;
  result.kept_extras = active;
  result.extra_coefficients = coeff;
  result.base_coefficients.assign(cbase.data(), cbase.data() + nb);

  Eigen::VectorXd recon = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < nb; ++j) recon += cbase(j) * base[static_cast<std::size_t>(j)];
  for (std::size_t k = 0; k < active.size(); ++k)
    recon += coeff[k] * extras[static_cast<std::size_t>(active[k])];
  if ((recon - v).norm() > 10 * tol * scale)
    throw InconsistentDecomposition("reconstruction drifted beyond tolerance");
  return result;
}

FeasibilityResult solve_linear_feasibility(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                           const std::vector<bool>& nonneg) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (static_cast<int>(nonneg.size()) != n) throw std::invalid_argument("mask size mismatch");

  FeasibilityResult res;
  if (m == 0) {
    res.feasible = true;
    res.x = Eigen::VectorXd::Zero(n);
    return res;
  }

  // split free variables into positive/negative parts
  std::vector<int> col_of;  // tableau column -> original variable
  std::vector<double> col_sign;
  for (int j = 0; j < n; ++j) {
    col_of.push_back(j);
    col_sign.push_back(1.0);
    if (!nonneg[static_cast<std::size_t>(j)]) {
      col_of.push_back(j);
      col_sign.push_back(-1.0);
    }
  }
  const int n2 = static_cast<int>(col_of.size());

  Eigen::MatrixXd T(m, n2 + m + 1);
  T.setZero();
  for (int i = 0; i < m; ++i) {
    const double rs = b(i) < 0 ? -1.0 : 1.0;
    for (int j = 0; j < n2; ++j) T(i, j) = rs * col_sign[static_cast<std::size_t>(j)] * A(i, col_of[static_cast<std::size_t>(j)]);
    T(i, n2 + i) = 1.0;
    T(i, n2 + m) = rs * b(i);
  }

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n2 + i;

  // reduced costs for min sum(artificials)
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(n2 + m);
  for (int i = 0; i < m; ++i) cost.segment(n2, m)(i) = 1.0;
  Eigen::VectorXd reduced = cost;
  double objective = 0.0;
  for (int i = 0; i < m; ++i) {
    reduced -= T.row(i).head(n2 + m);
    objective -= T(i, n2 + m);
  }

  const double eps = 1e-11;
  const int max_iters = 2000 + 40 * (n2 + m) * (n2 + m);
  for (int iter = 0;; ++iter) {
    if (iter > max_iters) throw std::runtime_error("phase-one simplex stalled");
    // Bland: entering = lowest index with negative reduced cost
    int enter = -1;
    for (int j = 0; j < n2 + m; ++j)
      if (reduced(j) < -eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    int leave = -1;
    double best = 0.0;
    for (int i = 0; i < m; ++i) {
      if (T(i, enter) > eps) {
        const double ratio = T(i, n2 + m) / T(i, enter);
        if (leave < 0 || ratio < best - eps ||
            (ratio < best + eps && basis[static_cast<std::size_t>(i)] <
                                       basis[static_cast<std::size_t>(leave)])) {
          leave = i;
          best = ratio;
        }
      }
    }
    if (leave < 0) throw std::runtime_error("phase-one simplex unbounded");
    // pivot
    const double piv = T(leave, enter);
    T.row(leave) /= piv;
    for (int i = 0; i < m; ++i)
      if (i != leave && std::abs(T(i, enter)) > 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    const double rc = reduced(enter);
    reduced -= rc * T.row(leave).head(n2 + m);
    objective -= rc * T(leave, n2 + m);
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  if (-objective > 1e-9 * scale) {
    res.feasible = false;
    return res;
  }

  Eigen::VectorXd x2 = Eigen::VectorXd::Zero(n2 + m);
  for (int i = 0; i < m; ++i) x2(basis[static_cast<std::size_t>(i)]) = T(i, n2 + m);
  res.x = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n2; ++j)
    res.x(col_of[static_cast<std::size_t>(j)]) += col_sign[static_cast<std::size_t>(j)] * x2(j);
  res.feasible = true;
  return res;
}

namespace {

struct BranchLayout {
  std::vector<int> pair_ids;                      // distinct, sorted
  std::map<int, std::pair<int, int>> members;     // pair id -> (G index, H index)
};

BranchLayout branch_layout(const std::vector<VectorSpec>& vectors) {
  BranchLayout layout;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& s = vectors[i];
    if (s.sign == SignConstraint::BranchG || s.sign == SignConstraint::BranchH) {
      if (s.pair_id < 0) throw std::invalid_argument("branch vector without pair id");
      auto& m = layout.members[s.pair_id];
      if (s.sign == SignConstraint::BranchG)
        m.first = static_cast<int>(i);
      else
        m.second = static_cast<int>(i);
    }
  }
  for (auto& [id, gh] : layout.members) layout.pair_ids.push_back(id);
  std::sort(layout.pair_ids.begin(), layout.pair_ids.end());
  return layout;
}

}  // namespace

std::optional<DependenceCertificate> positive_dependence_certificate(
    const std::vector<VectorSpec>& vectors, long long branch_cap) {
  if (vectors.empty()) return std::nullopt;
  const int d = static_cast<int>(vectors.front().v.size());
  auto layout = branch_layout(vectors);
  const int npairs = static_cast<int>(layout.pair_ids.size());

  long long ncases = 1;
  bool incomplete = false;
  for (int i = 0; i < npairs; ++i) {
    ncases *= 3;
    if (ncases > branch_cap) {
      incomplete = true;
      break;
    }
  }

  // case encoding per pair: 0 -> lamG=0, 1 -> lamH=0, 2 -> both nonneg
  std::vector<std::vector<int>> cases;
  if (!incomplete) {
    std::vector<int> cur(static_cast<std::size_t>(npairs), 0);
    while (true) {
      cases.push_back(cur);
      int k = npairs - 1;
      while (k >= 0 && cur[static_cast<std::size_t>(k)] == 2) {
        cur[static_cast<std::size_t>(k)] = 0;
        --k;
      }
      if (k < 0) break;
      ++cur[static_cast<std::size_t>(k)];
    }
  } else {
    cases.push_back(std::vector<int>(static_cast<std::size_t>(npairs), 0));
    cases.push_back(std::vector<int>(static_cast<std::size_t>(npairs), 1));
    cases.push_back(std::vector<int>(static_cast<std::size_t>(npairs), 2));
  }

  static const char* kCaseName[3] = {"lamG=0", "lamH=0", "both>=0"};

  for (const auto& cs : cases) {
    // column set and sign constraints under this case
    std::vector<int> cols;
    std::vector<bool> col_nonneg;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto& s = vectors[i];
      bool included = true;
      bool nn = s.sign == SignConstraint::Nonneg;
      if (s.sign == SignConstraint::BranchG || s.sign == SignConstraint::BranchH) {
        const int pid = s.pair_id;
        const int idx = static_cast<int>(
            std::lower_bound(layout.pair_ids.begin(), layout.pair_ids.end(), pid) -
            layout.pair_ids.begin());
        const int mode = cs[static_cast<std::size_t>(idx)];
        if (mode == 0 && s.sign == SignConstraint::BranchG) included = false;
        if (mode == 1 && s.sign == SignConstraint::BranchH) included = false;
        if (mode == 2) nn = true;
      }
      if (included) {
        cols.push_back(static_cast<int>(i));
        col_nonneg.push_back(nn);
      }
    }
    if (cols.empty()) continue;

    // pin one multiplier to +/-1 so the certificate is nonzero by construction
    for (std::size_t p = 0; p < cols.size(); ++p) {
      std::vector<double> pin_signs = col_nonneg[p] ? std::vector<double>{1.0}
                                                    : std::vector<double>{1.0, -1.0};
      for (double s : pin_signs) {
        Eigen::MatrixXd A(d, static_cast<int>(cols.size()) - 1);
        std::vector<bool> nonneg;
        int cj = 0;
        for (std::size_t q = 0; q < cols.size(); ++q) {
          if (q == p) continue;
          A.col(cj++) = vectors[static_cast<std::size_t>(cols[q])].v;
          nonneg.push_back(col_nonneg[q]);
        }
        Eigen::VectorXd b = -s * vectors[static_cast<std::size_t>(cols[p])].v;
        auto fr = solve_linear_feasibility(A, b, nonneg);
        if (!fr.feasible) continue;

        DependenceCertificate cert;
        cert.incomplete = incomplete;
        cert.multipliers.assign(vectors.size(), 0.0);
        cert.multipliers[static_cast<std::size_t>(cols[p])] = s;
        cj = 0;
        for (std::size_t q = 0; q < cols.size(); ++q) {
          if (q == p) continue;
          cert.multipliers[static_cast<std::size_t>(cols[q])] = fr.x(cj++);
        }
        double total = 0.0;
        for (double l : cert.multipliers) total += std::abs(l);
        for (double& l : cert.multipliers) l /= total;
        Eigen::VectorXd resid = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < vectors.size(); ++i)
          resid += cert.multipliers[i] * vectors[i].v;
        cert.residual = resid.lpNorm<Eigen::Infinity>();
        if (cert.residual > 1e-8) continue;
        for (int i = 0; i < npairs; ++i)
          cert.branch_case.push_back(kCaseName[cs[static_cast<std::size_t>(i)]]);
        return cert;
      }
    }
  }
  return std::nullopt;
}

}  // namespace mpccq::linalg
