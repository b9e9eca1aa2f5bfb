#include "mpccq/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "mpccq/vcalc.hpp"

namespace mpccq {

namespace {

void collect_vars(const Expression& e, std::set<int>& out) {
  if (e->kind == ExprKind::Variable) out.insert(e->var);
  for (const auto& a : e->args) collect_vars(a, out);
}

double eval_at(const Expression& e, const Eigen::VectorXd& p) {
  return eval(e, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

Eigen::VectorXd join(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  Eigen::VectorXd p(x.size() + y.size());
  p << x, y;
  return p;
}

}  // namespace

void BilevelProgram::validate() const {
  if (!F || !f) throw SetError("bilevel program needs both objectives");
  auto check_smooth = [](const std::vector<Expression>& es, const char* what) {
    for (const auto& e : es)
      if (!is_smooth(e)) throw SetError(std::string(what) + " must be smooth");
  };
  if (!is_smooth(f)) throw SetError("lower objective must be smooth");
  check_smooth(g, "lower inequalities");
  check_smooth(h, "lower equalities");
  check_smooth(G, "upper inequalities");
  check_smooth(H, "upper equalities");
  if (y_lo.size() != sy() || y_hi.size() != sy())
    throw SetError("lower search box dimension mismatch");
  int xdim = 0;
  for (const auto& b : x_blocks) xdim += b.dim();
  if (!x_blocks.empty() && xdim != dx()) throw SetError("upper blocks do not partition x");
}

bool BilevelProgram::lower_feasible_set_x_free() const {
  std::set<int> vars;
  for (const auto& e : g) collect_vars(e, vars);
  for (const auto& e : h) collect_vars(e, vars);
  for (int v : vars)
    if (v < dx()) return false;
  return true;
}

namespace {

constexpr double kLowerFeasTol = 1e-9;

bool lower_feasible(const BilevelProgram& blp, const Eigen::VectorXd& p, double tol) {
  for (const auto& e : blp.g)
    if (eval_at(e, p) > tol) return false;
  for (const auto& e : blp.h)
    if (std::abs(eval_at(e, p)) > tol) return false;
  return true;
}

/// One-dimensional candidate list: feasible grid points plus bisected
/// constraint-boundary roots.
std::vector<double> candidates_1d(const BilevelProgram& blp, const Eigen::VectorXd& x, int n) {
  const double lo = blp.y_lo(0), hi = blp.y_hi(0);
  std::vector<double> ys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    ys[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);

  std::vector<double> cand;
  for (double y : ys) {
    Eigen::VectorXd p = join(x, Eigen::VectorXd::Constant(1, y));
    if (lower_feasible(blp, p, kLowerFeasTol)) cand.push_back(y);
  }
  auto roots_of = [&](const Expression& e) {
    std::vector<double> roots;
    double prev = eval_at(e, join(x, Eigen::VectorXd::Constant(1, ys[0])));
    for (std::size_t i = 1; i < ys.size(); ++i) {
      double cur = eval_at(e, join(x, Eigen::VectorXd::Constant(1, ys[i])));
      if ((prev < 0) != (cur < 0)) {
        double a = ys[i - 1], b = ys[i];
        double fa = prev;
        for (int it = 0; it < 100; ++it) {
          const double m = 0.5 * (a + b);
          const double fm = eval_at(e, join(x, Eigen::VectorXd::Constant(1, m)));
          if ((fa < 0) == (fm < 0)) {
            a = m;
            fa = fm;
          } else {
            b = m;
          }
        }
        roots.push_back(0.5 * (a + b));
      }
      prev = cur;
    }
    return roots;
  };
  for (const auto& e : blp.g)
    for (double r : roots_of(e)) {
      Eigen::VectorXd p = join(x, Eigen::VectorXd::Constant(1, r));
      if (lower_feasible(blp, p, 1e-7)) cand.push_back(r);
    }
  for (const auto& e : blp.h)
    for (double r : roots_of(e)) {
      Eigen::VectorXd p = join(x, Eigen::VectorXd::Constant(1, r));
      if (lower_feasible(blp, p, 1e-7)) cand.push_back(r);
    }
  std::sort(cand.begin(), cand.end());
  return cand;
}

/// Golden-section refinement of f(x, .) on [a, b], rejecting infeasible
/// trial points.
double refine_1d(const BilevelProgram& blp, const Eigen::VectorXd& x, double a, double b) {
  auto value = [&](double y) {
    Eigen::VectorXd p = join(x, Eigen::VectorXd::Constant(1, y));
    // tighter than the candidate filter, so refinement cannot buy objective
    // decrease by drifting into the infeasible side
    if (!lower_feasible(blp, p, 1e-12)) return std::numeric_limits<double>::infinity();
    return eval_at(blp.f, p);
  };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = value(c), fd = value(d);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = value(d);
    }
  }
  double best = 0.5 * (a + b);
  // keep the bracket midpoint only if it actually improves on the endpoints
  double fbest = value(best);
  for (double y : {a, b})
    if (value(y) < fbest) {
      best = y;
      fbest = value(y);
    }
  return best;
}

}  // namespace

ValueFunctionSample value_function(const BilevelProgram& blp, const Eigen::VectorXd& x,
                                   int grid_points) {
  blp.validate();
  if (x.size() != blp.dx()) throw SetError("upper point dimension mismatch");
  const int n = grid_points > 1 ? grid_points : blp.grid_points;
  ValueFunctionSample out;
  out.x = x;
  out.grid_points = n;

  if (blp.sy() == 1) {
    auto cand = candidates_1d(blp, x, n);
    if (cand.empty()) throw EmptyFeasibleSet("lower level infeasible within the declared box");
    const double spacing = (blp.y_hi(0) - blp.y_lo(0)) / (n - 1);
    double coarse = std::numeric_limits<double>::infinity();
    std::vector<double> fvals;
    fvals.reserve(cand.size());
    for (double y : cand) {
      const double fy = eval_at(blp.f, join(x, Eigen::VectorXd::Constant(1, y)));
      fvals.push_back(fy);
      coarse = std::min(coarse, fy);
    }
    const double fscale = std::max(1.0, std::abs(coarse));
    std::vector<double> refined = cand;
    std::vector<double> refined_vals = fvals;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (fvals[i] > coarse + 1e-3 * fscale) continue;
      const double a = std::max(blp.y_lo(0), cand[i] - spacing);
      const double b = std::min(blp.y_hi(0), cand[i] + spacing);
      const double y = refine_1d(blp, x, a, b);
      Eigen::VectorXd p = join(x, Eigen::VectorXd::Constant(1, y));
      if (!lower_feasible(blp, p, kLowerFeasTol)) continue;
      refined.push_back(y);
      refined_vals.push_back(eval_at(blp.f, p));
    }
    double vmin = std::numeric_limits<double>::infinity();
    for (double v : refined_vals) vmin = std::min(vmin, v);
    out.value = vmin;
    const double member_tol = 1e-8 * std::max(1.0, std::abs(vmin));
    std::vector<double> members;
    for (std::size_t i = 0; i < refined.size(); ++i)
      if (refined_vals[i] <= vmin + member_tol) members.push_back(refined[i]);
    std::sort(members.begin(), members.end());
    // cluster within tolerance, keep the best point of each cluster
    std::size_t i = 0;
    while (i < members.size()) {
      std::size_t j = i;
      double best = members[i];
      double fbest = eval_at(blp.f, join(x, Eigen::VectorXd::Constant(1, best)));
      while (j + 1 < members.size() && members[j + 1] - members[j] <= out.cluster_tol) {
        ++j;
        const double fj = eval_at(blp.f, join(x, Eigen::VectorXd::Constant(1, members[j])));
        if (fj < fbest) {
          fbest = fj;
          best = members[j];
        }
      }
      out.minimizers.push_back(Eigen::VectorXd::Constant(1, best));
      i = j + 1;
    }
    return out;
  }

  // s >= 2: product grid with feasibility filter and projected pattern-search
  // refinement from each near-minimal point
  const int s = blp.sy();
  long long total = 1;
  int per_dim = n;
  while (true) {
    total = 1;
    for (int i = 0; i < s; ++i) total *= per_dim;
    if (total <= 2'000'000 || per_dim <= 3) break;
    per_dim = per_dim / 2 + 1;
  }
  std::vector<int> pick(static_cast<std::size_t>(s), 0);
  Eigen::VectorXd y(s);
  std::vector<Eigen::VectorXd> cand;
  std::vector<double> fvals;
  double coarse = std::numeric_limits<double>::infinity();
  while (true) {
    for (int i = 0; i < s; ++i) {
      const double t = static_cast<double>(pick[static_cast<std::size_t>(i)]) / (per_dim - 1);
      y(i) = blp.y_lo(i) + t * (blp.y_hi(i) - blp.y_lo(i));
    }
    Eigen::VectorXd p = join(x, y);
    if (lower_feasible(blp, p, kLowerFeasTol)) {
      cand.push_back(y);
      const double fy = eval_at(blp.f, p);
      fvals.push_back(fy);
      coarse = std::min(coarse, fy);
    }
    int i = 0;
    while (i < s) {
      if (++pick[static_cast<std::size_t>(i)] < per_dim) break;
      pick[static_cast<std::size_t>(i)] = 0;
      ++i;
    }
    if (i == s) break;
  }
  if (cand.empty()) throw EmptyFeasibleSet("lower level infeasible within the declared box");
  const double fscale = std::max(1.0, std::abs(coarse));
  // coordinate-descent refinement
  double vmin = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> refined;
  std::vector<double> refined_vals;
  const double spacing = (blp.y_hi - blp.y_lo).maxCoeff() / (per_dim - 1);
  for (std::size_t c = 0; c < cand.size(); ++c) {
    Eigen::VectorXd yc = cand[c];
    double fc = fvals[c];
    if (fc <= coarse + 1e-3 * fscale) {
      double step = spacing;
      while (step > 1e-12) {
        bool improved = false;
        for (int i = 0; i < s; ++i)
          for (double sgn : {1.0, -1.0}) {
            Eigen::VectorXd yt = yc;
            yt(i) = std::clamp(yt(i) + sgn * step, blp.y_lo(i), blp.y_hi(i));
            Eigen::VectorXd p = join(x, yt);
            if (!lower_feasible(blp, p, kLowerFeasTol)) continue;
            const double ft = eval_at(blp.f, p);
            if (ft < fc - 1e-15 * fscale) {
              yc = yt;
              fc = ft;
              improved = true;
            }
          }
        if (!improved) step *= 0.5;
      }
    }
    refined.push_back(cand[c]);
    refined_vals.push_back(fvals[c]);
    refined.push_back(yc);
    refined_vals.push_back(fc);
    vmin = std::min(vmin, fc);
  }
  out.value = vmin;
  const double member_tol = 1e-8 * std::max(1.0, std::abs(vmin));
  std::vector<Eigen::VectorXd> members;
  for (std::size_t i = 0; i < refined.size(); ++i)
    if (refined_vals[i] <= vmin + member_tol) members.push_back(refined[i]);
  // greedy clustering
  std::vector<bool> used(members.size(), false);
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (used[i]) continue;
    Eigen::VectorXd best = members[i];
    double fbest = eval_at(blp.f, join(x, best));
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      if (used[j]) continue;
      if ((members[j] - members[i]).lpNorm<Eigen::Infinity>() <= out.cluster_tol) {
        used[j] = true;
        const double fj = eval_at(blp.f, join(x, members[j]));
        if (fj < fbest) {
          fbest = fj;
          best = members[j];
        }
      }
    }
    out.minimizers.push_back(best);
  }
  return out;
}

namespace {

Eigen::VectorXd grad_block(const Expression& e, const Eigen::VectorXd& p, int first, int count) {
  Eigen::VectorXd g(count);
  for (int i = 0; i < count; ++i) {
    auto d = derivative(e, first + i);
    g(i) = eval_at(d, p);
  }
  return g;
}

/// Prune a finite point list to the vertices of its convex hull.
std::vector<Eigen::VectorXd> hull_vertices(std::vector<Eigen::VectorXd> pts) {
  // dedupe
  std::vector<Eigen::VectorXd> uniq;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : uniq)
      if ((p - q).lpNorm<Eigen::Infinity>() <= 1e-9) dup = true;
    if (!dup) uniq.push_back(p);
  }
  if (uniq.size() <= 2) return uniq;
  const int d = static_cast<int>(uniq.front().size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& p : uniq) mean += p;
  mean /= static_cast<double>(uniq.size());
  Eigen::MatrixXd M(d, static_cast<int>(uniq.size()));
  for (int j = 0; j < M.cols(); ++j) M.col(j) = uniq[static_cast<std::size_t>(j)] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU);
  int adim = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-9 * std::max(1.0, svd.singularValues()(0))) ++adim;
  if (adim <= 1) {
    // collinear: the extremes along the principal direction
    Eigen::VectorXd dir = svd.matrixU().col(0);
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < uniq.size(); ++i) {
      if (dir.dot(uniq[i]) < dir.dot(uniq[imin])) imin = i;
      if (dir.dot(uniq[i]) > dir.dot(uniq[imax])) imax = i;
    }
    std::vector<Eigen::VectorXd> out = {uniq[imin]};
    if (imax != imin) out.push_back(uniq[imax]);
    return out;
  }
  // general position: keep p_i iff it is not a convex combination of the rest
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    Eigen::MatrixXd A(d + 1, static_cast<int>(uniq.size()) - 1);
    int cj = 0;
    for (std::size_t j = 0; j < uniq.size(); ++j) {
      if (j == i) continue;
      A.col(cj).head(d) = uniq[j];
      A(d, cj) = 1.0;
      ++cj;
    }
    Eigen::VectorXd b(d + 1);
    b.head(d) = uniq[i];
    b(d) = 1.0;
    std::vector<bool> nonneg(static_cast<std::size_t>(A.cols()), true);
    auto fr = linalg::solve_linear_feasibility(A, b, nonneg);
    bool in_hull = false;
    if (fr.feasible) {
      Eigen::VectorXd recon = A.topRows(d) * fr.x;
      in_hull = (recon - uniq[i]).lpNorm<Eigen::Infinity>() <= 1e-9;
    }
    if (!in_hull) out.push_back(uniq[i]);
  }
  return out;
}

}  // namespace

std::vector<Eigen::VectorXd> danskin_generators(const BilevelProgram& blp,
                                                const Eigen::VectorXd& x, int grid_points) {
  if (!blp.lower_feasible_set_x_free())
    throw YDependsOnX("lower feasible set depends on x; use the multiplier generators");
  auto sample = value_function(blp, x, grid_points);
  std::vector<Eigen::VectorXd> gens;
  for (const auto& y : sample.minimizers)
    gens.push_back(grad_block(blp.f, join(x, y), 0, blp.dx()));
  return hull_vertices(std::move(gens));
}

WGenerators w_generators(const BilevelProgram& blp, const Eigen::VectorXd& x, int grid_points,
                         double tol) {
  WGenerators out;
  auto sample = value_function(blp, x, grid_points);
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq(), n = blp.num_lower_eq();

  for (const auto& y : sample.minimizers) {
    Eigen::VectorXd p = join(x, y);
    std::vector<int> active;
    for (int i = 0; i < m; ++i)
      if (std::abs(eval_at(blp.g[static_cast<std::size_t>(i)], p)) <= std::max(tol, 1e-7))
        active.push_back(i);

    // MFCQ as positive linear independence of the active lower gradients
    {
      std::vector<linalg::VectorSpec> fam;
      for (int i : active)
        fam.push_back({grad_block(blp.g[static_cast<std::size_t>(i)], p, dx, sy),
                       linalg::SignConstraint::Nonneg, -1});
      for (int j = 0; j < n; ++j)
        fam.push_back({grad_block(blp.h[static_cast<std::size_t>(j)], p, dx, sy),
                       linalg::SignConstraint::Free, -1});
      if (!fam.empty() && linalg::positive_dependence_certificate(fam).has_value()) {
        out.mfcq_ok = false;
        out.notes.push_back("MFCQ fails at a lower-level minimizer");
      }
    }

    Eigen::VectorXd grad_f_y = grad_block(blp.f, p, dx, sy);
    bool found_vertex = false;
    std::vector<Eigen::VectorXd> uv_seen;
    // basic active-set patterns: supports B with |B| + #equalities <= s_y
    for (unsigned long long mask = 0; mask < (1ull << active.size()); ++mask) {
      std::vector<int> B;
      for (std::size_t i = 0; i < active.size(); ++i)
        if (mask & (1ull << i)) B.push_back(active[i]);
      if (static_cast<int>(B.size()) + n > sy) continue;
      Eigen::MatrixXd A(sy, static_cast<int>(B.size()) + n);
      for (std::size_t i = 0; i < B.size(); ++i)
        A.col(static_cast<int>(i)) =
            grad_block(blp.g[static_cast<std::size_t>(B[i])], p, dx, sy);
      for (int j = 0; j < n; ++j)
        A.col(static_cast<int>(B.size()) + j) =
            grad_block(blp.h[static_cast<std::size_t>(j)], p, dx, sy);
      Eigen::VectorXd sol;
      if (A.cols() > 0)
        sol = A.colPivHouseholderQr().solve(-grad_f_y);
      else
        sol = Eigen::VectorXd(0);
      Eigen::VectorXd resid = grad_f_y;
      if (A.cols() > 0) resid += A * sol;
      if (resid.lpNorm<Eigen::Infinity>() > 1e-6 * std::max(1.0, grad_f_y.norm())) continue;
      bool sign_ok = true;
      for (std::size_t i = 0; i < B.size(); ++i)
        if (sol(static_cast<int>(i)) < -1e-10) sign_ok = false;
      if (!sign_ok) continue;

      Eigen::VectorXd u = Eigen::VectorXd::Zero(m), v = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < B.size(); ++i) u(B[i]) = std::max(0.0, sol(static_cast<int>(i)));
      for (int j = 0; j < n; ++j) v(j) = sol(static_cast<int>(B.size()) + j);
      Eigen::VectorXd uv(m + n);
      uv << u, v;
      bool dup = false;
      for (const auto& seen : uv_seen)
        if ((seen - uv).lpNorm<Eigen::Infinity>() <= 1e-9) dup = true;
      if (dup) continue;
      uv_seen.push_back(uv);
      found_vertex = true;

      Eigen::VectorXd w = grad_block(blp.f, p, 0, dx);
      for (int i = 0; i < m; ++i)
        if (u(i) != 0.0) w += u(i) * grad_block(blp.g[static_cast<std::size_t>(i)], p, 0, dx);
      for (int j = 0; j < n; ++j)
        if (v(j) != 0.0) w += v(j) * grad_block(blp.h[static_cast<std::size_t>(j)], p, 0, dx);
      out.generators.push_back(w);
    }
    if (!found_vertex)
      out.notes.push_back("lower-level multiplier system infeasible at a minimizer");
  }
  out.generators = hull_vertices(std::move(out.generators));
  return out;
}

ValueOracle::ValueOracle(std::shared_ptr<const BilevelProgram> blp, int grid_points,
                         ValueOracleMode mode)
    : blp_(std::move(blp)), grid_points_(grid_points) {
  const bool can_danskin = blp_->lower_feasible_set_x_free();
  switch (mode) {
    case ValueOracleMode::Auto:
      danskin_ = can_danskin;
      break;
    case ValueOracleMode::Danskin:
      if (!can_danskin) throw YDependsOnX("Danskin mode needs an x-free lower feasible set");
      danskin_ = true;
      break;
    case ValueOracleMode::Multiplier:
      danskin_ = false;
      break;
  }
}

std::string ValueOracle::name() const { return "V_lower"; }

const ValueOracle::Entry& ValueOracle::lookup(const Eigen::VectorXd& x) const {
  std::vector<std::uint64_t> key(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i) {
    std::uint64_t bits;
    const double v = x(i);
    std::memcpy(&bits, &v, sizeof bits);
    key[static_cast<std::size_t>(i)] = bits;
  }
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Entry e;
  e.sample = value_function(*blp_, x, grid_points_);
  if (danskin_) {
    std::vector<Eigen::VectorXd> gens;
    for (const auto& y : e.sample.minimizers)
      gens.push_back(grad_block(blp_->f, join(x, y), 0, blp_->dx()));
    e.generators = hull_vertices(std::move(gens));
  } else {
    e.generators = w_generators(*blp_, x, grid_points_).generators;
  }
  return cache_.emplace(std::move(key), std::move(e)).first->second;
}

double ValueOracle::value(std::span<const double> point) const {
  if (static_cast<int>(point.size()) < blp_->dx()) throw SetError("oracle point too short");
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(point.data(), blp_->dx());
  return lookup(x).sample.value;
}

std::vector<std::vector<double>> ValueOracle::gradient_vertices(
    std::span<const double> point) const {
  if (static_cast<int>(point.size()) < blp_->dx()) throw SetError("oracle point too short");
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(point.data(), blp_->dx());
  const auto& e = lookup(x);
  std::vector<std::vector<double>> out;
  for (const auto& w : e.generators) {
    std::vector<double> full(point.size(), 0.0);
    for (int i = 0; i < w.size(); ++i) full[static_cast<std::size_t>(i)] = w(i);
    out.push_back(std::move(full));
  }
  if (out.empty()) out.push_back(std::vector<double>(point.size(), 0.0));
  return out;
}

bool ValueOracle::vertices_exact() const { return danskin_; }

ValueFunctionSample ValueOracle::sample_at(const Eigen::VectorXd& x) const {
  return lookup(x).sample;
}

CombinedProgram build_combined_program(const BilevelProgram& blp, int grid_points,
                                       ValueOracleMode mode) {
  blp.validate();
  CombinedProgram cp;
  cp.dx = blp.dx();
  cp.sy = blp.sy();
  cp.num_lower_ineq = blp.num_lower_ineq();
  cp.num_lower_eq = blp.num_lower_eq();

  auto shared = std::make_shared<BilevelProgram>(blp);
  cp.oracle = std::make_shared<ValueOracle>(shared, grid_points > 1 ? grid_points : blp.grid_points,
                                            mode);

  FeasibilitySystem& sys = cp.system;
  sys.vars = blp.x_names;
  sys.vars.insert(sys.vars.end(), blp.y_names.begin(), blp.y_names.end());
  for (int i = 0; i < cp.num_lower_ineq; ++i) sys.vars.push_back("u" + std::to_string(i + 1));
  for (int j = 0; j < cp.num_lower_eq; ++j) sys.vars.push_back("v" + std::to_string(j + 1));

  sys.g.push_back(sub(blp.f, oracle_term(cp.oracle)));
  for (const auto& e : blp.G) sys.g.push_back(e);
  for (const auto& e : blp.H) sys.h.push_back(e);

  // stationarity of the lower Lagrangian in y
  Expression L = blp.f;
  for (int i = 0; i < cp.num_lower_ineq; ++i)
    L = add(L, mul(variable(cp.dx + cp.sy + i, "u" + std::to_string(i + 1)),
                   blp.g[static_cast<std::size_t>(i)]));
  for (int j = 0; j < cp.num_lower_eq; ++j)
    L = add(L, mul(variable(cp.dx + cp.sy + cp.num_lower_ineq + j, "v" + std::to_string(j + 1)),
                   blp.h[static_cast<std::size_t>(j)]));
  for (int t = 0; t < cp.sy; ++t) sys.h.push_back(derivative(L, cp.dx + t));

  for (int i = 0; i < cp.num_lower_ineq; ++i) {
    sys.G.push_back(negate(blp.g[static_cast<std::size_t>(i)]));
    sys.H.push_back(variable(cp.dx + cp.sy + i, "u" + std::to_string(i + 1)));
  }

  if (!blp.x_blocks.empty())
    sys.blocks = blp.x_blocks;
  else if (cp.dx > 0)
    sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{cp.dx}});
  const int rest = cp.sy + cp.num_lower_ineq + cp.num_lower_eq;
  if (rest > 0) sys.blocks.emplace_back(CatalogSet::Variant{FullSpace{rest}});

  sys.validate();
  cp.objective = blp.F;
  return cp;
}

IndexSets cp_index_sets(const BilevelProgram& blp, const Eigen::VectorXd& point, double tol) {
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq();
  if (point.size() != dx + sy + m + blp.num_lower_eq())
    throw SetError("combined-program point dimension mismatch");
  IndexSets idx;
  Eigen::VectorXd xy = point.head(dx + sy);
  for (int i = 0; i < m; ++i) {
    const double gi = eval_at(blp.g[static_cast<std::size_t>(i)], xy);
    const double ui = point(dx + sy + i);
    if (std::abs(gi) <= tol && ui > tol)
      idx.I.push_back(i);
    else if (std::abs(gi) <= tol && std::abs(ui) <= tol)
      idx.J.push_back(i);
    else if (gi < -tol && std::abs(ui) <= tol)
      idx.K.push_back(i);
    else
      throw InfeasiblePointError("pair " + std::to_string(i) +
                                 " violates complementarity at the given point");
  }
  return idx;
}

namespace {

Eigen::MatrixXd grad_rows(const std::vector<Expression>& es, const std::vector<int>& which,
                          const Eigen::VectorXd& p, int first, int count) {
  Eigen::MatrixXd M(static_cast<int>(which.size()), count);
  for (std::size_t r = 0; r < which.size(); ++r)
    M.row(static_cast<int>(r)) =
        grad_block(es[static_cast<std::size_t>(which[r])], p, first, count).transpose();
  return M;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

/// Lagrangian-gradient second-order block: rows t = y_t, columns (x, y).
Eigen::MatrixXd lagrangian_hessian_block(const BilevelProgram& blp, const Eigen::VectorXd& point) {
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq(), n = blp.num_lower_eq();
  Expression L = blp.f;
  for (int i = 0; i < m; ++i)
    L = add(L, mul(variable(dx + sy + i, "u"), blp.g[static_cast<std::size_t>(i)]));
  for (int j = 0; j < n; ++j)
    L = add(L, mul(variable(dx + sy + m + j, "v"), blp.h[static_cast<std::size_t>(j)]));
  Eigen::MatrixXd M(sy, dx + sy);
  for (int t = 0; t < sy; ++t) {
    auto dLy = derivative(L, dx + t);
    for (int c = 0; c < dx + sy; ++c) M(t, c) = eval_at(derivative(dLy, c), point);
  }
  return M;
}

}  // namespace

MatrixReport matrix_SJ(const BilevelProgram& blp, const Eigen::VectorXd& point, double tol) {
  auto idx = cp_index_sets(blp, point, tol);
  const int dx = blp.dx(), sy = blp.sy();
  Eigen::VectorXd xy = point.head(dx + sy);
  MatrixReport rep;
  const int rows = blp.num_lower_eq() + static_cast<int>(blp.H.size() + idx.I.size());
  rep.matrix = Eigen::MatrixXd(rows, dx + sy);
  int r = 0;
  for (int j = 0; j < blp.num_lower_eq(); ++j, ++r) {
    rep.matrix.row(r) = grad_block(blp.h[static_cast<std::size_t>(j)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("h" + std::to_string(j));
  }
  for (std::size_t k = 0; k < blp.H.size(); ++k, ++r) {
    rep.matrix.row(r) = grad_block(blp.H[k], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("H" + std::to_string(k));
  }
  for (int i : idx.I) {
    rep.matrix.row(r++) =
        grad_block(blp.g[static_cast<std::size_t>(i)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("g" + std::to_string(i));
  }
  rep.rank = linalg::numerical_rank(rep.matrix, tol);
  rep.target = dx + sy;
  rep.meets_target = rep.rank.rank == rep.target;
  return rep;
}

MatrixReport matrix_Jstar(const BilevelProgram& blp, const Eigen::VectorXd& point, double tol) {
  auto idx = cp_index_sets(blp, point, tol);
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq(), n = blp.num_lower_eq();
  Eigen::VectorXd xy = point.head(dx + sy);

  std::vector<int> IJ = idx.I;
  IJ.insert(IJ.end(), idx.J.begin(), idx.J.end());
  std::sort(IJ.begin(), IJ.end());

  const int cols = (dx + sy) + n + static_cast<int>(IJ.size());
  const int rows = sy + n + static_cast<int>(blp.H.size()) + static_cast<int>(idx.I.size());
  MatrixReport rep;
  rep.matrix = Eigen::MatrixXd::Zero(rows, cols);

  Eigen::MatrixXd hess = lagrangian_hessian_block(blp, point);
  rep.matrix.topLeftCorner(sy, dx + sy) = hess;
  for (int j = 0; j < n; ++j)
    rep.matrix.block(0, dx + sy + j, sy, 1) =
        grad_block(blp.h[static_cast<std::size_t>(j)], xy, dx, sy);
  for (std::size_t k = 0; k < IJ.size(); ++k)
    rep.matrix.block(0, dx + sy + n + static_cast<int>(k), sy, 1) =
        grad_block(blp.g[static_cast<std::size_t>(IJ[k])], xy, dx, sy);
  for (int t = 0; t < sy; ++t) rep.row_labels.push_back("dL/dy" + std::to_string(t));

  int r = sy;
  for (int j = 0; j < n; ++j, ++r) {
    rep.matrix.block(r, 0, 1, dx + sy) =
        grad_block(blp.h[static_cast<std::size_t>(j)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("h" + std::to_string(j));
  }
  for (std::size_t k = 0; k < blp.H.size(); ++k, ++r) {
    rep.matrix.block(r, 0, 1, dx + sy) = grad_block(blp.H[k], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("H" + std::to_string(k));
  }
  for (int i : idx.I) {
    rep.matrix.block(r++, 0, 1, dx + sy) =
        grad_block(blp.g[static_cast<std::size_t>(i)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("g" + std::to_string(i));
  }

  rep.rank = linalg::numerical_rank(rep.matrix, tol);
  rep.target = dx + sy + m + n - static_cast<int>(idx.K.size());
  rep.meets_target = rep.rank.rank == rep.target;
  return rep;
}

MatrixReport matrix_Jprime(const BilevelProgram& blp, const Eigen::VectorXd& point, int alpha,
                           const Eigen::VectorXd& w, double tol,
                           const std::optional<std::vector<int>>& I2_opt,
                           const std::vector<int>& I3, const std::vector<int>& I4) {
  if (alpha != 0 && alpha != 1) throw std::invalid_argument("alpha must be 0 or 1");
  if (w.size() != blp.dx()) throw std::invalid_argument("w must have the upper dimension");
  auto idx = cp_index_sets(blp, point, tol);
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq(), n = blp.num_lower_eq();
  Eigen::VectorXd xy = point.head(dx + sy);

  std::vector<int> I2;
  if (I2_opt) {
    I2 = *I2_opt;
  } else {
    for (std::size_t k = 0; k < blp.G.size(); ++k)
      if (std::abs(eval_at(blp.G[k], xy)) <= tol) I2.push_back(static_cast<int>(k));
  }
  std::vector<int> gIneq = idx.I;
  gIneq.insert(gIneq.end(), I3.begin(), I3.end());
  std::sort(gIneq.begin(), gIneq.end());
  gIneq.erase(std::unique(gIneq.begin(), gIneq.end()), gIneq.end());
  std::vector<int> unit_rows = idx.K;
  unit_rows.insert(unit_rows.end(), I4.begin(), I4.end());
  std::sort(unit_rows.begin(), unit_rows.end());
  unit_rows.erase(std::unique(unit_rows.begin(), unit_rows.end()), unit_rows.end());

  const int cols = (dx + sy) + n + m;
  const int rows = sy + n + static_cast<int>(blp.H.size()) + static_cast<int>(I2.size()) +
                   static_cast<int>(gIneq.size()) + static_cast<int>(unit_rows.size()) + 1;
  MatrixReport rep;
  rep.matrix = Eigen::MatrixXd::Zero(rows, cols);

  Eigen::MatrixXd hess = lagrangian_hessian_block(blp, point);
  rep.matrix.topLeftCorner(sy, dx + sy) = hess;
  for (int j = 0; j < n; ++j)
    rep.matrix.block(0, dx + sy + j, sy, 1) =
        grad_block(blp.h[static_cast<std::size_t>(j)], xy, dx, sy);
  for (int i = 0; i < m; ++i)
    rep.matrix.block(0, dx + sy + n + i, sy, 1) =
        grad_block(blp.g[static_cast<std::size_t>(i)], xy, dx, sy);
  for (int t = 0; t < sy; ++t) rep.row_labels.push_back("dL/dy" + std::to_string(t));

  int r = sy;
  for (int j = 0; j < n; ++j, ++r) {
    rep.matrix.block(r, 0, 1, dx + sy) =
        grad_block(blp.h[static_cast<std::size_t>(j)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("h" + std::to_string(j));
  }
  for (std::size_t k = 0; k < blp.H.size(); ++k, ++r) {
    rep.matrix.block(r, 0, 1, dx + sy) = grad_block(blp.H[k], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("H" + std::to_string(k));
  }
  for (int i : I2) {
    rep.matrix.block(r++, 0, 1, dx + sy) =
        grad_block(blp.G[static_cast<std::size_t>(i)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("G" + std::to_string(i));
  }
  for (int i : gIneq) {
    rep.matrix.block(r++, 0, 1, dx + sy) =
        grad_block(blp.g[static_cast<std::size_t>(i)], xy, 0, dx + sy).transpose();
    rep.row_labels.push_back("g" + std::to_string(i));
  }
  for (int i : unit_rows) {
    rep.matrix(r, dx + sy + n + i) = 1.0;
    rep.row_labels.push_back("e_u" + std::to_string(i));
    ++r;
  }
  {
    Eigen::VectorXd fgrad = grad_block(blp.f, xy, 0, dx + sy);
    fgrad.head(dx) -= w;
    rep.matrix.block(r, 0, 1, dx + sy) = static_cast<double>(alpha) * fgrad.transpose();
    rep.row_labels.push_back("alpha(grad f - (w,0))");
  }

  rep.rank = linalg::numerical_rank(rep.matrix, tol);
  rep.target = -1;
  rep.meets_target = false;
  return rep;
}

double phi_cp(const BilevelProgram& blp, const Eigen::VectorXd& point,
              const ValueOracle& oracle) {
  const int dx = blp.dx(), sy = blp.sy();
  const int m = blp.num_lower_ineq(), n = blp.num_lower_eq();
  if (point.size() != dx + sy + m + n) throw SetError("combined-program point size mismatch");
  Eigen::VectorXd xy = point.head(dx + sy);
  double total = 0.0;
  const double V =
      oracle.value(std::span<const double>(point.data(), static_cast<std::size_t>(point.size())));
  total += std::max(0.0, eval_at(blp.f, xy) - V);
  for (const auto& e : blp.H) total += std::abs(eval_at(e, xy));
  for (const auto& e : blp.h) total += std::abs(eval_at(e, xy));
  for (const auto& e : blp.G) total += std::max(0.0, eval_at(e, xy));
  // |grad_y L| with the given multipliers
  Expression L = blp.f;
  for (int i = 0; i < m; ++i)
    L = add(L, mul(variable(dx + sy + i, "u"), blp.g[static_cast<std::size_t>(i)]));
  for (int j = 0; j < n; ++j)
    L = add(L, mul(variable(dx + sy + m + j, "v"), blp.h[static_cast<std::size_t>(j)]));
  for (int t = 0; t < sy; ++t) total += std::abs(eval_at(derivative(L, dx + t), point));
  for (int i = 0; i < m; ++i)
    total += dist_omega(-eval_at(blp.g[static_cast<std::size_t>(i)], xy), point(dx + sy + i),
                        OmegaNorm::L1);
  return total;
}

}  // namespace mpccq
