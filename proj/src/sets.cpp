#include "mpccq/sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpccq/linalg.hpp"

namespace mpccq {

namespace {

constexpr int kSawtoothDepth = 24;

Eigen::VectorXd unit(Eigen::VectorXd v) {
  const double n = v.norm();
  return n > 0 ? Eigen::VectorXd(v / n) : v;
}

Eigen::MatrixXd columns(const std::vector<Eigen::VectorXd>& cols, int dim) {
  Eigen::MatrixXd M(dim, static_cast<int>(cols.size()));
  for (int j = 0; j < M.cols(); ++j) M.col(j) = cols[static_cast<std::size_t>(j)];
  return M;
}

/// Lawson-Hanson nonnegative least squares: min ||R t - y||, t >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& R, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(R.cols());
  Eigen::VectorXd t = Eigen::VectorXd::Zero(n);
  if (n == 0) return t;
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double eps = 1e-12 * std::max(1.0, y.norm());
  for (int outer = 0; outer < 30 * (n + 1); ++outer) {
    Eigen::VectorXd w = R.transpose() * (y - R * t);
    int best = -1;
    double wmax = eps;
    for (int j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < 30 * (n + 1); ++inner) {
      std::vector<int> p;
      for (int j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)]) p.push_back(j);
      Eigen::MatrixXd Rp(R.rows(), static_cast<int>(p.size()));
      for (std::size_t k = 0; k < p.size(); ++k) Rp.col(static_cast<int>(k)) = R.col(p[k]);
      Eigen::VectorXd zp = Rp.colPivHouseholderQr().solve(y);
      bool all_pos = true;
      for (int k = 0; k < zp.size(); ++k)
        if (zp(k) <= 0.0) all_pos = false;
      if (all_pos) {
        t.setZero();
        for (std::size_t k = 0; k < p.size(); ++k) t(p[k]) = zp(static_cast<int>(k));
        break;
      }
      double alpha = 1.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double tk = t(p[k]);
        const double zk = zp(static_cast<int>(k));
        if (zk <= 0.0 && tk - zk > 0) alpha = std::min(alpha, tk / (tk - zk));
      }
      for (std::size_t k = 0; k < p.size(); ++k)
        t(p[k]) += alpha * (zp(static_cast<int>(k)) - t(p[k]));
      for (int j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && t(j) <= eps) {
          passive[static_cast<std::size_t>(j)] = false;
          t(j) = 0.0;
        }
    }
  }
  return t;
}

Eigen::VectorXd project_segment(const Eigen::VectorXd& z, const Eigen::VectorXd& p0,
                                const Eigen::VectorXd& p1) {
  const Eigen::VectorXd d = p1 - p0;
  const double len2 = d.squaredNorm();
  double t = len2 > 0 ? (z - p0).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return p0 + t * d;
}

struct SawSegment {
  Eigen::Vector2d a, b;
};

/// Base plus slant edges down to the truncation depth, both signs of x.
const std::vector<SawSegment>& sawtooth_segments() {
  static const std::vector<SawSegment> segs = [] {
    std::vector<SawSegment> s;
    s.push_back({Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0)});
    for (int n = 0; n < kSawtoothDepth; ++n) {
      const double lo = std::ldexp(1.0, -n - 1);
      const double hi = std::ldexp(1.0, -n);
      const double apex = 3.0 * std::ldexp(1.0, -n - 2);
      for (double sgn : {1.0, -1.0}) {
        s.push_back({Eigen::Vector2d(sgn * lo, 0), Eigen::Vector2d(sgn * apex, 1)});
        s.push_back({Eigen::Vector2d(sgn * apex, 1), Eigen::Vector2d(sgn * hi, 0)});
      }
    }
    return s;
  }();
  return segs;
}

Eigen::VectorXd project_sawtooth(const Eigen::VectorXd& z) {
  Eigen::VectorXd best;
  double bestd = std::numeric_limits<double>::infinity();
  for (const auto& seg : sawtooth_segments()) {
    Eigen::VectorXd p = project_segment(z, seg.a, seg.b);
    const double d = (z - p).norm();
    if (d < bestd) {
      bestd = d;
      best = p;
    }
  }
  return best;
}

/// Orthonormal basis of the orthogonal complement of span{u}.
Eigen::MatrixXd orthogonal_complement(const Eigen::VectorXd& u) {
  const int d = static_cast<int>(u.size());
  Eigen::MatrixXd M(d, 1);
  M.col(0) = unit(u);
  Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd Q = qr.matrixQ();
  return Q.rightCols(d - 1);
}

ConeChart make_chart(int dim, const std::vector<Eigen::VectorXd>& rays,
                     const std::vector<Eigen::VectorXd>& lin, std::string tag = "") {
  ConeChart c;
  std::vector<Eigen::VectorXd> r, l;
  for (const auto& v : rays) r.push_back(unit(v));
  for (const auto& v : lin) l.push_back(unit(v));
  c.rays = columns(r, dim);
  c.lineality = columns(l, dim);
  c.tag = std::move(tag);
  return c;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

/// Normal-cone charts of the sawtooth graph at a point with x >= 0; the
/// caller mirrors for negative x. Case analysis: base
/// interiors give the vertical line, slant edges their normal lines, valleys
/// the vertical plus both adjacent edge normals, apexes both edge normals
/// plus the upward wedge (flagged), and the origin the two axes.
std::vector<ConeChart> sawtooth_charts_nonneg(double x, double y, double tol) {
  std::vector<ConeChart> charts;
  const double trunc = std::ldexp(1.0, -kSawtoothDepth);
  if (x <= std::max(tol, trunc) && std::abs(y) <= tol) {
    charts.push_back(make_chart(2, {}, {vec2(1, 0)}));
    charts.push_back(make_chart(2, {}, {vec2(0, 1)}));
    return charts;
  }
  if (std::abs(x - 1.0) <= tol && std::abs(y) <= tol) {
    // domain endpoint: base and the descending edge of the outermost tooth
    charts.push_back(make_chart(2, {}, {vec2(0, 1)}));
    charts.push_back(make_chart(2, {}, {vec2(1, 0.25)}, "endpoint"));
    charts.push_back(make_chart(2, {vec2(0, -1), vec2(4, 1)}, {}, "endpoint"));
    return charts;
  }
  int level = -1;
  for (int n = 0; n < kSawtoothDepth; ++n) {
    const double lo = std::ldexp(1.0, -n - 1);
    const double hi = std::ldexp(1.0, -n);
    if (x >= lo - tol && x <= hi + tol) {
      level = n;
      break;
    }
  }
  if (level < 0) throw PointNotInSet("sawtooth: x below truncation scale");
  const double lo = std::ldexp(1.0, -level - 1);
  const double apex = 3.0 * std::ldexp(1.0, -level - 2);
  const double alpha = std::ldexp(1.0, -level - 2);  // edge-normal slope at this level
  if (std::abs(y) <= tol) {
    if (std::abs(x - lo) <= tol) {
      // valley shared with the next-deeper tooth
      charts.push_back(make_chart(2, {}, {vec2(0, 1)}));
      charts.push_back(make_chart(2, {}, {vec2(1, -alpha)}));
      charts.push_back(make_chart(2, {}, {vec2(1, alpha / 2)}));
    } else {
      charts.push_back(make_chart(2, {}, {vec2(0, 1)}));
    }
    return charts;
  }
  if (std::abs(x - apex) <= tol && std::abs(y - 1.0) <= tol) {
    charts.push_back(make_chart(2, {}, {vec2(1, -alpha)}));
    charts.push_back(make_chart(2, {}, {vec2(1, alpha)}));
    charts.push_back(make_chart(2, {vec2(1 / alpha, 1), vec2(-1 / alpha, 1)}, {}, "apex"));
    return charts;
  }
  if (x < apex)
    charts.push_back(make_chart(2, {}, {vec2(1, -alpha)}));
  else
    charts.push_back(make_chart(2, {}, {vec2(1, alpha)}));
  return charts;
}

}  // namespace

int sawtooth_depth() { return kSawtoothDepth; }

std::vector<Eigen::VectorXd> ConeChart::generators() const {
  std::vector<Eigen::VectorXd> g;
  for (int j = 0; j < rays.cols(); ++j) g.push_back(rays.col(j));
  for (int j = 0; j < lineality.cols(); ++j) {
    g.push_back(lineality.col(j));
    g.push_back(-lineality.col(j));
  }
  return g;
}

Eigen::VectorXd chart_project(const ConeChart& chart, const Eigen::VectorXd& v) {
  const int d = static_cast<int>(v.size());
  Eigen::VectorXd residual = v;
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d);
  if (chart.lineality.cols() > 0) {
    const auto& L = chart.lineality;
    Eigen::MatrixXd Lp = L.completeOrthogonalDecomposition().pseudoInverse();
    P -= L * Lp;
    residual = P * v;
  }
  Eigen::VectorXd t;
  if (chart.rays.cols() > 0) {
    t = nnls(P * chart.rays, residual);
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
  if (chart.rays.cols() > 0) p += chart.rays * t;
  if (chart.lineality.cols() > 0) {
    const auto& L = chart.lineality;
    Eigen::VectorXd s = L.colPivHouseholderQr().solve(v - p);
    p += L * s;
  }
  return p;
}

double chart_distance(const ConeChart& chart, const Eigen::VectorXd& v) {
  return (v - chart_project(chart, v)).norm();
}

double normal_cone_distance(const NormalConeDescription& cone, const Eigen::VectorXd& v) {
  double best = v.norm();  // zero is in every normal cone
  for (const auto& c : cone.charts) best = std::min(best, chart_distance(c, v));
  return best;
}

bool normal_cone_membership(const NormalConeDescription& cone, const Eigen::VectorXd& v,
                            double tol) {
  return normal_cone_distance(cone, v) <= tol * std::max(1.0, v.norm());
}

CatalogSet::CatalogSet(Variant v) : v_(std::move(v)) {
  if (const auto* box = std::get_if<Box>(&v_)) {
    if (box->lo.size() != box->hi.size()) throw SetError("box bound size mismatch");
    for (int i = 0; i < box->lo.size(); ++i)
      if (box->lo(i) > box->hi(i)) throw SetError("box is empty");
  } else if (const auto* poly = std::get_if<Polyhedron>(&v_)) {
    if (poly->A.rows() != poly->b.size()) throw SetError("polyhedron row mismatch");
    // nonempty when declared: feasibility of A z + s = b, s >= 0
    const int m = static_cast<int>(poly->A.rows());
    const int n = static_cast<int>(poly->A.cols());
    Eigen::MatrixXd A(m, n + m);
    A << poly->A, Eigen::MatrixXd::Identity(m, m);
    std::vector<bool> nonneg(static_cast<std::size_t>(n + m), true);
    for (int j = 0; j < n; ++j) nonneg[static_cast<std::size_t>(j)] = false;
    if (!linalg::solve_linear_feasibility(A, poly->b, nonneg).feasible)
      throw SetError("polyhedron is empty");
  } else if (const auto* u = std::get_if<PolyUnion>(&v_)) {
    if (u->members.empty()) throw SetError("empty polyhedral union");
  } else if (const auto* seg = std::get_if<Segment>(&v_)) {
    if (seg->p0.size() != seg->p1.size() || (seg->p0 - seg->p1).norm() == 0.0)
      throw SetError("segment endpoints must be distinct");
  }
}

int CatalogSet::dim() const {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FullSpace>) return s.dim;
        if constexpr (std::is_same_v<T, Box>) return static_cast<int>(s.lo.size());
        if constexpr (std::is_same_v<T, Polyhedron>) return static_cast<int>(s.A.cols());
        if constexpr (std::is_same_v<T, PolyUnion>)
          return static_cast<int>(s.members.front().A.cols());
        if constexpr (std::is_same_v<T, Segment>) return static_cast<int>(s.p0.size());
        if constexpr (std::is_same_v<T, SawtoothGraph>) return 2;
      },
      v_);
}

bool CatalogSet::contains(const Eigen::VectorXd& z, double tol) const {
  if (z.size() != dim()) throw SetError("point dimension mismatch");
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FullSpace>) return true;
        if constexpr (std::is_same_v<T, Box>) {
          for (int i = 0; i < z.size(); ++i)
            if (z(i) < s.lo(i) - tol || z(i) > s.hi(i) + tol) return false;
          return true;
        }
        if constexpr (std::is_same_v<T, Polyhedron>) {
          for (int i = 0; i < s.A.rows(); ++i)
            if (s.A.row(i).dot(z) > s.b(i) + tol * std::max(1.0, s.A.row(i).norm())) return false;
          return true;
        }
        if constexpr (std::is_same_v<T, PolyUnion>) {
          for (const auto& p : s.members) {
            bool in = true;
            for (int i = 0; i < p.A.rows(); ++i)
              if (p.A.row(i).dot(z) > p.b(i) + tol * std::max(1.0, p.A.row(i).norm())) in = false;
            if (in) return true;
          }
          return false;
        }
        if constexpr (std::is_same_v<T, Segment>)
          return (z - project_segment(z, s.p0, s.p1)).norm() <= tol;
        if constexpr (std::is_same_v<T, SawtoothGraph>)
          return (z - project_sawtooth(z)).norm() <= tol;
      },
      v_);
}

Eigen::VectorXd CatalogSet::project(const Eigen::VectorXd& z) const {
  if (z.size() != dim()) throw SetError("point dimension mismatch");
  return std::visit(
      [&](const auto& s) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FullSpace>) return z;
        if constexpr (std::is_same_v<T, Box>) {
          Eigen::VectorXd p = z;
          for (int i = 0; i < p.size(); ++i) p(i) = std::clamp(p(i), s.lo(i), s.hi(i));
          return p;
        }
        if constexpr (std::is_same_v<T, Polyhedron>) {
          // cyclic projection onto violated half-spaces; exact when one
          // constraint is active, approximate otherwise
          Eigen::VectorXd p = z;
          for (int sweep = 0; sweep < 200; ++sweep) {
            bool moved = false;
            for (int i = 0; i < s.A.rows(); ++i) {
              const double viol = s.A.row(i).dot(p) - s.b(i);
              const double nrm2 = s.A.row(i).squaredNorm();
              if (viol > 1e-14 && nrm2 > 0) {
                p -= (viol / nrm2) * s.A.row(i).transpose();
                moved = true;
              }
            }
            if (!moved) break;
          }
          return p;
        }
        if constexpr (std::is_same_v<T, PolyUnion>) {
          Eigen::VectorXd best;
          double bestd = std::numeric_limits<double>::infinity();
          for (const auto& m : s.members) {
            CatalogSet piece{Variant{m}};
            Eigen::VectorXd p = piece.project(z);
            const double d = (z - p).norm();
            if (d < bestd) {
              bestd = d;
              best = p;
            }
          }
          return best;
        }
        if constexpr (std::is_same_v<T, Segment>) return project_segment(z, s.p0, s.p1);
        if constexpr (std::is_same_v<T, SawtoothGraph>) return project_sawtooth(z);
      },
      v_);
}

NormalConeDescription CatalogSet::normal_cone(const Eigen::VectorXd& z, double tol) const {
  if (!contains(z, tol)) throw PointNotInSet("normal cone requested off the set");
  NormalConeDescription cone;
  cone.dim = dim();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FullSpace>) {
          cone.charts.push_back(make_chart(cone.dim, {}, {}));
        } else if constexpr (std::is_same_v<T, Box>) {
          std::vector<Eigen::VectorXd> rays, lin;
          for (int i = 0; i < z.size(); ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(z.size());
            e(i) = 1.0;
            const bool at_lo = std::isfinite(s.lo(i)) && z(i) <= s.lo(i) + tol;
            const bool at_hi = std::isfinite(s.hi(i)) && z(i) >= s.hi(i) - tol;
            if (at_lo && at_hi)
              lin.push_back(e);
            else if (at_lo)
              rays.push_back(-e);
            else if (at_hi)
              rays.push_back(e);
          }
          cone.charts.push_back(make_chart(cone.dim, rays, lin));
        } else if constexpr (std::is_same_v<T, Polyhedron>) {
          std::vector<Eigen::VectorXd> rays;
          for (int i = 0; i < s.A.rows(); ++i)
            if (s.A.row(i).dot(z) >= s.b(i) - tol * std::max(1.0, s.A.row(i).norm()))
              rays.push_back(s.A.row(i).transpose());
          cone.charts.push_back(make_chart(cone.dim, rays, {}));
        } else if constexpr (std::is_same_v<T, PolyUnion>) {
          for (std::size_t k = 0; k < s.members.size(); ++k) {
            const auto& p = s.members[k];
            bool in = true;
            for (int i = 0; i < p.A.rows(); ++i)
              if (p.A.row(i).dot(z) > p.b(i) + tol * std::max(1.0, p.A.row(i).norm())) in = false;
            if (!in) continue;
            std::vector<Eigen::VectorXd> rays;
            for (int i = 0; i < p.A.rows(); ++i)
              if (p.A.row(i).dot(z) >= p.b(i) - tol * std::max(1.0, p.A.row(i).norm()))
                rays.push_back(p.A.row(i).transpose());
            cone.charts.push_back(make_chart(cone.dim, rays, {}, "member" + std::to_string(k)));
          }
        } else if constexpr (std::is_same_v<T, Segment>) {
          const Eigen::VectorXd u = unit(s.p1 - s.p0);
          Eigen::MatrixXd C = orthogonal_complement(u);
          std::vector<Eigen::VectorXd> lin;
          for (int j = 0; j < C.cols(); ++j) lin.push_back(C.col(j));
          std::vector<Eigen::VectorXd> rays;
          if ((z - s.p0).norm() <= tol)
            rays.push_back(-u);
          else if ((z - s.p1).norm() <= tol)
            rays.push_back(u);
          cone.charts.push_back(make_chart(cone.dim, rays, lin));
        } else if constexpr (std::is_same_v<T, SawtoothGraph>) {
          const bool mirror = z(0) < -tol;
          auto charts = sawtooth_charts_nonneg(std::abs(z(0)), z(1), tol);
          if (mirror)
            for (auto& c : charts) {
              c.rays.row(0) *= -1.0;
              c.lineality.row(0) *= -1.0;
            }
          cone.charts = std::move(charts);
        }
      },
      v_);
  return cone;
}

bool CatalogSet::is_polyhedral() const {
  return !std::holds_alternative<SawtoothGraph>(v_);
}

bool CatalogSet::is_everywhere_regular() const {
  return std::holds_alternative<FullSpace>(v_) || std::holds_alternative<Box>(v_) ||
         std::holds_alternative<Polyhedron>(v_) || std::holds_alternative<Segment>(v_);
}

}  // namespace mpccq
