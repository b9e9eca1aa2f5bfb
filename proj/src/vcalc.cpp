#include "mpccq/vcalc.hpp"

#include <algorithm>
#include <cmath>

namespace mpccq {

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

ConeChart chart2(const std::vector<Eigen::VectorXd>& rays, const std::vector<Eigen::VectorXd>& lin,
                 std::string tag = "") {
  ConeChart c;
  c.rays = Eigen::MatrixXd(2, static_cast<int>(rays.size()));
  for (int j = 0; j < c.rays.cols(); ++j) c.rays.col(j) = rays[static_cast<std::size_t>(j)];
  c.lineality = Eigen::MatrixXd(2, static_cast<int>(lin.size()));
  for (int j = 0; j < c.lineality.cols(); ++j) c.lineality.col(j) = lin[static_cast<std::size_t>(j)];
  c.tag = std::move(tag);
  return c;
}

}  // namespace

OmegaNormalCone normal_cone_omega(double a, double b, double tol) {
  if (a < -tol || b < -tol || std::abs(std::min(a, b)) > tol)
    throw PointNotInSet("(a,b) is not on the complementarity set");
  OmegaNormalCone out;
  out.cone.dim = 2;
  if (std::abs(a) <= tol && b > tol) {
    out.branch = OmegaBranch::AZeroBPos;
    out.cone.charts.push_back(chart2({}, {vec2(1, 0)}));
  } else if (a > tol && std::abs(b) <= tol) {
    out.branch = OmegaBranch::APosBZero;
    out.cone.charts.push_back(chart2({}, {vec2(0, 1)}));
  } else {
    out.branch = OmegaBranch::BothZero;
    out.cone.charts.push_back(chart2({vec2(-1, 0), vec2(0, -1)}, {}, "quadrant"));
    out.cone.charts.push_back(chart2({}, {vec2(1, 0)}));
    out.cone.charts.push_back(chart2({}, {vec2(0, 1)}));
  }
  return out;
}

double dist_omega(double a, double b, OmegaNorm norm) {
  if (norm == OmegaNorm::L1) return std::max({-a, -b, -(a + b), std::min(a, b)});
  return std::abs(std::min(a, b));
}

std::pair<double, double> project_omega(double a, double b) {
  const double c1x = std::max(a, 0.0);
  const double d1 = std::hypot(a - c1x, b);
  const double c2y = std::max(b, 0.0);
  const double d2 = std::hypot(a, b - c2y);
  if (d1 <= d2) return {c1x, 0.0};
  return {0.0, c2y};
}

double phi0(const FeasibilitySystem& sys, const Eigen::VectorXd& x) {
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));
  double total = 0.0;
  for (const auto& e : sys.g) total += std::max(0.0, eval(e, pt));
  for (const auto& e : sys.h) total += std::abs(eval(e, pt));
  for (int i = 0; i < sys.num_pairs(); ++i)
    total += std::abs(std::min(eval(sys.G[static_cast<std::size_t>(i)], pt),
                               eval(sys.H[static_cast<std::size_t>(i)], pt)));
  return total;
}

namespace {

struct TermChoice {
  // contribution = lambda_g * vertex + lambda_h * grad_h - lambda_G * grad_G - lambda_H * grad_H
  double lambda_g = 0.0;
  double lambda_h = 0.0;
  double lambda_G = 0.0;
  double lambda_H = 0.0;
  Eigen::VectorXd vector;
  std::vector<double> g_vertex;  // nonempty only for inequality terms
};

}  // namespace

std::vector<Phi0Certificate> phi0_subdifferential_elements(const FeasibilitySystem& sys,
                                                           const Eigen::VectorXd& x, double tol,
                                                           std::size_t cap) {
  const int d = sys.dim();
  std::span<const double> pt(x.data(), static_cast<std::size_t>(x.size()));

  // per-term generator menus
  std::vector<std::vector<TermChoice>> menus;
  std::vector<char> term_kind;  // 'g', 'h', 'p'
  std::vector<int> term_index;
  std::vector<std::string> pair_branch(static_cast<std::size_t>(sys.num_pairs()), "");

  for (std::size_t i = 0; i < sys.g.size(); ++i) {
    const double gv = eval(sys.g[i], pt);
    if (gv < -tol) continue;  // off A(x), multiplier zero
    auto verts = subdifferential_vertices(sys.g[i], pt, tol);
    std::vector<TermChoice> menu;
    if (std::abs(gv) <= tol) {
      TermChoice off;
      off.vector = Eigen::VectorXd::Zero(d);
      menu.push_back(off);  // lambda_g = 0 option at the kink of max(0, .)
    }
    for (const auto& v : verts.vertices) {
      TermChoice c;
      c.lambda_g = 1.0;
      c.g_vertex = v;
      c.vector = Eigen::Map<const Eigen::VectorXd>(v.data(), d);
      menu.push_back(c);
    }
    menus.push_back(std::move(menu));
    term_kind.push_back('g');
    term_index.push_back(static_cast<int>(i));
  }

  for (std::size_t i = 0; i < sys.h.size(); ++i) {
    const double hv = eval(sys.h[i], pt);
    Eigen::VectorXd grad = eval_gradient(sys.h[i], x);
    std::vector<TermChoice> menu;
    std::vector<double> lams;
    if (hv > tol)
      lams = {1.0};
    else if (hv < -tol)
      lams = {-1.0};
    else
      lams = {-1.0, 1.0};
    for (double l : lams) {
      TermChoice c;
      c.lambda_h = l;
      c.vector = l * grad;
      menu.push_back(c);
    }
    menus.push_back(std::move(menu));
    term_kind.push_back('h');
    term_index.push_back(static_cast<int>(i));
  }

  for (int i = 0; i < sys.num_pairs(); ++i) {
    const double a = eval(sys.G[static_cast<std::size_t>(i)], pt);
    const double b = eval(sys.H[static_cast<std::size_t>(i)], pt);
    Eigen::VectorXd gG = eval_gradient(sys.G[static_cast<std::size_t>(i)], x);
    Eigen::VectorXd gH = eval_gradient(sys.H[static_cast<std::size_t>(i)], x);
    std::vector<std::pair<double, double>> lamGH;
    std::string branch;
    if (a < b - tol) {
      branch = "I";
      if (a > tol)
        lamGH = {{-1.0, 0.0}};
      else if (a < -tol)
        lamGH = {{1.0, 0.0}};
      else
        lamGH = {{-1.0, 0.0}, {1.0, 0.0}};
    } else if (b < a - tol) {
      branch = "K";
      if (b > tol)
        lamGH = {{0.0, -1.0}};
      else if (b < -tol)
        lamGH = {{0.0, 1.0}};
      else
        lamGH = {{0.0, -1.0}, {0.0, 1.0}};
    } else {
      branch = "J";
      const double c = 0.5 * (a + b);
      if (c < -tol)
        lamGH = {{1.0, 0.0}, {0.0, 1.0}};
      else if (c > tol)
        lamGH = {{-1.0, 0.0}, {0.0, -1.0}};
      else
        lamGH = {{1.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
    }
    pair_branch[static_cast<std::size_t>(i)] = branch;
    std::vector<TermChoice> menu;
    for (auto [lG, lH] : lamGH) {
      TermChoice c;
      c.lambda_G = lG;
      c.lambda_H = lH;
      c.vector = -lG * gG - lH * gH;
      menu.push_back(c);
    }
    menus.push_back(std::move(menu));
    term_kind.push_back('p');
    term_index.push_back(i);
  }

  const double value = phi0(sys, x);
  std::vector<Phi0Certificate> out;
  bool truncated = false;

  std::vector<std::size_t> pick(menus.size(), 0);
  while (true) {
    if (out.size() >= cap) {
      truncated = true;
      break;
    }
    Phi0Certificate cert;
    cert.value = value;
    cert.lambda_g.assign(sys.g.size(), 0.0);
    cert.g_vertices.resize(sys.g.size());
    cert.lambda_h.assign(sys.h.size(), 0.0);
    cert.lambda_G.assign(static_cast<std::size_t>(sys.num_pairs()), 0.0);
    cert.lambda_H.assign(static_cast<std::size_t>(sys.num_pairs()), 0.0);
    cert.pair_branch = pair_branch;
    cert.vector = Eigen::VectorXd::Zero(d);
    for (std::size_t t = 0; t < menus.size(); ++t) {
      const auto& c = menus[t][pick[t]];
      cert.vector += c.vector;
      const auto idx = static_cast<std::size_t>(term_index[t]);
      switch (term_kind[t]) {
        case 'g':
          cert.lambda_g[idx] = c.lambda_g;
          cert.g_vertices[idx] = c.g_vertex;
          break;
        case 'h':
          cert.lambda_h[idx] = c.lambda_h;
          break;
        case 'p':
          cert.lambda_G[idx] = c.lambda_G;
          cert.lambda_H[idx] = c.lambda_H;
          break;
      }
    }
    out.push_back(std::move(cert));

    // advance the mixed-radix counter
    std::size_t t = 0;
    while (t < menus.size()) {
      if (++pick[t] < menus[t].size()) break;
      pick[t] = 0;
      ++t;
    }
    if (t == menus.size()) break;
  }

  for (auto& c : out) c.truncated = truncated;
  return out;
}

}  // namespace mpccq
