#include "mpccq/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mpccq/cq.hpp"
#include "mpccq/errorbound.hpp"
#include "mpccq/stationarity.hpp"
#include "mpccq/vcalc.hpp"

namespace mpccq::io {

namespace {

Eigen::VectorXd to_vector(const ordered_json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + ": expected an array of numbers");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

ordered_json from_vector(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ordered_json from_matrix(const Eigen::MatrixXd& M) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < M.rows(); ++i) rows.push_back(from_vector(M.row(i)));
  return rows;
}

}  // namespace

ordered_json expr_to_json(const Expression& e) {
  ordered_json j;
  switch (e->kind) {
    case ExprKind::Constant:
      j["op"] = "const";
      j["value"] = e->value;
      return j;
    case ExprKind::Variable:
      j["op"] = "var";
      j["name"] = e->var_name;
      return j;
    case ExprKind::Add:
      j["op"] = "add";
      break;
    case ExprKind::Sub:
      j["op"] = "sub";
      break;
    case ExprKind::Mul:
      j["op"] = "mul";
      break;
    case ExprKind::Div:
      j["op"] = "div";
      break;
    case ExprKind::Pow:
      j["op"] = "pow";
      j["args"] = ordered_json::array({expr_to_json(e->args[0])});
      j["exponent"] = e->exponent;
      return j;
    case ExprKind::Exp:
      j["op"] = "exp";
      break;
    case ExprKind::Ln:
      j["op"] = "ln";
      break;
    case ExprKind::Max:
      j["op"] = "max";
      break;
    case ExprKind::Min:
      j["op"] = "min";
      break;
    case ExprKind::Abs:
      j["op"] = "abs";
      break;
    case ExprKind::Oracle:
      j["op"] = "lower_value";
      return j;
  }
  ordered_json args = ordered_json::array();
  for (const auto& a : e->args) args.push_back(expr_to_json(a));
  j["args"] = std::move(args);
  return j;
}

Expression expr_from_json(const ordered_json& j, const std::map<std::string, int>& vars,
                          const std::shared_ptr<const ExprOracle>& lower_value) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
    throw ParseError("expression: expected an object with an \"op\" field");
  const std::string op = j["op"].get<std::string>();
  auto arg_list = [&](std::size_t min_args) {
    if (!j.contains("args") || !j["args"].is_array() || j["args"].size() < min_args)
      throw ParseError("expression op \"" + op + "\": missing or short \"args\"");
    std::vector<Expression> out;
    for (const auto& a : j["args"]) out.push_back(expr_from_json(a, vars, lower_value));
    return out;
  };
  if (op == "const") {
    if (!j.contains("value") || !j["value"].is_number())
      throw ParseError("const expression needs a numeric \"value\"");
    return constant(j["value"].get<double>());
  }
  if (op == "var") {
    if (!j.contains("name") || !j["name"].is_string())
      throw ParseError("var expression needs a \"name\"");
    const std::string name = j["name"].get<std::string>();
    auto it = vars.find(name);
    if (it == vars.end()) throw ParseError("unknown variable \"" + name + "\"");
    return variable(it->second, name);
  }
  if (op == "add") {
    auto a = arg_list(2);
    Expression e = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) e = add(e, a[i]);
    return e;
  }
  if (op == "sub") {
    auto a = arg_list(2);
    if (a.size() != 2) throw ParseError("sub takes exactly two arguments");
    return sub(a[0], a[1]);
  }
  if (op == "mul") {
    auto a = arg_list(2);
    Expression e = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) e = mul(e, a[i]);
    return e;
  }
  if (op == "div") {
    auto a = arg_list(2);
    if (a.size() != 2) throw ParseError("div takes exactly two arguments");
    return div(a[0], a[1]);
  }
  if (op == "pow") {
    auto a = arg_list(1);
    if (!j.contains("exponent") || !j["exponent"].is_number_integer())
      throw ParseError("pow needs an integer \"exponent\"");
    return pow_int(a[0], j["exponent"].get<long long>());
  }
  if (op == "exp") return exp(arg_list(1)[0]);
  if (op == "ln") return ln(arg_list(1)[0]);
  if (op == "abs") return abs(arg_list(1)[0]);
  if (op == "max") return max_of(arg_list(2));
  if (op == "min") return min_of(arg_list(2));
  if (op == "lower_value") {
    if (!lower_value)
      throw ParseError("lower_value used without a bilevel section in the file");
    return oracle_term(lower_value);
  }
  throw ParseError("unknown expression op \"" + op + "\"");
}

namespace {

CatalogSet set_from_json(const ordered_json& j) {
  if (!j.is_object() || !j.contains("type"))
    throw ParseError("set: expected an object with a \"type\"");
  const std::string type = j["type"].get<std::string>();
  if (type == "full") {
    if (!j.contains("dim")) throw ParseError("full set needs \"dim\"");
    return CatalogSet{CatalogSet::Variant{FullSpace{j["dim"].get<int>()}}};
  }
  if (type == "box") {
    Box b;
    b.lo = to_vector(j.at("lo"), "box.lo");
    b.hi = to_vector(j.at("hi"), "box.hi");
    return CatalogSet{CatalogSet::Variant{b}};
  }
  if (type == "polyhedron") {
    Polyhedron p;
    const auto& A = j.at("A");
    p.b = to_vector(j.at("b"), "polyhedron.b");
    p.A = Eigen::MatrixXd(static_cast<int>(A.size()), A.empty() ? 0 : static_cast<int>(A[0].size()));
    for (std::size_t i = 0; i < A.size(); ++i)
      p.A.row(static_cast<int>(i)) = to_vector(A[i], "polyhedron.A").transpose();
    return CatalogSet{CatalogSet::Variant{p}};
  }
  if (type == "union") {
    PolyUnion u;
    for (const auto& mj : j.at("members")) {
      Polyhedron p;
      const auto& A = mj.at("A");
      p.b = to_vector(mj.at("b"), "union.member.b");
      p.A = Eigen::MatrixXd(static_cast<int>(A.size()),
                            A.empty() ? 0 : static_cast<int>(A[0].size()));
      for (std::size_t i = 0; i < A.size(); ++i)
        p.A.row(static_cast<int>(i)) = to_vector(A[i], "union.member.A").transpose();
      u.members.push_back(std::move(p));
    }
    return CatalogSet{CatalogSet::Variant{u}};
  }
  if (type == "segment") {
    Segment s;
    s.p0 = to_vector(j.at("p0"), "segment.p0");
    s.p1 = to_vector(j.at("p1"), "segment.p1");
    return CatalogSet{CatalogSet::Variant{s}};
  }
  if (type == "sawtooth") return CatalogSet{CatalogSet::Variant{SawtoothGraph{}}};
  throw ParseError("unknown set type \"" + type + "\"");
}

ordered_json set_to_json(const CatalogSet& s) {
  ordered_json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FullSpace>) {
          j["type"] = "full";
          j["dim"] = v.dim;
        } else if constexpr (std::is_same_v<T, Box>) {
          j["type"] = "box";
          j["lo"] = from_vector(v.lo);
          j["hi"] = from_vector(v.hi);
        } else if constexpr (std::is_same_v<T, Polyhedron>) {
          j["type"] = "polyhedron";
          j["A"] = from_matrix(v.A);
          j["b"] = from_vector(v.b);
        } else if constexpr (std::is_same_v<T, PolyUnion>) {
          j["type"] = "union";
          ordered_json members = ordered_json::array();
          for (const auto& m : v.members) {
            ordered_json mj;
            mj["A"] = from_matrix(m.A);
            mj["b"] = from_vector(m.b);
            members.push_back(std::move(mj));
          }
          j["members"] = std::move(members);
        } else if constexpr (std::is_same_v<T, Segment>) {
          j["type"] = "segment";
          j["p0"] = from_vector(v.p0);
          j["p1"] = from_vector(v.p1);
        } else if constexpr (std::is_same_v<T, SawtoothGraph>) {
          j["type"] = "sawtooth";
        }
      },
      s.variant());
  return j;
}

std::map<std::string, int> name_index(const std::vector<std::string>& names) {
  std::map<std::string, int> m;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (m.count(names[i])) throw ParseError("duplicate variable \"" + names[i] + "\"");
    m[names[i]] = static_cast<int>(i);
  }
  return m;
}

std::shared_ptr<BilevelProgram> bilevel_from_json(const ordered_json& j, int default_grid) {
  auto blp = std::make_shared<BilevelProgram>();
  for (const auto& n : j.at("x")) blp->x_names.push_back(n.get<std::string>());
  for (const auto& n : j.at("y")) blp->y_names.push_back(n.get<std::string>());
  std::vector<std::string> all = blp->x_names;
  all.insert(all.end(), blp->y_names.begin(), blp->y_names.end());
  auto vars = name_index(all);
  auto expr = [&](const ordered_json& ej) { return expr_from_json(ej, vars, nullptr); };
  blp->F = expr(j.at("F"));
  blp->f = expr(j.at("f"));
  if (j.contains("G"))
    for (const auto& ej : j["G"]) blp->G.push_back(expr(ej));
  if (j.contains("H"))
    for (const auto& ej : j["H"]) blp->H.push_back(expr(ej));
  if (j.contains("g"))
    for (const auto& ej : j["g"]) blp->g.push_back(expr(ej));
  if (j.contains("h"))
    for (const auto& ej : j["h"]) blp->h.push_back(expr(ej));
  if (j.contains("x_sets"))
    for (const auto& sj : j["x_sets"]) blp->x_blocks.push_back(set_from_json(sj));
  blp->y_lo = to_vector(j.at("y_box").at("lo"), "bilevel.y_box.lo");
  blp->y_hi = to_vector(j.at("y_box").at("hi"), "bilevel.y_box.hi");
  blp->grid_points = j.value("grid", default_grid);
  blp->validate();
  return blp;
}

ordered_json bilevel_to_json(const BilevelProgram& blp) {
  ordered_json j;
  j["x"] = blp.x_names;
  j["y"] = blp.y_names;
  j["F"] = expr_to_json(blp.F);
  j["f"] = expr_to_json(blp.f);
  if (!blp.G.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& e : blp.G) a.push_back(expr_to_json(e));
    j["G"] = std::move(a);
  }
  if (!blp.H.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& e : blp.H) a.push_back(expr_to_json(e));
    j["H"] = std::move(a);
  }
  if (!blp.g.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& e : blp.g) a.push_back(expr_to_json(e));
    j["g"] = std::move(a);
  }
  if (!blp.h.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& e : blp.h) a.push_back(expr_to_json(e));
    j["h"] = std::move(a);
  }
  if (!blp.x_blocks.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& s : blp.x_blocks) a.push_back(set_to_json(s));
    j["x_sets"] = std::move(a);
  }
  ordered_json box;
  box["lo"] = from_vector(blp.y_lo);
  box["hi"] = from_vector(blp.y_hi);
  j["y_box"] = std::move(box);
  j["grid"] = blp.grid_points;
  return j;
}

}  // namespace

FeasibilitySystem& ParsedProblem::analysis_system() {
  if (system) return *system;
  if (!bilevel) throw ParseError("the problem has neither a system nor a bilevel section");
  if (!built_) built_ = build_combined_program(*bilevel, grid_points);
  return built_->system;
}

Expression ParsedProblem::analysis_objective() {
  if (objective) return objective;
  if (bilevel) return bilevel->F;
  return nullptr;
}

ParsedProblem parse_problem(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("problem file must be a JSON object");
  ParsedProblem p;
  p.tol = j.contains("tolerances") ? j["tolerances"].value("tol", 1e-8) : 1e-8;
  if (j.contains("bilevel")) {
    p.bilevel = bilevel_from_json(j["bilevel"], j["bilevel"].value("grid", 2001));
    p.grid_points = p.bilevel->grid_points;
    p.oracle = std::make_shared<ValueOracle>(p.bilevel, p.bilevel->grid_points,
                                             ValueOracleMode::Auto);
  }
  if (j.contains("variables")) {
    FeasibilitySystem sys;
    for (const auto& n : j["variables"]) sys.vars.push_back(n.get<std::string>());
    auto vars = name_index(sys.vars);
    auto expr = [&](const ordered_json& ej) { return expr_from_json(ej, vars, p.oracle); };
    if (j.contains("g"))
      for (const auto& ej : j["g"]) sys.g.push_back(expr(ej));
    if (j.contains("h"))
      for (const auto& ej : j["h"]) sys.h.push_back(expr(ej));
    if (j.contains("G"))
      for (const auto& ej : j["G"]) sys.G.push_back(expr(ej));
    if (j.contains("H"))
      for (const auto& ej : j["H"]) sys.H.push_back(expr(ej));
    if (!j.contains("sets")) throw ParseError("a system needs a \"sets\" list");
    for (const auto& sj : j["sets"]) sys.blocks.push_back(set_from_json(sj));
    try {
      sys.validate();
    } catch (const std::exception& e) {
      throw ParseError(std::string("invalid system: ") + e.what());
    }
    if (j.contains("objective")) p.objective = expr(j["objective"]);
    p.system = std::move(sys);
  }
  if (!p.system && !p.bilevel)
    throw ParseError("problem file needs \"variables\" or a \"bilevel\" section");
  if (j.contains("anchors")) {
    for (const auto& aj : j["anchors"]) {
      const std::string name = aj.at("name").get<std::string>();
      p.anchors[name] = to_vector(aj.at("point"), "anchor \"" + name + "\"");
      p.anchor_order.push_back(name);
    }
  }
  return p;
}

std::string serialize_problem(const ParsedProblem& p) {
  ordered_json j;
  j["schema"] = 1;
  if (p.system) {
    const auto& sys = *p.system;
    j["variables"] = sys.vars;
    auto dump = [&](const std::vector<Expression>& es) {
      ordered_json a = ordered_json::array();
      for (const auto& e : es) a.push_back(expr_to_json(e));
      return a;
    };
    if (!sys.g.empty()) j["g"] = dump(sys.g);
    if (!sys.h.empty()) j["h"] = dump(sys.h);
    if (!sys.G.empty()) j["G"] = dump(sys.G);
    if (!sys.H.empty()) j["H"] = dump(sys.H);
    ordered_json sets = ordered_json::array();
    for (const auto& s : sys.blocks) sets.push_back(set_to_json(s));
    j["sets"] = std::move(sets);
    if (p.objective) j["objective"] = expr_to_json(p.objective);
  }
  if (p.bilevel) j["bilevel"] = bilevel_to_json(*p.bilevel);
  if (!p.anchors.empty()) {
    ordered_json anchors = ordered_json::array();
    for (const auto& name : p.anchor_order) {
      ordered_json a;
      a["name"] = name;
      a["point"] = from_vector(p.anchors.at(name));
      anchors.push_back(std::move(a));
    }
    j["anchors"] = std::move(anchors);
  }
  ordered_json tols;
  tols["tol"] = p.tol;
  j["tolerances"] = std::move(tols);
  return j.dump(2) + "\n";
}

ordered_json reformulate_bilevel(ParsedProblem& p) {
  if (!p.bilevel) throw ParseError("reformulate-bilevel needs a bilevel section");
  auto cp = build_combined_program(*p.bilevel, p.grid_points);
  ParsedProblem out;
  out.system = cp.system;
  out.objective = cp.objective;
  out.bilevel = p.bilevel;
  out.anchors = p.anchors;
  out.anchor_order = p.anchor_order;
  out.tol = p.tol;
  out.grid_points = p.grid_points;
  return ordered_json::parse(serialize_problem(out));
}

namespace {

ordered_json rank_to_json(const linalg::RankReport& r) {
  ordered_json j;
  j["rank"] = r.rank;
  j["tolerance"] = r.tol;
  j["singular_values"] = r.singular_values;
  return j;
}

ordered_json certificate_to_json(const AbnormalCertificate& c) {
  ordered_json j;
  j["residual"] = c.residual;
  j["lambda_g"] = c.multipliers.lambda_g;
  j["lambda_h"] = c.multipliers.lambda_h;
  j["lambda_G"] = c.multipliers.lambda_G;
  j["lambda_H"] = c.multipliers.lambda_H;
  j["eta"] = from_vector(c.multipliers.eta);
  ordered_json gv = ordered_json::array();
  for (const auto& v : c.multipliers.g_vertices) gv.push_back(v);
  j["g_vertices"] = std::move(gv);
  j["branch"] = c.multipliers.branch;
  ordered_json cols;
  cols["labels"] = c.labels;
  cols["multipliers"] = c.column_multipliers;
  ordered_json vecs = ordered_json::array();
  for (const auto& v : c.columns) vecs.push_back(from_vector(v));
  cols["vectors"] = std::move(vecs);
  j["columns"] = std::move(cols);
  return j;
}

ordered_json witness_to_json(const RankWitness& w) {
  ordered_json j;
  j["point"] = from_vector(w.point);
  j["labels"] = w.labels;
  j["anchor_rank"] = w.anchor_rank;
  j["sample_rank"] = w.sample_rank;
  j["anchor_family"] = from_matrix(w.anchor_family);
  j["sample_family"] = from_matrix(w.sample_family);
  j["note"] = w.note;
  return j;
}

ordered_json cq_to_json(const CQReport& r) {
  ordered_json j;
  j["check"] = r.check;
  j["verdict"] = to_string(r.verdict);
  if (!r.implication_chain.empty()) j["implication_chain"] = r.implication_chain;
  if (!r.notes.empty()) j["notes"] = r.notes;
  if (r.conservative) j["conservative"] = true;
  if (r.explored_fraction < 1.0) j["explored_fraction"] = r.explored_fraction;
  if (r.rank_target >= 0) {
    j["rank"] = rank_to_json(r.rank);
    j["rank_target"] = r.rank_target;
  }
  if (r.certificate) j["certificate"] = certificate_to_json(*r.certificate);
  if (!r.witnesses.empty()) {
    ordered_json ws = ordered_json::array();
    for (const auto& w : r.witnesses) ws.push_back(witness_to_json(w));
    j["witnesses"] = std::move(ws);
  }
  return j;
}

SamplingPlan plan_from_command(const ordered_json& cmd) {
  SamplingPlan plan = SamplingPlan::defaults();
  if (cmd.contains("radii")) {
    plan.radii.clear();
    for (const auto& r : cmd["radii"]) plan.radii.push_back(r.get<double>());
  }
  if (cmd.contains("points_per_radius"))
    plan.points_per_radius = cmd["points_per_radius"].get<int>();
  if (cmd.contains("seed")) plan.seed = cmd["seed"].get<std::uint64_t>();
  return plan;
}

Eigen::VectorXd anchor_from_command(ParsedProblem& p, const ordered_json& cmd) {
  if (cmd.contains("point")) return to_vector(cmd["point"], "command point");
  std::string name;
  if (cmd.contains("anchor")) name = cmd["anchor"].get<std::string>();
  if (name.empty()) {
    if (p.anchor_order.empty()) throw ParseError("no anchor point available");
    name = p.anchor_order.front();
  }
  auto it = p.anchors.find(name);
  if (it == p.anchors.end()) throw ParseError("unknown anchor \"" + name + "\"");
  return it->second;
}

ProbeCaps caps_from_command(const ordered_json& cmd) {
  ProbeCaps caps;
  if (cmd.contains("branch_cap")) caps.branch_cap = cmd["branch_cap"].get<long long>();
  return caps;
}

bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

AnalysisReport run_check_cq(ParsedProblem& p, const ordered_json& cmd) {
  AnalysisReport out;
  auto& sys = p.analysis_system();
  const double tol = cmd.value("tol", p.tol);
  const auto anchor = anchor_from_command(p, cmd);
  const auto plan = plan_from_command(cmd);
  const auto caps = caps_from_command(cmd);

  auto lcq = check_lcq(sys);
  auto fullrank = check_fullrank(sys, anchor, tol);
  auto nnamcq = check_nnamcq(sys, anchor, tol, caps);
  auto rcpld = probe_rcpld(sys, anchor, plan, tol, caps);
  auto rcrcq = probe_rcrcq(sys, anchor, plan, tol, caps);

  // cross-check the implication ladder
  std::vector<std::string> inconsistencies;
  if (lcq.verdict == CQVerdict::Holds && rcrcq.verdict == CQVerdict::ViolatedWithWitness)
    inconsistencies.push_back("LCQ holds but the constant-rank probe found a violation");
  if (rcrcq.verdict == CQVerdict::NoViolationFound &&
      rcpld.verdict == CQVerdict::ViolatedWithWitness)
    inconsistencies.push_back(
        "constant-rank probe found nothing but the dependence probe found a violation");
  if (fullrank.verdict == CQVerdict::Holds && rcpld.verdict == CQVerdict::ViolatedWithWitness)
    inconsistencies.push_back("full rank holds but the dependence probe found a violation");

  ordered_json plan_echo;
  plan_echo["radii"] = plan.radii;
  plan_echo["points_per_radius"] = plan.points_per_radius;
  plan_echo["seed"] = plan.seed;

  // feasibility echo at the anchor; pair distances in the requested norm
  const OmegaNorm norm = cmd.value("norm", std::string("l1")) == std::string("linf")
                             ? OmegaNorm::LInf
                             : OmegaNorm::L1;
  auto breakdown = residuals(sys, anchor);
  ordered_json feas;
  feas["max_residual"] = breakdown.max_residual;
  feas["g_violation"] = breakdown.g_violation;
  feas["h_violation"] = breakdown.h_violation;
  {
    std::vector<double> pair_d;
    std::span<const double> apt(anchor.data(), static_cast<std::size_t>(anchor.size()));
    for (int i = 0; i < sys.num_pairs(); ++i)
      pair_d.push_back(dist_omega(eval(sys.G[static_cast<std::size_t>(i)], apt),
                                  eval(sys.H[static_cast<std::size_t>(i)], apt), norm));
    feas["pair_distance"] = pair_d;
    feas["pair_distance_norm"] = norm == OmegaNorm::L1 ? "l1" : "linf";
  }
  feas["set_distance"] = breakdown.set_distance;

  ordered_json checks;
  checks["lcq"] = cq_to_json(lcq);
  checks["fullrank"] = cq_to_json(fullrank);
  checks["nnamcq"] = cq_to_json(nnamcq);
  checks["rcpld"] = cq_to_json(rcpld);
  checks["rcrcq"] = cq_to_json(rcrcq);
  out.machine["command"] = "check-cq";
  out.machine["anchor"] = from_vector(anchor);
  out.machine["tol"] = tol;
  out.machine["plan"] = std::move(plan_echo);
  out.machine["feasibility"] = std::move(feas);
  out.machine["checks"] = std::move(checks);
  out.machine["implications_consistent"] = inconsistencies.empty();
  if (!inconsistencies.empty()) out.machine["inconsistencies"] = inconsistencies;

  std::ostringstream os;
  os << "check-cq at anchor " << anchor.transpose() << "\n";
  os << "  LCQ:       " << to_string(lcq.verdict) << "\n";
  os << "  full rank: " << to_string(fullrank.verdict) << " (rank " << fullrank.rank.rank
     << " of " << fullrank.rank_target << ")\n";
  os << "  NNAMCQ:    " << to_string(nnamcq.verdict) << "\n";
  os << "  RCPLD:     " << to_string(rcpld.verdict) << "\n";
  os << "  RCRCQ:     " << to_string(rcrcq.verdict) << "\n";
  if (nnamcq.certificate)
    os << "  abnormal multiplier residual " << nnamcq.certificate->residual << "\n";
  for (const auto& w : rcrcq.witnesses)
    os << "  rank witness: " << w.sample_rank << " (sequence) vs " << w.anchor_rank
       << " (limit)\n";
  if (!inconsistencies.empty()) os << "  WARNING: implication ladder inconsistent\n";
  out.text = os.str();
  return out;
}

AnalysisReport run_check_stationarity(ParsedProblem& p, const ordered_json& cmd) {
  AnalysisReport out;
  auto& sys = p.analysis_system();
  auto f = p.analysis_objective();
  if (!f) throw ParseError("check-stationarity needs an objective");
  const double tol = cmd.value("tol", p.tol);
  const auto anchor = anchor_from_command(p, cmd);
  auto rep = check_mstationarity(sys, f, anchor, tol, caps_from_command(cmd));

  out.machine["command"] = "check-stationarity";
  out.machine["anchor"] = from_vector(anchor);
  out.machine["verdict"] = to_string(rep.verdict);
  out.machine["residual"] = rep.residual;
  if (rep.conservative) out.machine["conservative"] = true;
  if (rep.verdict == StationarityVerdict::Stationary) {
    ordered_json m;
    m["lambda_g"] = rep.multipliers.lambda_g;
    m["lambda_h"] = rep.multipliers.lambda_h;
    m["lambda_G"] = rep.multipliers.lambda_G;
    m["lambda_H"] = rep.multipliers.lambda_H;
    m["eta"] = from_vector(rep.multipliers.eta);
    m["branch"] = rep.multipliers.branch;
    out.machine["multipliers"] = std::move(m);
    out.machine["objective_vertex"] = rep.objective_vertex;
  }
  if (!rep.notes.empty()) out.machine["notes"] = rep.notes;

  std::ostringstream os;
  os << "check-stationarity at anchor " << anchor.transpose() << ": " << to_string(rep.verdict);
  if (rep.verdict == StationarityVerdict::Stationary) os << " (residual " << rep.residual << ")";
  os << "\n";
  out.text = os.str();
  return out;
}

AnalysisReport run_error_bound(ParsedProblem& p, const ordered_json& cmd) {
  AnalysisReport out;
  auto& sys = p.analysis_system();
  const double tol = cmd.value("tol", p.tol);
  const auto anchor = anchor_from_command(p, cmd);
  auto plan = plan_from_command(cmd);
  const std::string variant_name = cmd.value("variant", std::string("full"));
  const ResidualVariant variant = variant_name == std::string("strict")
                                      ? ResidualVariant::StrictComplementarity
                                      : ResidualVariant::Full;
  DistanceOptions dist;
  const std::string method = cmd.value("method", std::string("auto"));
  if (method == "penalty" || (method == "auto" && sys.dim() > 4)) {
    dist.method = DistanceMethod::PenaltyProjection;
  } else {
    dist = DistanceOptions::centered_grid(anchor, cmd.value("box_half_width", 0.5),
                                          cmd.value("points_per_dim", 9));
  }
  auto rep = estimate_error_bound_modulus(sys, anchor, plan, variant, dist,
                                          cmd.value("phi_floor", 1e-16), tol);
  out.machine["command"] = "error-bound";
  out.machine["anchor"] = from_vector(anchor);
  out.machine["variant"] = variant_name;
  out.machine["alpha_hat"] =
      std::isfinite(rep.alpha_hat) ? ordered_json(rep.alpha_hat) : ordered_json("infinite");
  out.machine["samples"] = rep.sample_count;
  out.machine["admitted"] = rep.admitted_count;
  out.machine["trivial"] = rep.trivial;
  out.machine["diverging"] = rep.diverging;
  out.machine["strict_complementarity"] = rep.strict_complementarity;
  out.machine["distance_method"] =
      rep.distance_method == DistanceMethod::Grid ? "grid" : "penalty";
  ordered_json per = ordered_json::array();
  for (auto& [r, m] : rep.per_radius_max) {
    ordered_json e;
    e["radius"] = r;
    e["max_ratio"] = m;
    per.push_back(std::move(e));
  }
  out.machine["per_radius_max"] = std::move(per);
  if (!rep.hypothesis_notes.empty()) out.machine["hypothesis"] = rep.hypothesis_notes;
  if (rep.worst_sample.size() > 0) out.machine["worst_sample"] = from_vector(rep.worst_sample);

  std::ostringstream os;
  os << "error-bound at anchor " << anchor.transpose() << ": alpha_hat=";
  if (std::isfinite(rep.alpha_hat))
    os << rep.alpha_hat;
  else
    os << "infinite";
  if (rep.trivial) os << " (trivial: all samples feasible)";
  if (rep.diverging) os << " [diverging]";
  os << "\n";
  out.text = os.str();
  return out;
}

AnalysisReport run_penalty_solve(ParsedProblem& p, const ordered_json& cmd) {
  AnalysisReport out;
  auto& sys = p.analysis_system();
  auto f = p.analysis_objective();
  const auto start = anchor_from_command(p, cmd);
  std::vector<double> schedule = {1, 10, 100, 1e3, 1e4, 1e6};
  if (cmd.contains("schedule")) {
    schedule.clear();
    for (const auto& k : cmd["schedule"]) schedule.push_back(k.get<double>());
  }
  PatternSearchOptions opts;
  if (cmd.contains("max_evals")) opts.max_evals = cmd["max_evals"].get<long long>();
  if (cmd.contains("initial_step")) opts.initial_step = cmd["initial_step"].get<double>();
  auto res = solve_penalized(sys, f, start, schedule, opts);
  out.machine["command"] = "penalty-solve";
  out.machine["start"] = from_vector(start);
  out.machine["point"] = from_vector(res.point);
  ordered_json trace = ordered_json::array();
  for (const auto& t : res.trace) {
    ordered_json e;
    e["k"] = t.k;
    e["phi0"] = t.phi0_value;
    e["objective"] = t.objective;
    trace.push_back(std::move(e));
  }
  out.machine["trace"] = std::move(trace);
  out.machine["budget_exhausted"] = res.budget_exhausted;
  out.machine["phi0_stalled"] = res.phi0_stalled;

  std::ostringstream os;
  os << "penalty-solve: final point " << res.point.transpose() << ", phi0 "
     << (res.trace.empty() ? 0.0 : res.trace.back().phi0_value);
  if (res.phi0_stalled) os << " [stalled]";
  if (res.budget_exhausted) os << " [budget exhausted]";
  os << "\n";
  out.text = os.str();
  return out;
}

AnalysisReport run_reformulate(ParsedProblem& p, const ordered_json& cmd) {
  (void)cmd;
  AnalysisReport out;
  out.machine["command"] = "reformulate-bilevel";
  out.machine["problem"] = reformulate_bilevel(p);
  out.text = "reformulate-bilevel: combined program emitted\n";
  return out;
}

AnalysisReport run_reproduce(ParsedProblem& p, const ordered_json& cmd);

}  // namespace

AnalysisReport run_command(ParsedProblem& p, const ordered_json& cmd) {
  if (!cmd.is_object() || !cmd.contains("command"))
    throw ParseError("command must be an object with a \"command\" field");
  const std::string name = cmd["command"].get<std::string>();
  if (name == "check-cq") return run_check_cq(p, cmd);
  if (name == "check-stationarity") return run_check_stationarity(p, cmd);
  if (name == "error-bound") return run_error_bound(p, cmd);
  if (name == "penalty-solve") return run_penalty_solve(p, cmd);
  if (name == "reformulate-bilevel") return run_reformulate(p, cmd);
  if (name == "reproduce-example") return run_reproduce(p, cmd);
  throw ParseError("unknown command \"" + name + "\"");
}

namespace {

void push_item(ordered_json& items, std::string name, bool ok, std::string detail = "") {
  ordered_json e;
  e["item"] = std::move(name);
  e["pass"] = ok;
  if (!detail.empty()) e["detail"] = std::move(detail);
  items.push_back(std::move(e));
}

AnalysisReport run_reproduce(ParsedProblem& p, const ordered_json& cmd) {
  AnalysisReport out;
  const std::string id = cmd.value("id", std::string());
  const ordered_json expected = cmd.contains("expected") ? cmd["expected"] : ordered_json();
  if (expected.is_null()) throw ParseError("reproduce-example needs the expected-verdict data");
  ordered_json items = ordered_json::array();

  if (id == "4.1") {
    auto& sys = p.analysis_system();
    const auto anchor = anchor_from_command(p, cmd);
    auto nn = check_nnamcq(sys, anchor, p.tol);
    push_item(items, "nnamcq verdict",
              to_string(nn.verdict) == expected.at("nnamcq").get<std::string>());
    bool cert_ok = false;
    if (nn.certificate) {
      const auto& c = *nn.certificate;
      cert_ok = c.residual <= expected.at("certificate_residual_max").get<double>();
      const auto eta_expect = expected.at("certificate_eta_over_lambda");
      const double lg = c.multipliers.lambda_g.empty() ? 0.0 : c.multipliers.lambda_g[0];
      if (lg <= 0 || static_cast<int>(eta_expect.size()) != c.multipliers.eta.size())
        cert_ok = false;
      else
        for (int i = 0; i < c.multipliers.eta.size(); ++i)
          cert_ok = cert_ok && approx(c.multipliers.eta(i) / lg,
                                      eta_expect[static_cast<std::size_t>(i)].get<double>(), 1e-8);
    }
    push_item(items, "nnamcq certificate", cert_ok);
    auto rc = probe_rcrcq(sys, anchor, plan_from_command(cmd), p.tol);
    push_item(items, "rcrcq verdict",
              to_string(rc.verdict) == expected.at("rcrcq").get<std::string>());
    bool ranks_ok = !rc.witnesses.empty() &&
                    rc.witnesses.front().sample_rank ==
                        expected.at("witness_ranks").at("sample").get<int>() &&
                    rc.witnesses.front().anchor_rank ==
                        expected.at("witness_ranks").at("anchor").get<int>();
    push_item(items, "rcrcq witness ranks", ranks_ok);
    auto rp = probe_rcpld(sys, anchor, plan_from_command(cmd), p.tol);
    push_item(items, "rcpld verdict",
              to_string(rp.verdict) == expected.at("rcpld").get<std::string>());
  } else if (id == "5.1") {
    if (!p.bilevel) throw ParseError("example 5.1 needs its bilevel section");
    const auto& blp = *p.bilevel;
    const double vtol = expected.value("tolerance", 1e-6);
    bool v_ok = true;
    std::string v_detail;
    for (const auto& sj : expected.at("V")) {
      const double x = sj.at("x").get<double>();
      const double want = sj.at("value").get<double>();
      const double got = value_function(blp, Eigen::VectorXd::Constant(1, x)).value;
      if (!approx(got, want, vtol)) {
        v_ok = false;
        v_detail = "V(" + std::to_string(x) + ") = " + std::to_string(got) + ", expected " +
                   std::to_string(want);
        break;
      }
    }
    push_item(items, "value function samples", v_ok, v_detail);

    auto sm2 = value_function(blp, Eigen::VectorXd::Constant(1, -2.0));
    const auto s_expect = expected.at("S_at_minus2");
    bool s_ok = sm2.minimizers.size() == s_expect.size();
    for (std::size_t i = 0; s_ok && i < sm2.minimizers.size(); ++i)
      s_ok = approx(sm2.minimizers[i](0), s_expect[i].get<double>(), 1e-4);
    push_item(items, "argmin set at x=-2", s_ok);

    const auto pt1 = p.anchors.at("cp_solution");
    const auto pt2 = p.anchors.at("cp_second");
    auto sj = matrix_SJ(blp, pt1, p.tol);
    push_item(items, "stacked matrix rank",
              sj.rank.rank == expected.at("SJ_rank").get<int>());
    auto jt = matrix_Jstar(blp, pt2, p.tol);
    push_item(items, "reduced second-order rank",
              jt.rank.rank == expected.at("Jstar_rank_at_second").get<int>());

    auto& sys = p.analysis_system();
    auto f = p.analysis_objective();
    const auto want_st = expected.at("stationary");
    auto st1 = check_mstationarity(sys, f, pt1, p.tol);
    auto st2 = check_mstationarity(sys, f, pt2, p.tol);
    push_item(items, "stationarity at the solutions",
              to_string(st1.verdict) == want_st[0].get<std::string>() &&
                  to_string(st2.verdict) == want_st[1].get<std::string>());
  } else if (id == "5.2") {
    if (!p.bilevel) throw ParseError("example 5.2 needs its bilevel section");
    const auto& blp = *p.bilevel;
    const double vtol = expected.value("tolerance", 1e-6);
    bool v_ok = true;
    for (const auto& sj : expected.at("V")) {
      Eigen::VectorXd x = to_vector(sj.at("x"), "expected V sample");
      const double want = sj.at("value").get<double>();
      if (!approx(value_function(blp, x).value, want, vtol)) {
        v_ok = false;
        break;
      }
    }
    push_item(items, "value function samples", v_ok);

    auto gens = danskin_generators(blp, to_vector(expected.at("danskin_x"), "danskin_x"));
    std::sort(gens.begin(), gens.end(),
              [](const auto& a, const auto& b) { return a(0) < b(0); });
    const auto want_gens = expected.at("danskin_at_equal");
    bool g_ok = gens.size() == want_gens.size();
    for (std::size_t i = 0; g_ok && i < gens.size(); ++i)
      for (int c = 0; c < gens[i].size(); ++c)
        g_ok = g_ok && approx(gens[i](c), want_gens[i][static_cast<std::size_t>(c)].get<double>(),
                              vtol);
    push_item(items, "danskin generators", g_ok);

    bool ranks_ok = true;
    const int want_rank = expected.at("jprime_rank").get<int>();
    for (const auto& name : {"cp_equal", "cp_less", "cp_greater"}) {
      const auto pt = p.anchors.at(name);
      auto ws = danskin_generators(blp, pt.head(2));
      for (int alpha : {0, 1})
        for (const auto& w : ws) {
          auto jp = matrix_Jprime(blp, pt, alpha, w, p.tol);
          ranks_ok = ranks_ok && jp.rank.rank == want_rank;
        }
    }
    push_item(items, "augmented matrix ranks", ranks_ok);
  } else {
    throw ParseError("unknown example id \"" + id + "\"");
  }

  bool all = true;
  for (const auto& e : items) all = all && e.at("pass").get<bool>();
  out.machine["command"] = "reproduce-example";
  out.machine["id"] = id;
  out.machine["items"] = items;
  out.machine["all_match"] = all;
  out.exit_code = all ? 0 : 1;

  std::ostringstream os;
  os << "reproduce-example " << id << "\n";
  for (const auto& e : out.machine["items"])
    os << "  [" << (e.at("pass").get<bool>() ? "ok" : "FAIL") << "] "
       << e.at("item").get<std::string>() << "\n";
  os << (all ? "all verdicts match\n" : "MISMATCH against stored verdicts\n");
  out.text = os.str();
  return out;
}

}  // namespace

}  // namespace mpccq::io
