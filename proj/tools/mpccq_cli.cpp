// Command-line front end. Talks to the analysis library exclusively through
// the C API; argument marshalling uses the vendored CLI11 and JSON headers.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "mpccq/capi.h"

namespace {

using json = nlohmann::ordered_json;

#ifndef MPCCQ_DATA_DIR
#define MPCCQ_DATA_DIR "data"
#endif

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Common {
  std::string problem_path;
  std::string anchor;
  std::string point_csv;
  std::string out_path;
  double tol = -1;
  long long seed = -1;
  std::string radii_csv;
  int points_per_radius = -1;
  long long branch_cap = -1;
  int grid = -1;
  std::string norm = "l1";
};

void add_common(CLI::App* app, Common& c, bool needs_problem = true) {
  if (needs_problem)
    app->add_option("problem", c.problem_path, "problem file (JSON)")->required();
  app->add_option("--anchor", c.anchor, "anchor point name from the problem file");
  app->add_option("--point", c.point_csv, "explicit anchor point, comma separated");
  app->add_option("--tol", c.tol, "feasibility/classification tolerance");
  app->add_option("--seed", c.seed, "sampling seed");
  app->add_option("--radii", c.radii_csv, "sampling radii, comma separated");
  app->add_option("--points-per-radius", c.points_per_radius, "sample count per radius");
  app->add_option("--branch-cap", c.branch_cap, "complementarity branch enumeration cap");
  app->add_option("--grid", c.grid, "value-function grid points");
  app->add_option("--norm", c.norm, "pair-distance norm in renderings (l1|linf)")
      ->check(CLI::IsMember({"l1", "linf"}));
  app->add_option("--out", c.out_path, "write the JSON report to this file");
}

json csv_to_array(const std::string& csv) {
  json a = json::array();
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) a.push_back(std::stod(tok));
  return a;
}

void apply_common(json& cmd, const Common& c) {
  if (!c.anchor.empty()) cmd["anchor"] = c.anchor;
  if (!c.point_csv.empty()) cmd["point"] = csv_to_array(c.point_csv);
  if (c.tol > 0) cmd["tol"] = c.tol;
  if (c.seed >= 0) cmd["seed"] = c.seed;
  if (!c.radii_csv.empty()) cmd["radii"] = csv_to_array(c.radii_csv);
  if (c.points_per_radius > 0) cmd["points_per_radius"] = c.points_per_radius;
  if (c.branch_cap > 0) cmd["branch_cap"] = c.branch_cap;
  if (c.grid > 1) cmd["grid"] = c.grid;
  cmd["norm"] = c.norm;
}

int run(const std::string& problem_text, const json& cmd, const std::string& out_path,
        const std::string& out_field = "") {
  mpccq_problem* problem = nullptr;
  mpccq_status st = mpccq_problem_parse(problem_text.c_str(), &problem);
  if (st != MPCCQ_OK) {
    std::cerr << "error: " << mpccq_last_error() << "\n";
    return st == MPCCQ_PARSE_ERROR ? 2 : 1;
  }
  char* report_json = nullptr;
  char* report_text = nullptr;
  int exit_code = 0;
  st = mpccq_analyze(problem, cmd.dump().c_str(), &report_json, &report_text, &exit_code);
  if (st != MPCCQ_OK) {
    std::cerr << "error: " << mpccq_last_error() << "\n";
    mpccq_problem_free(problem);
    return st == MPCCQ_PARSE_ERROR ? 2 : 1;
  }
  std::cout << report_text;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (out_field.empty()) {
      out << report_json;
    } else {
      // write one field of the report (the emitted problem file itself)
      auto rep = json::parse(report_json);
      out << rep.at(out_field).dump(2) << "\n";
    }
  }
  mpccq_string_free(report_json);
  mpccq_string_free(report_text);
  mpccq_problem_free(problem);
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"analysis toolkit for complementarity-constrained feasibility systems"};
  app.require_subcommand(1);

  Common c_cq, c_st, c_eb, c_rf, c_ps, c_re;
  std::string example_id, data_dir = MPCCQ_DATA_DIR;
  std::string eb_variant = "full", eb_method = "auto", ps_schedule;
  double eb_half_width = 0.5;
  int eb_points = 9;

  auto* cq = app.add_subcommand("check-cq", "run the constraint-qualification suite");
  add_common(cq, c_cq);
  auto* st = app.add_subcommand("check-stationarity", "verify M-stationarity at a point");
  add_common(st, c_st);
  auto* eb = app.add_subcommand("error-bound", "estimate the error-bound modulus");
  add_common(eb, c_eb);
  eb->add_option("--variant", eb_variant, "residual variant")
      ->check(CLI::IsMember({"full", "strict"}));
  eb->add_option("--method", eb_method, "distance oracle")
      ->check(CLI::IsMember({"auto", "grid", "penalty"}));
  eb->add_option("--box-half-width", eb_half_width, "grid box half width");
  eb->add_option("--points-per-dim", eb_points, "grid points per dimension");
  auto* rf = app.add_subcommand("reformulate-bilevel", "emit the combined program");
  add_common(rf, c_rf);
  auto* ps = app.add_subcommand("penalty-solve", "run the penalized local scheme");
  add_common(ps, c_ps);
  ps->add_option("--schedule", ps_schedule, "penalty weights, comma separated");
  auto* re = app.add_subcommand("reproduce-example", "re-run a shipped example and diff verdicts");
  re->add_option("id", example_id, "example id: 4.1, 5.1 or 5.2")->required();
  re->add_option("--data", data_dir, "directory with the shipped problem files");
  add_common(re, c_re, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cq->parsed()) {
      json cmd{{"command", "check-cq"}};
      apply_common(cmd, c_cq);
      return run(read_file(c_cq.problem_path), cmd, c_cq.out_path);
    }
    if (st->parsed()) {
      json cmd{{"command", "check-stationarity"}};
      apply_common(cmd, c_st);
      return run(read_file(c_st.problem_path), cmd, c_st.out_path);
    }
    if (eb->parsed()) {
      json cmd{{"command", "error-bound"}};
      apply_common(cmd, c_eb);
      cmd["variant"] = eb_variant;
      cmd["method"] = eb_method;
      cmd["box_half_width"] = eb_half_width;
      cmd["points_per_dim"] = eb_points;
      return run(read_file(c_eb.problem_path), cmd, c_eb.out_path);
    }
    if (rf->parsed()) {
      json cmd{{"command", "reformulate-bilevel"}};
      apply_common(cmd, c_rf);
      return run(read_file(c_rf.problem_path), cmd, c_rf.out_path, "problem");
    }
    if (ps->parsed()) {
      json cmd{{"command", "penalty-solve"}};
      apply_common(cmd, c_ps);
      if (!ps_schedule.empty()) cmd["schedule"] = csv_to_array(ps_schedule);
      return run(read_file(c_ps.problem_path), cmd, c_ps.out_path);
    }
    if (re->parsed()) {
      std::string stem = example_id;
      stem.erase(std::remove(stem.begin(), stem.end(), '.'), stem.end());
      const std::string problem_path = data_dir + "/example" + stem + ".json";
      const std::string expected_path = data_dir + "/example" + stem + ".expected.json";
      json cmd{{"command", "reproduce-example"}};
      apply_common(cmd, c_re);
      cmd["id"] = example_id;
      cmd["expected"] = json::parse(read_file(expected_path));
      return run(read_file(problem_path), cmd, c_re.out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
