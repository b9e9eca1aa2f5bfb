#pragma once

#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "mpccq/bilevel.hpp"
#include "mpccq/system.hpp"

namespace mpccq::io {

using ordered_json = nlohmann::ordered_json;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A parsed problem file: an explicit feasibility system, a bilevel section,
/// or both (an emitted combined program carries both, with the value-function
/// term referring back to the bilevel data).
struct ParsedProblem {
  std::optional<FeasibilitySystem> system;
  Expression objective;  // over the system variables; may be null
  std::shared_ptr<BilevelProgram> bilevel;
  std::shared_ptr<ValueOracle> oracle;  // backs lower_value nodes
  std::map<std::string, Eigen::VectorXd> anchors;
  std::vector<std::string> anchor_order;
  double tol = 1e-8;
  int grid_points = 2001;

  /// The system to analyze: the explicit one, or the combined program built
  /// from the bilevel section.
  FeasibilitySystem& analysis_system();
  Expression analysis_objective();

 private:
  std::optional<CombinedProgram> built_;
};

ordered_json expr_to_json(const Expression& e);
Expression expr_from_json(const ordered_json& j, const std::map<std::string, int>& vars,
                          const std::shared_ptr<const ExprOracle>& lower_value);

ParsedProblem parse_problem(const std::string& text);
/// Canonical serialization: fixed key order and shortest round-trip numbers,
/// so parse -> serialize -> parse is the identity on canonical files.
std::string serialize_problem(const ParsedProblem& p);

/// The combined program of the bilevel section as a problem file (explicit
/// system plus the originating bilevel data).
ordered_json reformulate_bilevel(ParsedProblem& p);

struct AnalysisReport {
  ordered_json machine;
  std::string text;
  int exit_code = 0;
};

/// Dispatch one command: check-cq, check-stationarity, error-bound,
/// reformulate-bilevel, penalty-solve, reproduce-example. Parameters and the
/// command name travel as a JSON object.
AnalysisReport run_command(ParsedProblem& p, const ordered_json& command);

}  // namespace mpccq::io
