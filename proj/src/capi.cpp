#include "mpccq/capi.h"

#include <cstring>
#include <string>

#include "mpccq/io.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mpccq_status fail(mpccq_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

}  // namespace

struct mpccq_problem {
  mpccq::io::ParsedProblem parsed;
};

extern "C" {

int mpccq_version(void) { return 10000; }

mpccq_status mpccq_problem_parse(const char* json_text, mpccq_problem** out) {
  if (!json_text || !out) return fail(MPCCQ_BAD_ARGUMENT, "null argument");
  *out = nullptr;
  try {
    auto handle = new mpccq_problem{mpccq::io::parse_problem(json_text)};
    *out = handle;
    g_last_error.clear();
    return MPCCQ_OK;
  } catch (const mpccq::io::ParseError& e) {
    return fail(MPCCQ_PARSE_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(MPCCQ_ERROR, e.what());
  }
}

void mpccq_problem_free(mpccq_problem* problem) { delete problem; }

mpccq_status mpccq_problem_serialize(mpccq_problem* problem, char** json_out) {
  if (!problem || !json_out) return fail(MPCCQ_BAD_ARGUMENT, "null argument");
  try {
    *json_out = dup_string(mpccq::io::serialize_problem(problem->parsed));
    g_last_error.clear();
    return MPCCQ_OK;
  } catch (const std::exception& e) {
    return fail(MPCCQ_ERROR, e.what());
  }
}

mpccq_status mpccq_analyze(mpccq_problem* problem, const char* command_json, char** report_json,
                           char** report_text, int* exit_code_out) {
  if (!problem || !command_json) return fail(MPCCQ_BAD_ARGUMENT, "null argument");
  try {
    mpccq::io::ordered_json cmd;
    try {
      cmd = mpccq::io::ordered_json::parse(command_json);
    } catch (const nlohmann::json::parse_error& e) {
      return fail(MPCCQ_PARSE_ERROR, std::string("invalid command JSON: ") + e.what());
    }
    auto rep = mpccq::io::run_command(problem->parsed, cmd);
    if (report_json) *report_json = dup_string(rep.machine.dump(2) + "\n");
    if (report_text) *report_text = dup_string(rep.text);
    if (exit_code_out) *exit_code_out = rep.exit_code;
    g_last_error.clear();
    return MPCCQ_OK;
  } catch (const mpccq::io::ParseError& e) {
    return fail(MPCCQ_PARSE_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(MPCCQ_ERROR, e.what());
  }
}

void mpccq_string_free(char* s) { delete[] s; }

const char* mpccq_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"
