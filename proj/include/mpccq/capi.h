/* C interface to the constraint-qualification toolkit.
 *
 * Problems travel as JSON text and are held behind an opaque handle; every
 * analysis returns machine-readable JSON plus a plain-text rendering. All
 * returned strings are owned by the library and must be released with
 * mpccq_string_free.
 */
#ifndef MPCCQ_CAPI_H
#define MPCCQ_CAPI_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mpccq_problem mpccq_problem;

typedef enum {
  MPCCQ_OK = 0,
  MPCCQ_ERROR = 1,       /* internal or numerical failure */
  MPCCQ_PARSE_ERROR = 2, /* malformed problem or command */
  MPCCQ_BAD_ARGUMENT = 3 /* null pointer or invalid handle */
} mpccq_status;

/* Library version, encoded as major*10000 + minor*100 + patch. */
int mpccq_version(void);

/* Parse a problem file. On success *out receives a handle to free with
 * mpccq_problem_free. */
mpccq_status mpccq_problem_parse(const char* json_text, mpccq_problem** out);

void mpccq_problem_free(mpccq_problem* problem);

/* Canonical serialization of the problem (round-trip stable). */
mpccq_status mpccq_problem_serialize(mpccq_problem* problem, char** json_out);

/* Run one analysis command, e.g.
 *   {"command":"check-cq","anchor":"xstar","tol":1e-8}
 * Either output pointer may be null when not wanted. On success, commands
 * that carry their own pass/fail meaning (reproduce-example) store it in
 * *exit_code_out (0 pass, 1 mismatch). */
mpccq_status mpccq_analyze(mpccq_problem* problem, const char* command_json, char** report_json,
                           char** report_text, int* exit_code_out);

void mpccq_string_free(char* s);

/* Message of the last failing call on this thread, or an empty string. */
const char* mpccq_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* MPCCQ_CAPI_H */
