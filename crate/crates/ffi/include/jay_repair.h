#ifndef JAY_REPAIR_H
#define JAY_REPAIR_H

#include <stdbool.h>
#include <stdint.h>

typedef enum JayStatus {
  JAY_STATUS_OK = 0,
  JAY_STATUS_NULL_ARGUMENT = 1,
  JAY_STATUS_INVALID_UTF8 = 2,
  // A bad argument value, such as an unknown critic or a zero beam.
  JAY_STATUS_USAGE = 3,
  // Malformed input data: bad JSON, an unreadable checkpoint, a region outside the program.
  JAY_STATUS_DATA = 4,
  JAY_STATUS_IO = 5,
  JAY_STATUS_PANIC = 6,
} JayStatus;

// A loaded fixer model with its vocabulary.
typedef struct JayFixer JayFixer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the last failure on this thread, or null. Valid until the
// next failing call on this thread; do not free.
const char *jay_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or a string returned by this library that has not been freed.
void jay_string_free(char *s);

// Parse and typecheck `source`. Writes a JSON array of diagnostics (empty
// when the program compiles) to `diagnostics_out`.
//
// # Safety
// `source` is a nul-terminated string; `diagnostics_out` is valid for writes.
enum JayStatus jay_check_program(const char *source, char **diagnostics_out);

// Compile `source` and run the JSON test suite with the given step budget.
// Writes the test report as JSON. A program that does not compile is a data error.
//
// # Safety
// String arguments are nul-terminated; `report_out` is valid for writes.
enum JayStatus jay_run_tests(const char *source,
                             const char *suite_json,
                             uint64_t fuel,
                             char **report_out);

// Judge a candidate with a critic (`none`, `compiler` or `tests`). With
// `buggy` false the critic accepts correct code, otherwise buggy code.
//
// # Safety
// String arguments are nul-terminated; `accept_out` is valid for writes.
enum JayStatus jay_judge(const char *source,
                         const char *suite_json,
                         const char *critic,
                         bool buggy,
                         uint64_t fuel,
                         bool *accept_out);

// Load a fixer checkpoint and the vocabulary it was trained with.
//
// # Safety
// Paths are nul-terminated; `out` is valid for writes.
enum JayStatus jay_fixer_load(const char *checkpoint_path,
                              const char *vocab_path,
                              struct JayFixer **out);

// Replace `line_count` lines starting at 1-based `start_line` with each of
// `beam` decoded candidates. Writes a JSON array of
// `{rank, log_prob, replacement, text, region}` objects in beam order.
//
// # Safety
// `fixer` comes from [`jay_fixer_load`]; `source` is nul-terminated;
// `candidates_out` is valid for writes.
enum JayStatus jay_fixer_repair(const struct JayFixer *fixer,
                                const char *source,
                                uint32_t start_line,
                                uint32_t line_count,
                                uint32_t beam,
                                char **candidates_out);

// Release a fixer. Null is ignored.
//
// # Safety
// `fixer` is null or comes from [`jay_fixer_load`] and has not been freed.
void jay_fixer_free(struct JayFixer *fixer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JAY_REPAIR_H */
