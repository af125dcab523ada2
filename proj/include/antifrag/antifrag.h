#ifndef ANTIFRAG_H
#define ANTIFRAG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ANTIFRAG_BUILDING)
#    define AF_API __declspec(dllexport)
#  else
#    define AF_API __declspec(dllimport)
#  endif
#else
#  define AF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct af_experiment af_experiment;

typedef enum af_status {
  AF_OK = 0,
  AF_E_INVALID_ARGUMENT = 1,
  AF_E_VALIDATION = 2,
  AF_E_ABORTED = 3,   /* outputs were written but some runs aborted */
  AF_E_IO = 4,
  AF_E_INTERNAL = 5
} af_status;

typedef enum af_mode {
  AF_MODE_CONFIG = 0,  /* pipeline named in the config */
  AF_MODE_RUN = 1,
  AF_MODE_SWEEP = 2,
  AF_MODE_CERTIFY = 3
} af_mode;

typedef struct af_plan {
  size_t sweep_environments;
  size_t horizon_environments;
  size_t rows; /* cells.csv data rows */
} af_plan;

AF_API const char* af_version(void);

/* Message of the last failed call on this thread; never NULL. */
AF_API const char* af_last_error(void);

AF_API af_status af_experiment_load(const char* path, af_experiment** out);
AF_API af_status af_experiment_parse(const char* json_text, af_experiment** out);
AF_API void af_experiment_free(af_experiment* exp);

AF_API af_status af_experiment_set_seed(af_experiment* exp, uint64_t seed);
AF_API af_status af_experiment_set_jobs(af_experiment* exp, size_t jobs);
AF_API af_status af_experiment_set_output_dir(af_experiment* exp, const char* dir);

AF_API af_status af_experiment_plan(const af_experiment* exp, af_mode mode, af_plan* out);

/* Runs the pipeline. *summary (optional) receives a text summary to be
   released with af_string_free, also when AF_E_ABORTED is returned. */
AF_API af_status af_experiment_execute(af_experiment* exp, af_mode mode, char** summary);

/* Normalized config JSON and its hash (16 hex digits). */
AF_API af_status af_experiment_config_json(const af_experiment* exp, char** out);
AF_API af_status af_experiment_config_hash(const af_experiment* exp, char** out);

/* Learners, environment families and defaults; as_json selects JSON output. */
AF_API af_status af_registry(int as_json, char** out);

/* Runs learners on a stored trace; exp may be NULL for every default learner
   at K = 1. *csv_out receives cells.csv-formatted text. */
AF_API af_status af_replay(const char* trace_path, const af_experiment* exp, char** csv_out);

AF_API void af_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
