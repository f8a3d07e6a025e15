/* C interface to the bicsearch library.
 *
 * Every function returns a bics_status. On failure, bics_last_error() holds a
 * message for the calling thread until its next call into the library.
 * Strings returned through `char**` are owned by the caller and released with
 * bics_string_free(). Structured results are UTF-8 JSON documents.
 */
#ifndef BICSEARCH_H
#define BICSEARCH_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define BICS_API __attribute__((visibility("default")))
#else
#define BICS_API
#endif

typedef enum bics_status {
  BICS_OK = 0,
  BICS_INVALID_ARGUMENT,
  BICS_UNKNOWN_COMMIT,
  BICS_REPO_ACCESS,
  BICS_FILE_ABSENT_AT_REVISION,
  BICS_LINE_OUT_OF_RANGE,
  BICS_BLAMELESS_INPUT,
  BICS_TEMPORAL_VIOLATION,
  BICS_MALFORMED_DOCUMENT,
  BICS_UNKNOWN_NODE,
  BICS_BUDGET_EXHAUSTED,
  BICS_POLICY_FAILURE,
  BICS_AUTH_FAILURE,
  BICS_RATE_LIMITED,
  BICS_MALFORMED_RESPONSE,
  BICS_CASSETTE_MISS,
  BICS_KEY_MISMATCH,
  BICS_DATASET_FORMAT,
  BICS_IO,
  BICS_INTERNAL
} bics_status;

typedef struct bics_repo bics_repo;
typedef struct bics_config bics_config;

BICS_API const char* bics_version(void);
BICS_API const char* bics_status_name(bics_status status);
BICS_API const char* bics_last_error(void);
BICS_API void bics_string_free(char* s);

/* Run configuration. Defaults: max_depth 100, candidate_cap 200, top_k 20,
 * max_steps 50, max_diff_reads 3, policy "deterministic", workers 1.
 * Keys: max_depth, candidate_cap, top_k, sanitize (true/false), max_steps,
 * max_diff_reads, policy (deterministic/replay/llm), cassette, workers,
 * repos_dir, base_dir, cache_dir. Endpoint settings and the API key are read
 * from the environment only. */
BICS_API bics_status bics_config_new(bics_config** out);
BICS_API void bics_config_free(bics_config* cfg);
BICS_API bics_status bics_config_set(bics_config* cfg, const char* key, const char* value);
/* {"digest": "...", "config": {...}} */
BICS_API bics_status bics_config_describe(const bics_config* cfg, char** out_json);

/* A repository handle is confined to one thread at a time. */
BICS_API bics_status bics_repo_open(const char* path, bics_repo** out);
BICS_API void bics_repo_close(bics_repo* repo);

/* Full pipeline for one fix. Writes the transcript when `transcript_path` is
 * non-null. Result: the decision with kind, used_fallback_blame and the
 * config digest. */
BICS_API bics_status bics_identify(bics_repo* repo, const char* bfc, const bics_config* cfg,
                                   const char* transcript_path, char** out_json);

/* Exported graph document for one fix. */
BICS_API bics_status bics_graph_export(bics_repo* repo, const char* bfc, const bics_config* cfg, char** out_json);

/* Categorizes every ground-truth pair of the dataset.
 * Result: {"table", "records", "distribution", "depth_coverage", "dataset_errors"}. */
BICS_API bics_status bics_categorize(const char* dataset_path, const bics_config* cfg, char** out_json);

/* Runs one ablation ("blame-only", "blame-fallback", "tkg-only",
 * "agent-only", "full") over the dataset. With `by_category` nonzero the true
 * positives are broken down by ground-truth category.
 * Result: {"report", "records" (JSON lines), "table", "dataset_errors"}. */
BICS_API bics_status bics_evaluate(const char* dataset_path, const bics_config* cfg, const char* ablation,
                                   int by_category, char** out_json);

/* Runs a comma-separated list of ablations; the last is the reference for the
 * paired tests. Result: {"runs", "table", "dataset_errors"}. */
BICS_API bics_status bics_ablate(const char* dataset_path, const bics_config* cfg, const char* ablations,
                                 char** out_json);

/* Clones or updates the remote repositories named by the dataset into the
 * configured repos_dir. Result: {"repos": [...], "dataset_errors"}. */
BICS_API bics_status bics_fetch(const char* dataset_path, const bics_config* cfg, char** out_json);

BICS_API bics_status bics_sanitize_message(const char* message, char** out);

#ifdef __cplusplus
}
#endif

#endif
