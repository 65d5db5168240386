/* C interface to the cafe toolkit. */
#ifndef CAFE_CAFE_H
#define CAFE_CAFE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CAFE_API __declspec(dllexport)
#else
#define CAFE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cafe_status {
    CAFE_OK = 0,
    CAFE_E_INVALID_ARGUMENT = 1,
    CAFE_E_IO = 2,
    CAFE_E_PARSE = 3,
    CAFE_E_JUDGE = 4,
    CAFE_E_JUDGE_FORMAT = 5,
    CAFE_E_NOT_FOUND = 6,
    CAFE_E_INTERNAL = 7,
    /* The run finished but too many records were flagged. */
    CAFE_E_THRESHOLD = 8
} cafe_status;

typedef struct cafe_dataset cafe_dataset;
typedef struct cafe_judge cafe_judge;
typedef struct cafe_trace cafe_trace;
typedef struct cafe_service cafe_service;

CAFE_API const char* cafe_version(void);
/* Message of the last failed call on this thread; empty when none. */
CAFE_API const char* cafe_last_error(void);
CAFE_API const char* cafe_status_name(cafe_status status);
/* Frees strings returned through char** out-parameters. */
CAFE_API void cafe_string_free(char* s);

/* Datasets */
CAFE_API cafe_status cafe_dataset_load(const char* path, cafe_dataset** out);
CAFE_API size_t cafe_dataset_size(const cafe_dataset* ds);
/* Sample at `index` as a JSON object. */
CAFE_API cafe_status cafe_dataset_sample_json(const cafe_dataset* ds, size_t index, char** out_json);
CAFE_API void cafe_dataset_free(cafe_dataset* ds);

/* Traces */
CAFE_API cafe_status cafe_trace_parse(const char* text, int strict, cafe_trace** out);
/* 1 when the parse produced a trace (always 1 in lenient mode). */
CAFE_API int cafe_trace_ok(const cafe_trace* t);
CAFE_API size_t cafe_trace_step_count(const cafe_trace* t);
CAFE_API size_t cafe_trace_token_len(const cafe_trace* t);
/* {"ok", "diagnostics", "perception", "steps", "review", "final_answer", "token_len"} */
CAFE_API cafe_status cafe_trace_to_json(const cafe_trace* t, char** out_json);
CAFE_API cafe_status cafe_trace_canonicalize(const cafe_trace* t, char** out_text);
CAFE_API void cafe_trace_free(cafe_trace* t);

/* Judges */
/* policy: "rubric_hash" or "echo_fixture"; fixture_path may be NULL for rubric_hash. */
CAFE_API cafe_status cafe_judge_open_mock(const char* policy, uint64_t seed, const char* fixture_path,
                                          cafe_judge** out);
/* base_url NULL falls back to JUDGE_BASE_URL; the token always comes from JUDGE_API_KEY. */
CAFE_API cafe_status cafe_judge_open_http(const char* base_url, const char* model, double timeout_s,
                                          int max_retries, cafe_judge** out);
CAFE_API cafe_status cafe_judge_complete(cafe_judge* j, const char* prompt, char** out_reply);
CAFE_API uint64_t cafe_judge_calls(const cafe_judge* j);
CAFE_API void cafe_judge_free(cafe_judge* j);

/* Reward arithmetic */
typedef struct cafe_weights {
    double theta, mu, alpha, beta, gamma, delta;
} cafe_weights;

typedef struct cafe_components {
    double perception;
    const double* step_scores;
    size_t n_steps;
    double all_reason;
    double review;
    int acc;
    int format;
} cafe_components;

typedef struct cafe_breakdown {
    double r_perception, r_spr, r_rea, r_format, r_all;
} cafe_breakdown;

CAFE_API cafe_weights cafe_weights_default(void);
CAFE_API cafe_status cafe_combine(const cafe_components* scores, const cafe_weights* w, cafe_breakdown* out);
/* Scores one trace against a sample with the judge; writes the breakdown JSON. */
CAFE_API cafe_status cafe_score_trace(const char* sample_json, const char* trace_text, cafe_judge* j,
                                      const cafe_weights* w, int score_malformed, char** out_json);

/* Metrics */
typedef struct cafe_counts {
    size_t n_mat, n_hal, n_misuse, n_neu, n_miss;
} cafe_counts;

/* Undefined ratios are reported as NaN. */
typedef struct cafe_metrics {
    size_t n_pred, n_tgt;
    double acc_per, err_per, err_use, err_omit;
} cafe_metrics;

CAFE_API cafe_status cafe_compute_metrics(const cafe_counts* c, cafe_metrics* out);
CAFE_API cafe_status cafe_pearson(const double* xs, const double* ys, size_t n, double* r, double* p);

/* Template rendering; bindings is a JSON object of strings. */
CAFE_API cafe_status cafe_render_template(const char* name, const char* bindings_json, char** out_text);

/* Batch commands. Options are a JSON object whose keys mirror the CLI flags
 * (see README). The run summary is written to out_summary_json when non-NULL. */
CAFE_API cafe_status cafe_cmd_extract(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_reward(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_eval(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_filter_difficulty(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_filter_qa(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_filter_cot(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_gen_parse(const char* options_json, char** out_summary_json);
CAFE_API cafe_status cafe_cmd_balance(const char* options_json, char** out_summary_json);

/* Reward service */
CAFE_API cafe_status cafe_service_start(const char* options_json, cafe_service** out, int* out_port);
CAFE_API cafe_status cafe_service_stop(cafe_service* s);
CAFE_API void cafe_service_free(cafe_service* s);

#ifdef __cplusplus
}
#endif

#endif /* CAFE_CAFE_H */
