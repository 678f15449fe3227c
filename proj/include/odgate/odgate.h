// Copyright 2026 The odgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ODGATE_ODGATE_H_
#define ODGATE_ODGATE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(ODGATE_BUILDING_LIBRARY)
#define ODG_API __attribute__((visibility("default")))
#else
#define ODG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum odg_status {
  ODG_OK = 0,
  ODG_ERR_INVALID_ARGUMENT = 1,
  ODG_ERR_DECODE = 2,
  ODG_ERR_EMPTY_IMAGE = 3,
  ODG_ERR_TOO_FEW_SAMPLES = 4,
  ODG_ERR_DEGENERATE_FIT = 5,
  ODG_ERR_NON_FINITE = 6,
  ODG_ERR_NORM_ZERO = 7,
  ODG_ERR_EMBEDDER_UNAVAILABLE = 8,
  ODG_ERR_DIMENSION_MISMATCH = 9,
  ODG_ERR_MALFORMED_RESPONSE = 10,
  ODG_ERR_INSUFFICIENT_REFERENCE = 11,
  ODG_ERR_SCHEMA_VERSION_MISMATCH = 12,
  ODG_ERR_INVARIANT_VIOLATION = 13,
  ODG_ERR_IO = 14,
  ODG_ERR_PROJECT_NOT_FOUND = 15,
  ODG_ERR_DUPLICATE_NAME = 16,
  ODG_ERR_FIT_ALREADY_RUNNING = 17,
  ODG_ERR_NO_ACTIVE_PACK = 18,
  ODG_ERR_RECORD_NOT_FOUND = 19,
  ODG_ERR_JOB_NOT_FOUND = 20,
  ODG_ERR_INVALID_LABEL = 21,
  ODG_ERR_INVALID_TAU = 22,
  ODG_ERR_ADDRESS_IN_USE = 23,
  ODG_ERR_INTERNAL = 24
} odg_status;

#define ODG_FEATURE_COUNT 9

ODG_API const char* odg_version(void);
// "DecodeError", "InvalidTau", ... ; "OK" for ODG_OK.
ODG_API const char* odg_status_name(odg_status status);
// Detail of the last failure on the calling thread; empty after success.
ODG_API const char* odg_last_error(void);
// Feature name for index 0..ODG_FEATURE_COUNT-1, NULL otherwise.
ODG_API const char* odg_feature_name(int index);
ODG_API void odg_free_string(char* s);

typedef struct odg_pack odg_pack;

typedef struct odg_fit_options {
  double tau;
  uint64_t seed;
  double split_fraction;
  int k_max;
  const int* r_candidates;  // NULL: defaults
  size_t n_r_candidates;
  int full_covariance;
  int combine_and;
  int em_max_iter;
  double em_rel_tol;
  int em_n_init;
  const char* embedder_url;  // NULL: built-in test embedder
  int embedder_dimension;
  uint64_t embedder_seed;
  int embed_timeout_ms;
  const char* created_at;  // NULL: 1970-01-01T00:00:00Z
} odg_fit_options;

ODG_API void odg_fit_options_init(odg_fit_options* options);

// Undecodable files are skipped and counted in `n_skipped` (may be NULL).
ODG_API odg_status odg_pack_fit_files(const char* const* paths, size_t n_paths,
                                      const odg_fit_options* options, odg_pack** out,
                                      size_t* n_skipped);
ODG_API odg_status odg_pack_load_file(const char* path, odg_pack** out);
ODG_API odg_status odg_pack_load_text(const char* text, size_t length, odg_pack** out);
ODG_API odg_status odg_pack_save_file(const odg_pack* pack, const char* path);
// Canonical serialized form; release with odg_free_string.
ODG_API odg_status odg_pack_to_text(const odg_pack* pack, char** out);
ODG_API odg_status odg_pack_rethreshold(const odg_pack* pack, double tau, odg_pack** out);
ODG_API void odg_pack_free(odg_pack* pack);

typedef struct odg_pack_summary {
  int pack_version;
  double tau;
  int combine_and;
  int n_reference;
  int n_fit;
  int n_holdout;
  int k;
  int r_star;
  int dimension;
  double gmm_loglik_threshold;
  double recon_loss_threshold;
} odg_pack_summary;

ODG_API odg_status odg_pack_get_summary(const odg_pack* pack, odg_pack_summary* out);

typedef struct odg_verdict {
  double gmm_loglik;
  double gmm_margin;
  int gmm_flag;
  int has_embedding;  // 0 when degraded: the three fields below are unset
  double recon_loss;
  double embed_margin;
  int embed_flag;
  int outlier;
  int degraded;
  double features[ODG_FEATURE_COUNT];
} odg_verdict;

// Safe to call concurrently on one pack.
ODG_API odg_status odg_score_file(const odg_pack* pack, const char* path, odg_verdict* out);
ODG_API odg_status odg_score_buffer(const odg_pack* pack, const uint8_t* data, size_t length,
                                    odg_verdict* out);

// r-sweep over embeddings of two image sets. Writes a JSON document with
// the table and r_star. `candidates` NULL: defaults.
ODG_API odg_status odg_sweep_files(const char* const* train_paths, size_t n_train,
                                   const char* const* test_paths, size_t n_test, double tau,
                                   const int* candidates, size_t n_candidates,
                                   const odg_fit_options* embedder, char** out_json);

// Synthetic benchmark. `corpus_spec_json` NULL: default corpus.
ODG_API odg_status odg_bench_run(const char* corpus_spec_json, double tau,
                                 const odg_fit_options* options, char** report_json);
ODG_API odg_status odg_corpus_export(const char* corpus_spec_json, const char* dir,
                                     size_t* n_written);

typedef struct odg_service odg_service;

typedef struct odg_service_options {
  const char* host;
  int port;  // 0 picks a free port
  const char* data_dir;
  const char* embedder_url;  // NULL: built-in test embedder
  int embedder_dimension;
  int max_in_flight;
  int embed_timeout_ms;
  const char* api_token;
  const char* static_dir;
  int max_records;
} odg_service_options;

ODG_API void odg_service_options_init(odg_service_options* options);
ODG_API odg_status odg_service_start(const odg_service_options* options, odg_service** out);
ODG_API int odg_service_port(const odg_service* service);
ODG_API odg_status odg_service_stop(odg_service* service);
// Blocks until odg_service_stop is called from another thread.
ODG_API void odg_service_wait(odg_service* service);
ODG_API void odg_service_free(odg_service* service);

#ifdef __cplusplus
}
#endif

#endif  // ODGATE_ODGATE_H_
