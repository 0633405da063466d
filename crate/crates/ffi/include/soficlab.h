#ifndef SOFICLAB_H
#define SOFICLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Values 2 to 9 mirror the CLI exit codes.
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or an internal panic.
  SL_STATUS_USAGE = 1,
  SL_STATUS_SCHEMA = 2,
  SL_STATUS_BUDGET = 3,
  SL_STATUS_INVALID_ARGUMENT = 4,
  SL_STATUS_NOT_CERTIFIED = 5,
  SL_STATUS_INCONSISTENT = 6,
  SL_STATUS_BALL_MISMATCH = 7,
  SL_STATUS_ORACLE = 8,
  SL_STATUS_IO = 9,
} SlStatus;

// A validated model: group, constraint structure and potential.
typedef struct SlModel SlModel;

// A conditional-marginal oracle bound to a model and radius.
typedef struct SlOracle SlOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. Valid
// until the next failing call on the same thread.
const char *sl_last_error_message(void);

// Library version, a static string.
const char *sl_version(void);

// Parses a JSON model file body.
//
// # Safety
// `json` must be a NUL-terminated string and `model` a valid pointer.
enum SlStatus sl_model_from_json(const char *json, struct SlModel **model);

// Hardcore model on ℤ^d with activity `lambda`.
//
// # Safety
// `model` must be a valid pointer.
enum SlStatus sl_model_hardcore(uint32_t d, double lambda, struct SlModel **model);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void sl_model_free(struct SlModel *model);

// Alphabet size of a model, or 0 for null.
//
// # Safety
// `model` must be null or a live handle.
size_t sl_model_alphabet(const struct SlModel *model);

// `log Z_n` and `log Z_n / n` of the derived model on one sofic
// approximation. `builder` is `torus`, `folner` or `random_perm`;
// `method` is `auto`, `exact`, `transfer` or `mcmc`; `all_edges` selects
// enforcement on every edge.
//
// # Safety
// Strings must be NUL-terminated; output pointers must be valid.
enum SlStatus sl_pressure(const struct SlModel *model,
                          const char *builder,
                          size_t size,
                          const char *method,
                          bool all_edges,
                          uint64_t seed,
                          double *log_z,
                          double *pressure,
                          double *stderr);

// Builds an oracle for pins in `B_r`. `backend` is `transfer`, `ball` or
// `saw`; `pad` is ignored by `transfer`.
//
// # Safety
// `model` must be a live handle, `backend` NUL-terminated, `oracle` valid.
enum SlStatus sl_oracle_new(const struct SlModel *model,
                            const char *backend,
                            size_t r,
                            size_t pad,
                            struct SlOracle **oracle);

// Releases an oracle; null is ignored.
//
// # Safety
// `oracle` must come from this library and not be used afterwards.
void sl_oracle_free(struct SlOracle *oracle);

// Number of sites of the oracle's ball (the length of a pin vector).
//
// # Safety
// `oracle` must be null or a live handle.
size_t sl_oracle_ball_len(const struct SlOracle *oracle);

// Law of the symbol at the identity given pins in canonical ball order
// (`-1` for a free site). Writes `alphabet` probabilities to `probs`.
//
// # Safety
// `pins` must hold `n_pins` entries and `probs` `alphabet` entries.
enum SlStatus sl_oracle_conditional(const struct SlOracle *oracle,
                                    const int32_t *pins,
                                    size_t n_pins,
                                    double *probs,
                                    size_t alphabet);

// Kieffer-Pinsker pressure at the safe-symbol fixed point from `n`
// percolation pasts truncated at radius `r`.
//
// # Safety
// `oracle` must be a live handle; output pointers must be valid.
enum SlStatus sl_kp_fixed_point(const struct SlOracle *oracle,
                                size_t r,
                                size_t n,
                                uint64_t seed,
                                double *value,
                                double *stderr);

// Hardcore occupation probability of `root` on the graph with `n_vertices`
// vertices and `n_edges` edges given as `2·n_edges` endpoints. `pins` may
// be null, otherwise one entry per vertex: `-1` free, `0` empty,
// `1` occupied.
//
// # Safety
// Arrays must have the stated lengths; `marginal` must be valid.
enum SlStatus sl_saw_marginal(size_t n_vertices,
                              const uint32_t *edges,
                              size_t n_edges,
                              size_t root,
                              double lambda,
                              const int32_t *pins,
                              double *marginal);

// `λ_c(Δ)` for `Δ ≥ 3`.
//
// # Safety
// `lambda_c` must be valid.
enum SlStatus sl_weitz_threshold(uint32_t delta, double *lambda_c);

// Runs a JSON run configuration and returns the result record as JSON
// in `*record` (free with `sl_string_free`).
//
// # Safety
// `config` must be NUL-terminated and `record` valid.
enum SlStatus sl_run_json(const char *config, char **record);

// Releases a string returned by the library; null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void sl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFICLAB_H */
