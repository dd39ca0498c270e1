#ifndef SHAPING_HORDE_H
#define SHAPING_HORDE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SH_SCENARIO_TWO_SHAPINGS 0

#define SH_SCENARIO_THREE_SHAPINGS 1

#define SH_VOTING_RANK 0

#define SH_VOTING_MAJORITY 1

#define SH_VOTING_QSUM 2

typedef enum ShStatus {
  SH_STATUS_OK = 0,
  SH_STATUS_NULL_POINTER = 1,
  SH_STATUS_INVALID_ARGUMENT = 2,
  SH_STATUS_OUT_OF_RANGE = 3,
  SH_STATUS_DIVERGED = 4,
  SH_STATUS_PANIC = 5,
} ShStatus;

/**
 * Opaque Horde handle.
 */
typedef struct ShHorde ShHorde;

typedef struct ShState {
  double position;
  double velocity;
} ShState;

typedef struct ShTransition {
  struct ShState next;
  double reward;
  bool terminal;
} ShTransition;

typedef struct ShTTest {
  double t;
  double df;
  double p;
} ShTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sh_last_error_message(void);

/**
 * Start state of an episode.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `ShState`.
 */
enum ShStatus sh_mc_reset(struct ShState *out);

/**
 * One environment step. Actions: 0 reverse, 1 coast, 2 forward.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `ShTransition`.
 */
enum ShStatus sh_mc_step(struct ShState s, uint32_t action_index, struct ShTransition *out);

/**
 * Creates the Horde of a preset scenario with default parameters.
 *
 * # Safety
 * `out` must be null or point to writable memory for one pointer.
 */
enum ShStatus sh_horde_new(uint32_t scenario, struct ShHorde **out);

/**
 * Creates a Horde from experiment-config TOML text.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` as in `sh_horde_new`.
 */
enum ShStatus sh_horde_new_from_toml(const char *toml, struct ShHorde **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from `sh_horde_new*` not yet freed.
 */
void sh_horde_free(struct ShHorde *h);

/**
 * # Safety
 * `h` must be a live handle; `out` writable.
 */
enum ShStatus sh_horde_demon_count(const struct ShHorde *h, size_t *out);

/**
 * Learns from one behavior transition. `td_errors` (may be null) receives
 * one TD error per demon and must hold at least `len` values.
 *
 * # Safety
 * `h` must be a live handle; `td_errors` null or valid for `len` writes.
 */
enum ShStatus sh_horde_observe(struct ShHorde *h,
                               struct ShState from,
                               uint32_t action_index,
                               double reward,
                               struct ShState to,
                               bool terminal,
                               double behavior_prob,
                               double *td_errors,
                               size_t len);

/**
 * Clears every eligibility trace.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum ShStatus sh_horde_end_episode(struct ShHorde *h);

/**
 * Q values of one demon at `s`; `out` must hold at least 3 values.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for `len` writes.
 */
enum ShStatus sh_horde_q_values(const struct ShHorde *h,
                                size_t demon,
                                struct ShState s,
                                double *out,
                                size_t len);

/**
 * Greedy action of one demon, lowest index on ties.
 *
 * # Safety
 * `h` must be a live handle; `out` writable.
 */
enum ShStatus sh_horde_greedy_action(const struct ShHorde *h,
                                     size_t demon,
                                     struct ShState s,
                                     uint32_t *out);

/**
 * Ensemble action of demons 1.. under `voting` (`SH_VOTING_*`), lowest
 * index on ties.
 *
 * # Safety
 * `h` must be a live handle; `out` writable.
 */
enum ShStatus sh_horde_ensemble_action(const struct ShHorde *h,
                                       struct ShState s,
                                       uint32_t voting,
                                       uint32_t *out);

/**
 * Two-sided pooled-variance Student's t-test.
 *
 * # Safety
 * `a` and `b` must be valid for `na` and `nb` reads; `out` writable.
 */
enum ShStatus sh_t_test(const double *a,
                        size_t na,
                        const double *b,
                        size_t nb,
                        struct ShTTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHAPING_HORDE_H */
