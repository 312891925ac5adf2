/* C interface for executing pomcgs policy files. */

#ifndef POMCGS_H
#define POMCGS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define POMCGS_OK 0

/**
 * The controller has no edge for this observation; switch to the blind action.
 */
#define POMCGS_OPEN_LEAF 1

#define POMCGS_ERR_NULL_ARGUMENT -1

#define POMCGS_ERR_IO -2

#define POMCGS_ERR_PARSE -3

#define POMCGS_ERR_UNKNOWN_NODE -4

#define POMCGS_ERR_WRONG_ACTION_KIND -5

#define POMCGS_ERR_NO_BLIND_ACTION -6

#define POMCGS_ERR_BUFFER_TOO_SMALL -7

#define POMCGS_ACTION_DISCRETE 0

#define POMCGS_ACTION_CONTINUOUS 1

/**
 * Opaque handle to a loaded policy.
 */
typedef struct PomcgsPolicy PomcgsPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a policy file from `path` into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int32_t pomcgs_policy_load(const char *path, struct PomcgsPolicy **out);

/**
 * Release a handle returned by `pomcgs_policy_load`. NULL is a no-op.
 *
 * # Safety
 * `policy` must be NULL or a pointer from `pomcgs_policy_load`, freed once.
 */
void pomcgs_policy_free(struct PomcgsPolicy *policy);

/**
 * # Safety
 * `policy` must be a live handle.
 */
uint64_t pomcgs_policy_node_count(const struct PomcgsPolicy *policy);

/**
 * # Safety
 * `policy` must be a live handle.
 */
uint64_t pomcgs_policy_start_node(const struct PomcgsPolicy *policy);

/**
 * Discount factor of the policy's source problem.
 *
 * # Safety
 * `policy` must be a live handle.
 */
double pomcgs_policy_gamma(const struct PomcgsPolicy *policy);

/**
 * Copy the model fingerprint into `buf` (NUL-terminated); `*len` holds the
 * fingerprint length (excluding NUL) on return.
 *
 * # Safety
 * `policy` must be live; `buf` must hold `cap` writable bytes.
 */
int32_t pomcgs_policy_fingerprint(const struct PomcgsPolicy *policy,
                                  char *buf,
                                  size_t cap,
                                  size_t *len);

/**
 * Kind of the node's committed action, written to `*kind`
 * (`POMCGS_ACTION_DISCRETE` or `POMCGS_ACTION_CONTINUOUS`). Returns
 * `POMCGS_OPEN_LEAF` when the node has no committed action.
 *
 * # Safety
 * `policy` must be live; `kind` must be a valid pointer.
 */
int32_t pomcgs_node_action_kind(const struct PomcgsPolicy *policy, uint64_t node, int32_t *kind);

/**
 * Committed discrete action index of a node.
 *
 * # Safety
 * `policy` must be live; `action` must be a valid pointer.
 */
int32_t pomcgs_node_action_discrete(const struct PomcgsPolicy *policy,
                                    uint64_t node,
                                    uint64_t *action);

/**
 * Committed continuous action of a node, copied into `coords`; `*dim` holds
 * the action dimension on return.
 *
 * # Safety
 * `policy` must be live; `coords` must hold `cap` doubles; `dim` valid.
 */
int32_t pomcgs_node_action_continuous(const struct PomcgsPolicy *policy,
                                      uint64_t node,
                                      double *coords,
                                      size_t cap,
                                      size_t *dim);

/**
 * Blind fallback action (always discrete), used after an open leaf.
 *
 * # Safety
 * `policy` must be live; `action` must be a valid pointer.
 */
int32_t pomcgs_blind_action_discrete(const struct PomcgsPolicy *policy, uint64_t *action);

/**
 * Follow the controller from `node` under a discrete observation. On
 * `POMCGS_OK`, `*next` holds the successor node; `POMCGS_OPEN_LEAF` means
 * the caller should switch to the blind action permanently.
 *
 * # Safety
 * `policy` must be live; `next` must be a valid pointer.
 */
int32_t pomcgs_step_discrete(const struct PomcgsPolicy *policy,
                             uint64_t node,
                             uint64_t observation,
                             uint64_t *next);

/**
 * Follow the controller from `node` under a continuous observation vector.
 *
 * # Safety
 * `policy` must be live; `observation` must hold `dim` doubles; `next` valid.
 */
int32_t pomcgs_step_continuous(const struct PomcgsPolicy *policy,
                               uint64_t node,
                               const double *observation,
                               size_t dim,
                               uint64_t *next);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POMCGS_H */
