#ifndef RSFC_H
#define RSFC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsfcStatus {
  RSFC_STATUS_OK = 0,
  // The planner ran but found no verified trajectory.
  RSFC_STATUS_UNSOLVED = 2,
  RSFC_STATUS_INVALID_INPUT = 3,
  RSFC_STATUS_INTERNAL = 4,
  RSFC_STATUS_NULL_POINTER = 5,
  // Agent index or time out of range.
  RSFC_STATUS_OUT_OF_RANGE = 6,
  RSFC_STATUS_PANIC = 7,
} RsfcStatus;

// Result of one planner run, successful or not.
typedef struct RsfcPlan RsfcPlan;

// A validated map plus mission.
typedef struct RsfcScenario RsfcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Empty if none. Owned by
// the library; valid until the next call on the same thread.
const char *rsfc_last_error(void);

// Library version as a static string.
const char *rsfc_version(void);

// Parses and validates a map and a mission, both as JSON text.
//
// # Safety
// `map_json` and `scenario_json` must be NUL-terminated strings and `out`
// a valid pointer to writable storage.
enum RsfcStatus rsfc_scenario_from_json(const char *map_json,
                                        const char *scenario_json,
                                        struct RsfcScenario **out);

// Random forest world with default planner settings: a 10 x 10 x 2.5 m map,
// `n_pillars` square pillars and `n_agents` agents on a ring with mirrored
// goals.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum RsfcStatus rsfc_scenario_generate_forest(uint64_t seed,
                                              size_t n_agents,
                                              size_t n_pillars,
                                              double radius,
                                              struct RsfcScenario **out);

// Number of agents, or 0 for a null handle.
//
// # Safety
// `s` must be null or a live handle from this library.
size_t rsfc_scenario_agent_count(const struct RsfcScenario *s);

// Turns the relative-corridor time delay on or off.
//
// # Safety
// `s` must be null or a live handle from this library.
enum RsfcStatus rsfc_scenario_set_time_delay(struct RsfcScenario *s, bool enabled);

// # Safety
// `s` must be null or a handle from this library not yet freed.
void rsfc_scenario_free(struct RsfcScenario *s);

// Runs the full planner. A plan handle is returned in `out` whenever the
// planner ran, including when it failed, so the failing stage can be
// queried; the return value says whether a verified plan was found.
//
// # Safety
// `s` must be a live scenario handle and `out` a valid pointer.
enum RsfcStatus rsfc_plan(const struct RsfcScenario *s, struct RsfcPlan **out);

// Name of the failing stage, or an empty string for a successful plan.
//
// # Safety
// `p` must be a live plan handle.
const char *rsfc_plan_failed_stage(const struct RsfcPlan *p);

// Machine-readable failure reason, or an empty string.
//
// # Safety
// `p` must be a live plan handle.
const char *rsfc_plan_failure_reason(const struct RsfcPlan *p);

// Duration of the time-scaled plan in seconds.
//
// # Safety
// `p` must be a live plan handle and `out` a valid pointer.
enum RsfcStatus rsfc_plan_duration(const struct RsfcPlan *p, double *out);

// Optimal cost of the unscaled trajectories.
//
// # Safety
// `p` must be a live plan handle and `out` a valid pointer.
enum RsfcStatus rsfc_plan_cost(const struct RsfcPlan *p, double *out);

// Position, velocity and acceleration of agent `agent` (index into the
// scenario's agent list) at time `t`. Each output points to 3 doubles; any
// of them may be null.
//
// # Safety
// `p` must be a live plan handle; non-null outputs must hold 3 doubles.
enum RsfcStatus rsfc_plan_sample(const struct RsfcPlan *p,
                                 size_t agent,
                                 double t,
                                 double *pos,
                                 double *vel,
                                 double *acc);

// The plan document (trajectories, corridors, solver statistics and the
// verification report) as JSON. Free the string with `rsfc_string_free`.
//
// # Safety
// `p` must be a live plan handle and `out` a valid pointer.
enum RsfcStatus rsfc_plan_to_json(const struct RsfcPlan *p, char **out);

// # Safety
// `p` must be null or a plan handle not yet freed.
void rsfc_plan_free(struct RsfcPlan *p);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void rsfc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSFC_H */
