/* C interface to the dvio core library.
 *
 * All functionality is exposed through opaque handles and integer status
 * codes; strings returned by the library stay owned by the handle they came
 * from (or, for dvio_last_error, by thread-local storage) and are valid
 * until the next call on that handle.
 */
#ifndef DVIO_H
#define DVIO_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dvio_status {
  DVIO_OK = 0,
  DVIO_ERR_INVALID_ARGUMENT = 1,
  DVIO_ERR_DIMENSION = 2,
  DVIO_ERR_MALFORMED_DATA = 3,
  DVIO_ERR_IO = 4,
  DVIO_ERR_NUMERIC = 5,
  DVIO_ERR_NO_CONVERGENCE = 6,
  DVIO_ERR_DEGENERATE = 7,
  DVIO_ERR_INTERNAL = 8
} dvio_status;

/* Flat key=value configuration; keys may repeat (waypoints). */
typedef struct dvio_config dvio_config;

/* Result of one command run: headline metrics plus a text summary. */
typedef struct dvio_run dvio_run;

const char* dvio_version(void);

/* Message for the most recent failing call on this thread. */
const char* dvio_last_error(void);

dvio_config* dvio_config_new(void);
void dvio_config_free(dvio_config* cfg);
dvio_status dvio_config_load_file(dvio_config* cfg, const char* path);
dvio_status dvio_config_set(dvio_config* cfg, const char* key, const char* value);
dvio_status dvio_config_append(dvio_config* cfg, const char* key, const char* value);
/* Returns NULL when the key is absent. */
const char* dvio_config_get(dvio_config* cfg, const char* key);

/* Commands. Each writes its artifacts (and config.echo) under the `out`
 * key of the configuration and allocates a run handle on success. */
dvio_status dvio_gen(const dvio_config* cfg, dvio_run** out_run);
dvio_status dvio_train(const dvio_config* cfg, dvio_run** out_run);
dvio_status dvio_eval(const dvio_config* cfg, dvio_run** out_run);
dvio_status dvio_bound(const dvio_config* cfg, dvio_run** out_run);
dvio_status dvio_fly(const dvio_config* cfg, dvio_run** out_run);
dvio_status dvio_report(const dvio_config* cfg, dvio_run** out_run);

void dvio_run_free(dvio_run* run);
/* Metric by name; `fallback` when the run did not produce it. */
double dvio_run_metric(const dvio_run* run, const char* name, double fallback);
int dvio_run_has_metric(const dvio_run* run, const char* name);
const char* dvio_run_summary(const dvio_run* run);

#ifdef __cplusplus
}
#endif

#endif /* DVIO_H */
