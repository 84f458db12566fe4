#ifndef GDLN_H
#define GDLN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GdlnStatus {
  GDLN_STATUS_OK = 0,
  GDLN_STATUS_NULL_POINTER = 1,
  GDLN_STATUS_INVALID_ARGUMENT = 2,
  GDLN_STATUS_DIVERGED = 3,
  GDLN_STATUS_OUT_OF_RANGE = 4,
  GDLN_STATUS_IO = 5,
  /*
   A Rust panic was caught at the boundary.
   */
  GDLN_STATUS_INTERNAL = 6,
} GdlnStatus;

typedef struct GdlnDataset GdlnDataset;

typedef struct GdlnNetwork GdlnNetwork;

typedef struct GdlnTrajectory GdlnTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *gdln_last_error_message(void);

/*
 The linear/xor gating crossover margin.
 */
double gdln_crossover_delta(void);

/*
 Closed-form strength of one mode at time `t` (epochs).

 # Safety
 `out` must be null or point to writable memory for one `double`.
 */
enum GdlnStatus gdln_mode_strength(double s,
                                   double d,
                                   double a0,
                                   double tau,
                                   double t,
                                   double *out);

/*
 Builds a task dataset from a name such as `xor(0.5)`, `hierarchy(8)` or `context3`.

 # Safety
 `task` must be a NUL-terminated string; `out` must be writable.
 */
enum GdlnStatus gdln_dataset_new(const char *task, struct GdlnDataset **out);

/*
 # Safety
 `ds` must be a live dataset handle; the out pointers may be null.
 */
enum GdlnStatus gdln_dataset_dims(const struct GdlnDataset *ds,
                                  size_t *n_inputs,
                                  size_t *n_targets,
                                  size_t *n_datapoints);

/*
 # Safety
 `ds` must be null or a handle from [`gdln_dataset_new`] not yet freed.
 */
void gdln_dataset_free(struct GdlnDataset *ds);

/*
 Builds a gated network (`linear`, `xor_linear`, `xor_pointwise`,
 `contextual(C,k)`, `depth2_contextual(C)`) over a copy of `ds`.

 # Safety
 `preset` must be a NUL-terminated string, `ds` a live handle, `out` writable.
 */
enum GdlnStatus gdln_network_new(const char *preset,
                                 const struct GdlnDataset *ds,
                                 size_t hidden_width,
                                 struct GdlnNetwork **out);

/*
 Current training loss of the network on its dataset.

 # Safety
 `net` must be a live handle and `out` writable.
 */
enum GdlnStatus gdln_network_loss(const struct GdlnNetwork *net, double *out);

/*
 Reinitializes with Gaussian weights of std `init_std` and trains for
 `epochs` full-batch steps, recording the loss every `record_every` epochs.

 # Safety
 `net` must be a live handle and `out` writable.
 */
enum GdlnStatus gdln_network_train(struct GdlnNetwork *net,
                                   double learning_rate,
                                   size_t epochs,
                                   double init_std,
                                   uint64_t seed,
                                   size_t record_every,
                                   struct GdlnTrajectory **out);

/*
 # Safety
 `net` must be null or a handle from [`gdln_network_new`] not yet freed.
 */
void gdln_network_free(struct GdlnNetwork *net);

/*
 # Safety
 `traj` must be a live handle and `out` writable.
 */
enum GdlnStatus gdln_trajectory_len(const struct GdlnTrajectory *traj, size_t *out);

/*
 Epoch and loss of record `index`.

 # Safety
 `traj` must be a live handle; `epoch` and `loss` must be writable.
 */
enum GdlnStatus gdln_trajectory_get(const struct GdlnTrajectory *traj,
                                    size_t index,
                                    double *epoch,
                                    double *loss);

/*
 # Safety
 `traj` must be null or a handle from [`gdln_network_train`] not yet freed.
 */
void gdln_trajectory_free(struct GdlnTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GDLN_H */
