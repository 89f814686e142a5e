#ifndef POLCHAN_H
#define POLCHAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PolchanStatus {
  POLCHAN_STATUS_OK = 0,
  POLCHAN_STATUS_NULL_POINTER = 1,
  /*
   Rejected input; mirrors CLI exit code 2.
   */
  POLCHAN_STATUS_VALIDATION = 2,
  /*
   Numerical failure; mirrors CLI exit code 3.
   */
  POLCHAN_STATUS_NUMERICAL = 3,
  POLCHAN_STATUS_PANIC = 4,
} PolchanStatus;

/*
 Opaque process matrix.
 */
typedef struct PolchanChannel PolchanChannel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message into `buf` (NUL-terminated, truncated to
 `len`). Returns the full message length excluding the terminator.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t polchan_last_error(char *buf, size_t len);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum PolchanStatus polchan_channel_identity(struct PolchanChannel **out);

/*
 Dephasing channel with probability `p` in [0, 1].

 # Safety
 `out` must be a valid pointer.
 */
enum PolchanStatus polchan_channel_dephasing(double p, struct PolchanChannel **out);

/*
 Four-crystal channel for wave-plate angles in degrees.

 # Safety
 `out` must be a valid pointer.
 */
enum PolchanStatus polchan_channel_four_crystal(double theta1_deg,
                                                double theta2_deg,
                                                double theta3_deg,
                                                struct PolchanChannel **out);

/*
 Soleil-Babinet dephaser at delay `delay_fs` for a Gaussian packet.

 # Safety
 `out` must be a valid pointer.
 */
enum PolchanStatus polchan_channel_sbc(double delay_fs,
                                       double wavelength_nm,
                                       double coherence_time_fs,
                                       struct PolchanChannel **out);

/*
 Builds a channel from a row-major 4×4 χ given as separate real and
 imaginary parts.

 # Safety
 `re` and `im` must each point to 16 readable doubles; `out` must be valid.
 */
enum PolchanStatus polchan_channel_from_chi(const double *re,
                                            const double *im,
                                            struct PolchanChannel **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `h` must come from this library and not be used afterwards.
 */
void polchan_channel_free(struct PolchanChannel *h);

/*
 Row-major χ.

 # Safety
 `h` must be a live handle; `re` and `im` must each hold 16 doubles.
 */
enum PolchanStatus polchan_channel_chi(const struct PolchanChannel *h, double *re, double *im);

/*
 χ eigenvalues in descending order.

 # Safety
 `h` must be a live handle; `out` must hold 4 doubles.
 */
enum PolchanStatus polchan_channel_eigenvalues(const struct PolchanChannel *h, double *out);

/*
 Signed singular values of the unital block.

 # Safety
 `h` must be a live handle; `out` must hold 3 doubles.
 */
enum PolchanStatus polchan_channel_d_vector(const struct PolchanChannel *h, double *out);

/*
 # Safety
 `a` and `b` must be live handles; `out` must be valid.
 */
enum PolchanStatus polchan_process_fidelity(const struct PolchanChannel *a,
                                            const struct PolchanChannel *b,
                                            double *out);

/*
 Wave-plate angles (degrees) that put the four-crystal channel on the
 dephasing locus at `theta1_deg`.

 # Safety
 `out` must hold 3 doubles.
 */
enum PolchanStatus polchan_dephasing_locus_angles(double theta1_deg, double *out);

/*
 Searches angles whose channel matches `target_d` (3 doubles). Writes the
 angles in degrees and the achieved fidelity.

 # Safety
 `target_d` and `angles_out` must hold 3 doubles; `fidelity_out` must be
 valid.
 */
enum PolchanStatus polchan_find_angles(const double *target_d,
                                       size_t restarts,
                                       uint64_t seed,
                                       double *angles_out,
                                       double *fidelity_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLCHAN_H */
