/* C interface to the sasfield laboratory.
 *
 * Handles are opaque; create them with the constructors and release them
 * with the matching _free (freeing NULL is a no-op).  Functions returning
 * int32_t yield 0 on success or a nonzero code mirroring the CLI exit
 * codes: 2 configuration / invalid argument, 3 resource or budget, 4 data
 * or numeric range, 70 internal panic.  After a failure, sas_last_error()
 * returns a thread-local message.  Strings written to char** out-parameters
 * are owned by the caller and released with sas_string_free. */

#ifndef SASFIELD_H
#define SASFIELD_H

/* Generated by cbindgen from the sasfield-capi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SAS_OK 0

#define SAS_ERR_CONFIG 2

#define SAS_ERR_RESOURCE 3

#define SAS_ERR_DATA 4

#define SAS_ERR_PANIC 70

/*
 A parsed and validated experiment configuration.
 */
typedef struct SasConfig SasConfig;

/*
 A prepared simulator: kernel, lattice and calibrated series plan.
 */
typedef struct SasSimulator SasSimulator;

/*
 A result table produced by a run.
 */
typedef struct SasTable SasTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Version of the library, as a static string.
 */
const char *sas_version(void);

/*
 Message of the last failure on this thread ("" when none).  The pointer
 stays valid until the next failing call on the same thread.
 */
const char *sas_last_error(void);

/*
 Parse a configuration in the CLI's `section.key = value` format.

 # Safety
 `text` must be NUL-terminated; `out` must point to writable storage.
 */
int32_t sas_config_parse(const char *text, struct SasConfig **out);

/*
 Write the 16-hex-digit config hash into `buf` (needs room for 17 bytes).

 # Safety
 `config` must be a live handle; `buf` must hold at least `len` bytes.
 */
int32_t sas_config_hash(const struct SasConfig *config, char *buf, size_t len);

/*
 # Safety
 `config` must come from `sas_config_parse` and not be freed twice.
 */
void sas_config_free(struct SasConfig *config);

/*
 Run the configured operation.  `jobs` = 0 uses all cores.

 # Safety
 `config` must be a live handle; `out` must point to writable storage.
 */
int32_t sas_run(const struct SasConfig *config, size_t jobs, struct SasTable **out);

/*
 Number of rows in the table.

 # Safety
 `table` must be a live handle.
 */
size_t sas_table_row_count(const struct SasTable *table);

/*
 Render the table as CSV; the caller owns the string.

 # Safety
 `table` must be a live handle; `out` must point to writable storage.
 */
int32_t sas_table_to_csv(const struct SasTable *table, char **out);

/*
 Parse a CSV result table previously produced by this library.

 # Safety
 `text` must be NUL-terminated; `out` must point to writable storage.
 */
int32_t sas_table_from_csv(const char *text, struct SasTable **out);

/*
 Render the aligned text summary of a table; the caller owns the string.

 # Safety
 `table` must be a live handle; `out` must point to writable storage.
 */
int32_t sas_table_report(const struct SasTable *table, char **out);

/*
 # Safety
 `table` must come from this library and not be freed twice.
 */
void sas_table_free(struct SasTable *table);

/*
 # Safety
 `s` must come from this library and not be freed twice.
 */
void sas_string_free(char *s);

/*
 Build a simulator (kernel, lattice, calibrated series) from a config.

 # Safety
 `config` must be a live handle; `out` must point to writable storage.
 */
int32_t sas_simulator_new(const struct SasConfig *config, struct SasSimulator **out);

/*
 Number of lattice sites a sample fills.

 # Safety
 `sim` must be a live handle.
 */
size_t sas_simulator_site_count(const struct SasSimulator *sim);

/*
 Draw replication `replication` into `values` (room for `capacity`
 doubles, at least the site count).  Values are laid out row-major with
 the last index axis fastest.

 # Safety
 `sim` must be a live handle; `values` must hold `capacity` doubles.
 */
int32_t sas_simulator_sample(const struct SasSimulator *sim,
                             uint64_t replication,
                             double *values,
                             size_t capacity);

/*
 # Safety
 `sim` must come from `sas_simulator_new` and not be freed twice.
 */
void sas_simulator_free(struct SasSimulator *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SASFIELD_H */
