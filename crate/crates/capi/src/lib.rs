//! C ABI over the experiment pipeline: parse a config, run it, read the
//! result table, or draw field samples replication by replication.
//!
//! Conventions, shared by every function here:
//!
//! - Handles (`SasConfig`, `SasTable`, `SasSimulator`) are opaque; create
//!   them through the constructors and release them through the matching
//!   `_free`.  Freeing a null pointer is a no-op.
//! - Functions returning `int32_t` yield 0 on success or a nonzero code
//!   mirroring the CLI exit codes: 2 configuration / invalid argument,
//!   3 resource or budget, 4 data or numeric range, 70 internal panic.
//! - On failure, `sas_last_error` returns a message for the current
//!   thread, valid until the next failing call on that thread.
//! - Strings produced by this library (`char*` out-parameters) are owned
//!   by the caller and must be released with `sas_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sasfield::config::{parse_config, ExperimentConfig};
use sasfield::error::Error;
use sasfield::experiment;
use sasfield::kernel::{builtin_kernel, KernelDescriptor};
use sasfield::lattice::LatticeSpec;
use sasfield::lepage::{prepare_series, simulate_field, SeriesConfig};
use sasfield::report::report;
use sasfield::table::ResultTable;

pub const SAS_OK: i32 = 0;
pub const SAS_ERR_CONFIG: i32 = 2;
pub const SAS_ERR_RESOURCE: i32 = 3;
pub const SAS_ERR_DATA: i32 = 4;
pub const SAS_ERR_PANIC: i32 = 70;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String, code: i32) -> i32 {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    code
}

fn set_library_error(e: &Error) -> i32 {
    set_error(e.to_string(), e.exit_code())
}

fn invalid(message: &str) -> i32 {
    set_error(message.to_string(), SAS_ERR_CONFIG)
}

/// Run `f` behind the unwind barrier every entry point needs.
fn guarded(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => set_error("internal panic".into(), SAS_ERR_PANIC),
    }
}

/// # Safety
/// `text` must be a valid NUL-terminated string or null.
unsafe fn read_str<'a>(text: *const c_char) -> Result<&'a str, i32> {
    if text.is_null() {
        return Err(invalid("text pointer is null"));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|_| invalid("text is not valid UTF-8"))
}

fn write_handle<T>(out: *mut *mut T, value: T) -> i32 {
    if out.is_null() {
        return invalid("output handle pointer is null");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    SAS_OK
}

fn write_string(out: *mut *mut c_char, value: String) -> i32 {
    if out.is_null() {
        return invalid("output string pointer is null");
    }
    match CString::new(value) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            SAS_OK
        }
        Err(_) => set_error("string contains interior NUL".into(), SAS_ERR_DATA),
    }
}

/// A parsed and validated experiment configuration.
pub struct SasConfig {
    config: ExperimentConfig,
}

/// A result table produced by a run.
pub struct SasTable {
    table: ResultTable,
}

/// A prepared simulator: kernel, lattice and calibrated series plan.
pub struct SasSimulator {
    kernel: KernelDescriptor,
    lattice: LatticeSpec,
    plan: SeriesConfig,
    seed: u64,
    sites: usize,
}

/// Version of the library, as a static string.
#[no_mangle]
pub extern "C" fn sas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread ("" when none).  The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sas_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a configuration in the CLI's `section.key = value` format.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_config_parse(
    text: *const c_char,
    out: *mut *mut SasConfig,
) -> i32 {
    guarded(|| {
        let text = match read_str(text) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match parse_config(text) {
            Ok(config) => write_handle(out, SasConfig { config }),
            Err(e) => set_library_error(&e),
        }
    })
}

/// Write the 16-hex-digit config hash into `buf` (needs room for 17 bytes).
///
/// # Safety
/// `config` must be a live handle; `buf` must hold at least `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sas_config_hash(
    config: *const SasConfig,
    buf: *mut c_char,
    len: usize,
) -> i32 {
    guarded(|| {
        if config.is_null() || buf.is_null() {
            return invalid("null handle or buffer");
        }
        let hash = (*config).config.hash();
        if len < hash.len() + 1 {
            return invalid("hash buffer needs at least 17 bytes");
        }
        std::ptr::copy_nonoverlapping(hash.as_ptr(), buf as *mut u8, hash.len());
        *buf.add(hash.len()) = 0;
        SAS_OK
    })
}

/// # Safety
/// `config` must come from `sas_config_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sas_config_free(config: *mut SasConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the configured operation.  `jobs` = 0 uses all cores.
///
/// # Safety
/// `config` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_run(
    config: *const SasConfig,
    jobs: usize,
    out: *mut *mut SasTable,
) -> i32 {
    guarded(|| {
        if config.is_null() {
            return invalid("config handle is null");
        }
        let jobs = if jobs == 0 { None } else { Some(jobs) };
        match experiment::run(&(*config).config, jobs) {
            Ok(table) => write_handle(out, SasTable { table }),
            Err(e) => set_library_error(&e),
        }
    })
}

/// Number of rows in the table.
///
/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sas_table_row_count(table: *const SasTable) -> usize {
    if table.is_null() {
        return 0;
    }
    (*table).table.len()
}

/// Render the table as CSV; the caller owns the string.
///
/// # Safety
/// `table` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_table_to_csv(
    table: *const SasTable,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if table.is_null() {
            return invalid("table handle is null");
        }
        match (*table).table.to_csv_string() {
            Ok(csv) => write_string(out, csv),
            Err(e) => set_library_error(&e),
        }
    })
}

/// Parse a CSV result table previously produced by this library.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_table_from_csv(
    text: *const c_char,
    out: *mut *mut SasTable,
) -> i32 {
    guarded(|| {
        let text = match read_str(text) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match ResultTable::from_csv_str(text) {
            Ok(table) => write_handle(out, SasTable { table }),
            Err(e) => set_library_error(&e),
        }
    })
}

/// Render the aligned text summary of a table; the caller owns the string.
///
/// # Safety
/// `table` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_table_report(
    table: *const SasTable,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if table.is_null() {
            return invalid("table handle is null");
        }
        match report(&(*table).table) {
            Ok(summary) => write_string(out, summary.text),
            Err(e) => set_library_error(&e),
        }
    })
}

/// # Safety
/// `table` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sas_table_free(table: *mut SasTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a simulator (kernel, lattice, calibrated series) from a config.
///
/// # Safety
/// `config` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sas_simulator_new(
    config: *const SasConfig,
    out: *mut *mut SasSimulator,
) -> i32 {
    guarded(|| {
        if config.is_null() {
            return invalid("config handle is null");
        }
        let config = &(*config).config;
        let build = || -> Result<SasSimulator, Error> {
            let kernel = builtin_kernel(&config.kernel)?;
            let lattice = LatticeSpec::new(kernel.index_dim(), config.level, config.window)?;
            let plan = prepare_series(&kernel, &lattice, &config.series, config.seed)?;
            let sites = lattice.point_count()?;
            Ok(SasSimulator {
                kernel,
                lattice,
                plan,
                seed: config.seed,
                sites,
            })
        };
        match build() {
            Ok(sim) => write_handle(out, sim),
            Err(e) => set_library_error(&e),
        }
    })
}

/// Number of lattice sites a sample fills.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sas_simulator_site_count(sim: *const SasSimulator) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).sites
}

/// Draw replication `replication` into `values` (room for `capacity`
/// doubles, at least the site count).  Values are laid out row-major with
/// the last index axis fastest.
///
/// # Safety
/// `sim` must be a live handle; `values` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sas_simulator_sample(
    sim: *const SasSimulator,
    replication: u64,
    values: *mut f64,
    capacity: usize,
) -> i32 {
    guarded(|| {
        if sim.is_null() || values.is_null() {
            return invalid("null simulator or buffer");
        }
        let sim = &*sim;
        if capacity < sim.sites {
            return invalid("buffer smaller than the lattice site count");
        }
        match simulate_field(&sim.kernel, &sim.lattice, &sim.plan, sim.seed, replication) {
            Ok(sample) => {
                std::ptr::copy_nonoverlapping(sample.values.as_ptr(), values, sim.sites);
                SAS_OK
            }
            Err(e) => set_library_error(&e),
        }
    })
}

/// # Safety
/// `sim` must come from `sas_simulator_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sas_simulator_free(sim: *mut SasSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
