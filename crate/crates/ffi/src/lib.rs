//! C ABI over the slicesched solver and simulator.
//!
//! Every fallible function returns an [`SsStatus`]; on failure the message is
//! available from [`ss_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `*_free` function. Strings are
//! NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use slicesched::cli;
use slicesched::config::Config;
use slicesched::first_level::policy::{PolicySet, PolicySource, ProcAction};
use slicesched::simulator::{SchedulerKind, SimMetrics, Trace};
use slicesched::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidConfig = 4,
    InvalidGop = 5,
    InvalidPowerModel = 6,
    InvalidTrace = 7,
    InvalidPolicy = 8,
    InvalidArgument = 9,
    StateSpaceTooLarge = 10,
    NotConverged = 11,
    TraceUnderrun = 12,
    Panic = 13,
    Other = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsScheduler {
    Proposed = 0,
    ProposedCoordinated = 1,
    OptMems = 2,
}

impl From<SsScheduler> for SchedulerKind {
    fn from(s: SsScheduler) -> Self {
        match s {
            SsScheduler::Proposed => SchedulerKind::Proposed,
            SsScheduler::ProposedCoordinated => SchedulerKind::ProposedCoordinated,
            SsScheduler::OptMems => SchedulerKind::OptMems,
        }
    }
}

/// Parsed run configuration.
pub struct SsConfig(Config);

/// Per-slice cycle trace.
pub struct SsTrace(Trace);

/// Solved per-frame policies.
pub struct SsPolicy(PolicySet);

/// Solver summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsSolveReport {
    pub iterations: u64,
    pub residual: f64,
    pub schedules_any_slice: bool,
}

/// Aggregate metrics of one simulation. Miss fractions are per frame type.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsMetrics {
    pub processors: u64,
    pub duration_s: f64,
    pub energy_j: f64,
    pub avg_power_per_core_w: f64,
    pub avg_total_power_w: f64,
    pub decoded_frame_rate_fps: f64,
    pub miss_fraction_i: f64,
    pub miss_fraction_p: f64,
    pub miss_fraction_b: f64,
    pub arrived_slices: u64,
    pub decoded_slices: u64,
    pub dropped_slices: u64,
    pub pending_slices: u64,
}

impl From<&SimMetrics> for SsMetrics {
    fn from(m: &SimMetrics) -> Self {
        SsMetrics {
            processors: m.processors as u64,
            duration_s: m.duration_s,
            energy_j: m.energy_j,
            avg_power_per_core_w: m.avg_power_per_core_w,
            avg_total_power_w: m.avg_total_power_w,
            decoded_frame_rate_fps: m.decoded_frame_rate_fps,
            miss_fraction_i: m.miss_fraction.i,
            miss_fraction_p: m.miss_fraction.p,
            miss_fraction_b: m.miss_fraction.b,
            arrived_slices: m.arrived_slices,
            decoded_slices: m.decoded_slices,
            dropped_slices: m.dropped_slices,
            pending_slices: m.pending_slices,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => SsStatus::Io,
            Error::InvalidConfig(_) => SsStatus::InvalidConfig,
            Error::InvalidGop(_) | Error::CyclicDependency(_) | Error::FrameNeverCurrent(_) => {
                SsStatus::InvalidGop
            }
            Error::InvalidPowerModel(_) | Error::UnknownFrequency(_) => SsStatus::InvalidPowerModel,
            Error::InvalidTrace(_) => SsStatus::InvalidTrace,
            Error::InvalidPolicy(_) => SsStatus::InvalidPolicy,
            Error::InvalidArgument(_) => SsStatus::InvalidArgument,
            Error::StateSpaceTooLarge { .. } => SsStatus::StateSpaceTooLarge,
            Error::NotConverged { .. } => SsStatus::NotConverged,
            Error::TraceUnderrun { .. } => SsStatus::TraceUnderrun,
            _ => SsStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(&msg);
            SsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(SsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Per-slot completion probability of an exponential slice with mean
/// `mean_cycles` at `frequency_hz` over `slot_duration` seconds.
///
/// # Safety
/// `out` must be null or point to writable memory for a `double`.
#[no_mangle]
pub unsafe extern "C" fn ss_decode_prob(
    frequency_hz: f64,
    slot_duration: f64,
    mean_cycles: f64,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = slicesched::stochastic::decode_prob(frequency_hz, slot_duration, mean_cycles)?;
        Ok(())
    })
}

/// Loads a TOML config file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_load(path: *const c_char, out: *mut *mut SsConfig) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        *out = boxed(SsConfig(Config::load(&path)?));
        Ok(())
    })
}

/// Parses a TOML config from text.
///
/// # Safety
/// As for [`ss_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ss_config_parse(text: *const c_char, out: *mut *mut SsConfig) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = boxed(SsConfig(Config::parse(str_arg(text, "text")?)?));
        Ok(())
    })
}

/// Overrides the Lagrange multiplier.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_lambda(config: *mut SsConfig, lambda: f64) -> SsStatus {
    guard(|| {
        let c = out_arg(config, "config")?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Failure(
                SsStatus::InvalidArgument,
                format!("lambda {lambda} must be non-negative"),
            ));
        }
        c.0.solver.lambda = lambda;
        Ok(())
    })
}

/// Overrides the processor count.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_cores(config: *mut SsConfig, cores: u32) -> SsStatus {
    guard(|| {
        let c = out_arg(config, "config")?;
        if cores == 0 {
            return Err(Failure(
                SsStatus::InvalidArgument,
                "at least one core is required".into(),
            ));
        }
        c.0.sim.cores = cores as usize;
        Ok(())
    })
}

/// Overrides the random seed.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_seed(config: *mut SsConfig, seed: u64) -> SsStatus {
    guard(|| {
        out_arg(config, "config")?.0.sim.seed = seed;
        Ok(())
    })
}

/// Selects the scheduler used by [`ss_simulate`]; `scheduler` is an
/// [`SsScheduler`] value.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_scheduler(
    config: *mut SsConfig,
    scheduler: u32,
) -> SsStatus {
    guard(|| {
        let c = out_arg(config, "config")?;
        let kind = match scheduler {
            0 => SsScheduler::Proposed,
            1 => SsScheduler::ProposedCoordinated,
            2 => SsScheduler::OptMems,
            other => {
                return Err(Failure(
                    SsStatus::InvalidArgument,
                    format!("unknown scheduler {other}"),
                ))
            }
        };
        c.0.sim.scheduler = kind.into();
        Ok(())
    })
}

/// Sets the number of measured GOPs; 0 restores the default.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_gops(config: *mut SsConfig, gops: u64) -> SsStatus {
    guard(|| {
        out_arg(config, "config")?.0.sim.gops = (gops > 0).then_some(gops);
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_config_free(config: *mut SsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Reads a trace CSV.
///
/// # Safety
/// As for [`ss_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ss_trace_read(path: *const c_char, out: *mut *mut SsTrace) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        *out = boxed(SsTrace(Trace::read_csv(&path)?));
        Ok(())
    })
}

/// Samples a synthetic trace covering `gops` measured GOPs (0 for the
/// config's run length) from the config's complexity model and seed.
///
/// # Safety
/// `config` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_trace_generate(
    config: *const SsConfig,
    gops: u64,
    out: *mut *mut SsTrace,
) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = &ref_arg(config, "config")?.0;
        let gops = cli::run_gops(c, (gops > 0).then_some(gops));
        *out = boxed(SsTrace(cli::synthetic_trace(c, gops)?));
        Ok(())
    })
}

/// Writes a trace as CSV.
///
/// # Safety
/// `trace` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_trace_write(trace: *const SsTrace, path: *const c_char) -> SsStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        t.0.write_csv_file(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of GOPs in the trace, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_trace_num_gops(trace: *const SsTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.0.num_gops())
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_trace_free(trace: *mut SsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Solves the frame-level problem of the config. `report` may be null.
///
/// # Safety
/// `config` must be null or a live handle; `out` must be null or writable;
/// `report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_solve(
    config: *const SsConfig,
    out: *mut *mut SsPolicy,
    report: *mut SsSolveReport,
) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = &ref_arg(config, "config")?.0;
        let problem = c.problem(None)?;
        let (policy, r) = cli::solve(&problem, c)?;
        if let Some(report) = report.as_mut() {
            *report = SsSolveReport {
                iterations: r.iterations as u64,
                residual: r.residual,
                schedules_any_slice: r.schedules_any_slice,
            };
        }
        *out = boxed(SsPolicy(policy));
        Ok(())
    })
}

/// Reads a policy file.
///
/// # Safety
/// As for [`ss_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ss_policy_read(path: *const c_char, out: *mut *mut SsPolicy) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure(SsStatus::Io, format!("{}: {e}", path.display())))?;
        *out = boxed(SsPolicy(PolicySet::parse(&text)?));
        Ok(())
    })
}

/// Writes a policy in the text format read by [`ss_policy_read`].
///
/// # Safety
/// `policy` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_policy_write(policy: *const SsPolicy, path: *const c_char) -> SsStatus {
    guard(|| {
        let p = ref_arg(policy, "policy")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        std::fs::write(&path, p.0.to_text())
            .map_err(|e| Failure(SsStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Processor count the policy was solved for, or 0 for a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_policy_processors(policy: *const SsPolicy) -> u32 {
    policy.as_ref().map_or(0, |p| p.0.processors as u32)
}

/// Actions of frame `position` in state (`phase`, `buffer`, `deps_met`).
/// Writes one frequency index and one scheduled flag per processor into
/// `freqs` and `scheduled`, each of length `len`, and the processor count to
/// `written`. A state without a stored action yields idle processors at the
/// lowest frequency.
///
/// # Safety
/// `policy` must be null or a live handle; `freqs` and `scheduled` must be
/// null or hold `len` elements; `written` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_policy_actions(
    policy: *const SsPolicy,
    position: u32,
    phase: u32,
    buffer: u32,
    deps_met: bool,
    freqs: *mut u32,
    scheduled: *mut bool,
    len: usize,
    written: *mut usize,
) -> SsStatus {
    guard(|| {
        let p = &ref_arg(policy, "policy")?.0;
        let written = out_arg(written, "written")?;
        if freqs.is_null() || scheduled.is_null() {
            return Err(null("output array"));
        }
        let m = p.processors;
        if len < m {
            return Err(Failure(
                SsStatus::InvalidArgument,
                format!("arrays hold {len} entries, policy has {m} processors"),
            ));
        }
        let actions = p
            .actions(position, phase as usize, buffer, deps_met)
            .unwrap_or_else(|| vec![ProcAction::IDLE_MIN; m]);
        let freqs = std::slice::from_raw_parts_mut(freqs, m);
        let scheduled = std::slice::from_raw_parts_mut(scheduled, m);
        for (j, a) in actions.iter().enumerate() {
            freqs[j] = a.freq as u32;
            scheduled[j] = a.scheduled;
        }
        *written = m;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_policy_free(policy: *mut SsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Simulates the config's scheduler. A null `trace` uses a synthetic trace
/// from the config; a null `policy` solves one when the scheduler needs it.
///
/// # Safety
/// `config` must be a live handle; `trace` and `policy` null or live
/// handles; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_simulate(
    config: *const SsConfig,
    trace: *const SsTrace,
    policy: *const SsPolicy,
    out: *mut SsMetrics,
) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mut c = ref_arg(config, "config")?.0.clone();
        c.sim.gops = Some(cli::run_gops(&c, None));
        let generated;
        let trace = match trace.as_ref() {
            Some(t) => &t.0,
            None => {
                generated = cli::synthetic_trace(&c, c.sim.gops.expect("set above"))?;
                &generated
            }
        };
        let outcome = cli::simulate(&c, trace, policy.as_ref().map(|p| &p.0))?;
        *out = SsMetrics::from(&outcome.metrics);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn failures_leave_a_message() {
        let mut out = ptr::null_mut();
        let status = unsafe { ss_config_parse(c"[gop]\nbogus = 1".as_ptr(), &mut out) };
        assert_eq!(status, SsStatus::InvalidConfig);
        assert!(out.is_null());
        let msg = unsafe { CStr::from_ptr(ss_last_error_message()) }
            .to_str()
            .unwrap();
        assert!(!msg.is_empty());
    }

    #[test]
    fn null_arguments() {
        assert_eq!(
            unsafe { ss_config_load(ptr::null(), ptr::null_mut()) },
            SsStatus::NullPointer
        );
        assert_eq!(
            unsafe { ss_config_set_seed(ptr::null_mut(), 1) },
            SsStatus::NullPointer
        );
        assert_eq!(unsafe { ss_trace_num_gops(ptr::null()) }, 0);
        unsafe { ss_config_free(ptr::null_mut()) };
    }
}
