//! C ABI over `betaqm`.
//!
//! Every function returns a [`BqmStatus`]. On failure a message describing
//! the error is stored per thread and can be read with
//! [`bqm_last_error_message`]. Handles are opaque and must be released with
//! the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use betaqm::aqm::{AqmError, ArrivalSignal, BetaDropFunction, QueueDiscipline};
use betaqm::config::{parse_spec, parse_spec_file, resolve, ConfigError, ExperimentSpec};
use betaqm::runner::{emit_outputs, run_experiment, ResultTable, RunError};
use betaqm::special::{moments_to_shape, regularized_incomplete_beta, BetaMoments, BetaShape, SpecialError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BqmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Io = 4,
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(BqmStatus, String);

impl From<SpecialError> for Failure {
    fn from(e: SpecialError) -> Self {
        Failure(BqmStatus::Domain, e.to_string())
    }
}

impl From<AqmError> for Failure {
    fn from(e: AqmError) -> Self {
        let status = match e {
            AqmError::Numeric(_) => BqmStatus::Domain,
            _ => BqmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => BqmStatus::Io,
            _ => BqmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Io { .. } => Failure(BqmStatus::Io, e.to_string()),
            _ => Failure(BqmStatus::Internal, e.to_string()),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BqmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BqmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BqmStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(BqmStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller promises `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller promises a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(BqmStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bqm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Regularized incomplete beta `I_z(alpha, beta)`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_beta_inc(z: f64, alpha: f64, beta: f64, out: *mut f64) -> BqmStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        *out = regularized_incomplete_beta(z, BetaShape::new(alpha, beta)?)?;
        Ok(())
    })
}

/// Beta shape parameters with mean `mu` and standard deviation `sigma`.
///
/// # Safety
/// `alpha` and `beta` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_moments_to_shape(mu: f64, sigma: f64, alpha: *mut f64, beta: *mut f64) -> BqmStatus {
    guard(|| {
        let a = unsafe { out_ref(alpha, "alpha")? };
        let b = unsafe { out_ref(beta, "beta")? };
        let shape = moments_to_shape(BetaMoments::new(mu, sigma)?)?;
        *a = shape.alpha();
        *b = shape.beta();
        Ok(())
    })
}

/// Opaque beta drop curve.
pub struct BqmDropCurve(BetaDropFunction);

/// Builds the drop curve `p_max * I_z` centred on `center` over
/// `[q_min, q_max]`, with spread `theta` in (0, 1).
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_drop_curve_new(
    q_min: f64,
    q_max: f64,
    center: f64,
    theta: f64,
    p_max: f64,
    out: *mut *mut BqmDropCurve,
) -> BqmStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        let f = BetaDropFunction::new(q_min, q_max, center, theta, p_max)?;
        *out = Box::into_raw(Box::new(BqmDropCurve(f)));
        Ok(())
    })
}

/// Drop probability at average queue `q_avg`; 1 at or above `q_max`.
///
/// # Safety
/// `curve` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_drop_curve_eval(curve: *const BqmDropCurve, q_avg: f64, out: *mut f64) -> BqmStatus {
    guard(|| {
        let c = unsafe { curve.as_ref() }.ok_or_else(|| null("curve"))?;
        let out = unsafe { out_ref(out, "out")? };
        if q_avg.is_nan() {
            return Err(Failure(BqmStatus::InvalidArgument, "`q_avg` is NaN".into()));
        }
        *out = c.0.probability(q_avg);
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a handle from [`bqm_drop_curve_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqm_drop_curve_free(curve: *mut BqmDropCurve) {
    if !curve.is_null() {
        drop(unsafe { Box::from_raw(curve) });
    }
}

/// Opaque queue discipline.
pub struct BqmQueueDisc(Box<dyn QueueDiscipline>);

/// Builds a queue discipline by scheme name (`droptail`, `red`, `ared`,
/// `codel`, `pie`, `betared`, `abetared`, `dbetared`). `params` is null or
/// a TOML spec fragment, e.g. `"[betared]\ntheta = 0.2\n"`; unset values
/// take their defaults on the standard dumbbell.
///
/// # Safety
/// `scheme` must be a NUL-terminated string, `params` null or one, and
/// `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_queue_disc_new(
    scheme: *const c_char,
    params: *const c_char,
    out: *mut *mut BqmQueueDisc,
) -> BqmStatus {
    guard(|| {
        let scheme = unsafe { str_arg(scheme, "scheme")? };
        let params = if params.is_null() { "" } else { unsafe { str_arg(params, "params")? } };
        let out = unsafe { out_ref(out, "out")? };
        let mut file = parse_spec_file(params)?;
        file.aqm = Some(scheme.to_owned());
        let run = resolve(&file)?;
        *out = Box::into_raw(Box::new(BqmQueueDisc(run.aqm.build()?)));
        Ok(())
    })
}

/// Arrival hook: `q_cur` packets are waiting at time `now` (seconds).
/// Writes the drop probability, and sets `forced` to 1 when the packet
/// must be dropped regardless of chance.
///
/// # Safety
/// `disc` must be null or a live handle; `probability` and `forced` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_queue_disc_on_arrival(
    disc: *mut BqmQueueDisc,
    now: f64,
    q_cur: usize,
    probability: *mut f64,
    forced: *mut i32,
) -> BqmStatus {
    guard(|| {
        let d = unsafe { disc.as_mut() }.ok_or_else(|| null("disc"))?;
        let p = unsafe { out_ref(probability, "probability")? };
        let f = unsafe { out_ref(forced, "forced")? };
        match d.0.on_arrival(now, q_cur) {
            ArrivalSignal::Probability(x) => {
                *p = x;
                *f = 0;
            }
            ArrivalSignal::HardLimit => {
                *p = 1.0;
                *f = 1;
            }
        }
        Ok(())
    })
}

/// Dequeue hook for sojourn-based schemes. Sets `drop_out` to 1 when the
/// head packet should be discarded.
///
/// # Safety
/// `disc` must be null or a live handle; `drop_out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_queue_disc_on_dequeue(
    disc: *mut BqmQueueDisc,
    now: f64,
    sojourn: f64,
    backlog: usize,
    drop_out: *mut i32,
) -> BqmStatus {
    guard(|| {
        let d = unsafe { disc.as_mut() }.ok_or_else(|| null("disc"))?;
        let out = unsafe { out_ref(drop_out, "drop_out")? };
        *out = i32::from(d.0.on_dequeue(now, sojourn, backlog));
        Ok(())
    })
}

/// Current average queue estimate, or NaN for schemes without one.
///
/// # Safety
/// `disc` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_queue_disc_average(disc: *const BqmQueueDisc, out: *mut f64) -> BqmStatus {
    guard(|| {
        let d = unsafe { disc.as_ref() }.ok_or_else(|| null("disc"))?;
        let out = unsafe { out_ref(out, "out")? };
        *out = d.0.average_queue().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `disc` must be null or a handle from [`bqm_queue_disc_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqm_queue_disc_free(disc: *mut BqmQueueDisc) {
    if !disc.is_null() {
        drop(unsafe { Box::from_raw(disc) });
    }
}

/// Opaque experiment: a validated spec and, after a run, its results.
pub struct BqmExperiment {
    spec: ExperimentSpec,
    results: Option<ResultTable>,
}

/// Seed-level metrics of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BqmMetrics {
    pub seed: u64,
    pub aql: f64,
    pub equilibrium_aql: f64,
    pub drop_rate: f64,
    pub throughput_bps: f64,
    pub utilisation_bps: f64,
    pub latency_s: f64,
    pub jitter_s: f64,
}

/// Parses and validates a spec given as TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_from_str(text: *const c_char, out: *mut *mut BqmExperiment) -> BqmStatus {
    guard(|| {
        let text = unsafe { str_arg(text, "text")? };
        let out = unsafe { out_ref(out, "out")? };
        let spec = parse_spec(text)?;
        *out = Box::into_raw(Box::new(BqmExperiment { spec, results: None }));
        Ok(())
    })
}

/// Loads and validates a spec file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_load(path: *const c_char, out: *mut *mut BqmExperiment) -> BqmStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path")? };
        let out = unsafe { out_ref(out, "out")? };
        let spec = betaqm::config::load_spec(Path::new(path))?;
        *out = Box::into_raw(Box::new(BqmExperiment { spec, results: None }));
        Ok(())
    })
}

/// Runs every sweep point and seed, replacing earlier results.
///
/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_run(exp: *mut BqmExperiment) -> BqmStatus {
    guard(|| {
        let e = unsafe { exp.as_mut() }.ok_or_else(|| null("exp"))?;
        e.results = Some(run_experiment(&e.spec)?);
        Ok(())
    })
}

/// Number of (sweep point, seed) results; zero before a run.
///
/// # Safety
/// `exp` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_result_count(exp: *const BqmExperiment, out: *mut usize) -> BqmStatus {
    guard(|| {
        let e = unsafe { exp.as_ref() }.ok_or_else(|| null("exp"))?;
        let out = unsafe { out_ref(out, "out")? };
        *out = e.results.as_ref().map_or(0, |t| t.results.len());
        Ok(())
    })
}

/// Metrics of result `index`, in sweep-point then seed order.
///
/// # Safety
/// `exp` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_metrics(
    exp: *const BqmExperiment,
    index: usize,
    out: *mut BqmMetrics,
) -> BqmStatus {
    guard(|| {
        let e = unsafe { exp.as_ref() }.ok_or_else(|| null("exp"))?;
        let out = unsafe { out_ref(out, "out")? };
        let table = e.results.as_ref().ok_or_else(|| Failure(BqmStatus::InvalidArgument, "experiment has not been run".into()))?;
        let r = table.results.get(index).ok_or_else(|| {
            Failure(BqmStatus::InvalidArgument, format!("index {index} out of range ({} results)", table.results.len()))
        })?;
        let m = &r.metrics;
        *out = BqmMetrics {
            seed: r.seed,
            aql: m.aql,
            equilibrium_aql: m.equilibrium_aql,
            drop_rate: m.drop_rate,
            throughput_bps: m.throughput_bps,
            utilisation_bps: m.utilisation_bps,
            latency_s: m.latency_s,
            jitter_s: m.jitter_s,
        };
        Ok(())
    })
}

/// Writes the CSV outputs into `dir`, or into the spec's `out` when `dir`
/// is null.
///
/// # Safety
/// `exp` must be null or a live handle; `dir` null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_write(exp: *const BqmExperiment, dir: *const c_char) -> BqmStatus {
    guard(|| {
        let e = unsafe { exp.as_ref() }.ok_or_else(|| null("exp"))?;
        let table = e.results.as_ref().ok_or_else(|| Failure(BqmStatus::InvalidArgument, "experiment has not been run".into()))?;
        let dir = if dir.is_null() { e.spec.out.clone() } else { unsafe { str_arg(dir, "dir")? }.into() };
        emit_outputs(table, &dir)?;
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqm_experiment_free(exp: *mut BqmExperiment) {
    if !exp.is_null() {
        drop(unsafe { Box::from_raw(exp) });
    }
}
