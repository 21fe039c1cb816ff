//! C ABI over `heralded_source`.
//!
//! Every function returns a [`PhsStatus`]; on failure the message is kept in
//! thread-local storage and read back with [`phs_last_error`]. Handles are
//! opaque, created by `*_new`/`phs_simulate`/`phs_record_read` and released
//! with the matching `*_free`. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use heralded_source::analytic::{conditional_probs, protocol_observables, ProtocolObservables};
use heralded_source::estimate::{Estimates, Observable, Tally};
use heralded_source::fit::{fit_memory_decay, Weighting};
use heralded_source::fock::{oracle_protocol_observables, required_n_max, DEFAULT_N_MAX};
use heralded_source::harness::optimize_protocol;
use heralded_source::record::DetectionRecord;
use heralded_source::sim::{run_campaign, ProtocolConfig, SourceMode};
use heralded_source::{Error, SourceParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhsStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Undefined = 3,
    Truncation = 4,
    NegativeStorage = 5,
    Infeasible = 6,
    NonConvergence = 7,
    Degenerate = 8,
    Malformed = 9,
    MemoryBudget = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for PhsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain { .. } => PhsStatus::Domain,
            Error::Undefined(_) => PhsStatus::Undefined,
            Error::Truncation { .. } => PhsStatus::Truncation,
            Error::NegativeStorage(_) => PhsStatus::NegativeStorage,
            Error::Infeasible { .. } => PhsStatus::Infeasible,
            Error::NonConvergence { .. } => PhsStatus::NonConvergence,
            Error::Degenerate(_) => PhsStatus::Degenerate,
            Error::Malformed(_) => PhsStatus::Malformed,
            Error::MemoryBudget { .. } => PhsStatus::MemoryBudget,
            Error::Config(_) => PhsStatus::Config,
            Error::Io(_) => PhsStatus::Io,
        }
    }
}

/// Physical parameters. Times in seconds; `tau_c` may be `INFINITY`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PhsSourceParams {
    pub p1: f64,
    pub eta_s: f64,
    pub eta_i0: f64,
    pub tau_c: f64,
    pub t0: f64,
    pub bg_idler: f64,
    pub bg_signal: f64,
    pub read_factor: f64,
    pub halt_offset: f64,
}

impl From<PhsSourceParams> for SourceParams {
    fn from(p: PhsSourceParams) -> Self {
        SourceParams {
            p1: p.p1,
            eta_s: p.eta_s,
            eta_i0: p.eta_i0,
            tau_c: p.tau_c,
            t0: p.t0,
            bg_idler: p.bg_idler,
            bg_signal: p.bg_signal,
            read_factor: p.read_factor,
            halt_offset: p.halt_offset,
            meta_eps_s: None,
            meta_eps_i: None,
        }
    }
}

impl From<SourceParams> for PhsSourceParams {
    fn from(p: SourceParams) -> Self {
        PhsSourceParams {
            p1: p.p1,
            eta_s: p.eta_s,
            eta_i0: p.eta_i0,
            tau_c: p.tau_c,
            t0: p.t0,
            bg_idler: p.bg_idler,
            bg_signal: p.bg_signal,
            read_factor: p.read_factor,
            halt_offset: p.halt_offset,
        }
    }
}

/// Heralded click and coincidence probabilities at one storage time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PhsConditional {
    pub p2_1: f64,
    pub p3_1: f64,
    pub p23_1: f64,
    /// NaN when undefined.
    pub alpha: f64,
}

/// Per-slot observables of the N-trial protocol. Ratios are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PhsProtocol {
    pub n_trials: u32,
    pub p2: f64,
    pub p3: f64,
    pub p23: f64,
    pub herald: f64,
    pub g2: f64,
    pub eta_d: f64,
    pub alpha: f64,
    pub g_si: f64,
}

impl From<&ProtocolObservables> for PhsProtocol {
    fn from(o: &ProtocolObservables) -> Self {
        PhsProtocol {
            n_trials: o.n_trials,
            p2: o.p2,
            p3: o.p3,
            p23: o.p23,
            herald: o.herald,
            g2: o.g2().unwrap_or(f64::NAN),
            eta_d: o.eta_d(),
            alpha: o.alpha().unwrap_or(f64::NAN),
            g_si: o.g_si().unwrap_or(f64::NAN),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PhsEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhsObservable {
    Herald = 0,
    P2 = 1,
    P3 = 2,
    P23 = 3,
    G2 = 4,
    EtaD = 5,
    P2Cond = 6,
    P3Cond = 7,
    P23Cond = 8,
    Alpha = 9,
    GSi = 10,
}

impl From<PhsObservable> for Observable {
    fn from(o: PhsObservable) -> Self {
        match o {
            PhsObservable::Herald => Observable::Herald,
            PhsObservable::P2 => Observable::P2,
            PhsObservable::P3 => Observable::P3,
            PhsObservable::P23 => Observable::P23,
            PhsObservable::G2 => Observable::G2,
            PhsObservable::EtaD => Observable::EtaD,
            PhsObservable::P2Cond => Observable::P2Cond,
            PhsObservable::P3Cond => Observable::P3Cond,
            PhsObservable::P23Cond => Observable::P23Cond,
            PhsObservable::Alpha => Observable::Alpha,
            PhsObservable::GSi => Observable::GSi,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhsSourceMode {
    Thermal = 0,
    Coherent = 1,
    SingleEmitter = 2,
}

/// Opaque validated source.
pub struct PhsSource {
    params: SourceParams,
}

/// Opaque detection record with its cached estimates.
pub struct PhsRecord {
    record: DetectionRecord,
    estimates: Estimates,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> PhsStatus {
    set_error(e.to_string());
    PhsStatus::from(&e)
}

fn guard(f: impl FnOnce() -> Result<(), PhsStatus>) -> PhsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhsStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PhsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PhsStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        PhsStatus::NullPointer
    })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PhsStatus> {
    p.as_mut().ok_or_else(|| {
        set_error(format!("{what} is null"));
        PhsStatus::NullPointer
    })
}

unsafe fn path_arg(p: *const c_char) -> Result<String, PhsStatus> {
    if p.is_null() {
        set_error("path is null".into());
        return Err(PhsStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| {
        set_error("path is not valid UTF-8".into());
        PhsStatus::Config
    })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn phs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn phs_status_name(status: PhsStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PhsStatus::Ok => c"ok",
        PhsStatus::NullPointer => c"null pointer",
        PhsStatus::Domain => c"parameter out of domain",
        PhsStatus::Undefined => c"undefined estimate",
        PhsStatus::Truncation => c"truncation bound exceeded",
        PhsStatus::NegativeStorage => c"negative storage time",
        PhsStatus::Infeasible => c"infeasible",
        PhsStatus::NonConvergence => c"no convergence",
        PhsStatus::Degenerate => c"degenerate input",
        PhsStatus::Malformed => c"malformed record",
        PhsStatus::MemoryBudget => c"memory budget exceeded",
        PhsStatus::Config => c"configuration error",
        PhsStatus::Io => c"i/o error",
        PhsStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Fills `out` with the measured parameters of the reference experiment.
#[no_mangle]
pub unsafe extern "C" fn phs_source_params_experiment(out_params: *mut PhsSourceParams) -> PhsStatus {
    guard(|| {
        *out(out_params, "out_params")? = SourceParams::experiment().into();
        Ok(())
    })
}

/// Validates `params` and allocates a source handle.
#[no_mangle]
pub unsafe extern "C" fn phs_source_new(params: *const PhsSourceParams, out_source: *mut *mut PhsSource) -> PhsStatus {
    guard(|| {
        let p: SourceParams = (*deref(params, "params")?).into();
        let slot = out(out_source, "out_source")?;
        p.validate().map_err(fail)?;
        *slot = Box::into_raw(Box::new(PhsSource { params: p }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn phs_source_free(source: *mut PhsSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// Mean excitation number of the write process.
#[no_mangle]
pub unsafe extern "C" fn phs_source_mean_excitation(source: *const PhsSource, out_n: *mut f64) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        *out(out_n, "out_n")? = s.params.n_mean();
        Ok(())
    })
}

/// Heralded probabilities after storage time `tau` seconds.
#[no_mangle]
pub unsafe extern "C" fn phs_source_conditional(
    source: *const PhsSource,
    tau: f64,
    out_probs: *mut PhsConditional,
) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let slot = out(out_probs, "out_probs")?;
        let c = conditional_probs(tau, &s.params).map_err(fail)?;
        *slot = PhsConditional {
            p2_1: c.p2_1,
            p3_1: c.p3_1,
            p23_1: c.p23_1,
            alpha: c.alpha().unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Closed-form protocol observables for `n_trials` trials.
#[no_mangle]
pub unsafe extern "C" fn phs_source_protocol(
    source: *const PhsSource,
    n_trials: u32,
    out_obs: *mut PhsProtocol,
) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let slot = out(out_obs, "out_obs")?;
        *slot = (&protocol_observables(&s.params, n_trials).map_err(fail)?).into();
        Ok(())
    })
}

/// Protocol observables by photon-number enumeration. `n_max = 0` picks the
/// smallest truncation meeting the tail bound.
#[no_mangle]
pub unsafe extern "C" fn phs_source_oracle_protocol(
    source: *const PhsSource,
    n_trials: u32,
    n_max: usize,
    out_obs: *mut PhsProtocol,
) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let slot = out(out_obs, "out_obs")?;
        let n_max = if n_max == 0 {
            required_n_max(s.params.n_mean(), DEFAULT_N_MAX)
        } else {
            n_max
        };
        *slot = (&oracle_protocol_observables(&s.params, n_trials, n_max).map_err(fail)?).into();
        Ok(())
    })
}

/// Trial count in `1..=n_limit` maximizing `eta_D` subject to `g2 <= g2_max`.
#[no_mangle]
pub unsafe extern "C" fn phs_source_optimize(
    source: *const PhsSource,
    g2_max: f64,
    n_limit: u32,
    out_n_star: *mut u32,
    out_eta_d: *mut f64,
    out_g2: *mut f64,
) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let (n, e, g) = (out(out_n_star, "out_n_star")?, out(out_eta_d, "out_eta_d")?, out(out_g2, "out_g2")?);
        let o = optimize_protocol(&s.params, g2_max, n_limit).map_err(fail)?;
        (*n, *e, *g) = (o.n_star, o.eta_d, o.g2);
        Ok(())
    })
}

fn wrap_record(record: DetectionRecord) -> Result<*mut PhsRecord, PhsStatus> {
    let estimates = Tally::from_record(&record).estimates().map_err(fail)?;
    Ok(Box::into_raw(Box::new(PhsRecord { record, estimates })))
}

/// Runs a seeded protocol campaign in memory.
#[no_mangle]
pub unsafe extern "C" fn phs_simulate(
    source: *const PhsSource,
    mode: PhsSourceMode,
    n_trials: u32,
    shots: u64,
    seed: u64,
    out_record: *mut *mut PhsRecord,
) -> PhsStatus {
    guard(|| {
        let s = deref(source, "source")?;
        let slot = out(out_record, "out_record")?;
        let mode = match mode {
            PhsSourceMode::Thermal => SourceMode::Thermal,
            PhsSourceMode::Coherent => SourceMode::Coherent,
            PhsSourceMode::SingleEmitter => SourceMode::SingleEmitter,
        };
        let cfg = ProtocolConfig::new(s.params, n_trials, shots, seed).with_mode(mode);
        *slot = wrap_record(run_campaign(&cfg).map_err(fail)?)?;
        Ok(())
    })
}

/// Loads a binary record file.
#[no_mangle]
pub unsafe extern "C" fn phs_record_read(path: *const c_char, out_record: *mut *mut PhsRecord) -> PhsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let slot = out(out_record, "out_record")?;
        let f = File::open(&path).map_err(|e| fail(e.into()))?;
        let rec = DetectionRecord::read_from(&mut BufReader::new(f)).map_err(fail)?;
        *slot = wrap_record(rec)?;
        Ok(())
    })
}

/// Writes the record in binary form, or as CSV when `as_csv` is nonzero.
#[no_mangle]
pub unsafe extern "C" fn phs_record_write(record: *const PhsRecord, path: *const c_char, as_csv: i32) -> PhsStatus {
    guard(|| {
        let r = deref(record, "record")?;
        let path = path_arg(path)?;
        let f = File::create(&path).map_err(|e| fail(e.into()))?;
        let mut w = BufWriter::new(f);
        if as_csv != 0 {
            r.record.write_csv(w).map_err(fail)
        } else {
            r.record
                .write_to(&mut w)
                .and_then(|_| std::io::Write::flush(&mut w))
                .map_err(|e| fail(e.into()))
        }
    })
}

/// Number of shots covered by the record.
#[no_mangle]
pub unsafe extern "C" fn phs_record_shot_count(record: *const PhsRecord, out_count: *mut u64) -> PhsStatus {
    guard(|| {
        let r = deref(record, "record")?;
        *out(out_count, "out_count")? = r.record.header().shot_count;
        Ok(())
    })
}

/// Estimate of one observable; `PHS_STATUS_UNDEFINED` when a denominator count is zero.
#[no_mangle]
pub unsafe extern "C" fn phs_record_estimate(
    record: *const PhsRecord,
    observable: PhsObservable,
    out_estimate: *mut PhsEstimate,
) -> PhsStatus {
    guard(|| {
        let r = deref(record, "record")?;
        let slot = out(out_estimate, "out_estimate")?;
        let o: Observable = observable.into();
        let e = r.estimates.get(o).ok_or_else(|| {
            set_error(format!("{o} is undefined for this record"));
            PhsStatus::Undefined
        })?;
        *slot = PhsEstimate {
            value: e.value,
            std_error: e.std_error,
            n_samples: e.n_samples,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn phs_record_free(record: *mut PhsRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Fits `1 + B exp(-tau^2 / tau_c^2)` to `n` points. `std_error` may be null
/// for an unweighted fit.
#[no_mangle]
pub unsafe extern "C" fn phs_fit_memory_decay(
    tau: *const f64,
    g_si: *const f64,
    std_error: *const f64,
    n: usize,
    out_b: *mut f64,
    out_tau_c: *mut f64,
) -> PhsStatus {
    guard(|| {
        if n > 0 && (tau.is_null() || g_si.is_null()) {
            set_error("tau and g_si must be non-null".into());
            return Err(PhsStatus::NullPointer);
        }
        let (b, tc) = (out(out_b, "out_b")?, out(out_tau_c, "out_tau_c")?);
        let read = |p: *const f64| if n == 0 { &[][..] } else { std::slice::from_raw_parts(p, n) };
        let (t, y) = (read(tau), read(g_si));
        let se = (!std_error.is_null()).then(|| read(std_error));
        let pts: Vec<_> = (0..n)
            .map(|i| {
                (
                    t[i],
                    heralded_source::estimate::Estimate {
                        value: y[i],
                        std_error: se.map_or(0.0, |s| s[i]),
                        n_samples: 0,
                    },
                )
            })
            .collect();
        let weighting = if se.is_some() { Weighting::InverseVariance } else { Weighting::Uniform };
        let fit = fit_memory_decay(&pts, weighting).map_err(fail)?;
        (*b, *tc) = (fit.b, fit.tau_c);
        Ok(())
    })
}
