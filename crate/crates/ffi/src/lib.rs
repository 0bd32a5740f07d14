//! C ABI for running market days from other languages.
//!
//! Scenarios and reports are opaque handles created and freed by this
//! library. Every fallible call returns a [`LemStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`lem_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lem_core::admm::Thresholds;
use lem_core::grid::{load_scenario, parse_scenario, ScenarioDay};
use lem_core::harness::{run_scenario, write_outputs, HarnessError, RunConfig, RunReport, SolverKind, Stage};
use lem_core::market::PriceMode;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Scenario = 3,
    Config = 4,
    Clearing = 5,
    Recovery = 6,
    Settlement = 7,
    Io = 8,
    OutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemSolver {
    C1 = 0,
    N3 = 1,
    S2 = 2,
    S3 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemPriceMode {
    Duals = 0,
    Consensus = 1,
}

/// Run parameters. Fill with [`lem_run_config_default`] before changing fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LemRunConfig {
    pub solver: LemSolver,
    pub price_mode: LemPriceMode,
    pub rho: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub surplus_tol: f64,
    pub max_iter: u32,
    /// Sharing threshold, or -1 for the market default.
    pub theta: i32,
    pub seed: u64,
    /// Nodes whose measurements are withheld; may be null when `silent_count` is 0.
    pub silent_nodes: *const u32,
    pub silent_count: usize,
}

/// Settlement of one node.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LemBalance {
    pub payoff: f64,
    pub imbalance: f64,
    pub final_balance: f64,
    pub recovered: bool,
}

/// Opaque scenario handle.
pub struct LemScenario(ScenarioDay);

/// Opaque report handle.
pub struct LemReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: LemStatus, msg: impl Into<String>) -> LemStatus {
    set_error(msg);
    status
}

fn status_of(e: &HarnessError) -> LemStatus {
    match e {
        HarnessError::Scenario(_) => LemStatus::Scenario,
        HarnessError::Io(_) | HarnessError::Csv(_) => LemStatus::Io,
        _ => match e.stage() {
            Stage::Config => LemStatus::Config,
            Stage::Clearing => LemStatus::Clearing,
            Stage::Recovery => LemStatus::Recovery,
            Stage::Settlement => LemStatus::Settlement,
            Stage::Output => LemStatus::Io,
        },
    }
}

/// Runs `f`, turning panics into [`LemStatus::Panic`].
fn guarded(f: impl FnOnce() -> LemStatus) -> LemStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(LemStatus::Panic, "internal panic"))
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, LemStatus> {
    if s.is_null() {
        return Err(fail(LemStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(LemStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lem_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lem_status_name(status: LemStatus) -> *const c_char {
    let s: &'static CStr = match status {
        LemStatus::Ok => c"ok",
        LemStatus::NullPointer => c"null pointer",
        LemStatus::InvalidUtf8 => c"invalid UTF-8",
        LemStatus::Scenario => c"scenario error",
        LemStatus::Config => c"configuration error",
        LemStatus::Clearing => c"clearing error",
        LemStatus::Recovery => c"recovery error",
        LemStatus::Settlement => c"settlement error",
        LemStatus::Io => c"output error",
        LemStatus::OutOfRange => c"index out of range",
        LemStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lem_scenario_load(path: *const c_char, out: *mut *mut LemScenario) -> LemStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LemStatus::NullPointer, "null output pointer");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_scenario(path) {
            Ok(sc) => {
                *out = Box::into_raw(Box::new(LemScenario(sc)));
                LemStatus::Ok
            }
            Err(e) => fail(LemStatus::Scenario, e.to_string()),
        }
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lem_scenario_parse(text: *const c_char, out: *mut *mut LemScenario) -> LemStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LemStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_scenario(text) {
            Ok(sc) => {
                *out = Box::into_raw(Box::new(LemScenario(sc)));
                LemStatus::Ok
            }
            Err(e) => fail(LemStatus::Scenario, e.to_string()),
        }
    })
}

/// # Safety
/// `sc` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lem_scenario_free(sc: *mut LemScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Number of nodes including the substation; 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn lem_scenario_node_count(sc: *const LemScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.0.node_count())
}

/// # Safety
/// `sc` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn lem_scenario_steps(sc: *const LemScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.0.steps())
}

/// Writes the default configuration for the plaintext ADMM solver.
///
/// # Safety
/// `cfg` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lem_run_config_default(cfg: *mut LemRunConfig) -> LemStatus {
    let Some(cfg) = cfg.as_mut() else { return fail(LemStatus::NullPointer, "null config") };
    let d = RunConfig::new(SolverKind::N3, "");
    *cfg = LemRunConfig {
        solver: LemSolver::N3,
        price_mode: LemPriceMode::Duals,
        rho: d.rho,
        primal_tol: d.thresholds.primal,
        dual_tol: d.thresholds.dual,
        surplus_tol: d.thresholds.surplus,
        max_iter: d.max_iter as u32,
        theta: -1,
        seed: d.seed,
        silent_nodes: ptr::null(),
        silent_count: 0,
    };
    LemStatus::Ok
}

unsafe fn to_config(cfg: &LemRunConfig) -> Result<RunConfig, LemStatus> {
    let silent = if cfg.silent_count == 0 {
        Vec::new()
    } else if cfg.silent_nodes.is_null() {
        return Err(fail(LemStatus::NullPointer, "null silent node list"));
    } else {
        std::slice::from_raw_parts(cfg.silent_nodes, cfg.silent_count).iter().map(|&n| n as usize).collect()
    };
    let theta = match cfg.theta {
        -1 => None,
        t if t >= 0 => Some(t as usize),
        t => return Err(fail(LemStatus::Config, format!("invalid threshold {t}"))),
    };
    Ok(RunConfig {
        solver: match cfg.solver {
            LemSolver::C1 => SolverKind::C1,
            LemSolver::N3 => SolverKind::N3,
            LemSolver::S2 => SolverKind::S2,
            LemSolver::S3 => SolverKind::S3,
        },
        scenario: PathBuf::new(),
        rho: cfg.rho,
        thresholds: Thresholds { primal: cfg.primal_tol, dual: cfg.dual_tol, surplus: cfg.surplus_tol },
        max_iter: cfg.max_iter as usize,
        theta,
        seed: cfg.seed,
        price_mode: match cfg.price_mode {
            LemPriceMode::Duals => PriceMode::Duals,
            LemPriceMode::Consensus => PriceMode::Consensus,
        },
        silent_nodes: silent,
        out: None,
    })
}

/// Clears, operates, recovers and settles one day.
///
/// # Safety
/// `sc` must be a live scenario handle, `cfg` a valid config and `out` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lem_run(sc: *const LemScenario, cfg: *const LemRunConfig, out: *mut *mut LemReport) -> LemStatus {
    guarded(|| {
        let (Some(sc), Some(cfg)) = (sc.as_ref(), cfg.as_ref()) else {
            return fail(LemStatus::NullPointer, "null scenario or config");
        };
        if out.is_null() {
            return fail(LemStatus::NullPointer, "null output pointer");
        }
        let cfg = match to_config(cfg) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match run_scenario(&sc.0, &cfg) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(LemReport(r)));
                LemStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `report` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lem_report_free(report: *mut LemReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Clearing iterations; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn lem_report_iterations(report: *const LemReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.summary.iterations)
}

/// Expected cost of the cleared schedule; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn lem_report_objective(report: *const LemReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.summary.objective)
}

/// Deviation from the centralized objective in percent; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn lem_report_relative_accuracy(report: *const LemReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.summary.relative_accuracy_pct)
}

/// # Safety
/// `report` must be a live report handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lem_report_balance(report: *const LemReport, node: usize, out: *mut LemBalance) -> LemStatus {
    let (Some(report), Some(out)) = (report.as_ref(), out.as_mut()) else {
        return fail(LemStatus::NullPointer, "null report or output");
    };
    let Some(b) = report.0.balances.get(node) else {
        return fail(LemStatus::OutOfRange, format!("node {node} out of range"));
    };
    *out = LemBalance { payoff: b.payoff, imbalance: b.imbalance, final_balance: b.final_balance, recovered: b.recovered };
    LemStatus::Ok
}

/// Writes the CSV and log outputs of a report into `dir`.
///
/// # Safety
/// `report` must be a live report handle and `dir` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lem_report_write(report: *const LemReport, dir: *const c_char) -> LemStatus {
    guarded(|| {
        let Some(report) = report.as_ref() else { return fail(LemStatus::NullPointer, "null report") };
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match write_outputs(&report.0, dir.as_ref()) {
            Ok(()) => LemStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
