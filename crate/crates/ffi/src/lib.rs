//! C ABI over `abps-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_from_toml` and released by the matching `*_free`. Every fallible call
//! returns an [`AbpsStatus`]; on failure [`abps_last_error`] describes the
//! most recent error on the calling thread. Panics are caught and reported
//! as [`AbpsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use abps_core::bandit::{BanditMode, BanditState, Strategy};
use abps_core::harness::output::write_run;
use abps_core::harness::{execute, ExperimentConfig, RunArtifacts};
use abps_core::seeding::{self, tag, StreamRng};
use abps_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Training = 4,
    Io = 5,
    /// The call has not produced a result yet (e.g. reading results before
    /// `abps_experiment_run`).
    NotReady = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbpsStrategyKind {
    Random = 0,
    /// `param` is ξ.
    Ucb = 1,
    /// `param` is ε.
    EpsilonGreedy = 2,
    /// `param` is the temperature.
    Softmax = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AbpsMetrics {
    pub best: f64,
    pub top25_quantile: f64,
    pub variance: f64,
    pub median: f64,
}

/// A bandit over `k` arms with its own selection RNG.
pub struct AbpsBandit {
    state: BanditState,
    rng: StreamRng,
}

/// An experiment config plus, after a run, its results.
pub struct AbpsExperiment {
    config: ExperimentConfig,
    artifacts: Option<RunArtifacts>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> AbpsStatus {
    match err {
        Error::Config(_) | Error::Toml(_) | Error::TomlSer(_) | Error::Json(_) => {
            AbpsStatus::Config
        }
        Error::Training { .. } | Error::NonFiniteLoss { .. } => AbpsStatus::Training,
        Error::Io { .. } | Error::Csv(_) => AbpsStatus::Io,
        _ => AbpsStatus::InvalidArgument,
    }
}

fn fail(status: AbpsStatus, msg: impl Into<String>) -> AbpsStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), AbpsStatus>) -> AbpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AbpsStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(AbpsStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn check(err: Error) -> AbpsStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn handle<'a, T>(ptr: *mut T) -> Result<&'a mut T, AbpsStatus> {
    // SAFETY: caller passes a live handle from this library or null.
    unsafe { ptr.as_mut() }.ok_or_else(|| fail(AbpsStatus::NullPointer, "null handle"))
}

unsafe fn out_ptr<'a, T>(ptr: *mut T) -> Result<&'a mut T, AbpsStatus> {
    // SAFETY: caller passes a writable pointer or null.
    unsafe { ptr.as_mut() }.ok_or_else(|| fail(AbpsStatus::NullPointer, "null output pointer"))
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, AbpsStatus> {
    if ptr.is_null() {
        return Err(fail(AbpsStatus::NullPointer, "null string"));
    }
    // SAFETY: non-null and NUL-terminated per the caller's contract.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(AbpsStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], AbpsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(AbpsStatus::NullPointer, "null array"));
    }
    // SAFETY: `ptr` points to `len` readable elements per the caller's contract.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn abps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Creates a bandit over `k` arms, arm `i` initialized with
/// `initial_rewards[i]`. `window == 0` selects cumulative means, otherwise a
/// sliding window of that many time steps.
///
/// # Safety
/// `initial_rewards` must point to `k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_new(
    k: usize,
    initial_rewards: *const f64,
    window: u64,
    seed: u64,
    out: *mut *mut AbpsBandit,
) -> AbpsStatus {
    guard(|| {
        let out = unsafe { out_ptr(out) }?;
        let rewards = unsafe { slice(initial_rewards, k) }?;
        let mode = if window == 0 {
            BanditMode::Cumulative
        } else {
            BanditMode::Sliding { window }
        };
        let state = BanditState::init(k, rewards, mode).map_err(check)?;
        let rng = seeding::stream(seed, &[tag::BANDIT]);
        *out = Box::into_raw(Box::new(AbpsBandit { state, rng }));
        Ok(())
    })
}

/// # Safety
/// `bandit` must come from [`abps_bandit_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_free(bandit: *mut AbpsBandit) {
    if !bandit.is_null() {
        // SAFETY: allocated by `abps_bandit_new`, ownership returns here.
        drop(unsafe { Box::from_raw(bandit) });
    }
}

/// Advances bandit time and writes the chosen arm to `arm`.
///
/// # Safety
/// `bandit` must be a live handle; `arm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_select(
    bandit: *mut AbpsBandit,
    kind: AbpsStrategyKind,
    param: f64,
    arm: *mut usize,
) -> AbpsStatus {
    guard(|| {
        let b = unsafe { handle(bandit) }?;
        let arm = unsafe { out_ptr(arm) }?;
        let strategy = match kind {
            AbpsStrategyKind::Random => Strategy::Random,
            AbpsStrategyKind::Ucb => Strategy::ucb(param),
            AbpsStrategyKind::EpsilonGreedy => Strategy::epsilon_greedy(param),
            AbpsStrategyKind::Softmax => Strategy::softmax(param),
        };
        strategy.validate().map_err(check)?;
        *arm = b.state.select(&strategy, &mut b.rng);
        Ok(())
    })
}

/// Credits `reward` to `arm` at the current bandit time.
///
/// # Safety
/// `bandit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_update(
    bandit: *mut AbpsBandit,
    arm: usize,
    reward: f64,
) -> AbpsStatus {
    guard(|| {
        let b = unsafe { handle(bandit) }?;
        if !reward.is_finite() {
            return Err(fail(AbpsStatus::InvalidArgument, "reward must be finite"));
        }
        let now = b.state.time();
        b.state.update(arm, reward, now).map_err(check)
    })
}

/// Mean and pull count of `arm`; either output may be null.
///
/// # Safety
/// `bandit` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_arm(
    bandit: *mut AbpsBandit,
    arm: usize,
    mean: *mut f64,
    pulls: *mut u64,
) -> AbpsStatus {
    guard(|| {
        let b = unsafe { handle(bandit) }?;
        let state = b.state.arm(arm).map_err(check)?;
        if let Some(m) = unsafe { mean.as_mut() } {
            *m = state.mean;
        }
        if let Some(p) = unsafe { pulls.as_mut() } {
            *p = state.pulls;
        }
        Ok(())
    })
}

/// # Safety
/// `bandit` must be a live handle; `time` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_bandit_time(bandit: *mut AbpsBandit, time: *mut u64) -> AbpsStatus {
    guard(|| {
        let b = unsafe { handle(bandit) }?;
        *unsafe { out_ptr(time) }? = b.state.time();
        Ok(())
    })
}

/// Best, 75th percentile, population variance and median of `n` returns.
///
/// # Safety
/// `returns` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_compute_metrics(
    returns: *const f64,
    n: usize,
    out: *mut AbpsMetrics,
) -> AbpsStatus {
    guard(|| {
        let out = unsafe { out_ptr(out) }?;
        let values = unsafe { slice(returns, n) }?;
        let m = abps_core::harness::metrics::epoch_metrics(values).map_err(check)?;
        *out = AbpsMetrics {
            best: m.best,
            top25_quantile: m.top25_quantile,
            variance: m.variance,
            median: m.median,
        };
        Ok(())
    })
}

/// Parses and validates an experiment config given as TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut AbpsExperiment,
) -> AbpsStatus {
    guard(|| {
        let out = unsafe { out_ptr(out) }?;
        let text = unsafe { c_str(toml) }?;
        let config = ExperimentConfig::from_toml(text).map_err(check)?;
        config.validate().map_err(check)?;
        *out = Box::into_raw(Box::new(AbpsExperiment {
            config,
            artifacts: None,
        }));
        Ok(())
    })
}

/// # Safety
/// `experiment` must come from [`abps_experiment_from_toml`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_free(experiment: *mut AbpsExperiment) {
    if !experiment.is_null() {
        // SAFETY: allocated by `abps_experiment_from_toml`.
        drop(unsafe { Box::from_raw(experiment) });
    }
}

/// Overrides the run seed and discards earlier results.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_set_seed(
    experiment: *mut AbpsExperiment,
    seed: u64,
) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        if i64::try_from(seed).is_err() {
            return Err(fail(
                AbpsStatus::InvalidArgument,
                "seed must not exceed 2^63 - 1",
            ));
        }
        e.config.seed = seed;
        e.artifacts = None;
        Ok(())
    })
}

/// Trains as configured. Blocks until the run finishes.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_run(experiment: *mut AbpsExperiment) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        e.artifacts = Some(execute(&e.config).map_err(check)?);
        Ok(())
    })
}

fn results(e: &AbpsExperiment) -> Result<&RunArtifacts, AbpsStatus> {
    e.artifacts
        .as_ref()
        .ok_or_else(|| fail(AbpsStatus::NotReady, "experiment has not been run"))
}

/// Writes the run's CSV files and snapshots into `dir`.
///
/// # Safety
/// `experiment` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_write(
    experiment: *mut AbpsExperiment,
    dir: *const c_char,
) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        let dir = unsafe { c_str(dir) }?;
        write_run(Path::new(dir), results(e)?).map_err(check)
    })
}

/// Pool size and number of evaluation epochs (including the initial one).
///
/// # Safety
/// `experiment` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_shape(
    experiment: *mut AbpsExperiment,
    agents: *mut usize,
    epochs: *mut usize,
) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        let log = &results(e)?.log;
        if let Some(a) = unsafe { agents.as_mut() } {
            *a = log.agent_ids.len();
        }
        if let Some(n) = unsafe { epochs.as_mut() } {
            *n = log.eval_rows.len();
        }
        Ok(())
    })
}

/// Copies epoch `epoch`'s per-agent mean returns into `buf` (`len` must be
/// at least the pool size).
///
/// # Safety
/// `experiment` must be a live handle; `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_returns(
    experiment: *mut AbpsExperiment,
    epoch: usize,
    buf: *mut f64,
    len: usize,
) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        let log = &results(e)?.log;
        let row = log
            .eval_rows
            .get(epoch)
            .ok_or_else(|| fail(AbpsStatus::InvalidArgument, format!("no epoch {epoch}")))?;
        if len < row.returns.len() {
            return Err(fail(
                AbpsStatus::InvalidArgument,
                format!("buffer holds {len} values, pool has {}", row.returns.len()),
            ));
        }
        if buf.is_null() {
            return Err(fail(AbpsStatus::NullPointer, "null buffer"));
        }
        // SAFETY: `buf` has room for `len >= row.returns.len()` doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(buf, row.returns.len()) };
        dst.copy_from_slice(&row.returns);
        Ok(())
    })
}

/// Training interactions of the behavior stream and across all runs.
///
/// # Safety
/// `experiment` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn abps_experiment_interactions(
    experiment: *mut AbpsExperiment,
    env_steps: *mut u64,
    total_interactions: *mut u64,
) -> AbpsStatus {
    guard(|| {
        let e = unsafe { handle(experiment) }?;
        let log = &results(e)?.log;
        if let Some(s) = unsafe { env_steps.as_mut() } {
            *s = log.env_steps;
        }
        if let Some(t) = unsafe { total_interactions.as_mut() } {
            *t = log.total_interactions;
        }
        Ok(())
    })
}
