//! C ABI over the `atmarl` crate.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`AtmarlStatus`]; the message of the most recent failure on the
//! calling thread is available from [`atmarl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use atmarl::config::ScenarioConfig;
use atmarl::emulator::{
    allocate_capacity, init_scenario, DistributionKind, DistributionSpec, KpiReport, NetworkState, MBR_LADDER,
};
use atmarl::harness::{evaluate, pretrain_stage, train_stage, Approach, EpisodeTrace, ExperimentPlan, SeedArtifacts};
use atmarl::metrics::{convergence_time, iae, oscillation_amplitude, Direction, KpiSeries};
use atmarl::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtmarlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Checkpoint = 5,
    Stage = 6,
    Io = 7,
    /// The KPI never entered its band; the output value is untouched.
    NotReached = 8,
    Panic = 9,
}

/// Direction of a KPI series.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtmarlDirection {
    Maximize = 0,
    Minimize = 1,
}

/// UE distribution over the four gNodeBs.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtmarlDistribution {
    Uniform = 0,
    Gaussian = 1,
    Gamma = 2,
}

/// Controller under evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtmarlApproach {
    AtMarl = 0,
    RuleBased = 1,
    NaiveParallel = 2,
    GoalHalving = 3,
    Oracle = 4,
}

pub struct AtmarlScenario(ScenarioConfig);

pub struct AtmarlEmulator {
    state: NetworkState,
    rng: ChaCha8Rng,
    last: Option<KpiReport>,
}

pub struct AtmarlArtifacts(SeedArtifacts);

pub struct AtmarlTrace(EpisodeTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &Error) -> AtmarlStatus {
    match err {
        Error::Config { .. } | Error::Scenario(_) | Error::Distribution { .. } | Error::InvalidService(_) | Error::Plan(_) => {
            AtmarlStatus::Config
        }
        Error::Numeric(_) | Error::NotConverged(_) => AtmarlStatus::Numeric,
        Error::VersionMismatch { .. } | Error::Truncated(_) | Error::MissingCheckpoint(_) | Error::Shape { .. } => {
            AtmarlStatus::Checkpoint
        }
        Error::Stage { .. } | Error::UnknownAgent(_) => AtmarlStatus::Stage,
        Error::Io(_) | Error::Csv(_) => AtmarlStatus::Io,
    }
}

fn fail(status: AtmarlStatus, msg: impl Into<String>) -> AtmarlStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> AtmarlStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, turning panics into [`AtmarlStatus::Panic`].
fn guard(f: impl FnOnce() -> AtmarlStatus) -> AtmarlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(AtmarlStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, AtmarlStatus> {
    if path.is_null() {
        return Err(fail(AtmarlStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(AtmarlStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize) -> Result<&'a [T], AtmarlStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(AtmarlStatus::NullPointer, "array is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_slice<'a, T>(data: *mut T, len: usize) -> Result<&'a mut [T], AtmarlStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(fail(AtmarlStatus::NullPointer, "output array is null"));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! deref {
    ($p:expr) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(AtmarlStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match $p.as_mut() {
            Some(v) => v,
            None => return fail(AtmarlStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

fn boxed<T>(out: *mut *mut T, value: T) -> AtmarlStatus {
    // SAFETY: callers check `out` for null before building `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    AtmarlStatus::Ok
}

fn approach_of(a: AtmarlApproach) -> Approach {
    match a {
        AtmarlApproach::AtMarl => Approach::AtMarl,
        AtmarlApproach::RuleBased => Approach::RuleBased,
        AtmarlApproach::NaiveParallel => Approach::NaiveParallel,
        AtmarlApproach::GoalHalving => Approach::GoalHalving,
        AtmarlApproach::Oracle => Approach::Oracle,
    }
}

fn distribution_of(d: AtmarlDistribution) -> DistributionSpec {
    DistributionSpec::of_kind(match d {
        AtmarlDistribution::Uniform => DistributionKind::Uniform,
        AtmarlDistribution::Gaussian => DistributionKind::Gaussian,
        AtmarlDistribution::Gamma => DistributionKind::Gamma,
    })
}

/// Message of the last failure on this thread. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn atmarl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// Scenarios.

/// Built-in scenario: 3 intents when `five_intents` is 0, otherwise 5.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn atmarl_scenario_builtin(five_intents: i32, out: *mut *mut AtmarlScenario) -> AtmarlStatus {
    guard(|| {
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        let s = if five_intents != 0 {
            ScenarioConfig::five_intent()
        } else {
            ScenarioConfig::three_intent()
        };
        boxed(out, AtmarlScenario(s))
    })
}

/// Parses a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_scenario_load(path: *const c_char, out: *mut *mut AtmarlScenario) -> AtmarlStatus {
    guard(|| {
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        let path = try_ffi!(path_arg(path));
        match ScenarioConfig::load(&path).and_then(|s| s.validate().map(|_| s)) {
            Ok(s) => boxed(out, AtmarlScenario(s)),
            Err(e) => from_error(e),
        }
    })
}

/// Number of services (intents) in the scenario; 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn atmarl_scenario_services(scenario: *const AtmarlScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.services.len())
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmarl_scenario_free(scenario: *mut AtmarlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

// Emulator.

/// Emulator starting from the scenario's initial knobs.
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_new(
    scenario: *const AtmarlScenario,
    seed: u64,
    out: *mut *mut AtmarlEmulator,
) -> AtmarlStatus {
    guard(|| {
        let scenario = deref!(scenario);
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        match init_scenario(&scenario.0) {
            Ok(mut state) => {
                state.controls = scenario.0.initial_controls();
                boxed(
                    out,
                    AtmarlEmulator {
                        state,
                        rng: ChaCha8Rng::seed_from_u64(seed),
                        last: None,
                    },
                )
            }
            Err(e) => from_error(e),
        }
    })
}

/// Advances one step and writes one KPI per service into `kpi_out`.
///
/// # Safety
/// `emulator` must be live; `kpi_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_step(emulator: *mut AtmarlEmulator, kpi_out: *mut f64, len: usize) -> AtmarlStatus {
    guard(|| {
        let emu = deref_mut!(emulator);
        let n = emu.state.service_count();
        if len != n {
            return fail(AtmarlStatus::InvalidArgument, format!("expected {n} KPI slots, got {len}"));
        }
        let out = try_ffi!(out_slice(kpi_out, len));
        let report = emu.state.step(&mut emu.rng);
        if let Err(e) = emu.state.check_conservation(&report) {
            return from_error(e);
        }
        out.copy_from_slice(&report.kpi);
        emu.last = Some(report);
        AtmarlStatus::Ok
    })
}

/// Served rate per service (Mbps, summed over gNodeBs) of the last step.
///
/// # Safety
/// `emulator` must be live; `served_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_served(
    emulator: *const AtmarlEmulator,
    served_out: *mut f64,
    len: usize,
) -> AtmarlStatus {
    guard(|| {
        let emu = deref!(emulator);
        let Some(report) = &emu.last else {
            return fail(AtmarlStatus::InvalidArgument, "no step taken yet");
        };
        if len != report.served.len() {
            return fail(AtmarlStatus::InvalidArgument, format!("expected {} slots, got {len}", report.served.len()));
        }
        try_ffi!(out_slice(served_out, len)).copy_from_slice(&report.served);
        AtmarlStatus::Ok
    })
}

/// Sets a service's packet priority (1..=5).
///
/// # Safety
/// `emulator` must be live.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_set_priority(emulator: *mut AtmarlEmulator, service: usize, priority: u8) -> AtmarlStatus {
    guard(|| {
        let emu = deref_mut!(emulator);
        if service >= emu.state.service_count() || !(1..=5).contains(&priority) {
            return fail(AtmarlStatus::InvalidArgument, "service index or priority out of range");
        }
        emu.state.controls.priority[service] = priority;
        AtmarlStatus::Ok
    })
}

/// Sets a service's MBR; `mbr_mbps` must be one of the ladder values.
///
/// # Safety
/// `emulator` must be live.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_set_mbr(emulator: *mut AtmarlEmulator, service: usize, mbr_mbps: f64) -> AtmarlStatus {
    guard(|| {
        let emu = deref_mut!(emulator);
        let level = MBR_LADDER.iter().position(|&v| (v - mbr_mbps).abs() < 1e-9);
        match level {
            Some(l) if service < emu.state.service_count() => {
                emu.state.controls.mbr_level[service] = l;
                AtmarlStatus::Ok
            }
            _ => fail(AtmarlStatus::InvalidArgument, "service index or MBR value out of range"),
        }
    })
}

/// # Safety
/// `emulator` must be live.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_set_distribution(
    emulator: *mut AtmarlEmulator,
    distribution: AtmarlDistribution,
) -> AtmarlStatus {
    guard(|| {
        let emu = deref_mut!(emulator);
        match emu.state.set_distribution(distribution_of(distribution)) {
            Ok(()) => AtmarlStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `emulator` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmarl_emulator_free(emulator: *mut AtmarlEmulator) {
    if !emulator.is_null() {
        drop(Box::from_raw(emulator));
    }
}

/// Weighted water-filling of one gNodeB.
///
/// # Safety
/// All arrays must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn atmarl_allocate_capacity(
    offered: *const f64,
    priority: *const u8,
    mbr: *const f64,
    len: usize,
    bandwidth: f64,
    served_out: *mut f64,
) -> AtmarlStatus {
    guard(|| {
        let offered = try_ffi!(slice_arg(offered, len));
        let priority = try_ffi!(slice_arg(priority, len));
        let mbr = try_ffi!(slice_arg(mbr, len));
        let out = try_ffi!(out_slice(served_out, len));
        if !(bandwidth > 0.0) || priority.iter().any(|p| !(1..=5).contains(p)) {
            return fail(AtmarlStatus::InvalidArgument, "bandwidth must be positive and priorities in 1..=5");
        }
        out.copy_from_slice(&allocate_capacity(offered, priority, mbr, bandwidth));
        AtmarlStatus::Ok
    })
}

// Metrics.

unsafe fn series(values: *const f64, len: usize, target: f64, direction: AtmarlDirection) -> Result<KpiSeries, AtmarlStatus> {
    let values = slice_arg(values, len)?;
    let dir = match direction {
        AtmarlDirection::Maximize => Direction::Maximize,
        AtmarlDirection::Minimize => Direction::Minimize,
    };
    KpiSeries::new(values.to_vec(), target, dir).map_err(|e| {
        let status = status_of(&e);
        fail(if status == AtmarlStatus::Checkpoint { AtmarlStatus::InvalidArgument } else { status }, e.to_string())
    })
}

/// IAE from the first in-band sample; [`AtmarlStatus::NotReached`] if the band is never entered.
///
/// # Safety
/// `values` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_iae(
    values: *const f64,
    len: usize,
    target: f64,
    direction: AtmarlDirection,
    out: *mut f64,
) -> AtmarlStatus {
    guard(|| {
        let out = deref_mut!(out);
        let s = try_ffi!(series(values, len, target, direction));
        match iae(&s) {
            Some(v) => {
                *out = v;
                AtmarlStatus::Ok
            }
            None => fail(AtmarlStatus::NotReached, "KPI never entered its band"),
        }
    })
}

/// First step after which the series stays within `tolerance` of the target.
///
/// # Safety
/// `values` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_convergence_time(
    values: *const f64,
    len: usize,
    target: f64,
    direction: AtmarlDirection,
    tolerance: f64,
    out: *mut usize,
) -> AtmarlStatus {
    guard(|| {
        let out = deref_mut!(out);
        let s = try_ffi!(series(values, len, target, direction));
        match convergence_time(&s, tolerance) {
            Some(v) => {
                *out = v;
                AtmarlStatus::Ok
            }
            None => fail(AtmarlStatus::NotReached, "KPI does not settle inside its band"),
        }
    })
}

/// Peak-to-peak spread from step `from` on, relative to the target.
///
/// # Safety
/// `values` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_oscillation_amplitude(
    values: *const f64,
    len: usize,
    target: f64,
    from: usize,
    out: *mut f64,
) -> AtmarlStatus {
    guard(|| {
        let out = deref_mut!(out);
        let s = try_ffi!(series(values, len, target, AtmarlDirection::Maximize));
        match oscillation_amplitude(&s, from) {
            Ok(v) => {
                *out = v;
                AtmarlStatus::Ok
            }
            Err(e) => fail(AtmarlStatus::InvalidArgument, e.to_string()),
        }
    })
}

// Pipeline.

/// Pre-trains both MARL systems for `seed` on `scenario`.
///
/// # Safety
/// `scenario` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_pretrain(
    scenario: *const AtmarlScenario,
    seed: u64,
    out: *mut *mut AtmarlArtifacts,
) -> AtmarlStatus {
    guard(|| {
        let scenario = deref!(scenario);
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        let plan = ExperimentPlan::new(scenario.0.clone(), Vec::new());
        match pretrain_stage(&scenario.0, &plan.pretrain, seed) {
            Ok(p) => boxed(out, AtmarlArtifacts(p.artifacts)),
            Err(e) => from_error(e),
        }
    })
}

/// Trains the supervisor `approach` needs. A no-op for supervisor-free approaches.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn atmarl_train_supervisor(
    artifacts: *mut AtmarlArtifacts,
    scenario: *const AtmarlScenario,
    approach: AtmarlApproach,
    episodes: usize,
) -> AtmarlStatus {
    guard(|| {
        let artifacts = deref_mut!(artifacts);
        let scenario = deref!(scenario);
        let Some(role) = approach_of(approach).role() else {
            return AtmarlStatus::Ok;
        };
        let mut plan = ExperimentPlan::new(scenario.0.clone(), Vec::new());
        plan.train.episodes = episodes;
        match train_stage(&mut artifacts.0, role, &scenario.0, &plan.train, plan.goal_levels) {
            Ok(_) => AtmarlStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `artifacts` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn atmarl_artifacts_save(artifacts: *const AtmarlArtifacts, path: *const c_char) -> AtmarlStatus {
    guard(|| {
        let artifacts = deref!(artifacts);
        let path = try_ffi!(path_arg(path));
        match artifacts.0.save(&path) {
            Ok(()) => AtmarlStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_artifacts_load(path: *const c_char, out: *mut *mut AtmarlArtifacts) -> AtmarlStatus {
    guard(|| {
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        let path = try_ffi!(path_arg(path));
        match SeedArtifacts::load(&path) {
            Ok(a) => boxed(out, AtmarlArtifacts(a)),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `artifacts` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmarl_artifacts_free(artifacts: *mut AtmarlArtifacts) {
    if !artifacts.is_null() {
        drop(Box::from_raw(artifacts));
    }
}

/// Runs one evaluation episode of `episode_len` steps.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn atmarl_evaluate(
    artifacts: *const AtmarlArtifacts,
    scenario: *const AtmarlScenario,
    approach: AtmarlApproach,
    episode_len: usize,
    out: *mut *mut AtmarlTrace,
) -> AtmarlStatus {
    guard(|| {
        let artifacts = deref!(artifacts);
        let scenario = deref!(scenario);
        if out.is_null() {
            return fail(AtmarlStatus::NullPointer, "out is null");
        }
        let approach = approach_of(approach);
        let mut plan = ExperimentPlan::new(scenario.0.clone(), vec![approach]);
        plan.episode_len = episode_len;
        plan.oscillation_from = episode_len / 2;
        if let Err(e) = plan.validate() {
            return from_error(e);
        }
        match evaluate(approach, &artifacts.0, &scenario.0, &plan) {
            Ok(t) => boxed(out, AtmarlTrace(t)),
            Err(e) => from_error(e),
        }
    })
}

/// Number of rows (steps) in the trace; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn atmarl_trace_len(trace: *const AtmarlTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.rows.len())
}

/// KPI series of service `service` over the whole trace.
///
/// # Safety
/// `trace` must be live and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn atmarl_trace_kpi(trace: *const AtmarlTrace, service: usize, out: *mut f64, len: usize) -> AtmarlStatus {
    guard(|| {
        let trace = deref!(trace);
        if service >= trace.0.services.len() || len != trace.0.rows.len() {
            return fail(AtmarlStatus::InvalidArgument, "service index or length mismatch");
        }
        let out = try_ffi!(out_slice(out, len));
        for (o, row) in out.iter_mut().zip(&trace.0.rows) {
            *o = row.kpi[service];
        }
        AtmarlStatus::Ok
    })
}

/// # Safety
/// `trace` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn atmarl_trace_write_csv(trace: *const AtmarlTrace, path: *const c_char) -> AtmarlStatus {
    guard(|| {
        let trace = deref!(trace);
        let path = try_ffi!(path_arg(path));
        let file = match std::fs::File::create(&path) {
            Ok(f) => f,
            Err(e) => return from_error(e.into()),
        };
        match trace.0.write_csv(file) {
            Ok(()) => AtmarlStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atmarl_trace_free(trace: *mut AtmarlTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
