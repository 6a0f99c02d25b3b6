//! C ABI over the `axisym-el` simulator.
//!
//! Every entry point returns an [`ElStatus`]; on failure the message is kept
//! per thread and read back with [`el_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use axisym_el::cli::commands::{self, CliError};
use axisym_el::cli::config::{ConfigError, Mode, RunConfig};
use axisym_el::diagnostics::{self, DiagnosticsRecord};
use axisym_el::dynamics::{DirectorWalls, FlowOptions, RunParameters, Solver, SystemState};
use axisym_el::galerkin::{assemble_stokes_operator, compute_eigenbasis, GalerkinSolver, GalerkinState};
use axisym_el::grid::MeridianGrid;
use thiserror::Error;

/// Result codes. `EL_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Solver = 4,
    Output = 5,
    Analysis = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed as {0}")]
    Null(&'static str),
    #[error("{0} is not valid UTF-8")]
    Utf8(&'static str),
    #[error("{what} = {value} out of range (limit {limit})")]
    Range { what: &'static str, value: usize, limit: usize },
    #[error("buffer holds {got} values, {need} required")]
    Buffer { got: usize, need: usize },
    #[error(transparent)]
    Cli(#[from] CliError),
    #[error("panic: {0}")]
    Panic(String),
}

impl From<ConfigError> for FfiError {
    fn from(e: ConfigError) -> Self {
        FfiError::Cli(e.into())
    }
}

impl FfiError {
    fn status(&self) -> ElStatus {
        match self {
            FfiError::Null(_) => ElStatus::NullPointer,
            FfiError::Utf8(_) => ElStatus::InvalidUtf8,
            FfiError::Range { .. } => ElStatus::OutOfRange,
            FfiError::Buffer { .. } => ElStatus::BufferTooSmall,
            FfiError::Panic(_) => ElStatus::Panic,
            FfiError::Cli(CliError::Config(_)) => ElStatus::Config,
            FfiError::Cli(CliError::Solver(_)) => ElStatus::Solver,
            FfiError::Cli(CliError::Output(_)) => ElStatus::Output,
            FfiError::Cli(CliError::Analysis(_)) => ElStatus::Analysis,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> ElStatus {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown".into());
        Err(FfiError::Panic(msg))
    });
    match result {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            ElStatus::Ok
        }
        Err(e) => {
            let status = e.status();
            LAST_ERROR.with(|slot| *slot.borrow_mut() = e.to_string());
            status
        }
    }
}

unsafe fn string_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, FfiError> {
    p.as_mut().ok_or(FfiError::Null(what))
}

fn solver_err(e: impl std::fmt::Display) -> FfiError {
    FfiError::Cli(CliError::Solver(e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn el_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, without the NUL.
#[no_mangle]
pub extern "C" fn el_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to `cap - 1` bytes).
/// Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn el_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parsed and validated run configuration.
pub struct ElConfig {
    inner: RunConfig,
}

/// Parse a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn el_config_parse(json: *const c_char, out_config: *mut *mut ElConfig) -> ElStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        *slot = ptr::null_mut();
        let inner = RunConfig::parse(string_arg(json, "json")?)?;
        *slot = Box::into_raw(Box::new(ElConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from [`el_config_parse`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_config_free(config: *mut ElConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Grid size `(n_r, n_z)` of a configuration.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_config_grid_size(config: *const ElConfig, n_r: *mut usize, n_z: *mut usize) -> ElStatus {
    guard(|| {
        let g = handle(config, "config")?.inner.grid();
        *out(n_r, "n_r")? = g.n_r;
        *out(n_z, "n_z")? = g.n_z;
        Ok(())
    })
}

/// Number of epsilon values (1 unless the configuration lists several).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_config_epsilon_count(config: *const ElConfig, count: *mut usize) -> ElStatus {
    guard(|| {
        *out(count, "count")? = handle(config, "config")?.inner.epsilons().len();
        Ok(())
    })
}

/// Single-epsilon run written to `out_dir`; `energy_holds` receives the energy inequality verdict.
///
/// # Safety
/// `config` must be valid, `out_dir` NUL-terminated, `energy_holds` null or writable.
#[no_mangle]
pub unsafe extern "C" fn el_run(config: *const ElConfig, out_dir: *const c_char, energy_holds: *mut bool) -> ElStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        let dir = string_arg(out_dir, "out_dir")?;
        let analysis = commands::run(cfg, Path::new(dir))?;
        if let Some(h) = energy_holds.as_mut() {
            *h = analysis.energy.holds;
        }
        Ok(())
    })
}

/// Sweep over the configured epsilon list; `failed` receives the number of members that errored.
///
/// # Safety
/// As for [`el_run`].
#[no_mangle]
pub unsafe extern "C" fn el_sweep(config: *const ElConfig, out_dir: *const c_char, failed: *mut usize) -> ElStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        let dir = string_arg(out_dir, "out_dir")?;
        let summary = commands::sweep(cfg, Path::new(dir))?;
        if let Some(f) = failed.as_mut() {
            *f = summary.members.iter().filter(|m| m.error.is_some()).count();
        }
        Ok(())
    })
}

/// Recompute the analysis files of a run or sweep directory. `config` may be null,
/// in which case the resolved configuration stored in the directory is used.
///
/// # Safety
/// `config` null or valid; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn el_analyze(config: *const ElConfig, dir: *const c_char) -> ElStatus {
    guard(|| {
        let cfg = config.as_ref().map(|c| &c.inner);
        commands::analyze(cfg, Path::new(string_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Stokes eigenbasis of the configured grid written to `out_dir`.
///
/// # Safety
/// As for [`el_run`].
#[no_mangle]
pub unsafe extern "C" fn el_eig(config: *const ElConfig, out_dir: *const c_char) -> ElStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        commands::eig(cfg, Path::new(string_arg(out_dir, "out_dir")?))?;
        Ok(())
    })
}

/// Grid fields readable through [`el_simulation_field`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElField {
    Psi = 0,
    Omega = 1,
    VelocityR = 2,
    VelocityZ = 3,
    DirectorR = 4,
    DirectorZ = 5,
    /// Director angle; sphere mode only.
    Angle = 6,
}

/// Diagnostics of one time level.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElRecord {
    pub time: f64,
    pub e_kin: f64,
    pub e_el: f64,
    pub e_pen: f64,
    pub d_visc: f64,
    pub d_tension: f64,
    pub max_d: f64,
    pub lambda_t: f64,
}

impl From<&DiagnosticsRecord> for ElRecord {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            time: r.time,
            e_kin: r.e_kin,
            e_el: r.e_el,
            e_pen: r.e_pen,
            d_visc: r.d_visc,
            d_tension: r.d_tension,
            max_d: r.max_d,
            lambda_t: r.lambda_t,
        }
    }
}

enum Stepper {
    Grid(Solver),
    Galerkin(Box<GalerkinSolver>, GalerkinState),
}

/// Stepwise integration of one epsilon.
pub struct ElSimulation {
    grid: MeridianGrid,
    params: RunParameters,
    walls: DirectorWalls,
    stepper: Stepper,
    state: SystemState,
    records: Vec<DiagnosticsRecord>,
}

impl ElSimulation {
    fn new(cfg: &RunConfig, epsilon_index: usize) -> Result<Self, FfiError> {
        let eps = cfg.epsilons();
        let epsilon = *eps.get(epsilon_index).ok_or(FfiError::Range {
            what: "epsilon_index",
            value: epsilon_index,
            limit: eps.len(),
        })?;
        let grid = cfg.grid();
        let repr = cfg.mode.representation();
        let (initial, walls) = cfg.scenario.build(&grid, repr).map_err(|e| ConfigError::Invalid {
            path: "scenario".into(),
            message: e.to_string(),
        })?;
        let params = RunParameters {
            mode: repr,
            epsilon,
            dt: commands::sweep_dt(cfg, &grid),
            t_end: cfg.t_end,
            advection: cfg.advection,
        };
        let (stepper, state) = match cfg.mode {
            Mode::Gl | Mode::Sphere => {
                let solver = Solver::new(&grid, params, walls.clone(), FlowOptions::default()).map_err(solver_err)?;
                (Stepper::Grid(solver), initial)
            }
            Mode::Galerkin => {
                let basis = compute_eigenbasis(&assemble_stokes_operator(&grid), cfg.galerkin.modes).map_err(solver_err)?;
                let solver = GalerkinSolver::new(basis, params, walls.clone()).map_err(solver_err)?;
                let g = solver.initial_state(&initial).map_err(solver_err)?;
                let state = SystemState {
                    flow: solver.basis.reconstruct(&g.coefficients).map_err(solver_err)?,
                    director: g.director.clone(),
                    time: g.time,
                };
                (Stepper::Galerkin(Box::new(solver), g), state)
            }
        };
        let first = diagnostics::record_initial(&state, &grid, &params, &walls).map_err(solver_err)?;
        Ok(Self {
            grid,
            params,
            walls,
            stepper,
            state,
            records: vec![first],
        })
    }

    fn step(&mut self) -> Result<(), FfiError> {
        let next = match &mut self.stepper {
            Stepper::Grid(solver) => solver.step(&self.state).map_err(solver_err)?,
            Stepper::Galerkin(solver, g) => {
                let n = solver.step(g).map_err(solver_err)?;
                let state = SystemState {
                    flow: solver.basis.reconstruct(&n.coefficients).map_err(solver_err)?,
                    director: n.director.clone(),
                    time: n.time,
                };
                *g = n;
                state
            }
        };
        let (rec, _) = diagnostics::record_step(&next, &self.state.director, &self.grid, &self.params, &self.walls)
            .map_err(solver_err)?;
        self.records.push(rec);
        self.state = next;
        Ok(())
    }
}

/// Set up the initial state for member `epsilon_index` of the configuration.
///
/// # Safety
/// `config` must be valid and `out_sim` writable.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_new(
    config: *const ElConfig,
    epsilon_index: usize,
    out_sim: *mut *mut ElSimulation,
) -> ElStatus {
    guard(|| {
        let slot = out(out_sim, "out_sim")?;
        *slot = ptr::null_mut();
        let sim = ElSimulation::new(&handle(config, "config")?.inner, epsilon_index)?;
        *slot = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or come from [`el_simulation_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_free(sim: *mut ElSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advance `steps` time steps. On error the state of the last completed step is kept.
///
/// # Safety
/// `sim` must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_step(sim: *mut ElSimulation, steps: usize) -> ElStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or(FfiError::Null("sim"))?;
        for _ in 0..steps {
            sim.step()?;
        }
        Ok(())
    })
}

/// Number of steps needed to reach the configured final time.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_total_steps(sim: *const ElSimulation, steps: *mut usize) -> ElStatus {
    guard(|| {
        *out(steps, "steps")? = handle(sim, "sim")?.params.steps();
        Ok(())
    })
}

/// Time step and current time.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_time(sim: *const ElSimulation, dt: *mut f64, time: *mut f64) -> ElStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        *out(dt, "dt")? = sim.params.dt;
        *out(time, "time")? = sim.state.time;
        Ok(())
    })
}

/// Number of stored diagnostics records (steps taken plus one).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_record_count(sim: *const ElSimulation, count: *mut usize) -> ElStatus {
    guard(|| {
        *out(count, "count")? = handle(sim, "sim")?.records.len();
        Ok(())
    })
}

/// Diagnostics record `index`; index 0 is the initial state.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_record(sim: *const ElSimulation, index: usize, record: *mut ElRecord) -> ElStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        let r = sim.records.get(index).ok_or(FfiError::Range {
            what: "index",
            value: index,
            limit: sim.records.len(),
        })?;
        *out(record, "record")? = r.into();
        Ok(())
    })
}

/// Copy a field into `buf` (`n_r * n_z` values, index `j * n_r + i`).
///
/// # Safety
/// `sim` must be valid and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn el_simulation_field(sim: *const ElSimulation, field: ElField, buf: *mut f64, len: usize) -> ElStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        let s = &sim.state;
        let data = match field {
            ElField::Psi => &s.flow.psi,
            ElField::Omega => &s.flow.omega,
            ElField::VelocityR => &s.flow.u_r,
            ElField::VelocityZ => &s.flow.u_z,
            ElField::DirectorR => &s.director.d_r,
            ElField::DirectorZ => &s.director.d_z,
            ElField::Angle => s.director.phi.as_ref().ok_or_else(|| {
                FfiError::Cli(CliError::Config(ConfigError::Invalid {
                    path: "mode".into(),
                    message: "the angle field exists in sphere mode only".into(),
                }))
            })?,
        };
        let need = data.data.len();
        if buf.is_null() {
            return Err(FfiError::Null("buf"));
        }
        if len < need {
            return Err(FfiError::Buffer { got: len, need });
        }
        ptr::copy_nonoverlapping(data.data.as_ptr(), buf, need);
        Ok(())
    })
}
