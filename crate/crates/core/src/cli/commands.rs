//! Subcommands and the analysis pipeline shared by `run`, `sweep` and `analyze`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, DtPolicy, Mode, RunConfig};
use super::output::{self, num, OutputError};
use crate::concentration::{
    axis_vs_offaxis_report, classify_regime, default_eps0_sq, extract_blowup_scale, local_scaled_energy, AxisReport,
    ConcentrationError, ProbeRow, Regime, SweepMember,
};
use crate::diagnostics::{check_energy_inequality, classify_good_times, energy_density, DiagnosticsRecord, EnergyReport};
use crate::dynamics::{DirectorWalls, FlowOptions, RunParameters, Snapshot, Solver, SystemState};
use crate::galerkin::{assemble_stokes_operator, compute_eigenbasis, GalerkinSolver};
use crate::grid::MeridianGrid;
use crate::state::Representation;
use crate::weakform::{
    cancellation_experiment, stress_force, test_library, weak_director_residual, weak_momentum_residual, CancellationReport,
    DirectorTestFunction, ForceSample,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("analysis failure: {0}")]
    Analysis(String),
    #[error("output failure: {0}")]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Output(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

fn analysis_err(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

/// Time step shared by every member of a sweep.
pub fn sweep_dt(cfg: &RunConfig, grid: &MeridianGrid) -> f64 {
    match cfg.dt {
        DtPolicy::Fixed(v) => v,
        DtPolicy::Auto => cfg
            .epsilons()
            .iter()
            .map(|&e| RunParameters::auto_dt(grid, cfg.mode.representation(), e))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Everything the analysis needs from a finished or stored run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub grid: MeridianGrid,
    pub epsilon: f64,
    pub walls: DirectorWalls,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
}

/// Integrate one epsilon; snapshots at the configured cadence.
pub fn simulate(cfg: &RunConfig, epsilon: f64, dt: f64) -> Result<RunData, CliError> {
    let grid = cfg.grid();
    let repr = cfg.mode.representation();
    let (initial, walls) = cfg.scenario.build(&grid, repr).map_err(|e| ConfigError::Invalid {
        path: "scenario".into(),
        message: e.to_string(),
    })?;
    let params = RunParameters {
        mode: repr,
        epsilon,
        dt,
        t_end: cfg.t_end,
        advection: cfg.advection,
    };
    let traj = match cfg.mode {
        Mode::Gl | Mode::Sphere => Solver::new(&grid, params, walls.clone(), FlowOptions::default())
            .and_then(|s| s.run(initial, Some(cfg.snapshot_every)))
            .map_err(solver_err)?,
        Mode::Galerkin => {
            let basis = compute_eigenbasis(&assemble_stokes_operator(&grid), cfg.galerkin.modes).map_err(solver_err)?;
            let solver = GalerkinSolver::new(basis, params, walls.clone()).map_err(solver_err)?;
            solver.run(&initial, Some(cfg.snapshot_every)).map_err(solver_err)?.0
        }
    };
    Ok(RunData {
        grid,
        epsilon,
        walls,
        records: traj.records,
        snapshots: traj.snapshots,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakRow {
    pub test_id: usize,
    pub epsilon: f64,
    pub k: Option<f64>,
    pub pairing_r: f64,
    pub pairing_z: f64,
    pub residual_momentum: Option<f64>,
    pub residual_director: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowMeta {
    pub radius: f64,
    pub nodes: usize,
    pub inside: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Blowup {
    pub status: &'static str,
    pub time: f64,
    pub epsilon: f64,
    pub eps0_sq: f64,
    pub c_star: f64,
    pub threshold: f64,
    pub theta: f64,
    pub lambda_e: Option<f64>,
    pub center: Option<(f64, f64)>,
    pub regime: Option<Regime>,
    pub window: Option<WindowMeta>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodTimes {
    pub lambda: f64,
    pub good_count: usize,
    pub sample_count: usize,
    pub bad_fraction: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySummary {
    pub e0: f64,
    pub tolerance: f64,
    pub max_residual: f64,
    pub positive_part: f64,
    /// Output times where the residual exceeds the tolerance.
    pub flagged_times: Vec<f64>,
    pub holds: bool,
}

impl From<&EnergyReport> for EnergySummary {
    fn from(r: &EnergyReport) -> Self {
        Self {
            e0: r.e0,
            tolerance: r.tolerance,
            max_residual: r.max_residual,
            positive_part: r.positive_part(),
            flagged_times: r.flagged.iter().map(|&k| r.times[k]).collect(),
            holds: r.holds(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunAnalysis {
    pub energy: EnergySummary,
    pub good_times: GoodTimes,
    pub max_d: f64,
    #[serde(skip)]
    pub concentration: Vec<ProbeRow>,
    pub blowup: Blowup,
    #[serde(skip)]
    pub weak: Vec<WeakRow>,
}

const WINDOW_RADIUS: f64 = 4.0;
const WINDOW_NODES: usize = 33;

fn good_lambda(cfg: &RunConfig, records: &[DiagnosticsRecord]) -> f64 {
    cfg.analysis.lambda.unwrap_or_else(|| {
        let e0 = records[0].energy();
        if e0 > 0.0 {
            10.0 * e0 / cfg.t_end
        } else {
            1.0
        }
    })
}

fn is_good(records: &[DiagnosticsRecord], step: usize, lambda: f64) -> bool {
    records.get(step).is_some_and(|r| r.d_tension <= lambda)
}

pub fn analyze_run(cfg: &RunConfig, data: &RunData) -> Result<RunAnalysis, CliError> {
    let g = &data.grid;
    let recs = &data.records;
    let energy = check_energy_inequality(recs).map_err(analysis_err)?;
    let lambda = good_lambda(cfg, recs);
    let good = classify_good_times(recs, lambda).map_err(analysis_err)?;
    let good_times = GoodTimes {
        lambda,
        good_count: good.good_times.len(),
        sample_count: recs.len(),
        bad_fraction: good.bad_fraction,
        bound: good.bound,
        holds: good.holds(),
    };
    let densities = data
        .snapshots
        .par_iter()
        .map(|s| energy_density(&s.state.director, data.epsilon, g, &data.walls))
        .collect::<Result<Vec<_>, _>>()
        .map_err(analysis_err)?;

    let probes = cfg.probes();
    let mut concentration = Vec::new();
    for (s, d) in data.snapshots.iter().zip(&densities) {
        for p in &probes {
            concentration.push(ProbeRow {
                epsilon: data.epsilon,
                time: s.time,
                probe_r: p.r,
                probe_z: p.z,
                radius: p.radius,
                scaled_energy: local_scaled_energy(d, g, (p.r, p.z), p.radius).map_err(analysis_err)?,
            });
        }
    }

    // latest snapshot on a good time slice, else the last one
    let pick = data
        .snapshots
        .iter()
        .rposition(|s| is_good(recs, s.step, lambda))
        .unwrap_or(data.snapshots.len().saturating_sub(1));
    let snap = data.snapshots.get(pick).ok_or_else(|| analysis_err("run stored no snapshots"))?;
    let blowup = blowup_report(cfg, data, &densities[pick], snap)?;

    let support = cfg.t_end;
    let lib = test_library(g, support);
    let force = stress_force(&snap.state.director, data.epsilon, g, &data.walls).map_err(analysis_err)?;
    let mut weak = Vec::new();
    for &id in &cfg.analysis.test_functions {
        let test = &lib[id];
        let rm = weak_momentum_residual(&data.snapshots, g, &data.walls, test).ok();
        let rd = (data.walls.representation() == Representation::Sphere)
            .then(|| {
                let xi = DirectorTestFunction {
                    radial: test.radial,
                    axial: test.axial,
                    time: test.time,
                };
                weak_director_residual(&data.snapshots, g, &data.walls, &xi).ok()
            })
            .flatten();
        let rep = cancellation_experiment(std::slice::from_ref(&force), g, test, &cfg.analysis.k_list).map_err(analysis_err)?;
        for row in rep.rows {
            weak.push(WeakRow {
                test_id: id,
                epsilon: data.epsilon,
                k: row.k,
                pairing_r: row.pairing_r,
                pairing_z: row.pairing_z,
                residual_momentum: rm,
                residual_director: rd,
            });
        }
    }
    Ok(RunAnalysis {
        energy: (&energy).into(),
        good_times,
        max_d: recs.iter().map(|r| r.max_d).fold(0.0, f64::max),
        concentration,
        blowup,
        weak,
    })
}

fn blowup_report(cfg: &RunConfig, data: &RunData, density: &crate::grid::Field, snap: &Snapshot) -> Result<Blowup, CliError> {
    let g = &data.grid;
    let eps0_sq = cfg
        .analysis
        .eps0_sq
        .unwrap_or_else(|| default_eps0_sq(data.records[0].energy(), g.r_max));
    let c_star = cfg.analysis.c_star;
    let search = cfg.search_box();
    let mut out = Blowup {
        status: "no_concentration",
        time: snap.time,
        epsilon: data.epsilon,
        eps0_sq,
        c_star,
        threshold: eps0_sq / c_star,
        theta: 0.0,
        lambda_e: None,
        center: None,
        regime: None,
        window: None,
    };
    match extract_blowup_scale(density, g, &search, eps0_sq, c_star) {
        Ok(b) => {
            let inside = crate::concentration::rescale_fields(&snap.state.director, g, b.lambda, b.center, WINDOW_RADIUS, WINDOW_NODES).is_ok();
            out.status = "concentrated";
            out.theta = b.theta;
            out.lambda_e = Some(b.lambda);
            out.center = Some(b.center);
            out.regime = Some(classify_regime(b.lambda, data.epsilon).map_err(analysis_err)?);
            out.window = Some(WindowMeta {
                radius: WINDOW_RADIUS,
                nodes: WINDOW_NODES,
                inside,
            });
        }
        Err(ConcentrationError::NoConcentration { theta, .. }) => out.theta = theta,
        Err(e) => return Err(analysis_err(e)),
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn concentration_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("epsilon,time,probe_r,probe_z,radius,scaled_energy\n");
    for r in rows {
        let v = [r.epsilon, r.time, r.probe_r, r.probe_z, r.radius, r.scaled_energy];
        s.push_str(&v.map(num).join(","));
        s.push('\n');
    }
    s
}

pub fn weakform_csv(rows: &[WeakRow]) -> String {
    let mut s = String::from("test_id,epsilon,k,pairing_r,pairing_z,residual_momentum,residual_director\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.test_id,
            num(r.epsilon),
            opt(r.k),
            num(r.pairing_r),
            num(r.pairing_z),
            opt(r.residual_momentum),
            opt(r.residual_director)
        ));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    scenario: &'static str,
    mode: Mode,
    epsilon: f64,
    dt: f64,
    steps: usize,
    final_time: f64,
    snapshots: usize,
    analysis: &'a RunAnalysis,
}

fn snapshot_name(step: usize) -> String {
    format!("step_{step:06}.csv")
}

/// Write every file of one run into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, data: &RunData, dt: f64, analysis: &RunAnalysis) -> Result<(), CliError> {
    let g = &data.grid;
    output::write_file(&dir.join("config.resolved.json"), &cfg.to_json())?;
    output::write_file(&dir.join("diagnostics.csv"), &output::diagnostics_csv(&data.records))?;
    for s in &data.snapshots {
        output::write_file(&dir.join("snapshots").join(snapshot_name(s.step)), &output::state_csv(&s.state, g))?;
    }
    let last = data.snapshots.last().ok_or_else(|| analysis_err("run stored no snapshots"))?;
    output::write_file(&dir.join("final").join("state.csv"), &output::state_csv(&last.state, g))?;
    output::write_state_vtk(&dir.join("final"), &last.state, g, data.epsilon, &data.walls)?;
    write_analysis(dir, cfg, data, dt, analysis)
}

fn write_analysis(dir: &Path, cfg: &RunConfig, data: &RunData, dt: f64, analysis: &RunAnalysis) -> Result<(), CliError> {
    output::write_file(&dir.join("concentration.csv"), &concentration_csv(&analysis.concentration))?;
    output::write_file(&dir.join("blowup.json"), &output::json(&analysis.blowup))?;
    output::write_file(&dir.join("weakform.csv"), &weakform_csv(&analysis.weak))?;
    let last = data.records.last().map(|r| r.time).unwrap_or(0.0);
    let summary = RunSummary {
        scenario: cfg.scenario.name(),
        mode: cfg.mode,
        epsilon: data.epsilon,
        dt,
        steps: data.records.len().saturating_sub(1),
        final_time: last,
        snapshots: data.snapshots.len(),
        analysis,
    };
    output::write_file(&dir.join("summary.json"), &output::json(&summary))?;
    Ok(())
}

/// `run`: one epsilon.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunAnalysis, CliError> {
    let eps = match cfg.epsilons().as_slice() {
        [e] => *e,
        _ => {
            return Err(ConfigError::Invalid {
                path: "epsilon_list".into(),
                message: "run takes a single epsilon; use sweep".into(),
            }
            .into())
        }
    };
    let grid = cfg.grid();
    let dt = sweep_dt(cfg, &grid);
    let data = simulate(cfg, eps, dt)?;
    let analysis = analyze_run(cfg, &data)?;
    write_run(out, cfg, &data, dt, &analysis)?;
    Ok(analysis)
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberStatus {
    pub epsilon: f64,
    pub dir: String,
    pub status: &'static str,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CancellationEntry {
    pub test_id: usize,
    pub report: CancellationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario: &'static str,
    pub mode: Mode,
    pub epsilons: Vec<f64>,
    pub dt: f64,
    pub members: Vec<MemberStatus>,
    /// Latest snapshot time that is a good time slice for every successful member.
    pub common_time: Option<f64>,
    pub axis_report: Option<AxisReport>,
    pub offaxis_flag_count: Option<usize>,
    pub cancellation: Vec<CancellationEntry>,
    pub notes: Vec<String>,
}

pub fn member_dir(k: usize) -> String {
    format!("eps_{k}")
}

/// Cross-epsilon reports from finished members (`None` entries failed).
pub fn sweep_reports(cfg: &RunConfig, dt: f64, runs: &[Result<RunData, String>]) -> Result<SweepSummary, CliError> {
    let eps = cfg.epsilons();
    let members = runs
        .iter()
        .enumerate()
        .map(|(k, r)| MemberStatus {
            epsilon: eps[k],
            dir: member_dir(k),
            status: if r.is_ok() { "ok" } else { "failed" },
            error: r.as_ref().err().cloned(),
        })
        .collect();
    let ok: Vec<&RunData> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut summary = SweepSummary {
        scenario: cfg.scenario.name(),
        mode: cfg.mode,
        epsilons: eps,
        dt,
        members,
        common_time: None,
        axis_report: None,
        offaxis_flag_count: None,
        cancellation: Vec::new(),
        notes: Vec::new(),
    };
    let Some(first) = ok.first() else {
        summary.notes.push("no member finished".into());
        return Ok(summary);
    };
    // shared dt: snapshot steps line up across members
    let step = first
        .snapshots
        .iter()
        .rev()
        .map(|s| s.step)
        .find(|&st| {
            ok.iter().all(|d| {
                let lambda = good_lambda(cfg, &d.records);
                d.snapshots.iter().any(|s| s.step == st) && is_good(&d.records, st, lambda)
            })
        });
    let Some(step) = step else {
        summary.notes.push("no common good time slice".into());
        return Ok(summary);
    };
    let snaps: Vec<&Snapshot> = ok
        .iter()
        .map(|d| d.snapshots.iter().find(|s| s.step == step).expect("checked above"))
        .collect();
    summary.common_time = Some(snaps[0].time);
    let g = &first.grid;
    let densities = ok
        .iter()
        .zip(&snaps)
        .map(|(d, s)| energy_density(&s.state.director, d.epsilon, g, &d.walls))
        .collect::<Result<Vec<_>, _>>()
        .map_err(analysis_err)?;
    if ok.len() >= 2 {
        let sm: Vec<SweepMember> = ok
            .iter()
            .zip(&snaps)
            .zip(&densities)
            .map(|((d, s), dens)| SweepMember {
                epsilon: d.epsilon,
                time: s.time,
                grid: g,
                density: dens,
            })
            .collect();
        let rep = axis_vs_offaxis_report(&sm, &cfg.probes()).map_err(analysis_err)?;
        summary.offaxis_flag_count = Some(rep.offaxis_flags.len());
        summary.axis_report = Some(rep);
    } else {
        summary.notes.push("single member: no cross-epsilon probe comparison".into());
    }
    let forces = ok
        .iter()
        .zip(&snaps)
        .map(|(d, s)| stress_force(&s.state.director, d.epsilon, g, &d.walls))
        .collect::<Result<Vec<ForceSample>, _>>()
        .map_err(analysis_err)?;
    let lib = test_library(g, cfg.t_end);
    for &id in &cfg.analysis.test_functions {
        let report = cancellation_experiment(&forces, g, &lib[id], &cfg.analysis.k_list).map_err(analysis_err)?;
        summary.cancellation.push(CancellationEntry { test_id: id, report });
    }
    Ok(summary)
}

/// `sweep`: every epsilon into `eps_<k>/`, then `sweep_summary.json`.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<SweepSummary, CliError> {
    let grid = cfg.grid();
    let dt = sweep_dt(cfg, &grid);
    let eps = cfg.epsilons();
    let runs: Vec<Result<RunData, String>> = eps
        .par_iter()
        .enumerate()
        .map(|(k, &e)| {
            let mut member = cfg.clone();
            member.epsilon = Some(e);
            member.epsilon_list = None;
            let dir = out.join(member_dir(k));
            let data = simulate(&member, e, dt).map_err(|err| err.to_string())?;
            let analysis = analyze_run(&member, &data).map_err(|err| err.to_string())?;
            write_run(&dir, &member, &data, dt, &analysis).map_err(|err| err.to_string())?;
            Ok(data)
        })
        .collect();
    let summary = sweep_reports(cfg, dt, &runs)?;
    output::write_file(&out.join("config.resolved.json"), &cfg.to_json())?;
    output::write_file(&out.join("sweep_summary.json"), &output::json(&summary))?;
    Ok(summary)
}

/// Rebuild a stored run from its directory.
pub fn load_run(cfg: &RunConfig, dir: &Path) -> Result<RunData, CliError> {
    let grid = cfg.grid();
    let epsilon = cfg.epsilons()[0];
    let (_, walls) = cfg.scenario.build(&grid, cfg.mode.representation()).map_err(|e| ConfigError::Invalid {
        path: "scenario".into(),
        message: e.to_string(),
    })?;
    let dpath = dir.join("diagnostics.csv");
    let records = output::parse_diagnostics_csv(&output::read_file(&dpath)?, &dpath.display().to_string())?;
    let sdir = dir.join("snapshots");
    let mut names: Vec<PathBuf> = fs::read_dir(&sdir)
        .map_err(|source| OutputError::Io {
            path: sdir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    names.sort();
    let mut snapshots = Vec::with_capacity(names.len());
    for p in names {
        let step: usize = p
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("step_"))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| analysis_err(format!("unexpected snapshot name {}", p.display())))?;
        let state: SystemState = output::parse_state_csv(&output::read_file(&p)?, &grid, &p.display().to_string())?;
        snapshots.push(Snapshot::untensioned(&state, &grid, step));
    }
    Ok(RunData {
        grid,
        epsilon,
        walls,
        records,
        snapshots,
    })
}

/// `analyze`: re-run the analysis of a stored run or sweep in `dir`.
pub fn analyze(cfg: Option<&RunConfig>, dir: &Path) -> Result<(), CliError> {
    let stored;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            let p = dir.join("config.resolved.json");
            stored = RunConfig::parse(&output::read_file(&p)?)?;
            &stored
        }
    };
    let grid = cfg.grid();
    let dt = sweep_dt(cfg, &grid);
    let eps = cfg.epsilons();
    if cfg.epsilon_list.is_some() {
        let runs: Vec<Result<RunData, String>> = eps
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let mut member = cfg.clone();
                member.epsilon = Some(e);
                member.epsilon_list = None;
                let mdir = dir.join(member_dir(k));
                let data = load_run(&member, &mdir).map_err(|err| err.to_string())?;
                let a = analyze_run(&member, &data).map_err(|err| err.to_string())?;
                write_analysis(&mdir, &member, &data, dt, &a).map_err(|err| err.to_string())?;
                Ok(data)
            })
            .collect();
        let summary = sweep_reports(cfg, dt, &runs)?;
        output::write_file(&dir.join("sweep_summary.json"), &output::json(&summary))?;
    } else {
        let data = load_run(cfg, dir)?;
        let a = analyze_run(cfg, &data)?;
        write_analysis(dir, cfg, &data, dt, &a)?;
    }
    Ok(())
}

/// `eig`: Stokes eigenbasis metadata and mode fields.
pub fn eig(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.grid();
    let basis = compute_eigenbasis(&assemble_stokes_operator(&grid), cfg.galerkin.modes).map_err(solver_err)?;
    output::write_file(&out.join("eigenbasis.json"), &output::json(&basis.meta()))?;
    for k in 0..basis.len() {
        let dir = out.join("modes");
        output::write_file(&dir.join(format!("mode_{k:03}_psi.vtk")), &output::vtk_scalar("psi", &basis.psi[k], &grid))?;
        output::write_file(
            &dir.join(format!("mode_{k:03}_velocity.vtk")),
            &output::vtk_vector("velocity", &basis.u_r[k], &basis.u_z[k], &grid),
        )?;
    }
    Ok(())
}
