//! Energies, dissipation, the energy-inequality monitor, good time slices and
//! the almost-monotonicity quantity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball::{ball_inside, ball_samples};
use crate::dynamics::{director_halo, DirectorHalo, DirectorWalls, DynamicsError, RunParameters, SystemState};
use crate::grid::{fill_ghosts, integrate_unchecked, BoundarySpec, Field, HaloField, MeridianGrid, Parity, Side};
use crate::state::{DirectorState, Representation};
use crate::stencil::{advect, grad_r, grad_z};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("threshold Lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("ball of radius {radius} at ({r0}, {z0}) leaves the off-axis region")]
    BallOutside { r0: f64, z0: f64, radius: f64 },
    #[error("radii must satisfy 0 < r <= R, got r = {r}, R = {big_r}")]
    Radii { r: f64, big_r: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub e_kin: f64,
    pub e_el: f64,
    pub e_pen: f64,
    pub d_visc: f64,
    pub d_tension: f64,
    pub max_d: f64,
    pub lambda_t: f64,
}

impl DiagnosticsRecord {
    pub fn energy(&self) -> f64 {
        self.e_kin + self.e_el + self.e_pen
    }

    pub fn dissipation(&self) -> f64 {
        self.d_visc + self.d_tension
    }
}

/// Face-based density of `|grad f|^2 / 2` (plus `f^2 / (2 r^2)` with `hoop`).
///
/// Each face difference is shared by its two cells; boundary faces use the ghost
/// difference and the axis face has zero radius. Summed with the cell weights
/// this is exactly `-1/2 <f, L_h f>` up to boundary data.
pub fn dirichlet_density(h: &HaloField, grid: &MeridianGrid, hoop: bool) -> Field {
    let (hr2, hz2) = (grid.h_r * grid.h_r, grid.h_z * grid.h_z);
    let mut out = Field::zeros(grid);
    for j in 0..grid.n_z {
        let jj = j as isize;
        for i in 0..grid.n_r {
            let ii = i as isize;
            let c = h.at(ii, jj);
            let r = grid.r(i);
            let dp = h.at(ii + 1, jj) - c;
            let dm = c - h.at(ii - 1, jj);
            let mut e = (grid.r_face(i + 1) * dp * dp + grid.r_face(i) * dm * dm) / (4.0 * r * hr2);
            let zp = h.at(ii, jj + 1) - c;
            let zm = c - h.at(ii, jj - 1);
            e += (zp * zp + zm * zm) / (4.0 * hz2);
            if hoop {
                e += 0.5 * c * c / (r * r);
            }
            out[(i, j)] = e;
        }
    }
    out
}

/// Elastic and penalty densities of the director.
pub fn energy_parts(
    director: &DirectorState,
    epsilon: f64,
    grid: &MeridianGrid,
    walls: &DirectorWalls,
) -> Result<(Field, Field), DynamicsError> {
    match director_halo(director, grid, walls)? {
        DirectorHalo::Gl { d_r, d_z } => {
            let mut el = dirichlet_density(&d_r, grid, true);
            el.axpy(1.0, &dirichlet_density(&d_z, grid, false));
            if !(epsilon > 0.0) {
                return Err(DynamicsError::NonPositiveEpsilon(epsilon));
            }
            let pen = director.d_r.zip_map(&director.d_z, |a, b| {
                let q = 1.0 - a * a - b * b;
                q * q / (4.0 * epsilon * epsilon)
            });
            Ok((el, pen))
        }
        DirectorHalo::Sphere { phi } => {
            let mut el = dirichlet_density(&phi, grid, false);
            for j in 0..grid.n_z {
                for i in 0..grid.n_r {
                    let r = grid.r(i);
                    let s = director.d_r[(i, j)];
                    el[(i, j)] += 0.5 * s * s / (r * r);
                }
            }
            Ok((el, Field::zeros(grid)))
        }
    }
}

/// `e_eps = |grad d|^2 / 2 + (1 - |d|^2)^2 / (4 eps^2)` with the hoop term `d_r^2 / (2 r^2)`.
pub fn energy_density(
    director: &DirectorState,
    epsilon: f64,
    grid: &MeridianGrid,
    walls: &DirectorWalls,
) -> Result<Field, DynamicsError> {
    let (mut el, pen) = energy_parts(director, epsilon, grid, walls)?;
    el.axpy(1.0, &pen);
    Ok(el)
}

/// `|grad u|^2` density with no-slip walls.
pub fn velocity_gradient_density(u_r: &Field, u_z: &Field, grid: &MeridianGrid) -> Field {
    let spec_r = BoundarySpec::walls(Parity::Odd, Side::DirichletUniform(0.0));
    let spec_z = BoundarySpec::walls(Parity::Even, Side::DirichletUniform(0.0));
    let hr = fill_ghosts(u_r, grid, &spec_r).expect("complete spec");
    let hz = fill_ghosts(u_z, grid, &spec_z).expect("complete spec");
    let mut e = dirichlet_density(&hr, grid, true);
    e.axpy(1.0, &dirichlet_density(&hz, grid, false));
    e.scale(2.0);
    e
}

fn kinetic(state: &SystemState, grid: &MeridianGrid) -> f64 {
    let f = &state.flow;
    let k = f.u_r.zip_map(&f.u_z, |a, b| 0.5 * (a * a + b * b));
    integrate_unchecked(&k, grid)
}

fn energies(
    state: &SystemState,
    grid: &MeridianGrid,
    params: &RunParameters,
    walls: &DirectorWalls,
) -> Result<(f64, f64, f64, f64, f64), DynamicsError> {
    let eps = if params.mode == Representation::Gl { params.epsilon } else { 1.0 };
    let (el, pen) = energy_parts(&state.director, eps, grid, walls)?;
    let visc = velocity_gradient_density(&state.flow.u_r, &state.flow.u_z, grid);
    Ok((
        kinetic(state, grid),
        integrate_unchecked(&el, grid),
        integrate_unchecked(&pen, grid),
        integrate_unchecked(&visc, grid),
        state.director.max_modulus(),
    ))
}

pub fn record_initial(
    state: &SystemState,
    grid: &MeridianGrid,
    params: &RunParameters,
    walls: &DirectorWalls,
) -> Result<DiagnosticsRecord, DynamicsError> {
    let (e_kin, e_el, e_pen, d_visc, max_d) = energies(state, grid, params, walls)?;
    Ok(DiagnosticsRecord {
        time: state.time,
        e_kin,
        e_el,
        e_pen,
        d_visc,
        d_tension: 0.0,
        max_d,
        lambda_t: 0.0,
    })
}

/// Tension field `tau = (d^{n+1} - d^n) / dt + (u^{n+1} . grad) d^n` as vector components.
pub fn tension_field(
    state: &SystemState,
    prev: &DirectorState,
    grid: &MeridianGrid,
    params: &RunParameters,
    walls: &DirectorWalls,
) -> Result<(Field, Field), DynamicsError> {
    let dt = params.dt;
    let adv = |h: &HaloField| advect(&state.flow.u_r, &state.flow.u_z, h, grid);
    match director_halo(prev, grid, walls)? {
        DirectorHalo::Gl { d_r, d_z } => {
            let mut tr = state.director.d_r.zip_map(&prev.d_r, |a, b| (a - b) / dt);
            let mut tz = state.director.d_z.zip_map(&prev.d_z, |a, b| (a - b) / dt);
            if params.advection {
                tr.axpy(1.0, &adv(&d_r));
                tz.axpy(1.0, &adv(&d_z));
            }
            Ok((tr, tz))
        }
        DirectorHalo::Sphere { phi } => {
            let new = state.director.phi.as_ref().expect("sphere state carries phi");
            let old = prev.phi.as_ref().expect("sphere state carries phi");
            let mut tp = new.zip_map(old, |a, b| (a - b) / dt);
            if params.advection {
                tp.axpy(1.0, &adv(&phi));
            }
            // d_t d = phi_t (cos phi, -sin phi)
            let tr = tp.zip_map(new, |t, p| t * p.cos());
            let tz = tp.zip_map(new, |t, p| -t * p.sin());
            Ok((tr, tz))
        }
    }
}

/// Full record after a step, plus the tension field it measured.
pub fn record_step(
    state: &SystemState,
    prev: &DirectorState,
    grid: &MeridianGrid,
    params: &RunParameters,
    walls: &DirectorWalls,
) -> Result<(DiagnosticsRecord, (Field, Field)), DynamicsError> {
    let (e_kin, e_el, e_pen, d_visc, max_d) = energies(state, grid, params, walls)?;
    let (tr, tz) = tension_field(state, prev, grid, params, walls)?;
    let t2 = tr.zip_map(&tz, |a, b| a * a + b * b);
    let d_tension = integrate_unchecked(&t2, grid);
    let rec = DiagnosticsRecord {
        time: state.time,
        e_kin,
        e_el,
        e_pen,
        d_visc,
        d_tension,
        max_d,
        lambda_t: d_tension,
    };
    for v in [e_kin, e_el, e_pen, d_visc, d_tension, max_d] {
        if !v.is_finite() {
            return Err(DynamicsError::NonFinite("diagnostics record"));
        }
    }
    Ok((rec, (tr, tz)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e0: f64,
    pub tolerance: f64,
    pub times: Vec<f64>,
    /// `E(t) + sum dt D - E(0)` at each record.
    pub residuals: Vec<f64>,
    /// Record indices whose residual exceeds the tolerance.
    pub flagged: Vec<usize>,
    pub max_residual: f64,
}

impl EnergyReport {
    pub fn holds(&self) -> bool {
        self.flagged.is_empty()
    }

    /// Largest positive part of the residual.
    pub fn positive_part(&self) -> f64 {
        self.max_residual.max(0.0)
    }
}

/// Relative tolerance of the energy monitor.
pub const ENERGY_TOL: f64 = 1e-3;

pub fn check_energy_inequality(records: &[DiagnosticsRecord]) -> Result<EnergyReport, DiagnosticsError> {
    if records.len() < 2 {
        return Err(DiagnosticsError::TooFewRecords {
            need: 2,
            got: records.len(),
        });
    }
    let e0 = records[0].energy();
    let tolerance = ENERGY_TOL * e0.abs();
    let mut acc = 0.0;
    let mut residuals = Vec::with_capacity(records.len());
    let mut flagged = Vec::new();
    let mut max_residual = f64::NEG_INFINITY;
    for (k, rec) in records.iter().enumerate() {
        if k > 0 {
            acc += (rec.time - records[k - 1].time) * rec.dissipation();
        }
        let res = rec.energy() + acc - e0;
        if res > tolerance {
            flagged.push(k);
        }
        max_residual = max_residual.max(res);
        residuals.push(res);
    }
    Ok(EnergyReport {
        e0,
        tolerance,
        times: records.iter().map(|r| r.time).collect(),
        residuals,
        flagged,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodTimeReport {
    pub lambda: f64,
    pub good_times: Vec<f64>,
    pub bad_measure: f64,
    pub bad_fraction: f64,
    /// `E_0 / (Lambda T)`
    pub bound: f64,
    pub slack: f64,
}

impl GoodTimeReport {
    pub fn holds(&self) -> bool {
        self.bad_fraction <= self.bound + self.slack
    }
}

/// Split sampled times by `int |tau|^2 <= Lambda`.
pub fn classify_good_times(records: &[DiagnosticsRecord], lambda: f64) -> Result<GoodTimeReport, DiagnosticsError> {
    if !(lambda > 0.0) {
        return Err(DiagnosticsError::NonPositiveLambda(lambda));
    }
    if records.len() < 2 {
        return Err(DiagnosticsError::TooFewRecords {
            need: 2,
            got: records.len(),
        });
    }
    let mut good = Vec::new();
    let mut bad = 0.0;
    let mut max_dt: f64 = 0.0;
    for (k, r) in records.iter().enumerate() {
        if r.d_tension <= lambda {
            good.push(r.time);
        } else if k > 0 {
            bad += r.time - records[k - 1].time;
        }
        if k > 0 {
            max_dt = max_dt.max(r.time - records[k - 1].time);
        }
    }
    let t = records[records.len() - 1].time - records[0].time;
    let e0 = records[0].energy();
    Ok(GoodTimeReport {
        lambda,
        good_times: good,
        bad_measure: bad,
        bad_fraction: bad / t,
        bound: e0 / (lambda * t),
        slack: max_dt / t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub psi_r: f64,
    pub psi_big_r: f64,
    pub holds: bool,
    /// `r^{-1} int_{B_r} |grad d|^2`
    pub weak_lhs: f64,
    /// `2 R^{-1} int_{B_R} |grad d|^2 + 4 Lambda R`
    pub weak_rhs: f64,
    pub lambda: f64,
}

impl MonotonicityReport {
    pub fn weak_holds(&self) -> bool {
        self.weak_lhs <= self.weak_rhs
    }
}

struct BallIntegrals {
    grad2: f64,
    cross: f64,
    dist_tau2: f64,
}

fn unit_walls(walls: &DirectorWalls) -> DirectorWalls {
    match walls {
        DirectorWalls::Gl { .. } => walls.clone(),
        DirectorWalls::Sphere { phi } => DirectorWalls::Gl {
            d_r: phi.map(f64::sin),
            d_z: phi.map(f64::cos),
        },
    }
}

/// Almost-monotonicity quantity
/// `Psi_r = r^{-1} int_{B_r} (|grad d|^2 / 2 - <(p - p0) . grad d, tau>) + 1/2 int_{B_r} |p - p0| |tau|^2`
/// at two radii around an off-axis point.
#[allow(clippy::too_many_arguments)]
pub fn almost_monotonicity(
    director: &DirectorState,
    tau: (&Field, &Field),
    grid: &MeridianGrid,
    walls: &DirectorWalls,
    p0: (f64, f64),
    r: f64,
    big_r: f64,
) -> Result<MonotonicityReport, DiagnosticsError> {
    if !(r > 0.0 && r <= big_r) {
        return Err(DiagnosticsError::Radii { r, big_r });
    }
    let (r0, z0) = p0;
    if !(big_r < r0) || !ball_inside(grid, r0, z0, big_r) {
        return Err(DiagnosticsError::BallOutside {
            r0,
            z0,
            radius: big_r,
        });
    }
    let cart = DirectorState::gl(director.d_r.clone(), director.d_z.clone());
    let w = unit_walls(walls);
    let (hr, hz) = match director_halo(&cart, grid, &w)? {
        DirectorHalo::Gl { d_r, d_z } => (d_r, d_z),
        DirectorHalo::Sphere { .. } => unreachable!(),
    };
    let mut grad2 = dirichlet_density(&hr, grid, true);
    grad2.axpy(1.0, &dirichlet_density(&hz, grid, false));
    grad2.scale(2.0);
    let (rr, rz, zr, zz) = (grad_r(&hr, grid), grad_z(&hr, grid), grad_r(&hz, grid), grad_z(&hz, grid));
    let (tr, tz) = tau;
    // tau . d_r d and tau . d_z d
    let t_r = Field {
        n_r: grid.n_r,
        n_z: grid.n_z,
        data: (0..grid.len()).map(|k| tr.data[k] * rr.data[k] + tz.data[k] * zr.data[k]).collect(),
    };
    let t_z = Field {
        n_r: grid.n_r,
        n_z: grid.n_z,
        data: (0..grid.len()).map(|k| tr.data[k] * rz.data[k] + tz.data[k] * zz.data[k]).collect(),
    };
    let tau2 = tr.zip_map(tz, |a, b| a * a + b * b);
    let lambda = integrate_unchecked(&tau2, grid);

    let integrate = |radius: f64| -> BallIntegrals {
        let mut out = BallIntegrals {
            grad2: 0.0,
            cross: 0.0,
            dist_tau2: 0.0,
        };
        for s in ball_samples(grid, r0, z0, radius) {
            let k = grid.idx(s.i, s.j);
            let tm = s.theta_max;
            let dz = s.z - z0;
            out.grad2 += grad2.data[k] * 2.0 * tm * s.area;
            out.cross += (t_r.data[k] * (s.r * 2.0 * tm - r0 * 2.0 * tm.sin()) + t_z.data[k] * dz * 2.0 * tm) * s.area;
            // azimuthal average of |p - p0| by the midpoint rule
            const M: usize = 16;
            let mut dist = 0.0;
            for q in 0..M {
                let th = (q as f64 + 0.5) / M as f64 * tm;
                dist += (s.r * s.r + r0 * r0 - 2.0 * s.r * r0 * th.cos() + dz * dz).max(0.0).sqrt();
            }
            out.dist_tau2 += tau2.data[k] * 2.0 * tm * dist / M as f64 * s.area;
        }
        out
    };
    let small = integrate(r);
    let large = integrate(big_r);
    let psi = |b: &BallIntegrals, rad: f64| (0.5 * b.grad2 - b.cross) / rad + 0.5 * b.dist_tau2;
    let psi_r = psi(&small, r);
    let psi_big_r = psi(&large, big_r);
    Ok(MonotonicityReport {
        psi_r,
        psi_big_r,
        holds: psi_r <= psi_big_r,
        weak_lhs: small.grad2 / r,
        weak_rhs: 2.0 * large.grad2 / big_r + 4.0 * lambda * big_r,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::WallValues;
    use std::f64::consts::PI;

    fn rec(time: f64, e: f64, d: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            time,
            e_kin: 0.0,
            e_el: e,
            e_pen: 0.0,
            d_visc: 0.0,
            d_tension: d,
            max_d: 1.0,
            lambda_t: d,
        }
    }

    #[test]
    fn density_examples() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 8, 8).unwrap();
        let w = DirectorWalls::uniform(&g, Representation::Gl);
        let d = DirectorState::uniform(&g, Representation::Gl);
        assert_eq!(energy_density(&d, 0.1, &g, &w).unwrap().max_abs(), 0.0);
        let d = DirectorState::gl(Field::zeros(&g), Field::constant(&g, 0.5));
        let w = DirectorWalls::Gl {
            d_r: WallValues::zero(&g),
            d_z: WallValues::uniform(&g, 0.5),
        };
        let e = energy_density(&d, 0.5, &g, &w).unwrap();
        assert!(e.data.iter().all(|&v| (v - 0.5625).abs() < 1e-15));
    }

    #[test]
    fn hedgehog_energy_matches_closed_form() {
        // |grad phi|^2 + sin^2 phi / r^2 = 8 / (1 + r^2)^2, so the energy of the cylinder is
        // 2 pi L int_0^R 4 r / (1 + r^2)^2 dr = 4 pi L R^2 / (1 + R^2)
        let (rm, l) = (1.0, 1.0);
        let g = MeridianGrid::new(rm, -0.5, 0.5, 128, 16).unwrap();
        let phi = g.sample(|r, _| 2.0 * r.atan());
        let d = DirectorState::sphere_from_phi(phi);
        let w = DirectorWalls::from_angle(&g, Representation::Sphere, |r, _| 2.0 * r.atan());
        let e = integrate_unchecked(&energy_density(&d, 1.0, &g, &w).unwrap(), &g);
        // independent fine quadrature of the closed-form density
        let n = 200_000;
        let mut q = 0.0;
        for k in 0..n {
            let r = (k as f64 + 0.5) / n as f64 * rm;
            q += 0.5 * 8.0 / (1.0 + r * r).powi(2) * r;
        }
        q *= 2.0 * PI * l * rm / n as f64;
        assert!((q - 4.0 * PI * l * rm * rm / (1.0 + rm * rm)).abs() < 1e-8);
        assert!((e - q).abs() < 5e-3 * q, "{e} {q}");
    }

    #[test]
    fn energy_monitor_flags_fault() {
        let mut recs: Vec<_> = (0..10).map(|k| rec(k as f64 * 0.1, 1.0 - 0.01 * k as f64, 0.1)).collect();
        let r = check_energy_inequality(&recs).unwrap();
        assert!(r.holds() && r.residuals.iter().all(|x| x.abs() < 1e-12));
        recs[6].e_el += 0.01;
        let r = check_energy_inequality(&recs).unwrap();
        assert_eq!(r.flagged, vec![6]);
        let zero: Vec<_> = (0..3).map(|k| rec(k as f64, 0.0, 0.0)).collect();
        assert!(check_energy_inequality(&zero).unwrap().residuals.iter().all(|&x| x == 0.0));
        assert!(check_energy_inequality(&zero[..1]).is_err());
    }

    #[test]
    fn good_times() {
        let quiet: Vec<_> = (0..5).map(|k| rec(k as f64, 1.0, 0.0)).collect();
        let r = classify_good_times(&quiet, 1e-3).unwrap();
        assert_eq!(r.good_times.len(), 5);
        assert_eq!(classify_good_times(&quiet, 1e30).unwrap().bad_measure, 0.0);
        assert!(classify_good_times(&quiet, 0.0).is_err());

        // spike train with sum dt |tau|^2 = E0 = 1 over T = 1
        let n = 100;
        let dt = 1.0 / n as f64;
        let spikes = [10usize, 11, 40, 77];
        let mut recs = vec![rec(0.0, 1.0, 0.0)];
        for k in 1..=n {
            let d = if spikes.contains(&k) { 1.0 / (spikes.len() as f64 * dt) } else { 0.0 };
            recs.push(rec(k as f64 * dt, 1.0, d));
        }
        let total: f64 = recs.iter().skip(1).map(|r| r.d_tension * dt).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for lambda in [1.0, 5.0, 20.0] {
            let r = classify_good_times(&recs, lambda).unwrap();
            assert!(r.bad_measure <= 1.0 / lambda + 1e-12);
            assert!(r.holds());
        }
    }

    #[test]
    fn constant_director_is_flat() {
        let g = MeridianGrid::new(1.0, -1.0, 1.0, 16, 32).unwrap();
        let w = DirectorWalls::uniform(&g, Representation::Gl);
        let d = DirectorState::uniform(&g, Representation::Gl);
        let z = Field::zeros(&g);
        let m = almost_monotonicity(&d, (&z, &z), &g, &w, (0.5, 0.0), 0.05, 0.2).unwrap();
        assert_eq!((m.psi_r, m.psi_big_r), (0.0, 0.0));
        assert!(almost_monotonicity(&d, (&z, &z), &g, &w, (0.1, 0.0), 0.05, 0.2).is_err());
    }

    #[test]
    fn hedgehog_is_monotone() {
        let g = MeridianGrid::new(1.0, -1.0, 1.0, 64, 128).unwrap();
        let phi = |r: f64, _z: f64| 2.0 * (r / 0.5).atan();
        let d = DirectorState::sphere_from_phi(g.sample(phi));
        let w = DirectorWalls::from_angle(&g, Representation::Sphere, phi);
        let z = Field::zeros(&g);
        let m = almost_monotonicity(&d, (&z, &z), &g, &w, (0.5, 0.0), 0.05, 0.2).unwrap();
        assert!(m.holds && m.weak_holds(), "{m:?}");
        let t = Field::constant(&g, 0.3);
        let m1 = almost_monotonicity(&d, (&t, &z), &g, &w, (0.5, 0.0), 0.05, 0.2).unwrap();
        let t2 = Field::constant(&g, 0.6);
        let m2 = almost_monotonicity(&d, (&t2, &z), &g, &w, (0.5, 0.0), 0.05, 0.2).unwrap();
        assert!((m2.lambda - 4.0 * m1.lambda).abs() < 1e-12 * m2.lambda);
        let extra = m2.weak_rhs - m1.weak_rhs;
        assert!((extra - 4.0 * 3.0 * m1.lambda * 0.2).abs() < 1e-9 * m2.weak_rhs);
    }
}
