//! Local scaled energies, the maximal concentration function, blow-up point
//! and scale extraction, rescaling onto a blow-up window and the axis versus
//! off-axis growth report.
//!
//! Everything here works on a cell-centred energy density `e` (see
//! [`crate::diagnostics::energy_density`]); meridian integrals carry the weight
//! `r dr dz`, ball integrals are three-dimensional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball::{ball_inside, ball_samples};
use crate::grid::{Field, MeridianGrid};
use crate::state::{cartesian_to_polar, DirectorState, Representation};

/// Default detector constant `C_*`.
pub const DEFAULT_C_STAR: f64 = 40.0;

/// Default `eps0^2 = 0.1 E0 / r_max`.
pub fn default_eps0_sq(e0: f64, r_max: f64) -> f64 {
    0.1 * e0 / r_max
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcentrationError {
    #[error("ball of radius {radius} at ({r0}, {z0}) leaves the domain")]
    BallOutside { r0: f64, z0: f64, radius: f64 },
    #[error("box of half-width {delta} at ({r0}, {z0}) leaves the meridian domain")]
    BoxOutside { r0: f64, z0: f64, delta: f64 },
    #[error("search box contains no cell centres")]
    EmptyScan,
    #[error("lambda {lambda} exceeds half the search box ({limit})")]
    LambdaTooLarge { lambda: f64, limit: f64 },
    #[error("no concentration at this threshold: Theta = {theta} < {threshold}")]
    NoConcentration { theta: f64, threshold: f64 },
    #[error("blow-up window leaves the domain")]
    WindowOutside,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("density does not match the grid")]
    Shape,
    #[error("runs use different grids")]
    GridMismatch,
    #[error("need at least two epsilons in decreasing order")]
    EpsilonList,
}

fn positive(name: &'static str, value: f64) -> Result<(), ConcentrationError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConcentrationError::NonPositive { name, value })
    }
}

fn check_shape(density: &Field, grid: &MeridianGrid) -> Result<(), ConcentrationError> {
    density.check(grid).map_err(|_| ConcentrationError::Shape)
}

/// `radius^{-1} int_{B_radius} e dx` over the 3-D ball centred at `(r0, 0, z0)`.
pub fn local_scaled_energy(
    density: &Field,
    grid: &MeridianGrid,
    center: (f64, f64),
    radius: f64,
) -> Result<f64, ConcentrationError> {
    check_shape(density, grid)?;
    let (r0, z0) = center;
    if !ball_inside(grid, r0, z0, radius) {
        return Err(ConcentrationError::BallOutside { r0, z0, radius });
    }
    let total: f64 = ball_samples(grid, r0, z0, radius)
        .iter()
        .map(|s| density[(s.i, s.j)] * 2.0 * s.theta_max * s.area)
        .sum();
    Ok(total / radius)
}

/// Per-cell overlap weights of a box with the grid: `int r dr` in r, length in z.
struct BoxWeights {
    i0: usize,
    wr: Vec<f64>,
    j0: usize,
    wz: Vec<f64>,
}

fn box_weights(grid: &MeridianGrid, r_lo: f64, r_hi: f64, z_lo: f64, z_hi: f64) -> BoxWeights {
    let (hr, hz) = (grid.h_r, grid.h_z);
    let r_lo = r_lo.max(0.0);
    let r_hi = r_hi.min(grid.r_max);
    let z_lo = z_lo.max(grid.z_min);
    let z_hi = z_hi.min(grid.z_max);
    let mut out = BoxWeights {
        i0: 0,
        wr: Vec::new(),
        j0: 0,
        wz: Vec::new(),
    };
    if r_hi <= r_lo || z_hi <= z_lo {
        return out;
    }
    let i0 = ((r_lo / hr).floor() as usize).min(grid.n_r - 1);
    let i1 = ((r_hi / hr).ceil() as usize).min(grid.n_r);
    out.i0 = i0;
    for i in i0..i1 {
        let lo = r_lo.max(i as f64 * hr);
        let hi = r_hi.min((i + 1) as f64 * hr);
        out.wr.push(if hi > lo { 0.5 * (hi * hi - lo * lo) } else { 0.0 });
    }
    let j0 = (((z_lo - grid.z_min) / hz).floor() as usize).min(grid.n_z - 1);
    let j1 = ((((z_hi - grid.z_min) / hz).ceil()) as usize).min(grid.n_z);
    out.j0 = j0;
    for j in j0..j1 {
        let lo = z_lo.max(grid.z_min + j as f64 * hz);
        let hi = z_hi.min(grid.z_min + (j + 1) as f64 * hz);
        out.wz.push((hi - lo).max(0.0));
    }
    out
}

// Terms are non-negative and summed in a fixed order, so nested boxes give
// ordered results in floating point as well.
fn box_integral(density: &Field, grid: &MeridianGrid, r_lo: f64, r_hi: f64, z_lo: f64, z_hi: f64) -> f64 {
    let w = box_weights(grid, r_lo, r_hi, z_lo, z_hi);
    let mut total = 0.0;
    for (b, &wz) in w.wz.iter().enumerate() {
        let j = w.j0 + b;
        let mut row = 0.0;
        for (a, &wr) in w.wr.iter().enumerate() {
            row += density[(w.i0 + a, j)] * wr;
        }
        total += row * wz;
    }
    total
}

/// `int e r dr dz` over the square `|r - r0| < delta, |z - z0| < delta`.
pub fn poly_disc_energy(
    density: &Field,
    grid: &MeridianGrid,
    center: (f64, f64),
    delta: f64,
) -> Result<f64, ConcentrationError> {
    check_shape(density, grid)?;
    positive("delta", delta)?;
    let (r0, z0) = center;
    let tol = 1e-12 * (1.0 + grid.r_max);
    if r0 - delta < -tol || r0 + delta > grid.r_max + tol || z0 - delta < grid.z_min - tol || z0 + delta > grid.z_max + tol {
        return Err(ConcentrationError::BoxOutside { r0, z0, delta });
    }
    Ok(box_integral(density, grid, r0 - delta, r0 + delta, z0 - delta, z0 + delta))
}

/// Candidate centres `|r - r0| <= half_width`, `|z - z0| <= half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub r0: f64,
    pub z0: f64,
    pub half_width: f64,
}

impl SearchBox {
    fn centres(&self, grid: &MeridianGrid) -> Vec<(usize, usize)> {
        let tol = 1e-12 * (1.0 + self.half_width);
        let mut out = Vec::new();
        for i in 0..grid.n_r {
            if (grid.r(i) - self.r0).abs() > self.half_width + tol {
                continue;
            }
            for j in 0..grid.n_z {
                if (grid.z(j) - self.z0).abs() <= self.half_width + tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// `max` over candidate centres of the square integral of half-width `lambda`.
///
/// Squares are clipped to the meridian domain. Ties go to the smaller `r`, then the smaller `z`.
pub fn theta_max(
    density: &Field,
    grid: &MeridianGrid,
    search: &SearchBox,
    lambda: f64,
) -> Result<(f64, (f64, f64)), ConcentrationError> {
    check_shape(density, grid)?;
    positive("lambda", lambda)?;
    if lambda > search.half_width * (1.0 + 1e-12) {
        return Err(ConcentrationError::LambdaTooLarge {
            lambda,
            limit: search.half_width,
        });
    }
    let centres = search.centres(grid);
    if centres.is_empty() {
        return Err(ConcentrationError::EmptyScan);
    }
    let values: Vec<f64> = centres
        .par_iter()
        .map(|&(i, j)| {
            let (r, z) = (grid.r(i), grid.z(j));
            box_integral(density, grid, r - lambda, r + lambda, z - lambda, z + lambda)
        })
        .collect();
    // centres are ordered by r, then z
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    let (i, j) = centres[best];
    Ok((values[best], (grid.r(i), grid.z(j))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupScale {
    pub lambda: f64,
    pub center: (f64, f64),
    pub theta: f64,
    pub threshold: f64,
}

/// Relative bisection tolerance on `lambda`.
pub const LAMBDA_RTOL: f64 = 1e-3;

/// Smallest `lambda` with `Theta(lambda) >= eps0_sq / c_star`, by bisection.
pub fn extract_blowup_scale(
    density: &Field,
    grid: &MeridianGrid,
    search: &SearchBox,
    eps0_sq: f64,
    c_star: f64,
) -> Result<BlowupScale, ConcentrationError> {
    positive("eps0_sq", eps0_sq)?;
    positive("c_star", c_star)?;
    let threshold = eps0_sq / c_star;
    let mut hi = search.half_width;
    let (theta_hi, _) = theta_max(density, grid, search, hi)?;
    if theta_hi < threshold {
        return Err(ConcentrationError::NoConcentration {
            theta: theta_hi,
            threshold,
        });
    }
    let mut lo = 0.0;
    while hi - lo > LAMBDA_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        let (t, _) = theta_max(density, grid, search, mid)?;
        if t >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (theta, center) = theta_max(density, grid, search, hi)?;
    Ok(BlowupScale {
        lambda: hi,
        center,
        theta,
        threshold,
    })
}

/// Samples on the uniform window `[-W, W]^2` in rescaled units, row-major in `zeta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lambda: f64,
    pub center: (f64, f64),
    pub window_radius: f64,
    /// Nodes per side.
    pub n: usize,
    pub values: Vec<f64>,
}

impl Window {
    pub fn coord(&self, a: usize) -> f64 {
        if self.n == 1 {
            return 0.0;
        }
        -self.window_radius + 2.0 * self.window_radius * a as f64 / (self.n - 1) as f64
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[b * self.n + a]
    }
}

/// Bilinear interpolation of a cell-centred field; `ghost(j, v0)` gives the
/// mirrored value across the axis and the last half cell at the walls is constant.
fn bilinear(f: &Field, grid: &MeridianGrid, r: f64, z: f64, ghost: &dyn Fn(usize, f64) -> f64) -> f64 {
    let x = r / grid.h_r - 0.5;
    let y = ((z - grid.z_min) / grid.h_z - 0.5).clamp(0.0, (grid.n_z - 1) as f64);
    let x = x.min((grid.n_r - 1) as f64);
    let j0 = (y.floor() as usize).min(grid.n_z.saturating_sub(2));
    let ty = if grid.n_z > 1 { y - j0 as f64 } else { 0.0 };
    let j1 = (j0 + 1).min(grid.n_z - 1);
    let value = |i: isize, j: usize| -> f64 {
        if i < 0 {
            ghost(j, f[(0, j)])
        } else {
            f[(i as usize, j)]
        }
    };
    let i0 = if x < 0.0 { -1 } else { (x.floor() as isize).min(grid.n_r as isize - 2).max(0) };
    let tx = x - i0 as f64;
    let i1 = (i0 + 1).min(grid.n_r as isize - 1);
    let a = value(i0, j0) * (1.0 - tx) + value(i1, j0) * tx;
    let b = value(i0, j1) * (1.0 - tx) + value(i1, j1) * tx;
    a * (1.0 - ty) + b * ty
}

fn window_points(
    grid: &MeridianGrid,
    lambda: f64,
    center: (f64, f64),
    window_radius: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>, ConcentrationError> {
    positive("lambda", lambda)?;
    positive("window_radius", window_radius)?;
    if n == 0 {
        return Err(ConcentrationError::WindowOutside);
    }
    let ext = lambda * window_radius;
    let tol = 1e-12 * (1.0 + grid.r_max);
    let (rc, zc) = center;
    // negative radii are reached through the axis by parity
    if rc.abs() + ext > grid.r_max + tol || zc - ext < grid.z_min - tol || zc + ext > grid.z_max + tol {
        return Err(ConcentrationError::WindowOutside);
    }
    let w = Window {
        lambda,
        center,
        window_radius,
        n,
        values: Vec::new(),
    };
    let mut pts = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            pts.push((rc + lambda * w.coord(a), zc + lambda * w.coord(b)));
        }
    }
    Ok(pts)
}

/// Resample a scalar field, even across the axis.
pub fn rescale_scalar(
    field: &Field,
    grid: &MeridianGrid,
    lambda: f64,
    center: (f64, f64),
    window_radius: f64,
    n: usize,
) -> Result<Window, ConcentrationError> {
    check_shape(field, grid)?;
    let pts = window_points(grid, lambda, center, window_radius, n)?;
    let even = |_: usize, v: f64| v;
    let values = pts
        .iter()
        .map(|&(r, z)| if r < 0.0 { bilinear(field, grid, -r, z, &even) } else { bilinear(field, grid, r, z, &even) })
        .collect();
    Ok(Window {
        lambda,
        center,
        window_radius,
        n,
        values,
    })
}

/// `(q, psi) = (rho, phi)(r_e + lambda r, z_e + lambda z)` on the blow-up window.
pub fn rescale_fields(
    director: &DirectorState,
    grid: &MeridianGrid,
    lambda: f64,
    center: (f64, f64),
    window_radius: f64,
    n: usize,
) -> Result<(Window, Window), ConcentrationError> {
    let (rho, phi) = match (director.repr, &director.phi) {
        (Representation::Sphere, Some(phi)) => (Field::constant(grid, 1.0), phi.clone()),
        _ => cartesian_to_polar(director),
    };
    check_shape(&phi, grid)?;
    let pts = window_points(grid, lambda, center, window_radius, n)?;
    let branch = |j: usize| director.axis_branch.get(j).copied().unwrap_or(0.0);
    let even = |_: usize, v: f64| v;
    let odd = |j: usize, v: f64| 2.0 * branch(j) - v;
    let mut q = Vec::with_capacity(pts.len());
    let mut psi = Vec::with_capacity(pts.len());
    for &(r, z) in &pts {
        q.push(bilinear(&rho, grid, r.abs(), z, &even));
        if r < 0.0 {
            // the angle is odd about the axis branch
            let jj = (((z - grid.z_min) / grid.h_z).floor().max(0.0) as usize).min(grid.n_z - 1);
            psi.push(2.0 * branch(jj) - bilinear(&phi, grid, -r, z, &odd));
        } else {
            psi.push(bilinear(&phi, grid, r, z, &odd));
        }
    }
    let mk = |values| Window {
        lambda,
        center,
        window_radius,
        n,
        values,
    };
    Ok((mk(q), mk(psi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PenaltyDominant,
    Balanced(f64),
    DiffusionDominant,
}

/// Label by `lambda / eps`: at least 10 is penalty dominated, at most 0.1 diffusion dominated.
pub fn classify_regime(lambda: f64, epsilon: f64) -> Result<Regime, ConcentrationError> {
    positive("lambda", lambda)?;
    positive("epsilon", epsilon)?;
    let ratio = lambda / epsilon;
    Ok(if ratio >= 10.0 {
        Regime::PenaltyDominant
    } else if ratio <= 0.1 {
        Regime::DiffusionDominant
    } else {
        Regime::Balanced(ratio)
    })
}

/// Cells whose scaled energy exceeds `eps0_sq` at every radius and for every run.
pub fn concentration_set(
    densities: &[&Field],
    grid: &MeridianGrid,
    radii: &[f64],
    eps0_sq: f64,
) -> Result<Vec<(usize, usize)>, ConcentrationError> {
    for d in densities {
        check_shape(d, grid)?;
    }
    let cells: Vec<(usize, usize)> = (0..grid.n_z).flat_map(|j| (0..grid.n_r).map(move |i| (i, j))).collect();
    let hits: Vec<bool> = cells
        .par_iter()
        .map(|&(i, j)| {
            let c = (grid.r(i), grid.z(j));
            !densities.is_empty()
                && radii.iter().all(|&rad| {
                    ball_inside(grid, c.0, c.1, rad)
                        && densities
                            .iter()
                            .all(|d| local_scaled_energy(d, grid, c, rad).map_or(false, |v| v > eps0_sq))
                })
        })
        .collect();
    Ok(cells.into_iter().zip(hits).filter(|(_, h)| *h).map(|(c, _)| c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub r: f64,
    pub z: f64,
    pub radius: f64,
}

impl Probe {
    /// A ball that reaches the axis counts as on-axis.
    pub fn on_axis(&self) -> bool {
        self.r <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    pub time: f64,
    pub probe_r: f64,
    pub probe_z: f64,
    pub radius: f64,
    pub scaled_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub rows: Vec<ProbeRow>,
    /// Indices of off-axis probes that grow by the halving factor at every step.
    pub offaxis_flags: Vec<usize>,
    /// On-axis probes with the same growth; allowed.
    pub onaxis_growth: Vec<usize>,
}

/// One run of an epsilon sweep at a shared time.
#[derive(Debug, Clone, Copy)]
pub struct SweepMember<'a> {
    pub epsilon: f64,
    pub time: f64,
    pub grid: &'a MeridianGrid,
    pub density: &'a Field,
}

/// Growth is "by a factor 2 per halving", i.e. at least `eps_k / eps_{k+1}` per step.
/// Probes whose energy stays below `floor` times the largest probe value are ignored.
pub fn axis_vs_offaxis_report(members: &[SweepMember], probes: &[Probe]) -> Result<AxisReport, ConcentrationError> {
    if members.len() < 2 || members.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
        return Err(ConcentrationError::EpsilonList);
    }
    let grid = members[0].grid;
    if members.iter().any(|m| !m.grid.same_shape(grid)) {
        return Err(ConcentrationError::GridMismatch);
    }
    let mut rows = Vec::new();
    let mut table = vec![vec![0.0; members.len()]; probes.len()];
    for (k, m) in members.iter().enumerate() {
        for (p, probe) in probes.iter().enumerate() {
            let v = local_scaled_energy(m.density, grid, (probe.r, probe.z), probe.radius)?;
            table[p][k] = v;
            rows.push(ProbeRow {
                epsilon: m.epsilon,
                time: m.time,
                probe_r: probe.r,
                probe_z: probe.z,
                radius: probe.radius,
                scaled_energy: v,
            });
        }
    }
    const FLOOR: f64 = 1e-12;
    let scale = table.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    let mut report = AxisReport {
        rows,
        offaxis_flags: Vec::new(),
        onaxis_growth: Vec::new(),
    };
    for (p, probe) in probes.iter().enumerate() {
        let v = &table[p];
        let grows = v.iter().any(|&x| x > FLOOR * scale)
            && (1..members.len()).all(|k| {
                let factor = members[k - 1].epsilon / members[k].epsilon;
                v[k] >= factor * v[k - 1] && v[k] > 0.0
            });
        if grows {
            if probe.on_axis() {
                report.onaxis_growth.push(p);
            } else {
                report.offaxis_flags.push(p);
            }
        }
    }
    Ok(report)
}
