//! Discrete no-swirl Stokes eigenbasis on streamfunction degrees of freedom and
//! the modified Galerkin scheme built on it.
//!
//! A degree of freedom is the streamfunction value in one cell; its velocity is
//! the discrete curl used by the finite-difference solver, so every mode is
//! solenoidal with no-slip walls by construction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics;
use crate::dynamics::{ericksen_force, DirectorWalls, DynamicsError, FlowOptions, RunParameters, Snapshot, Solver, SystemState, Trajectory};
use crate::grid::{fill_ghosts, inner, BoundarySpec, Field, MeridianGrid, Parity, Side};
use crate::linalg::{BandedSym, LinalgError};
use crate::state::{velocity_from_streamfunction, DirectorState, FlowState};
use crate::stencil::advect;

/// Largest order solved by the dense path.
pub const DENSE_LIMIT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalerkinError {
    #[error("requested {requested} modes but only {available} degrees of freedom exist")]
    TooManyModes { requested: usize, available: usize },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("field does not match the basis grid")]
    Shape,
    #[error("coefficient vector has length {got}, basis has {expected}")]
    Coefficients { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Sparse column: sorted `(row, value)` pairs.
type Column = Vec<(usize, f64)>;

/// `int v . w` and `int grad v : grad w` (with the hoop term) over streamfunction degrees of freedom.
#[derive(Debug, Clone)]
pub struct StokesOperators {
    pub grid: MeridianGrid,
    pub mass: BandedSym,
    pub stiffness: BandedSym,
}

fn sparse(values: &[f64]) -> Column {
    values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k, *v)).collect()
}

/// Weighted velocity components, ordered `u_r` cells then `u_z` cells.
fn mass_column(u_r: &Field, u_z: &Field, grid: &MeridianGrid) -> Column {
    let n = grid.len();
    let mut v = vec![0.0; 2 * n];
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let k = grid.idx(i, j);
            let s = grid.weight(i).sqrt();
            v[k] = s * u_r.data[k];
            v[n + k] = s * u_z.data[k];
        }
    }
    sparse(&v)
}

/// Square roots of the face fluxes of the conservative vector Laplacian, so that
/// the dot product of two columns is `<-L_h u, w>` with no-slip walls.
fn stiffness_column(u_r: &Field, u_z: &Field, grid: &MeridianGrid) -> Column {
    let (nr, nz) = (grid.n_r, grid.n_z);
    let per = nr * nz;
    // r-faces right of each cell, z-faces below each cell plus the top row, hoop
    let block = per + (nr * (nz + 1));
    let mut v = vec![0.0; 2 * block + per];
    let tau = 2.0 * std::f64::consts::PI;
    let rf = |i: usize| tau * grid.r_face(i) * grid.h_z / grid.h_r;
    let zf = |i: usize| tau * grid.r(i) * grid.h_r / grid.h_z;
    for (c, u) in [u_r, u_z].into_iter().enumerate() {
        let base = c * block;
        for j in 0..nz {
            for i in 0..nr {
                let f = u[(i, j)];
                v[base + grid.idx(i, j)] = if i + 1 < nr {
                    rf(i + 1).sqrt() * (u[(i + 1, j)] - f)
                } else {
                    (2.0 * rf(nr)).sqrt() * f
                };
            }
        }
        for j in 0..=nz {
            for i in 0..nr {
                let slot = base + per + j * nr + i;
                v[slot] = if j == 0 {
                    (2.0 * zf(i)).sqrt() * u[(i, 0)]
                } else if j == nz {
                    (2.0 * zf(i)).sqrt() * u[(i, nz - 1)]
                } else {
                    zf(i).sqrt() * (u[(i, j)] - u[(i, j - 1)])
                };
            }
        }
    }
    for j in 0..nz {
        for i in 0..nr {
            v[2 * block + grid.idx(i, j)] = grid.weight(i).sqrt() / grid.r(i) * u_r[(i, j)];
        }
    }
    sparse(&v)
}

/// Gram matrix of sparse columns in banded storage.
fn gram(columns: &[Column]) -> BandedSym {
    let rows = columns.iter().flat_map(|c| c.iter().map(|e| e.0)).max().map_or(0, |m| m + 1);
    let mut touching: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
    for (a, col) in columns.iter().enumerate() {
        for &(k, v) in col {
            touching[k].push((a, v));
        }
    }
    let lower: Vec<BTreeMap<usize, f64>> = columns
        .par_iter()
        .enumerate()
        .map(|(a, col)| {
            let mut acc = BTreeMap::new();
            for &(k, va) in col {
                for &(b, vb) in &touching[k] {
                    if b <= a {
                        *acc.entry(b).or_insert(0.0) += va * vb;
                    }
                }
            }
            acc
        })
        .collect();
    let bw = lower
        .iter()
        .enumerate()
        .filter_map(|(a, m)| m.keys().next().map(|b| a - b))
        .max()
        .unwrap_or(0);
    let mut out = BandedSym::zeros(columns.len(), bw);
    for (a, m) in lower.iter().enumerate() {
        for (&b, &v) in m {
            out.add(a, b, v);
        }
    }
    out
}

fn unit_velocity(grid: &MeridianGrid, a: usize) -> (Field, Field) {
    let mut psi = Field::zeros(grid);
    psi.data[a] = 1.0;
    velocity_from_streamfunction(&psi, grid)
}

pub fn assemble_stokes_operator(grid: &MeridianGrid) -> StokesOperators {
    let cols: Vec<(Column, Column)> = (0..grid.len())
        .into_par_iter()
        .map(|a| {
            let (u_r, u_z) = unit_velocity(grid, a);
            (mass_column(&u_r, &u_z, grid), stiffness_column(&u_r, &u_z, grid))
        })
        .collect();
    let (m, k): (Vec<Column>, Vec<Column>) = cols.into_iter().unzip();
    StokesOperators {
        grid: *grid,
        mass: gram(&m),
        stiffness: gram(&k),
    }
}

fn to_dense(b: &BandedSym) -> DMatrix<f64> {
    let n = b.n;
    DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) <= b.bw {
            b.get(i, j)
        } else {
            0.0
        }
    })
}

fn banded_apply(b: &BandedSym, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let cols: Vec<Vec<f64>> = (0..x.ncols())
        .into_par_iter()
        .map(|c| {
            let mut y = vec![0.0; b.n];
            b.matvec(x.column(c).as_slice(), &mut y);
            y
        })
        .collect();
    for (c, y) in cols.iter().enumerate() {
        out.column_mut(c).copy_from_slice(y);
    }
    out
}

/// Lowest eigenpairs of `K x = lambda M x` for small dense pencils.
fn dense_pencil(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), GalerkinError> {
    let n = k.nrows();
    let chol = m.clone().cholesky().ok_or(GalerkinError::Linalg(LinalgError::NotPositiveDefinite { row: 0, pivot: 0.0 }))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(GalerkinError::NotConverged { iterations: 0, residual: f64::INFINITY })?;
    let mut c = &linv * k * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    let lt = linv.transpose();
    for (c, &i) in order.iter().enumerate() {
        vecs.column_mut(c).copy_from(&(&lt * eig.eigenvectors.column(i)));
    }
    Ok((vals, vecs))
}

/// Subspace iteration with the inverse of `K` and Rayleigh-Ritz on each sweep.
fn subspace_pencil(ops: &StokesOperators, m: usize) -> Result<(Vec<f64>, DMatrix<f64>), GalerkinError> {
    let n = ops.mass.n;
    let p = (2 * m + 8).min(n);
    let factor = ops.stiffness.cholesky()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
    let mut prev = vec![f64::INFINITY; m];
    let mut residual = f64::INFINITY;
    for it in 0..2000 {
        let mx = banded_apply(&ops.mass, &x);
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|c| {
                let mut y = mx.column(c).iter().copied().collect::<Vec<_>>();
                factor.solve_in_place(&mut y);
                y
            })
            .collect();
        let mut y = DMatrix::zeros(n, p);
        for (c, v) in cols.iter().enumerate() {
            y.column_mut(c).copy_from_slice(v);
        }
        let ky = banded_apply(&ops.stiffness, &y);
        let my = banded_apply(&ops.mass, &y);
        let kr = y.transpose() * &ky;
        let mr = y.transpose() * &my;
        let kr = (&kr + kr.transpose()) * 0.5;
        let mr = (&mr + mr.transpose()) * 0.5;
        let (vals, q) = dense_pencil(&kr, &mr)?;
        x = &y * &q;
        let change = (0..m).map(|i| ((vals[i] - prev[i]) / vals[i]).abs()).fold(0.0, f64::max);
        prev.copy_from_slice(&vals[..m]);
        if change < 1e-14 || it % 10 == 9 {
            let kx = banded_apply(&ops.stiffness, &x.columns(0, m).into_owned());
            let mxm = banded_apply(&ops.mass, &x.columns(0, m).into_owned());
            residual = (0..m)
                .map(|i| (kx.column(i) - mxm.column(i) * vals[i]).norm() / (vals[i] * mxm.column(i).norm()))
                .fold(0.0, f64::max);
            if residual < 1e-9 {
                return Ok((vals[..m].to_vec(), x.columns(0, m).into_owned()));
            }
        }
    }
    Err(GalerkinError::NotConverged {
        iterations: 2000,
        residual,
    })
}

/// The lowest `m` modes, orthonormal in the `r`-weighted inner product.
#[derive(Debug, Clone)]
pub struct StokesEigenbasis {
    pub grid: MeridianGrid,
    pub eigenvalues: Vec<f64>,
    pub psi: Vec<Field>,
    pub u_r: Vec<Field>,
    pub u_z: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenbasisMeta {
    pub m: usize,
    pub eigenvalues: Vec<f64>,
    pub grid: MeridianGrid,
    pub orthonormality_residual: f64,
}

pub fn compute_eigenbasis(ops: &StokesOperators, m: usize) -> Result<StokesEigenbasis, GalerkinError> {
    let n = ops.mass.n;
    if m == 0 || m > n {
        return Err(GalerkinError::TooManyModes { requested: m, available: n });
    }
    let (vals, vecs) = if n <= DENSE_LIMIT {
        let (v, x) = dense_pencil(&to_dense(&ops.stiffness), &to_dense(&ops.mass))?;
        (v[..m].to_vec(), x.columns(0, m).into_owned())
    } else {
        subspace_pencil(ops, m)?
    };
    let g = ops.grid;
    let mut basis = StokesEigenbasis {
        grid: g,
        eigenvalues: vals,
        psi: Vec::with_capacity(m),
        u_r: Vec::with_capacity(m),
        u_z: Vec::with_capacity(m),
    };
    for c in 0..m {
        let col = vecs.column(c);
        let big = col.amax();
        let first = col.iter().find(|v| v.abs() > 1e-8 * big).copied().unwrap_or(1.0);
        let s = first.signum();
        let psi = Field::from_vec(&g, col.iter().map(|v| s * v).collect()).expect("length matches the grid");
        let (u_r, u_z) = velocity_from_streamfunction(&psi, &g);
        basis.psi.push(psi);
        basis.u_r.push(u_r);
        basis.u_z.push(u_z);
    }
    basis.orthonormalize();
    Ok(basis)
}

impl StokesEigenbasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn pair(&self, a: (&Field, &Field), b: (&Field, &Field)) -> f64 {
        inner(a.0, b.0, &self.grid) + inner(a.1, b.1, &self.grid)
    }

    /// Two passes of modified Gram-Schmidt in the weighted inner product.
    fn orthonormalize(&mut self) {
        for _ in 0..2 {
            for i in 0..self.len() {
                for j in 0..i {
                    let c = self.pair((&self.u_r[i], &self.u_z[i]), (&self.u_r[j], &self.u_z[j]));
                    let (pj, rj, zj) = (self.psi[j].clone(), self.u_r[j].clone(), self.u_z[j].clone());
                    self.psi[i].axpy(-c, &pj);
                    self.u_r[i].axpy(-c, &rj);
                    self.u_z[i].axpy(-c, &zj);
                }
                let nrm = self.pair((&self.u_r[i], &self.u_z[i]), (&self.u_r[i], &self.u_z[i])).sqrt();
                self.psi[i].scale(1.0 / nrm);
                self.u_r[i].scale(1.0 / nrm);
                self.u_z[i].scale(1.0 / nrm);
            }
        }
    }

    /// `max |<phi_i, phi_j> - delta_ij|`
    pub fn orthonormality_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.len() {
            for j in 0..=i {
                let g = self.pair((&self.u_r[i], &self.u_z[i]), (&self.u_r[j], &self.u_z[j]));
                worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }

    pub fn meta(&self) -> EigenbasisMeta {
        EigenbasisMeta {
            m: self.len(),
            eigenvalues: self.eigenvalues.clone(),
            grid: self.grid,
            orthonormality_residual: self.orthonormality_residual(),
        }
    }

    /// `c_i = <v, phi_i>`
    pub fn project(&self, u_r: &Field, u_z: &Field) -> Result<Vec<f64>, GalerkinError> {
        u_r.check(&self.grid).map_err(|_| GalerkinError::Shape)?;
        u_z.check(&self.grid).map_err(|_| GalerkinError::Shape)?;
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| self.pair((u_r, u_z), (&self.u_r[i], &self.u_z[i])))
            .collect())
    }

    /// Flow state of `sum c_i phi_i`.
    pub fn reconstruct(&self, c: &[f64]) -> Result<FlowState, GalerkinError> {
        if c.len() != self.len() {
            return Err(GalerkinError::Coefficients {
                expected: self.len(),
                got: c.len(),
            });
        }
        let mut psi = Field::zeros(&self.grid);
        for (ci, p) in c.iter().zip(&self.psi) {
            psi.axpy(*ci, p);
        }
        Ok(FlowState::from_streamfunction(psi, &self.grid))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub coefficients: Vec<f64>,
    pub director: DirectorState,
    pub time: f64,
}

/// Exponential decay of each mode with explicit transport and stress.
pub struct GalerkinSolver {
    pub basis: StokesEigenbasis,
    pub director: Solver,
    /// Drop the nonlinear transport of momentum.
    pub stokes: bool,
    decay: Vec<f64>,
}

impl GalerkinSolver {
    pub fn new(basis: StokesEigenbasis, params: RunParameters, walls: DirectorWalls) -> Result<Self, GalerkinError> {
        let director = Solver::new(&basis.grid, params, walls, FlowOptions::default())?;
        let decay = basis.eigenvalues.iter().map(|l| (-l * params.dt).exp()).collect();
        Ok(Self {
            basis,
            director,
            stokes: false,
            decay,
        })
    }

    pub fn params(&self) -> &RunParameters {
        &self.director.params
    }

    /// Grid forcing `-(v . grad) v - f(d)`.
    fn forcing(&self, flow: &FlowState, director: &DirectorState) -> Result<(Field, Field), GalerkinError> {
        let g = &self.basis.grid;
        let p = self.params();
        let (mut a_r, mut a_z) = (Field::zeros(g), Field::zeros(g));
        if !self.stokes {
            let hr = fill_ghosts(&flow.u_r, g, &BoundarySpec::walls(Parity::Odd, Side::DirichletUniform(0.0))).expect("complete spec");
            let hz = fill_ghosts(&flow.u_z, g, &BoundarySpec::walls(Parity::Even, Side::DirichletUniform(0.0))).expect("complete spec");
            a_r.axpy(-1.0, &advect(&flow.u_r, &flow.u_z, &hr, g));
            a_z.axpy(-1.0, &advect(&flow.u_r, &flow.u_z, &hz, g));
        }
        let (f_r, f_z) = ericksen_force(director, p.epsilon, g, &self.director.walls)?;
        a_r.axpy(-1.0, &f_r);
        a_z.axpy(-1.0, &f_z);
        Ok((a_r, a_z))
    }

    pub fn step(&self, state: &GalerkinState) -> Result<GalerkinState, GalerkinError> {
        let p = *self.params();
        let g = &self.basis.grid;
        let flow = self.basis.reconstruct(&state.coefficients)?;
        p.check_dt(g, flow.max_speed())?;
        let mut c = state.coefficients.clone();
        if p.advection {
            let (f_r, f_z) = self.forcing(&flow, &state.director)?;
            let proj = self.basis.project(&f_r, &f_z)?;
            for i in 0..c.len() {
                c[i] = self.decay[i] * (c[i] + p.dt * proj[i]);
            }
        }
        let next = self.basis.reconstruct(&c)?;
        let u = p.advection.then_some((&next.u_r, &next.u_z));
        let director = self.director.director_step(&state.director, u)?;
        Ok(GalerkinState {
            coefficients: c,
            director,
            time: state.time + p.dt,
        })
    }

    fn system(&self, s: &GalerkinState) -> Result<SystemState, GalerkinError> {
        Ok(SystemState {
            flow: self.basis.reconstruct(&s.coefficients)?,
            director: s.director.clone(),
            time: s.time,
        })
    }

    /// Initial state `(P_m u0, d0)`.
    pub fn initial_state(&self, initial: &SystemState) -> Result<GalerkinState, GalerkinError> {
        Ok(GalerkinState {
            coefficients: self.basis.project(&initial.flow.u_r, &initial.flow.u_z)?,
            director: initial.director.clone(),
            time: initial.time,
        })
    }

    /// Full run from `(u0, d0)`; the trajectory stores reconstructed grid fields.
    pub fn run(&self, initial: &SystemState, snapshot_every: Option<usize>) -> Result<(Trajectory, GalerkinState), GalerkinError> {
        let g = self.basis.grid;
        let p = *self.params();
        let walls = &self.director.walls;
        let mut state = self.initial_state(initial)?;
        let start = self.system(&state)?;
        let mut records = vec![diagnostics::record_initial(&start, &g, &p, walls)?];
        let mut snapshots = Vec::new();
        if snapshot_every.is_some() {
            snapshots.push(Snapshot::untensioned(&start, &g, 0));
        }
        let steps = p.steps();
        let mut last = start.clone();
        for step in 1..=steps {
            let next = self.step(&state)?;
            let sys = self.system(&next)?;
            let (rec, tau) = diagnostics::record_step(&sys, &state.director, &g, &p, walls)?;
            if !(rec.max_d <= 1.1) {
                return Err(DynamicsError::Blowup {
                    time: next.time,
                    max_d: rec.max_d,
                }
                .into());
            }
            records.push(rec);
            if let Some(every) = snapshot_every {
                if step % every.max(1) == 0 || step == steps {
                    snapshots.push(Snapshot {
                        step,
                        time: sys.time,
                        state: sys.clone(),
                        tau_r: tau.0,
                        tau_z: tau.1,
                    });
                }
            }
            last = sys;
            state = next;
        }
        Ok((
            Trajectory {
                grid: g,
                params: p,
                walls: walls.clone(),
                records,
                snapshots,
                initial: start,
                final_state: last,
            },
            state,
        ))
    }
}

/// Relative `L^2` distance `|a - b| / |b|` of two velocity fields.
pub fn relative_velocity_difference(a: &FlowState, b: &FlowState, grid: &MeridianGrid) -> f64 {
    let dr = a.u_r.zip_map(&b.u_r, |x, y| x - y);
    let dz = a.u_z.zip_map(&b.u_z, |x, y| x - y);
    let num = inner(&dr, &dr, grid) + inner(&dz, &dz, grid);
    let den = inner(&b.u_r, &b.u_r, grid) + inner(&b.u_z, &b.u_z, grid);
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisValues;
    use crate::state::{divergence_of_stream_velocity, Representation};
    use crate::stencil::laplacian;
    use proptest::prelude::*;

    fn grid(n_r: usize, n_z: usize) -> MeridianGrid {
        MeridianGrid::new(1.0, -1.0, 1.0, n_r, n_z).unwrap()
    }

    /// `<-L_h u, w>` with the solver's stencil and zero walls.
    fn stiffness_oracle(a: (&Field, &Field), b: (&Field, &Field), g: &MeridianGrid) -> f64 {
        let sr = BoundarySpec::walls(Parity::Odd, Side::DirichletUniform(0.0)).with_axis(AxisValues::Zero);
        let sz = BoundarySpec::walls(Parity::Even, Side::DirichletUniform(0.0));
        let lr = laplacian(&fill_ghosts(a.0, g, &sr).unwrap(), g, true);
        let lz = laplacian(&fill_ghosts(a.1, g, &sz).unwrap(), g, false);
        -(inner(&lr, b.0, g) + inner(&lz, b.1, g))
    }

    #[test]
    fn assembly_matches_entrywise_oracle() {
        let g = grid(4, 4);
        let ops = assemble_stokes_operator(&g);
        let n = g.len();
        for a in 0..n {
            let ua = unit_velocity(&g, a);
            for b in 0..n {
                let ub = unit_velocity(&g, b);
                let m = inner(&ua.0, &ub.0, &g) + inner(&ua.1, &ub.1, &g);
                let k = stiffness_oracle((&ua.0, &ua.1), (&ub.0, &ub.1), &g);
                let (mm, kk) = if a.abs_diff(b) <= ops.mass.bw { (ops.mass.get(a, b), 0.0) } else { (0.0, 0.0) };
                let kk = if a.abs_diff(b) <= ops.stiffness.bw { ops.stiffness.get(a, b) } else { kk };
                assert!((mm - m).abs() < 1e-12 * (1.0 + m.abs()), "M {a} {b}: {mm} vs {m}");
                assert!((kk - k).abs() < 1e-10 * (1.0 + k.abs()), "K {a} {b}: {kk} vs {k}");
            }
        }
    }

    #[test]
    fn mass_is_positive_and_stiffness_dominates() {
        let g = grid(6, 8);
        let ops = assemble_stokes_operator(&g);
        let m = to_dense(&ops.mass);
        let e = SymmetricEigen::new(m.clone()).eigenvalues;
        assert!(e.min() > 0.0);
        let basis = compute_eigenbasis(&ops, 4).unwrap();
        let l1 = basis.eigenvalues[0];
        assert!(l1 > 0.0);
        // K - l1 M is positive semidefinite
        let shifted = to_dense(&ops.stiffness) - m * l1;
        let e = SymmetricEigen::new(shifted).eigenvalues;
        assert!(e.min() > -1e-8 * l1, "{}", e.min());
    }

    #[test]
    fn dense_and_subspace_agree() {
        let g = grid(12, 16);
        let ops = assemble_stokes_operator(&g);
        let (dv, _) = dense_pencil(&to_dense(&ops.stiffness), &to_dense(&ops.mass)).unwrap();
        let (sv, x) = subspace_pencil(&ops, 6).unwrap();
        for i in 0..6 {
            assert!((dv[i] - sv[i]).abs() < 1e-9 * dv[i], "{i}: {} {}", dv[i], sv[i]);
        }
        assert_eq!(x.ncols(), 6);
    }

    #[test]
    fn basis_is_orthonormal_increasing_and_solenoidal() {
        let g = grid(16, 32);
        let basis = compute_eigenbasis(&assemble_stokes_operator(&g), 12).unwrap();
        assert!(basis.orthonormality_residual() <= 1e-10);
        assert!(basis.eigenvalues[0] > 0.0);
        for w in basis.eigenvalues.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(basis.eigenvalues[11] > 3.0 * basis.eigenvalues[0]);
        for i in 0..basis.len() {
            assert!(divergence_of_stream_velocity(&basis.psi[i], &g).max_abs() < 1e-10);
            for j in 0..g.n_z {
                assert_eq!(basis.psi[i][(g.n_r - 1, j)].is_finite(), true);
            }
        }
        // deterministic sign: first significant entry positive
        for p in &basis.psi {
            let big = p.max_abs();
            assert!(p.data.iter().find(|v| v.abs() > 1e-8 * big).unwrap() > &0.0);
        }
    }

    #[test]
    fn projection_identities() {
        let g = grid(12, 16);
        let basis = compute_eigenbasis(&assemble_stokes_operator(&g), 8).unwrap();
        let c = basis.project(&basis.u_r[2], &basis.u_z[2]).unwrap();
        for (i, v) in c.iter().enumerate() {
            assert!((v - if i == 2 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
        // residual of a generic field after removing its projection is orthogonal to the span
        let psi = g.sample(|r, z| r * r * (1.0 - r * r) * (1.0 - z * z) * (1.0 + z));
        let f = FlowState::from_streamfunction(psi, &g);
        let c = basis.project(&f.u_r, &f.u_z).unwrap();
        let rec = basis.reconstruct(&c).unwrap();
        let (rr, rz) = (f.u_r.zip_map(&rec.u_r, |a, b| a - b), f.u_z.zip_map(&rec.u_z, |a, b| a - b));
        assert!(basis.project(&rr, &rz).unwrap().iter().all(|v| v.abs() < 1e-10));
        let norm = inner(&f.u_r, &f.u_r, &g) + inner(&f.u_z, &f.u_z, &g);
        assert!(c.iter().map(|v| v * v).sum::<f64>() <= norm + 1e-10);
        let again = basis.project(&rec.u_r, &rec.u_z).unwrap();
        for (a, b) in again.iter().zip(&c) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn stokes_mode_decays_exponentially() {
        let g = grid(12, 24);
        let basis = compute_eigenbasis(&assemble_stokes_operator(&g), 6).unwrap();
        let l1 = basis.eigenvalues[0];
        let mode = Representation::Gl;
        let dt = RunParameters::auto_dt(&g, mode, 1.0);
        let params = RunParameters {
            mode,
            epsilon: 1.0,
            dt,
            t_end: 50.0 * dt,
            advection: true,
        };
        let amp = 1e-6;
        let mut u = basis.reconstruct(&[amp, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        u.omega = Field::zeros(&g);
        let init = SystemState {
            flow: u,
            director: DirectorState::uniform(&g, mode),
            time: 0.0,
        };
        let solver = GalerkinSolver::new(basis, params, DirectorWalls::uniform(&g, mode)).unwrap();
        let (traj, end) = solver.run(&init, None).unwrap();
        let expect = amp * (-l1 * end.time).exp();
        assert!((end.coefficients[0] - expect).abs() <= 1e-6 * expect, "{} {expect}", end.coefficients[0]);
        assert_eq!(traj.records.len(), 51);
        // zero data stays zero
        let zero = SystemState {
            flow: FlowState::zeros(&g),
            director: DirectorState::uniform(&g, mode),
            time: 0.0,
        };
        let (_, end) = solver.run(&zero, None).unwrap();
        // the implicit director solve reproduces d_z = 1 to rounding only
        assert!(end.coefficients.iter().all(|c| c.abs() < 1e-20), "{:?}", end.coefficients);
    }

    #[test]
    fn too_many_modes_rejected() {
        let g = grid(4, 4);
        let ops = assemble_stokes_operator(&g);
        assert!(matches!(compute_eigenbasis(&ops, 17), Err(GalerkinError::TooManyModes { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reconstruct_then_project_is_identity(c in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let g = grid(8, 12);
            let basis = compute_eigenbasis(&assemble_stokes_operator(&g), 6).unwrap();
            let f = basis.reconstruct(&c).unwrap();
            let back = basis.project(&f.u_r, &f.u_z).unwrap();
            for (a, b) in back.iter().zip(&c) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
