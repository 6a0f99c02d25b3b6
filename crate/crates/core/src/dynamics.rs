//! IMEX time stepping of the Ginzburg-Landau system and of the sharp
//! (sphere-valued) axisymmetric system in streamfunction-vorticity form.

use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::grid::{fill_ghosts, AxisValues, BoundarySpec, Field, GridError, HaloField, MeridianGrid, Parity, Side};
use crate::implicit::{ImplicitDiffusion, StreamPoisson, WallValues};
use crate::linalg::LinalgError;
use crate::state::{velocity_from_streamfunction, DirectorState, FlowState, Representation};
use crate::stencil::{advect, grad_r, grad_z, laplacian};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] LinalgError),
    #[error("epsilon must be positive in GL mode, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("time step {dt:e} exceeds the {reason} bound {limit:e}")]
    TimeStep { dt: f64, limit: f64, reason: &'static str },
    #[error("max |d| = {max_d} exceeds 1.1 at t = {time}; the scheme is under-resolved")]
    Blowup { time: f64, max_d: f64 },
    #[error("director is in the {got:?} representation, expected {expected:?}")]
    Representation { expected: Representation, got: Representation },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Distance-based stability bound `h^2 / (4 (1 + 1))`.
pub fn diffusive_dt_bound(grid: &MeridianGrid) -> f64 {
    let h = grid.h_min();
    h * h / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParameters {
    pub mode: Representation,
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    /// `false` is pure heat flow: `u` stays zero and no flow is solved.
    pub advection: bool,
}

impl RunParameters {
    /// `0.9 * min(eps^2 / 4, h^2 / 8)`; the velocity bound is checked each step.
    pub fn auto_dt(grid: &MeridianGrid, mode: Representation, epsilon: f64) -> f64 {
        let mut limit = diffusive_dt_bound(grid);
        if mode == Representation::Gl {
            limit = limit.min(epsilon * epsilon / 4.0);
        }
        0.9 * limit
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    /// Check the step-time bound for the current maximum speed.
    pub fn check_dt(&self, grid: &MeridianGrid, max_speed: f64) -> Result<(), DynamicsError> {
        let tol = 1.0 + 1e-12;
        let diff = diffusive_dt_bound(grid);
        if self.dt > diff * tol {
            return Err(DynamicsError::TimeStep {
                dt: self.dt,
                limit: diff,
                reason: "diffusive",
            });
        }
        if self.mode == Representation::Gl {
            let pen = self.epsilon * self.epsilon / 4.0;
            if self.dt > pen * tol {
                return Err(DynamicsError::TimeStep {
                    dt: self.dt,
                    limit: pen,
                    reason: "penalty",
                });
            }
        }
        if max_speed > 0.0 {
            let cfl = 0.5 * grid.h_min() / max_speed;
            if self.dt > cfl * tol {
                return Err(DynamicsError::TimeStep {
                    dt: self.dt,
                    limit: cfl,
                    reason: "advective",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub flow: FlowState,
    pub director: DirectorState,
    pub time: f64,
}

/// Dirichlet director data on the walls.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectorWalls {
    Gl { d_r: WallValues, d_z: WallValues },
    Sphere { phi: WallValues },
}

impl DirectorWalls {
    /// Wall values of a director given by its angle (unit modulus).
    pub fn from_angle(grid: &MeridianGrid, mode: Representation, phi: impl Fn(f64, f64) -> f64) -> Self {
        let p = WallValues::from_fn(grid, phi);
        match mode {
            Representation::Gl => DirectorWalls::Gl {
                d_r: p.map(f64::sin),
                d_z: p.map(f64::cos),
            },
            Representation::Sphere => DirectorWalls::Sphere { phi: p },
        }
    }

    pub fn uniform(grid: &MeridianGrid, mode: Representation) -> Self {
        Self::from_angle(grid, mode, |_, _| 0.0)
    }

    pub fn representation(&self) -> Representation {
        match self {
            DirectorWalls::Gl { .. } => Representation::Gl,
            DirectorWalls::Sphere { .. } => Representation::Sphere,
        }
    }
}

fn dirichlet_spec(parity: Parity, axis: AxisValues, w: &WallValues) -> BoundarySpec {
    BoundarySpec {
        parity,
        axis,
        outer: Some(Side::Dirichlet(w.outer.clone())),
        bottom: Some(Side::Dirichlet(w.bottom.clone())),
        top: Some(Side::Dirichlet(w.top.clone())),
    }
}

/// Halos of the evolved director fields: `(d_r, d_z)` in GL mode, `(phi,)` in sphere mode.
pub enum DirectorHalo {
    Gl { d_r: HaloField, d_z: HaloField },
    Sphere { phi: HaloField },
}

pub fn director_halo(
    director: &DirectorState,
    grid: &MeridianGrid,
    walls: &DirectorWalls,
) -> Result<DirectorHalo, DynamicsError> {
    match (director.repr, walls) {
        (Representation::Gl, DirectorWalls::Gl { d_r, d_z }) => Ok(DirectorHalo::Gl {
            d_r: fill_ghosts(&director.d_r, grid, &dirichlet_spec(Parity::Odd, AxisValues::Zero, d_r))?,
            d_z: fill_ghosts(&director.d_z, grid, &dirichlet_spec(Parity::Even, AxisValues::Zero, d_z))?,
        }),
        (Representation::Sphere, DirectorWalls::Sphere { phi }) => {
            let field = director.phi.as_ref().ok_or(DynamicsError::NonFinite("phi"))?;
            let axis = AxisValues::PerRow(director.axis_branch.clone());
            Ok(DirectorHalo::Sphere {
                phi: fill_ghosts(field, grid, &dirichlet_spec(Parity::Odd, axis, phi))?,
            })
        }
        (got, w) => Err(DynamicsError::Representation {
            expected: w.representation(),
            got,
        }),
    }
}

/// Tension field: `G = (L_h - 1/r^2) d_r + p d_r, L_h d_z + p d_z` with `p = (1 - |d|^2)/eps^2`
/// in GL mode, the scalar `L_h phi - sin(2 phi)/(2 r^2)` in sphere mode.
pub enum Tension {
    Gl { g_r: Field, g_z: Field },
    Sphere { g_phi: Field },
}

pub fn tension(
    halo: &DirectorHalo,
    director: &DirectorState,
    grid: &MeridianGrid,
    epsilon: f64,
) -> Result<Tension, DynamicsError> {
    match halo {
        DirectorHalo::Gl { d_r, d_z } => {
            if !(epsilon > 0.0) {
                return Err(DynamicsError::NonPositiveEpsilon(epsilon));
            }
            let inv = 1.0 / (epsilon * epsilon);
            let mut g_r = laplacian(d_r, grid, true);
            let mut g_z = laplacian(d_z, grid, false);
            for k in 0..grid.len() {
                let (a, b) = (director.d_r.data[k], director.d_z.data[k]);
                let p = (1.0 - a * a - b * b) * inv;
                g_r.data[k] += p * a;
                g_z.data[k] += p * b;
            }
            Ok(Tension::Gl { g_r, g_z })
        }
        DirectorHalo::Sphere { phi } => {
            let mut g = laplacian(phi, grid, false);
            let p = director.phi.as_ref().expect("sphere halo implies phi");
            hoop_angle(&mut g, p, grid, -1.0);
            Ok(Tension::Sphere { g_phi: g })
        }
    }
}

/// `g += s * sin(2 phi) / (2 r^2)`
fn hoop_angle(g: &mut Field, phi: &Field, grid: &MeridianGrid, s: f64) {
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let r = grid.r(i);
            g[(i, j)] += s * (2.0 * phi[(i, j)]).sin() / (2.0 * r * r);
        }
    }
}

/// Ericksen force `f = (grad d)^T G`.
pub fn ericksen_force(
    director: &DirectorState,
    epsilon: f64,
    grid: &MeridianGrid,
    walls: &DirectorWalls,
) -> Result<(Field, Field), DynamicsError> {
    let halo = director_halo(director, grid, walls)?;
    let t = tension(&halo, director, grid, epsilon)?;
    Ok(match (&halo, &t) {
        (DirectorHalo::Gl { d_r, d_z }, Tension::Gl { g_r, g_z }) => {
            let (rr, rz) = (grad_r(d_r, grid), grad_z(d_r, grid));
            let (zr, zz) = (grad_r(d_z, grid), grad_z(d_z, grid));
            let mut f_r = Field::zeros(grid);
            let mut f_z = Field::zeros(grid);
            for k in 0..grid.len() {
                f_r.data[k] = rr.data[k] * g_r.data[k] + zr.data[k] * g_z.data[k];
                f_z.data[k] = rz.data[k] * g_r.data[k] + zz.data[k] * g_z.data[k];
            }
            (f_r, f_z)
        }
        (DirectorHalo::Sphere { phi }, Tension::Sphere { g_phi }) => {
            let f_r = grad_r(phi, grid).zip_map(g_phi, |a, b| a * b);
            let f_z = grad_z(phi, grid).zip_map(g_phi, |a, b| a * b);
            (f_r, f_z)
        }
        _ => unreachable!("halo and tension share the representation"),
    })
}

/// One-sided estimate of the wall vorticity from the no-slip condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallVorticity {
    /// `psi_nn = 8 psi_0 / h^2`
    Thom,
    /// `psi_nn = (12 psi_0 - 4 psi_1 / 9) / h^2`
    #[default]
    SecondOrder,
}

impl WallVorticity {
    #[inline]
    fn psi_nn(self, p0: f64, p1: f64, h: f64) -> f64 {
        match self {
            WallVorticity::Thom => 8.0 * p0 / (h * h),
            WallVorticity::SecondOrder => (12.0 * p0 - 4.0 * p1 / 9.0) / (h * h),
        }
    }
}

/// Wall vorticity `omega_w = -psi_nn / r_w` along each wall.
pub fn wall_vorticity(psi: &Field, grid: &MeridianGrid, rule: WallVorticity) -> WallValues {
    let (n_r, n_z) = (grid.n_r, grid.n_z);
    WallValues {
        outer: (0..n_z)
            .map(|j| -rule.psi_nn(psi[(n_r - 1, j)], psi[(n_r - 2, j)], grid.h_r) / grid.r_max)
            .collect(),
        bottom: (0..n_r)
            .map(|i| -rule.psi_nn(psi[(i, 0)], psi[(i, 1)], grid.h_z) / grid.r(i))
            .collect(),
        top: (0..n_r)
            .map(|i| -rule.psi_nn(psi[(i, n_z - 1)], psi[(i, n_z - 2)], grid.h_z) / grid.r(i))
            .collect(),
    }
}

/// Halo with a linear extrapolation across the walls.
fn extrapolated_halo(f: &Field, grid: &MeridianGrid, parity: Parity) -> HaloField {
    let mut spec = BoundarySpec::walls(parity, Side::Neumann);
    spec.outer = Some(Side::Dirichlet(
        (0..grid.n_z)
            .map(|j| 1.5 * f[(grid.n_r - 1, j)] - 0.5 * f[(grid.n_r - 2, j)])
            .collect(),
    ));
    spec.bottom = Some(Side::Dirichlet(
        (0..grid.n_r).map(|i| 1.5 * f[(i, 0)] - 0.5 * f[(i, 1)]).collect(),
    ));
    spec.top = Some(Side::Dirichlet(
        (0..grid.n_r)
            .map(|i| 1.5 * f[(i, grid.n_z - 1)] - 0.5 * f[(i, grid.n_z - 2)])
            .collect(),
    ));
    fill_ghosts(f, grid, &spec).expect("extrapolation spec is complete")
}

/// `d_z f_r - d_r f_z`
pub fn force_curl(f_r: &Field, f_z: &Field, grid: &MeridianGrid) -> Field {
    let hr = extrapolated_halo(f_r, grid, Parity::Odd);
    let hz = extrapolated_halo(f_z, grid, Parity::Even);
    let mut c = grad_z(&hr, grid);
    c.axpy(-1.0, &grad_r(&hz, grid));
    c
}

/// Extra terms for verification runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowOptions {
    pub wall_vorticity: WallVorticity,
    /// Drop the nonlinear vorticity transport (Stokes flow).
    pub stokes: bool,
    /// Body source added to the vorticity equation.
    pub body_vorticity: Option<Field>,
}

/// Factored operators for a fixed grid and time step.
#[derive(Debug, Clone)]
pub struct Solver {
    pub grid: MeridianGrid,
    pub params: RunParameters,
    pub walls: DirectorWalls,
    pub options: FlowOptions,
    hoop_op: ImplicitDiffusion,
    plain_op: ImplicitDiffusion,
    poisson: StreamPoisson,
}

impl Solver {
    pub fn new(
        grid: &MeridianGrid,
        params: RunParameters,
        walls: DirectorWalls,
        options: FlowOptions,
    ) -> Result<Self, DynamicsError> {
        if params.mode == Representation::Gl && !(params.epsilon > 0.0) {
            return Err(DynamicsError::NonPositiveEpsilon(params.epsilon));
        }
        if walls.representation() != params.mode {
            return Err(DynamicsError::Representation {
                expected: params.mode,
                got: walls.representation(),
            });
        }
        params.check_dt(grid, 0.0)?;
        Ok(Self {
            grid: *grid,
            params,
            walls,
            options,
            hoop_op: ImplicitDiffusion::new(grid, params.dt, true)?,
            plain_op: ImplicitDiffusion::new(grid, params.dt, false)?,
            poisson: StreamPoisson::new(grid)?,
        })
    }

    pub fn solve_stream(&self, omega: &Field) -> Result<Field, DynamicsError> {
        Ok(self.poisson.solve(omega)?)
    }

    /// Advance the vorticity, then recover `psi` and `u`.
    pub fn flow_step(&self, flow: &FlowState, force: Option<(&Field, &Field)>) -> Result<FlowState, DynamicsError> {
        let g = &self.grid;
        let dt = self.params.dt;
        let ww = wall_vorticity(&flow.psi, g, self.options.wall_vorticity);
        let mut rhs = flow.omega.clone();
        if !self.options.stokes {
            let h = fill_ghosts(&flow.omega, g, &dirichlet_spec(Parity::Odd, AxisValues::Zero, &ww))?;
            let adv = advect(&flow.u_r, &flow.u_z, &h, g);
            for j in 0..g.n_z {
                for i in 0..g.n_r {
                    let k = g.idx(i, j);
                    rhs.data[k] += dt * (flow.u_r.data[k] / g.r(i) * flow.omega.data[k] - adv.data[k]);
                }
            }
        }
        if let Some((f_r, f_z)) = force {
            rhs.axpy(-dt, &force_curl(f_r, f_z, g));
        }
        if let Some(s) = &self.options.body_vorticity {
            rhs.axpy(dt, s);
        }
        let omega = self.hoop_op.solve(&rhs, &ww)?;
        let psi = self.poisson.solve(&omega)?;
        let (u_r, u_z) = velocity_from_streamfunction(&psi, g);
        Ok(FlowState { psi, omega, u_r, u_z })
    }

    /// GL director step with advecting velocity `u` (none means `u = 0`).
    pub fn gl_director_step(
        &self,
        director: &DirectorState,
        u: Option<(&Field, &Field)>,
    ) -> Result<DirectorState, DynamicsError> {
        let g = &self.grid;
        let dt = self.params.dt;
        let eps = self.params.epsilon;
        let (w_r, w_z) = match &self.walls {
            DirectorWalls::Gl { d_r, d_z } => (d_r, d_z),
            w => {
                return Err(DynamicsError::Representation {
                    expected: Representation::Gl,
                    got: w.representation(),
                })
            }
        };
        if director.repr != Representation::Gl {
            return Err(DynamicsError::Representation {
                expected: Representation::Gl,
                got: director.repr,
            });
        }
        let inv = 1.0 / (eps * eps);
        let mut rhs_r = director.d_r.clone();
        let mut rhs_z = director.d_z.clone();
        for k in 0..g.len() {
            let (a, b) = (director.d_r.data[k], director.d_z.data[k]);
            let p = (1.0 - a * a - b * b) * inv;
            rhs_r.data[k] += dt * p * a;
            rhs_z.data[k] += dt * p * b;
        }
        if let Some((ur, uz)) = u {
            if let DirectorHalo::Gl { d_r, d_z } = director_halo(director, g, &self.walls)? {
                rhs_r.axpy(-dt, &advect(ur, uz, &d_r, g));
                rhs_z.axpy(-dt, &advect(ur, uz, &d_z, g));
            }
        }
        let d_r = self.hoop_op.solve(&rhs_r, w_r)?;
        let d_z = self.plain_op.solve(&rhs_z, w_z)?;
        Ok(DirectorState::gl(d_r, d_z))
    }

    /// Sphere-mode step on the angle.
    pub fn sharp_director_step(
        &self,
        director: &DirectorState,
        u: Option<(&Field, &Field)>,
    ) -> Result<DirectorState, DynamicsError> {
        let g = &self.grid;
        let dt = self.params.dt;
        let w = match &self.walls {
            DirectorWalls::Sphere { phi } => phi,
            w => {
                return Err(DynamicsError::Representation {
                    expected: Representation::Sphere,
                    got: w.representation(),
                })
            }
        };
        let phi = match (&director.repr, &director.phi) {
            (Representation::Sphere, Some(p)) => p,
            _ => {
                return Err(DynamicsError::Representation {
                    expected: Representation::Sphere,
                    got: director.repr,
                })
            }
        };
        let mut explicit = Field::zeros(g);
        hoop_angle(&mut explicit, phi, g, -1.0);
        if let Some((ur, uz)) = u {
            if let DirectorHalo::Sphere { phi: h } = director_halo(director, g, &self.walls)? {
                explicit.axpy(-1.0, &advect(ur, uz, &h, g));
            }
        }
        let mut rhs = phi.clone();
        rhs.axpy(dt, &explicit);
        let next = self.plain_op.solve(&rhs, w)?;
        Ok(DirectorState::sphere(next, director.axis_branch.clone()).expect("branch length unchanged"))
    }

    pub fn director_step(
        &self,
        director: &DirectorState,
        u: Option<(&Field, &Field)>,
    ) -> Result<DirectorState, DynamicsError> {
        match self.params.mode {
            Representation::Gl => self.gl_director_step(director, u),
            Representation::Sphere => self.sharp_director_step(director, u),
        }
    }

    /// One Lie-split step: flow with the force of `d^n`, then the director advected by `u^{n+1}`.
    pub fn step(&self, state: &SystemState) -> Result<SystemState, DynamicsError> {
        let g = &self.grid;
        self.params.check_dt(g, state.flow.max_speed())?;
        let flow = if self.params.advection {
            let force = if self.options.body_vorticity.is_some() && self.options.stokes {
                None
            } else {
                Some(ericksen_force(&state.director, self.params.epsilon, g, &self.walls)?)
            };
            self.flow_step(&state.flow, force.as_ref().map(|(a, b)| (a, b)))?
        } else {
            state.flow.clone()
        };
        let u = self.params.advection.then_some((&flow.u_r, &flow.u_z));
        let director = self.director_step(&state.director, u)?;
        Ok(SystemState {
            flow,
            director,
            time: state.time + self.params.dt,
        })
    }

    /// Record of the initial state: no dissipation has happened yet.
    pub fn initial_record(&self, state: &SystemState) -> Result<DiagnosticsRecord, DynamicsError> {
        diagnostics::record_initial(state, &self.grid, &self.params, &self.walls)
    }

    pub fn run(&self, initial: SystemState, snapshot_every: Option<usize>) -> Result<Trajectory, DynamicsError> {
        let mut records = vec![self.initial_record(&initial)?];
        let mut snapshots = Vec::new();
        if snapshot_every.is_some() {
            snapshots.push(Snapshot::untensioned(&initial, &self.grid, 0));
        }
        let mut state = initial.clone();
        let n = self.params.steps();
        for step in 1..=n {
            let next = self.step(&state)?;
            let (rec, tau) = diagnostics::record_step(&next, &state.director, &self.grid, &self.params, &self.walls)?;
            if !(rec.max_d <= 1.1) {
                return Err(DynamicsError::Blowup {
                    time: next.time,
                    max_d: rec.max_d,
                });
            }
            records.push(rec);
            if let Some(every) = snapshot_every {
                if step % every.max(1) == 0 || step == n {
                    snapshots.push(Snapshot {
                        step,
                        time: next.time,
                        state: next.clone(),
                        tau_r: tau.0,
                        tau_z: tau.1,
                    });
                }
            }
            state = next;
        }
        Ok(Trajectory {
            grid: self.grid,
            params: self.params,
            walls: self.walls.clone(),
            records,
            snapshots,
            initial,
            final_state: state,
        })
    }
}

/// Stored state with the tension field `tau = d_t d + (u . grad) d` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: SystemState,
    pub tau_r: Field,
    pub tau_z: Field,
}

impl Snapshot {
    pub fn untensioned(state: &SystemState, grid: &MeridianGrid, step: usize) -> Self {
        Self {
            step,
            time: state.time,
            state: state.clone(),
            tau_r: Field::zeros(grid),
            tau_z: Field::zeros(grid),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: MeridianGrid,
    pub params: RunParameters,
    pub walls: DirectorWalls,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub initial: SystemState,
    pub final_state: SystemState,
}

/// Stand-alone streamfunction solve with `psi = 0` on the walls.
pub fn solve_stream_poisson(omega: &Field, grid: &MeridianGrid) -> Result<Field, DynamicsError> {
    omega.check(grid)?;
    Ok(StreamPoisson::new(grid)?.solve(omega)?)
}

/// Closed forms of the steady manufactured Stokes flow
/// `psi = r^2 (R^2 - r^2)^2 sin^2(pi (z - z_min) / L)`.
pub mod manufactured {
    use std::f64::consts::PI;

    use crate::grid::{Field, MeridianGrid};

    fn parts(grid: &MeridianGrid, z: f64) -> (f64, f64, f64, f64) {
        let l = grid.z_max - grid.z_min;
        let k = PI / l;
        let th = k * (z - grid.z_min);
        (k, th.sin().powi(2), (2.0 * th).cos(), (2.0 * th).sin())
    }

    pub fn psi(grid: &MeridianGrid) -> Field {
        let big = grid.r_max * grid.r_max;
        grid.sample(|r, z| {
            let (_, s, _, _) = parts(grid, z);
            r * r * (big - r * r).powi(2) * s
        })
    }

    pub fn velocity(grid: &MeridianGrid) -> (Field, Field) {
        let big = grid.r_max * grid.r_max;
        let ur = grid.sample(|r, z| {
            let (k, _, _, s2) = parts(grid, z);
            -r * (big - r * r).powi(2) * k * s2
        });
        let uz = grid.sample(|r, z| {
            let (_, s, _, _) = parts(grid, z);
            2.0 * (big - r * r) * (big - 3.0 * r * r) * s
        });
        (ur, uz)
    }

    pub fn vorticity(grid: &MeridianGrid) -> Field {
        let big = grid.r_max * grid.r_max;
        grid.sample(|r, z| {
            let (k, s, c, _) = parts(grid, z);
            16.0 * big * r * s - 24.0 * r.powi(3) * s - 2.0 * k * k * c * r * (big - r * r).powi(2)
        })
    }

    /// Source `-(L - 1/r^2) omega` that makes the flow steady.
    pub fn body_vorticity(grid: &MeridianGrid) -> Field {
        let big = grid.r_max * grid.r_max;
        grid.sample(|r, z| {
            let (k, s, c, _) = parts(grid, z);
            let k2 = k * k;
            192.0 * r * s - 64.0 * k2 * big * r * c + 96.0 * k2 * r.powi(3) * c
                - 8.0 * k2 * k2 * c * r * (big - r * r).powi(2)
        })
    }
}
