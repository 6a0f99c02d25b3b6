//! Factored implicit operators: the backward-Euler diffusion step and the
//! streamfunction Poisson problem.

use crate::grid::{Field, MeridianGrid};
use crate::linalg::{BandedCholesky, BandedSym, LinalgError};

/// Dirichlet face values on the three physical walls.
#[derive(Debug, Clone, PartialEq)]
pub struct WallValues {
    /// `n_z` values on `r = r_max`.
    pub outer: Vec<f64>,
    /// `n_r` values on `z = z_min`.
    pub bottom: Vec<f64>,
    /// `n_r` values on `z = z_max`.
    pub top: Vec<f64>,
}

impl WallValues {
    pub fn uniform(grid: &MeridianGrid, v: f64) -> Self {
        Self {
            outer: vec![v; grid.n_z],
            bottom: vec![v; grid.n_r],
            top: vec![v; grid.n_r],
        }
    }

    pub fn zero(grid: &MeridianGrid) -> Self {
        Self::uniform(grid, 0.0)
    }

    /// Face values of a function of `(r, z)` on the walls.
    pub fn from_fn(grid: &MeridianGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            outer: (0..grid.n_z).map(|j| f(grid.r_max, grid.z(j))).collect(),
            bottom: (0..grid.n_r).map(|i| f(grid.r(i), grid.z_min)).collect(),
            top: (0..grid.n_r).map(|i| f(grid.r(i), grid.z_max)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            outer: self.outer.iter().map(|&v| f(v)).collect(),
            bottom: self.bottom.iter().map(|&v| f(v)).collect(),
            top: self.top.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Factored `I - dt (L_h - hoop / r^2)` with Dirichlet walls, symmetrized by the cell radius.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusion {
    grid: MeridianGrid,
    dt: f64,
    chol: BandedCholesky,
}

impl ImplicitDiffusion {
    pub fn new(grid: &MeridianGrid, dt: f64, hoop: bool) -> Result<Self, LinalgError> {
        let (n_r, n_z) = (grid.n_r, grid.n_z);
        let (hr2, hz2) = (grid.h_r * grid.h_r, grid.h_z * grid.h_z);
        let mut a = BandedSym::zeros(grid.len(), n_r);
        for j in 0..n_z {
            for i in 0..n_r {
                let k = grid.idx(i, j);
                let r = grid.r(i);
                let mut diag = r;
                // r-faces; the axis face carries zero flux
                if i + 1 < n_r {
                    let c = dt * grid.r_face(i + 1) / hr2;
                    diag += c;
                    a.add(k + 1, k, -c);
                } else {
                    diag += 2.0 * dt * grid.r_face(n_r) / hr2;
                }
                if i > 0 {
                    diag += dt * grid.r_face(i) / hr2;
                }
                // z-faces
                let c = dt * r / hz2;
                if j + 1 < n_z {
                    diag += c;
                    a.add(k + n_r, k, -c);
                } else {
                    diag += 2.0 * c;
                }
                if j > 0 {
                    diag += c;
                } else {
                    diag += 2.0 * c;
                }
                if hoop {
                    diag += dt / r;
                }
                a.add(k, k, diag);
            }
        }
        Ok(Self {
            grid: *grid,
            dt,
            chol: a.cholesky()?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solve `(I - dt L) x = rhs` with wall values `b`.
    pub fn solve(&self, rhs: &Field, walls: &WallValues) -> Result<Field, LinalgError> {
        let g = &self.grid;
        let (hr2, hz2) = (g.h_r * g.h_r, g.h_z * g.h_z);
        let mut b = vec![0.0; g.len()];
        for j in 0..g.n_z {
            for i in 0..g.n_r {
                let k = g.idx(i, j);
                let r = g.r(i);
                let mut v = r * rhs.data[k];
                if i + 1 == g.n_r {
                    v += 2.0 * self.dt * g.r_face(g.n_r) / hr2 * walls.outer[j];
                }
                if j == 0 {
                    v += 2.0 * self.dt * r / hz2 * walls.bottom[i];
                }
                if j + 1 == g.n_z {
                    v += 2.0 * self.dt * r / hz2 * walls.top[i];
                }
                b[k] = v;
            }
        }
        Field::from_vec(g, self.chol.solve_checked(&b)?).map_err(|_| LinalgError::Dimension {
            expected: g.len(),
            got: rhs.data.len(),
        })
    }
}

/// Factored `-(1/r) E^2` with `psi = 0` on every wall and even parity at the axis.
///
/// `E^2 psi = psi_rr - psi_r / r + psi_zz` is written as `r d_r((1/r) d_r psi) + psi_zz`;
/// the axis flux `(1/r) psi_r` uses the even-parity estimate `2 psi_0 / r_0^2`.
/// Wall ghosts extrapolate quadratically through the zero wall value,
/// `psi_g = -2 psi_0 + psi_1 / 3`, which keeps the near-wall values accurate
/// enough for the wall vorticity. The resulting operator is symmetrized by
/// scaling wall rows, `S = D A`, with `D` a product of per-column and per-row factors.
#[derive(Debug, Clone)]
pub struct StreamPoisson {
    grid: MeridianGrid,
    chol: BandedCholesky,
    row_scale: Vec<f64>,
}

const GHOST_NEAR: f64 = -2.0;
const GHOST_NEXT: f64 = 1.0 / 3.0;

impl StreamPoisson {
    pub fn new(grid: &MeridianGrid) -> Result<Self, LinalgError> {
        let (n_r, n_z) = (grid.n_r, grid.n_z);
        if n_r < 2 || n_z < 2 {
            return Err(LinalgError::Dimension {
                expected: 4,
                got: grid.len(),
            });
        }
        let (hr, hz2) = (grid.h_r, grid.h_z * grid.h_z);
        let c_face = |i: usize| 1.0 / (hr * hr * grid.r_face(i));
        // the wall row couples to its inner neighbour by (c_in + c_w/3)
        let d_col = c_face(n_r - 1) / (c_face(n_r - 1) + GHOST_NEXT * c_face(n_r));
        let d_row = 1.0 / (1.0 + GHOST_NEXT);
        let scale = |i: usize, j: usize| {
            let a = if i + 1 == n_r { d_col } else { 1.0 };
            let b = if j == 0 || j + 1 == n_z { d_row } else { 1.0 };
            a * b
        };
        let mut a = BandedSym::zeros(grid.len(), n_r);
        let mut row_scale = vec![1.0; grid.len()];
        for j in 0..n_z {
            for i in 0..n_r {
                let k = grid.idx(i, j);
                let d = scale(i, j);
                row_scale[k] = d;
                let r = grid.r(i);
                let mut diag = 0.0;
                // off-diagonals taken from the upper row, which may be a wall row
                if i + 1 < n_r {
                    let c = c_face(i + 1);
                    diag += c;
                    let up = if i + 2 == n_r { c + GHOST_NEXT * c_face(n_r) } else { c };
                    a.add(k + 1, k, -up * scale(i + 1, j));
                } else {
                    diag += (1.0 - GHOST_NEAR) * c_face(n_r);
                }
                if i > 0 {
                    diag += c_face(i);
                } else {
                    diag += 2.0 / (hr * r * r);
                }
                let c = 1.0 / (r * hz2);
                if j + 1 < n_z {
                    diag += c;
                    let up = if j + 2 == n_z { c * (1.0 + GHOST_NEXT) } else { c };
                    a.add(k + n_r, k, -up * scale(i, j + 1));
                } else {
                    diag += (1.0 - GHOST_NEAR) * c;
                }
                if j > 0 {
                    diag += c;
                } else {
                    diag += (1.0 - GHOST_NEAR) * c;
                }
                a.add(k, k, diag * d);
            }
        }
        Ok(Self {
            grid: *grid,
            chol: a.cholesky()?,
            row_scale,
        })
    }

    pub fn solve(&self, omega: &Field) -> Result<Field, LinalgError> {
        if omega.data.len() != self.grid.len() {
            return Err(LinalgError::Dimension {
                expected: self.grid.len(),
                got: omega.data.len(),
            });
        }
        let rhs: Vec<f64> = omega.data.iter().zip(&self.row_scale).map(|(w, d)| w * d).collect();
        let psi = self.chol.solve_checked(&rhs)?;
        Ok(Field {
            n_r: self.grid.n_r,
            n_z: self.grid.n_z,
            data: psi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fill_ghosts, BoundarySpec, Parity, Side};
    use crate::stencil::laplacian;

    #[test]
    fn implicit_step_inverts_explicit_operator() {
        let g = MeridianGrid::new(1.0, -0.5, 0.5, 12, 10).unwrap();
        let walls = WallValues::from_fn(&g, |r, z| 0.3 + r * z);
        let dt = 0.01;
        for hoop in [false, true] {
            let op = ImplicitDiffusion::new(&g, dt, hoop).unwrap();
            let x = g.sample(|r, z| (r * 3.0).cos() * (1.0 + z));
            let spec = BoundarySpec {
                parity: if hoop { Parity::Odd } else { Parity::Even },
                axis: crate::grid::AxisValues::Zero,
                outer: Some(Side::Dirichlet(walls.outer.clone())),
                bottom: Some(Side::Dirichlet(walls.bottom.clone())),
                top: Some(Side::Dirichlet(walls.top.clone())),
            };
            let lx = laplacian(&fill_ghosts(&x, &g, &spec).unwrap(), &g, hoop);
            let mut rhs = x.clone();
            rhs.axpy(-dt, &lx);
            let back = op.solve(&rhs, &walls).unwrap();
            for (a, b) in back.data.iter().zip(&x.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poisson_is_linear_and_zero_preserving() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 8, 8).unwrap();
        let p = StreamPoisson::new(&g).unwrap();
        assert_eq!(p.solve(&Field::zeros(&g)).unwrap(), Field::zeros(&g));
        let w = g.sample(|r, z| r * (z * 5.0).sin());
        let a = p.solve(&w).unwrap();
        let b = p.solve(&w.map(|v| 3.5 * v)).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((3.5 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
