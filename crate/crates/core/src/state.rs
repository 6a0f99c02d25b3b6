//! Director and flow containers with their representation changes.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{Field, GridError, MeridianGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("negative modulus {value} at cell ({i}, {j})")]
    NegativeRho { i: usize, j: usize, value: f64 },
    #[error("axis branch has {got} entries, expected {expected}")]
    AxisBranch { expected: usize, got: usize },
}

/// Below this modulus the angle is undefined and copied from a neighbour.
pub const RHO_DEGENERATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Gl,
    Sphere,
}

/// Director `d = d_r e_r + d_z e_z`.
///
/// In the sphere representation the angle `phi` is authoritative and
/// `(d_r, d_z) = (sin phi, cos phi)`; `axis_branch[j]` is the multiple of pi
/// taken by `phi` on the axis in row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorState {
    pub repr: Representation,
    pub d_r: Field,
    pub d_z: Field,
    pub phi: Option<Field>,
    pub axis_branch: Vec<f64>,
}

impl DirectorState {
    pub fn gl(d_r: Field, d_z: Field) -> Self {
        let n_z = d_r.n_z;
        Self {
            repr: Representation::Gl,
            d_r,
            d_z,
            phi: None,
            axis_branch: vec![0.0; n_z],
        }
    }

    pub fn sphere(phi: Field, axis_branch: Vec<f64>) -> Result<Self, StateError> {
        if axis_branch.len() != phi.n_z {
            return Err(StateError::AxisBranch {
                expected: phi.n_z,
                got: axis_branch.len(),
            });
        }
        Ok(Self {
            repr: Representation::Sphere,
            d_r: phi.map(f64::sin),
            d_z: phi.map(f64::cos),
            phi: Some(phi),
            axis_branch,
        })
    }

    /// Sphere state whose axis branch is read off the first cell column.
    pub fn sphere_from_phi(phi: Field) -> Self {
        let branch = (0..phi.n_z).map(|j| nearest_branch(phi[(0, j)])).collect();
        Self::sphere(phi, branch).expect("branch length matches by construction")
    }

    pub fn uniform(grid: &MeridianGrid, repr: Representation) -> Self {
        match repr {
            Representation::Gl => Self::gl(Field::zeros(grid), Field::constant(grid, 1.0)),
            Representation::Sphere => Self::sphere(Field::zeros(grid), vec![0.0; grid.n_z]).unwrap(),
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.d_r
            .data
            .iter()
            .zip(&self.d_z.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn check(&self, grid: &MeridianGrid) -> Result<(), StateError> {
        self.d_r.check(grid)?;
        self.d_z.check(grid)?;
        if let Some(p) = &self.phi {
            p.check(grid)?;
        }
        Ok(())
    }
}

/// The multiple of pi closest to `phi`.
pub fn nearest_branch(phi: f64) -> f64 {
    (phi / PI).round() * PI
}

pub fn polar_to_cartesian(rho: &Field, phi: &Field, grid: &MeridianGrid) -> Result<DirectorState, StateError> {
    rho.check(grid)?;
    phi.check(grid)?;
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let v = rho[(i, j)];
            if v < 0.0 {
                return Err(StateError::NegativeRho { i, j, value: v });
            }
        }
    }
    Ok(DirectorState::gl(
        rho.zip_map(phi, |p, a| p * a.sin()),
        rho.zip_map(phi, |p, a| p * a.cos()),
    ))
}

/// Modulus and angle `atan2(d_r, d_z)`, unwrapped outward along each row from the axis branch.
pub fn cartesian_to_polar(director: &DirectorState) -> (Field, Field) {
    let (n_r, n_z) = (director.d_r.n_r, director.d_r.n_z);
    let rho = director.d_r.zip_map(&director.d_z, |a, b| (a * a + b * b).sqrt());
    let mut phi = Field {
        n_r,
        n_z,
        data: vec![0.0; n_r * n_z],
    };
    for j in 0..n_z {
        let mut reference = director.axis_branch.get(j).copied().unwrap_or(0.0);
        let mut resolved = vec![false; n_r];
        for i in 0..n_r {
            if rho[(i, j)] < RHO_DEGENERATE {
                continue;
            }
            let raw = director.d_r[(i, j)].atan2(director.d_z[(i, j)]);
            let v = raw + 2.0 * PI * ((reference - raw) / (2.0 * PI)).round();
            phi[(i, j)] = v;
            reference = v;
            resolved[i] = true;
        }
        // degenerate cells take the nearest resolved neighbour in the row
        if resolved.iter().any(|&x| x) {
            for i in 0..n_r {
                if resolved[i] {
                    continue;
                }
                let mut best: Option<usize> = None;
                for d in 1..n_r {
                    if i >= d && resolved[i - d] {
                        best = Some(i - d);
                        break;
                    }
                    if i + d < n_r && resolved[i + d] {
                        best = Some(i + d);
                        break;
                    }
                }
                if let Some(b) = best {
                    phi[(i, j)] = phi[(b, j)];
                }
            }
        } else {
            let b = director.axis_branch.get(j).copied().unwrap_or(0.0);
            for i in 0..n_r {
                phi[(i, j)] = b;
            }
        }
    }
    (rho, phi)
}

/// Streamfunction, azimuthal vorticity and the velocity derived from the streamfunction.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub psi: Field,
    pub omega: Field,
    pub u_r: Field,
    pub u_z: Field,
}

impl FlowState {
    pub fn zeros(grid: &MeridianGrid) -> Self {
        Self {
            psi: Field::zeros(grid),
            omega: Field::zeros(grid),
            u_r: Field::zeros(grid),
            u_z: Field::zeros(grid),
        }
    }

    /// Velocity and vorticity recovered from `psi`.
    pub fn from_streamfunction(psi: Field, grid: &MeridianGrid) -> Self {
        let (u_r, u_z) = velocity_from_streamfunction(&psi, grid);
        let omega = vorticity_from_velocity(&u_r, &u_z, grid);
        Self { psi, omega, u_r, u_z }
    }

    pub fn max_speed(&self) -> f64 {
        self.u_r
            .data
            .iter()
            .zip(&self.u_z.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }
}

/// `psi` extended by two layers: even across the axis, quadratic extrapolation
/// through the zero wall value across every wall.
struct PsiHalo<'a> {
    psi: &'a Field,
    n_r: isize,
    n_z: isize,
}

/// Wall ghost from the two nearest interior values, `depth` 0 or 1.
#[inline]
fn wall_ghost(depth: isize, near: f64, next: f64) -> f64 {
    if depth == 0 {
        -2.0 * near + next / 3.0
    } else {
        -9.0 * near + 2.0 * next
    }
}

impl PsiHalo<'_> {
    #[inline]
    fn column(&self, i: isize, j: usize) -> f64 {
        let i = if i < 0 { -1 - i } else { i };
        if i >= self.n_r {
            let n = self.n_r as usize;
            wall_ghost(i - self.n_r, self.psi[(n - 1, j)], self.psi[(n - 2, j)])
        } else {
            self.psi[(i as usize, j)]
        }
    }

    #[inline]
    fn at(&self, i: isize, j: isize) -> f64 {
        if j < 0 {
            wall_ghost(-1 - j, self.column(i, 0), self.column(i, 1))
        } else if j >= self.n_z {
            let n = self.n_z as usize;
            wall_ghost(j - self.n_z, self.column(i, n - 1), self.column(i, n - 2))
        } else {
            self.column(i, j as usize)
        }
    }
}

#[inline]
fn velocity_at(p: &PsiHalo, grid: &MeridianGrid, i: isize, j: isize) -> (f64, f64) {
    // radius of (possibly ghost) cell i; negative across the axis
    let r = (i as f64 + 0.5) * grid.h_r;
    let ur = -(p.at(i, j + 1) - p.at(i, j - 1)) / (2.0 * grid.h_z * r);
    let uz = (p.at(i + 1, j) - p.at(i - 1, j)) / (2.0 * grid.h_r * r);
    (ur, uz)
}

/// `u_r = -psi_z / r`, `u_z = psi_r / r` by centered differences.
pub fn velocity_from_streamfunction(psi: &Field, grid: &MeridianGrid) -> (Field, Field) {
    let p = PsiHalo {
        psi,
        n_r: grid.n_r as isize,
        n_z: grid.n_z as isize,
    };
    let mut ur = Field::zeros(grid);
    let mut uz = Field::zeros(grid);
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let (a, b) = velocity_at(&p, grid, i as isize, j as isize);
            ur[(i, j)] = a;
            uz[(i, j)] = b;
        }
    }
    (ur, uz)
}

/// Centered `(1/r) d_r(r u_r) + d_z u_z` of the velocity generated by `psi`,
/// with halo velocities taken from the extended streamfunction.
pub fn divergence_of_stream_velocity(psi: &Field, grid: &MeridianGrid) -> Field {
    let p = PsiHalo {
        psi,
        n_r: grid.n_r as isize,
        n_z: grid.n_z as isize,
    };
    let mut out = Field::zeros(grid);
    for j in 0..grid.n_z as isize {
        for i in 0..grid.n_r as isize {
            let rp = (i as f64 + 1.5) * grid.h_r;
            let rm = (i as f64 - 0.5) * grid.h_r;
            let r = (i as f64 + 0.5) * grid.h_r;
            let (urp, _) = velocity_at(&p, grid, i + 1, j);
            let (urm, _) = velocity_at(&p, grid, i - 1, j);
            let (_, uzp) = velocity_at(&p, grid, i, j + 1);
            let (_, uzm) = velocity_at(&p, grid, i, j - 1);
            out[(i as usize, j as usize)] =
                (rp * urp - rm * urm) / (2.0 * grid.h_r * r) + (uzp - uzm) / (2.0 * grid.h_z);
        }
    }
    out
}

/// Centered divergence of an arbitrary velocity with parity ghosts at the axis
/// and no-slip ghosts at the walls.
pub fn divergence(u_r: &Field, u_z: &Field, grid: &MeridianGrid) -> Field {
    let (hr, hz) = (grid.h_r, grid.h_z);
    let mut out = Field::zeros(grid);
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let r = grid.r(i);
            let ru_p = if i + 1 < grid.n_r { grid.r(i + 1) * u_r[(i + 1, j)] } else { -(r + hr) * u_r[(i, j)] };
            // ghost at -r_0 carries -u_r(r_0)
            let ru_m = if i > 0 { grid.r(i - 1) * u_r[(i - 1, j)] } else { r * u_r[(0, j)] };
            let uz_p = if j + 1 < grid.n_z { u_z[(i, j + 1)] } else { -u_z[(i, j)] };
            let uz_m = if j > 0 { u_z[(i, j - 1)] } else { -u_z[(i, j)] };
            out[(i, j)] = (ru_p - ru_m) / (2.0 * hr * r) + (uz_p - uz_m) / (2.0 * hz);
        }
    }
    out
}

/// `omega = d_z u_r - d_r u_z` with odd `u_r`, even `u_z` at the axis and no-slip walls.
pub fn vorticity_from_velocity(u_r: &Field, u_z: &Field, grid: &MeridianGrid) -> Field {
    let mut out = Field::zeros(grid);
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let ur_p = if j + 1 < grid.n_z { u_r[(i, j + 1)] } else { -u_r[(i, j)] };
            let ur_m = if j > 0 { u_r[(i, j - 1)] } else { -u_r[(i, j)] };
            let uz_p = if i + 1 < grid.n_r { u_z[(i + 1, j)] } else { -u_z[(i, j)] };
            let uz_m = if i > 0 { u_z[(i - 1, j)] } else { u_z[(0, j)] };
            out[(i, j)] = (ur_p - ur_m) / (2.0 * grid.h_z) - (uz_p - uz_m) / (2.0 * grid.h_r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn grid() -> MeridianGrid {
        MeridianGrid::new(1.0, -1.0, 1.0, 16, 32).unwrap()
    }

    #[test]
    fn polar_examples() {
        let g = grid();
        let one = Field::constant(&g, 1.0);
        let d = polar_to_cartesian(&one, &Field::zeros(&g), &g).unwrap();
        assert!(d.d_r.max_abs() == 0.0 && d.d_z.data.iter().all(|&v| v == 1.0));
        let d = polar_to_cartesian(&one, &Field::constant(&g, PI / 2.0), &g).unwrap();
        assert!((d.d_r[(3, 3)] - 1.0).abs() < 1e-15 && d.d_z[(3, 3)].abs() < 1e-15);
        let d = polar_to_cartesian(&Field::constant(&g, 0.5), &Field::constant(&g, PI), &g).unwrap();
        assert!(d.d_r[(0, 0)].abs() < 1e-15 && (d.d_z[(0, 0)] + 0.5).abs() < 1e-15);
        assert!(matches!(
            polar_to_cartesian(&Field::constant(&g, -0.1), &one, &g),
            Err(StateError::NegativeRho { .. })
        ));
    }

    #[test]
    fn cartesian_examples() {
        let g = grid();
        let (rho, phi) = cartesian_to_polar(&DirectorState::uniform(&g, Representation::Gl));
        assert_eq!((rho[(2, 2)], phi[(2, 2)]), (1.0, 0.0));
        let s = 1.0 / 2f64.sqrt();
        let d = DirectorState::gl(Field::constant(&g, s), Field::constant(&g, s));
        let (rho, phi) = cartesian_to_polar(&d);
        assert!((rho[(5, 5)] - 1.0).abs() < 1e-15 && (phi[(5, 5)] - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn unwrap_has_no_jumps() {
        // angle rising from 0 to 3 pi along r in every row
        let g = grid();
        let phi0 = g.sample(|r, z| 3.0 * PI * r * r * (1.0 + 0.1 * z));
        let d = DirectorState::sphere_from_phi(phi0.clone());
        let (_, phi) = cartesian_to_polar(&d);
        for (a, b) in phi.data.iter().zip(&phi0.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_rho_copies_neighbour() {
        let g = grid();
        let mut d_r = Field::constant(&g, 0.6);
        let mut d_z = Field::constant(&g, 0.8);
        d_r[(4, 1)] = 0.0;
        d_z[(4, 1)] = 1e-10;
        let (_, phi) = cartesian_to_polar(&DirectorState::gl(d_r, d_z));
        assert_eq!(phi[(4, 1)], phi[(3, 1)]);
    }

    #[test]
    fn axial_flow_from_r_squared() {
        let g = grid();
        let (ur, uz) = velocity_from_streamfunction(&g.sample(|r, _| 0.5 * r * r), &g);
        for j in 1..g.n_z - 1 {
            for i in 0..g.n_r - 1 {
                assert!(ur[(i, j)].abs() < 1e-14);
                assert!((uz[(i, j)] - 1.0).abs() < 1e-12);
            }
        }
        let (ur, uz) = velocity_from_streamfunction(&Field::zeros(&g), &g);
        assert_eq!(ur.max_abs() + uz.max_abs(), 0.0);
    }

    #[test]
    fn r_squared_z_is_divergence_free() {
        let g = grid();
        let psi = g.sample(|r, z| r * r * z);
        let (ur, uz) = velocity_from_streamfunction(&psi, &g);
        for j in 1..g.n_z - 1 {
            for i in 0..g.n_r - 1 {
                assert!((ur[(i, j)] + g.r(i)).abs() < 1e-12);
                assert!((uz[(i, j)] - 2.0 * g.z(j)).abs() < 1e-12);
            }
        }
        assert!(divergence_of_stream_velocity(&psi, &g).max_abs() <= 1e-10);
    }

    #[test]
    fn vorticity_examples() {
        let g = grid();
        let z0 = Field::zeros(&g);
        assert_eq!(vorticity_from_velocity(&z0, &z0, &g).max_abs(), 0.0);
        let uz = g.sample(|r, _| -r * r);
        let w = vorticity_from_velocity(&z0, &uz, &g);
        for j in 0..g.n_z {
            for i in 0..g.n_r - 1 {
                assert!((w[(i, j)] - 2.0 * g.r(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vorticity_of_r2z_matches_operator_form() {
        let mut errs = vec![];
        for n in [32, 64] {
            let g = MeridianGrid::new(1.0, -1.0, 1.0, n, n).unwrap();
            let psi = g.sample(|r, z| r * r * (r * r).exp() * z.sin());
            let f = FlowState::from_streamfunction(psi, &g);
            // -(psi_rr - psi_r / r + psi_zz) / r = -r (4 r^2 + 7) e^{r^2} sin z
            let mut e: f64 = 0.0;
            for j in 2..n - 2 {
                for i in 0..n - 2 {
                    e = e.max({
                        let r = g.r(i);
                        (f.omega[(i, j)] + r * (4.0 * r * r + 7.0) * (r * r).exp() * g.z(j).sin()).abs()
                    });
                }
            }
            errs.push(e);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn stream_velocity_is_discretely_solenoidal(vals in proptest::collection::vec(-1.0f64..1.0, 64)) {
                let g = MeridianGrid::new(1.0, 0.0, 2.0, 8, 8).unwrap();
                let psi = Field::from_vec(&g, vals).unwrap();
                prop_assert!(divergence_of_stream_velocity(&psi, &g).max_abs() <= 1e-10);
            }

            #[test]
            fn polar_roundtrip(rho in 1e-4f64..2.0, phi in -3.0f64..3.0) {
                let g = MeridianGrid::new(1.0, 0.0, 1.0, 4, 4).unwrap();
                let d = polar_to_cartesian(&Field::constant(&g, rho), &Field::constant(&g, phi), &g).unwrap();
                let (r2, p2) = cartesian_to_polar(&d);
                // the unwrap starts at branch 0, so phi in (-pi, pi] is recovered exactly
                prop_assert!((r2[(1, 1)] - rho).abs() <= 1e-12);
                prop_assert!((p2[(1, 1)] - phi).abs() <= 1e-12);
            }
        }
    }
}
