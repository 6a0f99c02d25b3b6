//! Finite-difference kernels on halo fields.

use rayon::prelude::*;

use crate::grid::{Field, HaloField, MeridianGrid};

/// Rows per parallel task; each task writes a disjoint slice of the output.
const ROW_CHUNK: usize = 8;

fn par_rows(grid: &MeridianGrid, kernel: impl Fn(usize, usize) -> f64 + Sync) -> Field {
    let mut out = Field::zeros(grid);
    let n_r = grid.n_r;
    out.data
        .par_chunks_mut(n_r * ROW_CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            for (k, v) in chunk.iter_mut().enumerate() {
                let j = c * ROW_CHUNK + k / n_r;
                *v = kernel(k % n_r, j);
            }
        });
    out
}

/// Conservative `L_h f = (1/r) d_r(r d_r f) + d_zz f`, optionally with the hoop term `-f/r^2`.
pub fn laplacian(f: &HaloField, grid: &MeridianGrid, hoop: bool) -> Field {
    let (hr2, hz2) = (grid.h_r * grid.h_r, grid.h_z * grid.h_z);
    par_rows(grid, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let c = f.at(ii, jj);
        let r = grid.r(i);
        let rp = grid.r_face(i + 1);
        let rm = grid.r_face(i);
        let mut v = (rp * (f.at(ii + 1, jj) - c) - rm * (c - f.at(ii - 1, jj))) / (r * hr2)
            + (f.at(ii, jj + 1) - 2.0 * c + f.at(ii, jj - 1)) / hz2;
        if hoop {
            v -= c / (r * r);
        }
        v
    })
}

pub fn grad_r(f: &HaloField, grid: &MeridianGrid) -> Field {
    let s = 0.5 / grid.h_r;
    par_rows(grid, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        (f.at(ii + 1, jj) - f.at(ii - 1, jj)) * s
    })
}

pub fn grad_z(f: &HaloField, grid: &MeridianGrid) -> Field {
    let s = 0.5 / grid.h_z;
    par_rows(grid, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        (f.at(ii, jj + 1) - f.at(ii, jj - 1)) * s
    })
}

/// One-directional upwind derivative: second order where the second upwind
/// neighbour lies inside the halo, first order otherwise.
#[inline]
fn upwind(vel: f64, fm2: Option<f64>, fm1: f64, f0: f64, fp1: f64, fp2: Option<f64>, h: f64) -> f64 {
    if vel > 0.0 {
        match fm2 {
            Some(fm2) => vel * (3.0 * f0 - 4.0 * fm1 + fm2) / (2.0 * h),
            None => vel * (f0 - fm1) / h,
        }
    } else if vel < 0.0 {
        match fp2 {
            Some(fp2) => vel * (-3.0 * f0 + 4.0 * fp1 - fp2) / (2.0 * h),
            None => vel * (fp1 - f0) / h,
        }
    } else {
        0.0
    }
}

/// `(u . grad) f` with second-order upwinding.
pub fn advect(u_r: &Field, u_z: &Field, f: &HaloField, grid: &MeridianGrid) -> Field {
    let (n_r, n_z) = (grid.n_r as isize, grid.n_z as isize);
    par_rows(grid, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let k = j * grid.n_r + i;
        let ar = upwind(
            u_r.data[k],
            (ii >= 1).then(|| f.at(ii - 2, jj)),
            f.at(ii - 1, jj),
            f.at(ii, jj),
            f.at(ii + 1, jj),
            (ii + 2 <= n_r).then(|| f.at(ii + 2, jj)),
            grid.h_r,
        );
        let az = upwind(
            u_z.data[k],
            (jj >= 1).then(|| f.at(ii, jj - 2)),
            f.at(ii, jj - 1),
            f.at(ii, jj),
            f.at(ii, jj + 1),
            (jj + 2 <= n_z).then(|| f.at(ii, jj + 2)),
            grid.h_z,
        );
        ar + az
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fill_ghosts, BoundarySpec, Parity, Side};

    #[test]
    fn laplacian_of_r_squared_is_four() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 16, 8).unwrap();
        let f = g.sample(|r, _| r * r);
        let spec = BoundarySpec {
            parity: Parity::Even,
            axis: crate::grid::AxisValues::Zero,
            outer: Some(Side::Dirichlet(vec![1.0; 8])),
            bottom: Some(Side::Neumann),
            top: Some(Side::Neumann),
        };
        let h = fill_ghosts(&f, &g, &spec).unwrap();
        let l = laplacian(&h, &g, false);
        // interior and axis cells are exact; the outer Dirichlet cell has O(1) ghost error
        for j in 0..8 {
            for i in 0..15 {
                assert!((l[(i, j)] - 4.0).abs() < 1e-9, "{i} {j} {}", l[(i, j)]);
            }
        }
    }

    #[test]
    fn upwind_is_exact_on_linear_fields() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 8, 8).unwrap();
        let f = g.sample(|r, z| 2.0 * r - 3.0 * z);
        let h = fill_ghosts(&f, &g, &BoundarySpec::walls(Parity::Even, Side::Neumann)).unwrap();
        let ur = Field::constant(&g, 1.0);
        let uz = Field::constant(&g, -0.5);
        let a = advect(&ur, &uz, &h, &g);
        for j in 2..6 {
            for i in 2..6 {
                assert!((a[(i, j)] - (2.0 + 1.5)).abs() < 1e-12);
            }
        }
    }
}
