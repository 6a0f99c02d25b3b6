//! Quadrature over 3-D balls of the axisymmetric extension.
//!
//! A ball centred at `(r0, 0, z0)` meets the circle of radius `r` at height `z`
//! in the arc `|theta| < theta_max(r, z)`, so the azimuthal integral is done in
//! closed form and only the meridian section is sampled.

use std::f64::consts::PI;

use crate::grid::MeridianGrid;

/// Sub-samples per cell and direction.
pub const SUB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSample {
    pub i: usize,
    pub j: usize,
    pub r: f64,
    pub z: f64,
    /// `r dr dz` of the sub-cell.
    pub area: f64,
    pub theta_max: f64,
}

/// Half-opening of the arc inside the ball; `pi` for the full circle, 0 if outside.
pub fn theta_max(r: f64, z: f64, r0: f64, z0: f64, radius: f64) -> f64 {
    let dz = z - z0;
    if r * r0 <= 0.0 {
        return if r * r + r0 * r0 + dz * dz < radius * radius { PI } else { 0.0 };
    }
    let c = (r * r + r0 * r0 + dz * dz - radius * radius) / (2.0 * r * r0);
    c.clamp(-1.0, 1.0).acos()
}

/// Whether the ball lies inside the solid cylinder.
pub fn ball_inside(grid: &MeridianGrid, r0: f64, z0: f64, radius: f64) -> bool {
    let tol = 1e-12 * (1.0 + grid.r_max);
    radius > 0.0
        && r0 >= 0.0
        && r0 + radius <= grid.r_max + tol
        && z0 - radius >= grid.z_min - tol
        && z0 + radius <= grid.z_max + tol
}

pub fn ball_samples(grid: &MeridianGrid, r0: f64, z0: f64, radius: f64) -> Vec<BallSample> {
    let (hr, hz) = (grid.h_r, grid.h_z);
    let i0 = (((r0 - radius).max(0.0)) / hr).floor() as usize;
    let i1 = (((r0 + radius) / hr).ceil() as usize).min(grid.n_r);
    let j0 = (((z0 - radius - grid.z_min) / hz).floor().max(0.0)) as usize;
    let j1 = ((((z0 + radius - grid.z_min) / hz).ceil()) as usize).min(grid.n_z);
    let (sr, sz) = (hr / SUB as f64, hz / SUB as f64);
    let mut out = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            for b in 0..SUB {
                let z = grid.z_min + j as f64 * hz + (b as f64 + 0.5) * sz;
                for a in 0..SUB {
                    let r = i as f64 * hr + (a as f64 + 0.5) * sr;
                    let t = theta_max(r, z, r0, z0, radius);
                    if t > 0.0 {
                        out.push(BallSample {
                            i,
                            j,
                            r,
                            z,
                            area: r * sr * sz,
                            theta_max: t,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_of_off_axis_and_axis_balls() {
        let g = MeridianGrid::new(1.0, -1.0, 1.0, 64, 128).unwrap();
        for (r0, rad) in [(0.5, 0.2), (0.0, 0.3), (0.1, 0.25)] {
            let v: f64 = ball_samples(&g, r0, 0.0, rad)
                .iter()
                .map(|s| 2.0 * s.theta_max * s.area)
                .sum();
            let exact = 4.0 * PI / 3.0 * rad.powi(3);
            assert!((v - exact).abs() < 5e-3 * exact, "{r0} {v} {exact}");
        }
    }
}
