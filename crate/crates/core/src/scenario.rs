//! Initial data presets.
//!
//! Every preset is an initial streamfunction and a director angle; the angle
//! also supplies the Dirichlet trace on the walls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{manufactured, DirectorWalls, SystemState};
use crate::grid::{Field, MeridianGrid};
use crate::state::{nearest_branch, DirectorState, FlowState, Representation};
use crate::weakform::Bump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parameter {name} = {value} is out of range")]
    Parameter { name: &'static str, value: f64 },
    #[error("initial angle on the axis at z = {z} is {phi}, not a multiple of pi")]
    AxisIncompatible { z: f64, phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Uniform,
    Hedgehog {
        #[serde(default = "default_core")]
        lambda_core: f64,
    },
    HedgehogPair {
        #[serde(default = "default_core")]
        lambda_core: f64,
    },
    AxisDefect {
        #[serde(default = "default_sign")]
        sign: f64,
        /// Half-length of the axis interval, relative to the half height.
        #[serde(default = "default_half_length")]
        half_length: f64,
    },
    VortexRing {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        /// Ring radius relative to `r_max`.
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Manufactured,
    /// Hedgehog director with a superposed vortex ring.
    Mixed {
        #[serde(default = "default_core")]
        lambda_core: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_core() -> f64 {
    0.5
}
fn default_sign() -> f64 {
    1.0
}
fn default_half_length() -> f64 {
    0.5
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.5
}

/// `(1 - s^2)^2` in the normalized height `s` in `[-1, 1]`.
fn height_bump(grid: &MeridianGrid, z: f64) -> f64 {
    let mid = 0.5 * (grid.z_min + grid.z_max);
    let s = (z - mid) / (0.5 * (grid.z_max - grid.z_min));
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(2)
    }
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Uniform => "uniform",
            Scenario::Hedgehog { .. } => "hedgehog",
            Scenario::HedgehogPair { .. } => "hedgehog_pair",
            Scenario::AxisDefect { .. } => "axis_defect",
            Scenario::VortexRing { .. } => "vortex_ring",
            Scenario::Manufactured => "manufactured",
            Scenario::Mixed { .. } => "mixed",
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Parameter { name, value })
            }
        };
        let radius = |value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(ScenarioError::Parameter { name: "radius", value })
            }
        };
        match *self {
            Scenario::Hedgehog { lambda_core } | Scenario::HedgehogPair { lambda_core } => positive("lambda_core", lambda_core),
            Scenario::AxisDefect { sign, half_length } => {
                if sign != 1.0 && sign != -1.0 {
                    return Err(ScenarioError::Parameter { name: "sign", value: sign });
                }
                if !(half_length > 0.0 && half_length < 1.0) {
                    return Err(ScenarioError::Parameter {
                        name: "half_length",
                        value: half_length,
                    });
                }
                Ok(())
            }
            Scenario::VortexRing { amplitude, radius: r } => {
                if !amplitude.is_finite() {
                    return Err(ScenarioError::Parameter { name: "amplitude", value: amplitude });
                }
                radius(r)
            }
            Scenario::Mixed {
                lambda_core,
                amplitude,
                radius: r,
            } => {
                positive("lambda_core", lambda_core)?;
                if !amplitude.is_finite() {
                    return Err(ScenarioError::Parameter { name: "amplitude", value: amplitude });
                }
                radius(r)
            }
            Scenario::Uniform | Scenario::Manufactured => Ok(()),
        }
    }

    /// Initial director angle from `e_z`.
    pub fn angle(&self, grid: &MeridianGrid, r: f64, z: f64) -> f64 {
        match *self {
            Scenario::Uniform | Scenario::Manufactured | Scenario::VortexRing { .. } => 0.0,
            Scenario::Hedgehog { lambda_core } | Scenario::Mixed { lambda_core, .. } => {
                2.0 * (r / lambda_core).atan() * height_bump(grid, z)
            }
            Scenario::HedgehogPair { lambda_core } => {
                let mid = 0.5 * (grid.z_min + grid.z_max);
                let lower = Bump::window(grid.z_min, mid).eval(z).0;
                let upper = Bump::window(mid, grid.z_max).eval(z).0;
                2.0 * (r / lambda_core).atan() * (lower - upper)
            }
            Scenario::AxisDefect { sign, half_length } => {
                let mid = 0.5 * (grid.z_min + grid.z_max);
                let a = half_length * 0.5 * (grid.z_max - grid.z_min);
                sign * (r.atan2(z - mid - a) - r.atan2(z - mid + a))
            }
        }
    }

    pub fn stream(&self, grid: &MeridianGrid, r: f64, z: f64) -> f64 {
        match *self {
            Scenario::VortexRing { amplitude, radius } => {
                let r0 = radius * grid.r_max;
                let w = r0.min(grid.r_max - r0);
                let mid = 0.5 * (grid.z_min + grid.z_max);
                let hz = 0.4 * (grid.z_max - grid.z_min);
                let b = Bump::window(r0 - w, r0 + w).eval(r).0 * Bump::window(mid - hz, mid + hz).eval(z).0;
                amplitude * (r / r0).powi(2) * b
            }
            // large-scale circulation `s^2 (1 - s^2)^2 sin^2`, peak value `amplitude`
            Scenario::Mixed { amplitude, .. } => {
                let s2 = (r / grid.r_max).powi(2);
                let t = std::f64::consts::PI * (z - grid.z_min) / (grid.z_max - grid.z_min);
                amplitude * 6.75 * s2 * (1.0 - s2).powi(2) * t.sin().powi(2)
            }
            _ => 0.0,
        }
    }

    /// Sampled initial state and wall data.
    pub fn build(&self, grid: &MeridianGrid, mode: Representation) -> Result<(SystemState, DirectorWalls), ScenarioError> {
        self.validate()?;
        for j in 0..grid.n_z {
            let z = grid.z(j);
            let phi = self.angle(grid, 0.0, z);
            if (phi - nearest_branch(phi)).abs() > 1e-12 {
                return Err(ScenarioError::AxisIncompatible { z, phi });
            }
        }
        let phi = grid.sample(|r, z| self.angle(grid, r, z));
        let director = match mode {
            Representation::Sphere => {
                let branch = (0..grid.n_z).map(|j| nearest_branch(self.angle(grid, 0.0, grid.z(j)))).collect();
                DirectorState::sphere(phi, branch).expect("branch length matches the grid")
            }
            Representation::Gl => DirectorState::gl(phi.map(f64::sin), phi.map(f64::cos)),
        };
        let psi: Field = match self {
            Scenario::Manufactured => manufactured::psi(grid),
            _ => grid.sample(|r, z| self.stream(grid, r, z)),
        };
        let walls = DirectorWalls::from_angle(grid, mode, |r, z| self.angle(grid, r, z));
        Ok((
            SystemState {
                flow: FlowState::from_streamfunction(psi, grid),
                director,
                time: 0.0,
            },
            walls,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> MeridianGrid {
        MeridianGrid::new(1.0, -1.0, 1.0, 16, 32).unwrap()
    }

    #[test]
    fn uniform_is_at_rest() {
        let g = grid();
        let (s, _) = Scenario::Uniform.build(&g, Representation::Sphere).unwrap();
        assert_eq!(s.flow.psi.max_abs(), 0.0);
        assert_eq!(s.director.phi.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hedgehog_profile_and_axis_value() {
        let g = grid();
        let sc = Scenario::Hedgehog { lambda_core: 0.5 };
        for j in 0..g.n_z {
            assert_eq!(sc.angle(&g, 0.0, g.z(j)), 0.0);
        }
        let v = sc.angle(&g, 0.3, 0.0);
        assert!((v - 2.0 * (0.6f64).atan()).abs() < 1e-15);
        let (s, _) = sc.build(&g, Representation::Gl).unwrap();
        assert!((s.director.max_modulus() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn axis_defect_jumps_by_pi_on_the_axis() {
        let g = grid();
        let sc = Scenario::AxisDefect {
            sign: -1.0,
            half_length: 0.5,
        };
        assert!((sc.angle(&g, 0.0, 0.0) + PI).abs() < 1e-15);
        assert_eq!(sc.angle(&g, 0.0, 0.9), 0.0);
        // the trace on the outer wall passes through the value reached on the axis interval
        let trace: Vec<f64> = (0..g.n_z).map(|j| sc.angle(&g, g.r_max, g.z(j))).collect();
        assert!(trace.iter().all(|v| v.abs() < PI));
        let (s, _) = sc.build(&g, Representation::Sphere).unwrap();
        assert!(s.director.axis_branch.iter().any(|&b| b == -PI));
    }

    #[test]
    fn vortex_ring_is_solenoidal_and_clamped() {
        let g = grid();
        let (s, _) = Scenario::VortexRing { amplitude: 2.0, radius: 0.5 }.build(&g, Representation::Gl).unwrap();
        assert!(s.flow.max_speed() > 0.0);
        let div = crate::state::divergence_of_stream_velocity(&s.flow.psi, &g).max_abs();
        assert!(div < 1e-10);
        for i in 0..g.n_r {
            assert_eq!(s.flow.psi[(i, 0)], 0.0);
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let g = grid();
        assert!(Scenario::Hedgehog { lambda_core: -1.0 }.build(&g, Representation::Gl).is_err());
        assert!(Scenario::AxisDefect { sign: 0.5, half_length: 0.5 }.validate().is_err());
        assert!(Scenario::VortexRing { amplitude: 1.0, radius: 1.5 }.validate().is_err());
    }

    #[test]
    fn serde_tagging() {
        let s: Scenario = serde_json::from_str(r#"{"id": "hedgehog", "lambda_core": 0.25}"#).unwrap();
        assert_eq!(s, Scenario::Hedgehog { lambda_core: 0.25 });
        let s: Scenario = serde_json::from_str(r#"{"id": "mixed"}"#).unwrap();
        assert_eq!(s.name(), "mixed");
        assert!(serde_json::from_str::<Scenario>(r#"{"id": "hedgehog", "swirl": 1}"#).is_err());
        assert!(serde_json::from_str::<Scenario>(r#"{"id": "nope"}"#).is_err());
    }
}
