//! Cell-centered mesh of the meridian rectangle `[0, r_max] x [z_min, z_max]`.
//!
//! No unknown sits on the axis: cell centers are `r_i = (i + 1/2) h_r`, so every
//! `1/r` and `1/r^2` factor is evaluated at strictly positive radius. Fields are
//! stored row-major in `z` (index `j * n_r + i`), one cell per entry.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid extent `{0}` must be positive")]
    NonPositiveExtent(&'static str),
    #[error("grid count `{name}` = {value} is below the minimum of 4")]
    TooFewCells { name: &'static str, value: usize },
    #[error("field has {got} cells but the grid has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing boundary specification for the {0} side")]
    MissingBoundary(&'static str),
    #[error("boundary data for the {side} side has {got} entries, expected {expected}")]
    BoundaryLength {
        side: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeridianGrid {
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n_r: usize,
    pub n_z: usize,
    pub h_r: f64,
    pub h_z: f64,
}

impl MeridianGrid {
    pub fn new(r_max: f64, z_min: f64, z_max: f64, n_r: usize, n_z: usize) -> Result<Self, GridError> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(GridError::NonPositiveExtent("r_max"));
        }
        if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
            return Err(GridError::NonPositiveExtent("z_max - z_min"));
        }
        if n_r < 4 {
            return Err(GridError::TooFewCells { name: "n_r", value: n_r });
        }
        if n_z < 4 {
            return Err(GridError::TooFewCells { name: "n_z", value: n_z });
        }
        Ok(Self {
            r_max,
            z_min,
            z_max,
            n_r,
            n_z,
            h_r: r_max / n_r as f64,
            h_z: (z_max - z_min) / n_z as f64,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_r * self.n_z
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_r && j < self.n_z);
        j * self.n_r + i
    }

    /// Radius of cell center `i`.
    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h_r
    }

    /// Axial coordinate of cell center `j`.
    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + (j as f64 + 0.5) * self.h_z
    }

    /// Radius of the face between cells `i - 1` and `i` (face 0 is the axis).
    #[inline]
    pub fn r_face(&self, i: usize) -> f64 {
        i as f64 * self.h_r
    }

    /// Quadrature weight `2 pi r_i h_r h_z` of cell `(i, j)`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        2.0 * PI * self.r(i) * self.h_r * self.h_z
    }

    pub fn h_min(&self) -> f64 {
        self.h_r.min(self.h_z)
    }

    /// Sample `f(r, z)` at every cell center.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut out = Field::zeros(self);
        for j in 0..self.n_z {
            let z = self.z(j);
            for i in 0..self.n_r {
                out.data[j * self.n_r + i] = f(self.r(i), z);
            }
        }
        out
    }

    pub fn same_shape(&self, other: &MeridianGrid) -> bool {
        self.n_r == other.n_r
            && self.n_z == other.n_z
            && self.r_max == other.r_max
            && self.z_min == other.z_min
            && self.z_max == other.z_max
    }
}

/// Scalar cell field on a [`MeridianGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub n_r: usize,
    pub n_z: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &MeridianGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &MeridianGrid, value: f64) -> Self {
        Self {
            n_r: grid.n_r,
            n_z: grid.n_z,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: &MeridianGrid, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != grid.len() {
            return Err(GridError::DimensionMismatch {
                expected: grid.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            n_r: grid.n_r,
            n_z: grid.n_z,
            data,
        })
    }

    pub fn check(&self, grid: &MeridianGrid) -> Result<(), GridError> {
        if self.n_r != grid.n_r || self.n_z != grid.n_z || self.data.len() != grid.len() {
            return Err(GridError::DimensionMismatch {
                expected: grid.len(),
                got: self.data.len(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            n_r: self.n_r,
            n_z: self.n_z,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.data.len(), other.data.len());
        Field {
            n_r: self.n_r,
            n_z: self.n_z,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Field) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

impl Index<(usize, usize)> for Field {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.n_r + i]
    }
}

impl IndexMut<(usize, usize)> for Field {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.n_r + i]
    }
}

/// Midpoint value of `2 pi \int\int f r dr dz`.
pub fn integrate_meridian(field: &Field, grid: &MeridianGrid) -> Result<f64, GridError> {
    field.check(grid)?;
    Ok(integrate_unchecked(field, grid))
}

pub(crate) fn integrate_unchecked(field: &Field, grid: &MeridianGrid) -> f64 {
    let mut total = 0.0;
    for j in 0..grid.n_z {
        let row = &field.data[j * grid.n_r..(j + 1) * grid.n_r];
        for (i, v) in row.iter().enumerate() {
            total += v * grid.weight(i);
        }
    }
    total
}

/// Weighted inner product `\int f g dx`.
pub fn inner(a: &Field, b: &Field, grid: &MeridianGrid) -> f64 {
    let mut total = 0.0;
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            let k = j * grid.n_r + i;
            total += a.data[k] * b.data[k] * grid.weight(i);
        }
    }
    total
}

/// Reflection symmetry of a field across the axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// `f(-r) = 2 f_axis - f(r)`
    Odd,
    /// `f(-r) = f(r)`
    Even,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValues {
    Zero,
    Uniform(f64),
    /// One axis value per z-row (angle branches that change along the axis).
    PerRow(Vec<f64>),
}

impl AxisValues {
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            AxisValues::Zero => 0.0,
            AxisValues::Uniform(v) => *v,
            AxisValues::PerRow(v) => v[j],
        }
    }
}

/// Outer boundary condition on one side of the rectangle.
#[derive(Debug, Clone, PartialEq)]
pub enum Side {
    /// Face values along the side (`n_r` entries on z-sides, `n_z` on the outer r-side).
    Dirichlet(Vec<f64>),
    DirichletUniform(f64),
    /// Zero normal derivative.
    Neumann,
}

impl Side {
    #[inline]
    fn ghost(&self, interior: f64, k: usize) -> f64 {
        match self {
            Side::Dirichlet(v) => 2.0 * v[k] - interior,
            Side::DirichletUniform(b) => 2.0 * b - interior,
            Side::Neumann => interior,
        }
    }

    fn check_len(&self, side: &'static str, expected: usize) -> Result<(), GridError> {
        if let Side::Dirichlet(v) = self {
            if v.len() != expected {
                return Err(GridError::BoundaryLength {
                    side,
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Axis parity plus outer boundary data for one physical field.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub parity: Parity,
    pub axis: AxisValues,
    pub outer: Option<Side>,
    pub bottom: Option<Side>,
    pub top: Option<Side>,
}

impl BoundarySpec {
    pub fn new(parity: Parity) -> Self {
        Self {
            parity,
            axis: AxisValues::Zero,
            outer: None,
            bottom: None,
            top: None,
        }
    }

    /// Same condition on the outer wall and both z-walls.
    pub fn walls(parity: Parity, side: Side) -> Self {
        Self {
            parity,
            axis: AxisValues::Zero,
            outer: Some(side.clone()),
            bottom: Some(side.clone()),
            top: Some(side),
        }
    }

    pub fn with_axis(mut self, axis: AxisValues) -> Self {
        self.axis = axis;
        self
    }
}

/// Field with a one-cell halo; indices run over `-1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaloField {
    pub n_r: usize,
    pub n_z: usize,
    pub data: Vec<f64>,
}

impl HaloField {
    #[inline]
    fn stride(&self) -> usize {
        self.n_r + 2
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.data[((j + 1) as usize) * self.stride() + (i + 1) as usize]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, v: f64) {
        let s = self.stride();
        self.data[((j + 1) as usize) * s + (i + 1) as usize] = v;
    }

    pub fn interior(&self) -> Field {
        let mut data = Vec::with_capacity(self.n_r * self.n_z);
        for j in 0..self.n_z as isize {
            for i in 0..self.n_r as isize {
                data.push(self.at(i, j));
            }
        }
        Field {
            n_r: self.n_r,
            n_z: self.n_z,
            data,
        }
    }
}

/// Populate the one-cell halo: axis by the parity rule, outer sides by reflection
/// consistent with the declared Dirichlet or Neumann data.
pub fn fill_ghosts(field: &Field, grid: &MeridianGrid, spec: &BoundarySpec) -> Result<HaloField, GridError> {
    field.check(grid)?;
    let outer = spec.outer.as_ref().ok_or(GridError::MissingBoundary("outer"))?;
    let bottom = spec.bottom.as_ref().ok_or(GridError::MissingBoundary("bottom"))?;
    let top = spec.top.as_ref().ok_or(GridError::MissingBoundary("top"))?;
    outer.check_len("outer", grid.n_z)?;
    bottom.check_len("bottom", grid.n_r)?;
    top.check_len("top", grid.n_r)?;
    if let AxisValues::PerRow(v) = &spec.axis {
        if v.len() != grid.n_z {
            return Err(GridError::BoundaryLength {
                side: "axis",
                expected: grid.n_z,
                got: v.len(),
            });
        }
    }

    let (n_r, n_z) = (grid.n_r as isize, grid.n_z as isize);
    let mut h = HaloField {
        n_r: grid.n_r,
        n_z: grid.n_z,
        data: vec![0.0; (grid.n_r + 2) * (grid.n_z + 2)],
    };
    for j in 0..n_z {
        for i in 0..n_r {
            h.set(i, j, field[(i as usize, j as usize)]);
        }
        let f0 = field[(0, j as usize)];
        let axis_ghost = match spec.parity {
            Parity::Even => f0,
            Parity::Odd => 2.0 * spec.axis.at(j as usize) - f0,
        };
        h.set(-1, j, axis_ghost);
        let fo = field[(grid.n_r - 1, j as usize)];
        h.set(n_r, j, outer.ghost(fo, j as usize));
    }
    // z-ghosts over the full halo width so the corners are defined too.
    for i in -1..=n_r {
        let k = i.clamp(0, n_r - 1) as usize;
        let fb = h.at(i, 0);
        h.set(i, -1, bottom.ghost(fb, k));
        let ft = h.at(i, n_z - 1);
        h.set(i, n_z, top.ghost(ft, k));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_centers_and_weights() {
        let g = MeridianGrid::new(1.0, -1.0, 1.0, 4, 8).unwrap();
        let rs: Vec<f64> = (0..4).map(|i| g.r(i)).collect();
        assert_eq!(rs, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.weight(0), 2.0 * PI * 0.125 * 0.25 * 0.25);
        let g2 = MeridianGrid::new(2.0, 0.0, 1.0, 8, 4).unwrap();
        assert_eq!((g2.h_r, g2.h_z), (0.25, 0.25));
    }

    #[test]
    fn rejects_bad_extents() {
        assert!(matches!(
            MeridianGrid::new(0.0, 0.0, 1.0, 8, 8),
            Err(GridError::NonPositiveExtent("r_max"))
        ));
        assert!(MeridianGrid::new(1.0, 1.0, 1.0, 8, 8).is_err());
        assert!(matches!(
            MeridianGrid::new(1.0, 0.0, 1.0, 3, 8),
            Err(GridError::TooFewCells { name: "n_r", .. })
        ));
        assert!(MeridianGrid::new(1.0, 0.0, 1.0, 8, 2).is_err());
    }

    #[test]
    fn integrates_low_degree_polynomials() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 16, 8).unwrap();
        assert_eq!(integrate_meridian(&Field::zeros(&g), &g).unwrap(), 0.0);
        let one = integrate_meridian(&Field::constant(&g, 1.0), &g).unwrap();
        assert!((one - PI).abs() <= 1e-12, "{one}");
        let lin_z = integrate_meridian(&g.sample(|_, z| z), &g).unwrap();
        assert!((lin_z - PI / 2.0).abs() <= 1e-12);
        // f = r: exact 2 pi / 3, midpoint error O(h^2)
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let g = MeridianGrid::new(1.0, 0.0, 1.0, n, 4).unwrap();
            let v = integrate_meridian(&g.sample(|r, _| r), &g).unwrap();
            let err = (v - 2.0 * PI / 3.0).abs();
            assert!(err < prev / 3.5 || prev.is_infinite(), "n={n} err={err}");
            prev = err;
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 4, 4).unwrap();
        let g2 = MeridianGrid::new(1.0, 0.0, 1.0, 8, 4).unwrap();
        assert!(matches!(
            integrate_meridian(&Field::zeros(&g2), &g),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ghost_rules() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 4, 4).unwrap();
        let f = Field::constant(&g, 0.3);
        let odd = fill_ghosts(&f, &g, &BoundarySpec::walls(Parity::Odd, Side::Neumann)).unwrap();
        assert_eq!(odd.at(-1, 2), -0.3);
        let even = fill_ghosts(&f, &g, &BoundarySpec::walls(Parity::Even, Side::Neumann)).unwrap();
        assert_eq!(even.at(-1, 2), 0.3);

        let f = Field::constant(&g, PI + 0.1);
        let spec = BoundarySpec::walls(Parity::Odd, Side::Neumann).with_axis(AxisValues::Uniform(PI));
        let h = fill_ghosts(&f, &g, &spec).unwrap();
        assert!((h.at(-1, 0) - (PI - 0.1)).abs() < 1e-15);

        let dir = fill_ghosts(
            &Field::constant(&g, 0.25),
            &g,
            &BoundarySpec::walls(Parity::Even, Side::DirichletUniform(1.0)),
        )
        .unwrap();
        assert_eq!(dir.at(4, 1), 1.75);
        assert_eq!(dir.at(1, -1), 1.75);
        assert_eq!(dir.at(1, 4), 1.75);
        assert_eq!(dir.interior(), Field::constant(&g, 0.25));
    }

    #[test]
    fn missing_side_is_an_error() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 4, 4).unwrap();
        let mut spec = BoundarySpec::walls(Parity::Even, Side::Neumann);
        spec.top = None;
        assert_eq!(
            fill_ghosts(&Field::zeros(&g), &g, &spec),
            Err(GridError::MissingBoundary("top"))
        );
    }

    #[test]
    fn odd_ghost_with_zero_axis_extrapolates_to_zero() {
        let g = MeridianGrid::new(1.0, 0.0, 1.0, 32, 4).unwrap();
        let f = g.sample(|r, _| 2.0 * r);
        let h = fill_ghosts(&f, &g, &BoundarySpec::walls(Parity::Odd, Side::Neumann)).unwrap();
        let axis = 0.5 * (h.at(-1, 0) + h.at(0, 0));
        assert!(axis.abs() <= g.h_r);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn double_reflection_is_identity(vals in proptest::collection::vec(-10.0f64..10.0, 16)) {
                let g = MeridianGrid::new(1.0, 0.0, 1.0, 4, 4).unwrap();
                let f = Field::from_vec(&g, vals).unwrap();
                for parity in [Parity::Odd, Parity::Even] {
                    let spec = BoundarySpec::walls(parity, Side::Neumann);
                    let h = fill_ghosts(&f, &g, &spec).unwrap();
                    // reflect the ghost column back through the same rule
                    let mut mirrored = f.clone();
                    for j in 0..4 {
                        mirrored[(0, j)] = h.at(-1, j as isize);
                    }
                    let h2 = fill_ghosts(&mirrored, &g, &spec).unwrap();
                    for j in 0..4 {
                        prop_assert_eq!(h2.at(-1, j as isize).to_bits(), f[(0, j)].to_bits());
                    }
                }
            }
        }
    }
}
