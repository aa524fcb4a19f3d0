//! Periodic uniform grids, sampled fields and their spectral calculus.
//!
//! Fields are stored as flat `Vec<f64>`. Two-dimensional fields are row-major
//! by `y` then `x`: sample `(i, j)` at `(x_i, y_j) = (i·dx, j·dy)` lives at
//! index `j * nx + i`. Grids are periodic and never duplicate the endpoint.

mod random;
mod spectral;

pub use random::{random_band_limited_1d, random_band_limited_2d};
pub use spectral::{Spectral1D, Spectral2D};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Common surface of the 1D and 2D grids.
pub trait Grid: Copy + PartialEq + std::fmt::Debug {
    /// Total number of samples.
    fn len(&self) -> usize;
    /// Length (1D) or area (2D) of the periodic domain.
    fn measure(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub l: f64,
}

impl Grid1D {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        check_axis("n", n, l)?;
        Ok(Self { n, l })
    }

    /// `n` samples on `[0, 2π)`.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * PI)
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
}

impl Grid for Grid1D {
    fn len(&self) -> usize {
        self.n
    }

    fn measure(&self) -> f64 {
        self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        check_axis("nx", nx, lx)?;
        check_axis("ny", ny, ly)?;
        Ok(Self { nx, ny, lx, ly })
    }

    /// `n × n` samples on `[0, 2π)²`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, 2.0 * PI, 2.0 * PI)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

impl Grid for Grid2D {
    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn measure(&self) -> f64 {
        self.lx * self.ly
    }
}

fn check_axis(name: &str, n: usize, l: f64) -> Result<()> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "{name} = {n}; sample counts must be even and at least 8"
        )));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidGrid(format!("domain length {l} must be positive")));
    }
    Ok(())
}

/// A real scalar sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<G: Grid> {
    grid: G,
    values: Vec<f64>,
}

pub type Field1D = Field<Grid1D>;
pub type Field2D = Field<Grid2D>;

impl<G: Grid> Field<G> {
    /// Wraps `values`, rejecting wrong lengths and non-finite samples.
    pub fn new(grid: G, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), found: values.len() });
        }
        let field = Self { grid, values };
        field.check_finite("field construction")?;
        Ok(field)
    }

    pub(crate) fn from_raw(grid: G, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: G) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: G, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { context, index }),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.grid, values))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| factor * v)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    /// `∫ f` over the periodic domain: sequential sum, then `mean · measure`.
    pub fn integrate(&self) -> f64 {
        let mut sum = 0.0;
        for &v in &self.values {
            sum += v;
        }
        sum / self.values.len() as f64 * self.grid.measure()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.measure()
    }

    /// L² inner product `∫ f g`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let mut sum = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            sum += a * b;
        }
        Ok(sum / self.values.len() as f64 * self.grid.measure())
    }

    /// `∫ f²`
    pub fn norm_squared(&self) -> f64 {
        let mut sum = 0.0;
        for &v in &self.values {
            sum += v * v;
        }
        sum / self.values.len() as f64 * self.grid.measure()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |self - other|`
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl Field1D {
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.n).map(|i| f(grid.x(i))).collect())
    }
}

impl Field2D {
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self::new(grid, values)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }
}
