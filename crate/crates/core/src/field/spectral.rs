//! Fourier transforms, spectral derivatives and the dealiased canonical bracket.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Field1D, Field2D, Grid1D, Grid2D};
use crate::error::{Error, Result};

/// Signed integer wavenumber of FFT bin `idx` for `n` samples; the Nyquist bin
/// is reported as `+n/2`.
fn signed_mode(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// 2/3 rule: keep `|m| < n/3`. The Nyquist bin is always dropped.
fn keeps_mode(idx: usize, n: usize) -> bool {
    3 * signed_mode(idx, n).unsigned_abs() < n as u64
}

struct Axis {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Wavenumbers for odd derivatives (Nyquist zeroed).
    k_odd: Vec<f64>,
    /// Wavenumbers for even derivatives (Nyquist kept).
    k_even: Vec<f64>,
    keep: Vec<bool>,
}

impl Axis {
    fn new(planner: &mut FftPlanner<f64>, n: usize, l: f64) -> Self {
        let scale = 2.0 * PI / l;
        let k_even: Vec<f64> = (0..n).map(|i| scale * signed_mode(i, n) as f64).collect();
        let mut k_odd = k_even.clone();
        k_odd[n / 2] = 0.0;
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k_odd,
            k_even,
            keep: (0..n).map(|i| keeps_mode(i, n)).collect(),
        }
    }
}

/// Precomputed transform plans, wavenumbers and dealiasing mask for one 2D grid.
///
/// All methods are pure; a workspace can be shared across threads.
pub struct Spectral2D {
    grid: Grid2D,
    x: Axis,
    y: Axis,
}

impl fmt::Debug for Spectral2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral2D").field("grid", &self.grid).finish()
    }
}

impl Spectral2D {
    pub fn new(grid: Grid2D) -> Self {
        let mut planner = FftPlanner::new();
        let x = Axis::new(&mut planner, grid.nx, grid.lx);
        let y = Axis::new(&mut planner, grid.ny, grid.ly);
        Self { grid, x, y }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn accept(&self, f: &Field2D, context: &'static str) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        f.check_finite(context)
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.x.forward.process(&mut data);
        let mut column = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                column[j] = data[j * nx + i];
            }
            self.y.forward.process(&mut column);
            for j in 0..ny {
                data[j * nx + i] = column[j];
            }
        }
        data
    }

    /// Inverse transform including the `1/(nx·ny)` normalization; returns the real part.
    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut column = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                column[j] = data[j * nx + i];
            }
            self.y.inverse.process(&mut column);
            for j in 0..ny {
                data[j * nx + i] = column[j];
            }
        }
        self.x.inverse.process(&mut data);
        let norm = 1.0 / (nx * ny) as f64;
        data.iter().map(|c| c.re * norm).collect()
    }

    fn apply_symbol(&self, hat: &[Complex64], symbol: impl Fn(usize, usize) -> Complex64) -> Field2D {
        let nx = self.x.n;
        let mut out = hat.to_vec();
        for (idx, c) in out.iter_mut().enumerate() {
            *c *= symbol(idx % nx, idx / nx);
        }
        Field2D::from_raw(self.grid, self.inverse(out))
    }

    fn d_dx_hat(&self, hat: &[Complex64]) -> Field2D {
        self.apply_symbol(hat, |i, _| Complex64::new(0.0, self.x.k_odd[i]))
    }

    fn d_dy_hat(&self, hat: &[Complex64]) -> Field2D {
        self.apply_symbol(hat, |_, j| Complex64::new(0.0, self.y.k_odd[j]))
    }

    pub fn ddx(&self, f: &Field2D) -> Result<Field2D> {
        self.accept(f, "ddx input")?;
        Ok(self.d_dx_hat(&self.forward(f.values())))
    }

    pub fn ddy(&self, f: &Field2D) -> Result<Field2D> {
        self.accept(f, "ddy input")?;
        Ok(self.d_dy_hat(&self.forward(f.values())))
    }

    pub fn laplacian(&self, f: &Field2D) -> Result<Field2D> {
        self.accept(f, "laplacian input")?;
        let hat = self.forward(f.values());
        Ok(self.apply_symbol(&hat, |i, j| {
            Complex64::new(-(self.x.k_even[i].powi(2) + self.y.k_even[j].powi(2)), 0.0)
        }))
    }

    /// Solves `Δu = f − mean(f)` with `mean(u) = 0`.
    pub fn invert_laplacian(&self, f: &Field2D) -> Result<Field2D> {
        self.accept(f, "invert_laplacian input")?;
        let hat = self.forward(f.values());
        Ok(self.apply_symbol(&hat, |i, j| {
            let k2 = self.x.k_even[i].powi(2) + self.y.k_even[j].powi(2);
            if i == 0 && j == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        }))
    }

    /// Zeroes every mode with `|m| ≥ n/3` along either axis.
    pub fn dealias(&self, f: &Field2D) -> Result<Field2D> {
        self.accept(f, "dealias input")?;
        let hat = self.forward(f.values());
        Ok(self.apply_symbol(&hat, |i, j| self.mask(i, j)))
    }

    fn mask(&self, i: usize, j: usize) -> Complex64 {
        if self.x.keep[i] && self.y.keep[j] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// The canonical bracket `[a, b] = ∂_y a ∂_x b − ∂_x a ∂_y b`.
    ///
    /// Derivatives are spectral; the pointwise product is projected onto the
    /// 2/3-rule band before returning.
    pub fn bracket(&self, a: &Field2D, b: &Field2D) -> Result<Field2D> {
        self.accept(a, "bracket lhs")?;
        self.accept(b, "bracket rhs")?;
        let a_hat = self.forward(a.values());
        let b_hat = self.forward(b.values());
        let ax = self.d_dx_hat(&a_hat);
        let ay = self.d_dy_hat(&a_hat);
        let bx = self.d_dx_hat(&b_hat);
        let by = self.d_dy_hat(&b_hat);
        let product: Vec<f64> = (0..self.grid.nx * self.grid.ny)
            .map(|n| ay.values()[n] * bx.values()[n] - ax.values()[n] * by.values()[n])
            .collect();
        let hat = self.forward(&product);
        Ok(self.apply_symbol(&hat, |i, j| self.mask(i, j)))
    }
}

/// One-dimensional counterpart of [`Spectral2D`].
pub struct Spectral1D {
    grid: Grid1D,
    axis: Axis,
}

impl fmt::Debug for Spectral1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral1D").field("grid", &self.grid).finish()
    }
}

impl Spectral1D {
    pub fn new(grid: Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        Self { grid, axis: Axis::new(&mut planner, grid.n, grid.l) }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    fn accept(&self, f: &Field1D, context: &'static str) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        f.check_finite(context)
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.axis.forward.process(&mut data);
        data
    }

    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.axis.inverse.process(&mut data);
        let norm = 1.0 / self.axis.n as f64;
        data.iter().map(|c| c.re * norm).collect()
    }

    /// Wavenumber of bin `idx` for odd-order derivatives (Nyquist is zero).
    pub fn k_odd(&self, idx: usize) -> f64 {
        self.axis.k_odd[idx]
    }

    /// Wavenumber of bin `idx` for even-order symbols.
    pub fn k_even(&self, idx: usize) -> f64 {
        self.axis.k_even[idx]
    }

    /// Multiplies every Fourier coefficient by `symbol(bin)` and transforms back.
    pub fn apply_symbol(&self, f: &Field1D, symbol: impl Fn(usize) -> Complex64) -> Result<Field1D> {
        self.accept(f, "spectral multiplier input")?;
        let mut hat = self.forward(f.values());
        for (idx, c) in hat.iter_mut().enumerate() {
            *c *= symbol(idx);
        }
        Ok(Field1D::from_raw(self.grid, self.inverse(hat)))
    }

    /// `d^order f / dx^order`
    pub fn derivative(&self, f: &Field1D, order: u32) -> Result<Field1D> {
        self.apply_symbol(f, |idx| {
            let k = if order % 2 == 1 { self.axis.k_odd[idx] } else { self.axis.k_even[idx] };
            Complex64::new(0.0, k).powu(order)
        })
    }

    pub fn ddx(&self, f: &Field1D) -> Result<Field1D> {
        self.derivative(f, 1)
    }

    pub fn ddxx(&self, f: &Field1D) -> Result<Field1D> {
        self.derivative(f, 2)
    }

    pub fn ddx3(&self, f: &Field1D) -> Result<Field1D> {
        self.derivative(f, 3)
    }

    pub fn dealias(&self, f: &Field1D) -> Result<Field1D> {
        self.apply_symbol(f, |idx| {
            if self.axis.keep[idx] {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_band_limited_2d, Grid};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn workspace(n: usize) -> Spectral2D {
        Spectral2D::new(Grid2D::square(n).unwrap())
    }

    /// Fourth-order central difference along x, used as an independent oracle.
    fn fd_ddx(f: &Field2D) -> Vec<f64> {
        let g = *f.grid();
        let h = g.dx();
        let mut out = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let at = |di: isize| f.at(((i as isize + di).rem_euclid(g.nx as isize)) as usize, j);
                out[g.index(i, j)] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
            }
        }
        out
    }

    #[test]
    fn ddx_of_sine_matches_cosine_and_fd_oracle() {
        let sp = workspace(64);
        let f = Field2D::from_fn(*sp.grid(), |x, _| x.sin()).unwrap();
        let d = sp.ddx(&f).unwrap();
        let exact = Field2D::from_fn(*sp.grid(), |x, _| x.cos()).unwrap();
        assert!(d.max_abs_diff(&exact).unwrap() <= 1e-12);
        let fd = fd_ddx(&f);
        let h4 = sp.grid().dx().powi(4);
        for (a, b) in d.values().iter().zip(&fd) {
            assert!((a - b).abs() <= h4, "spectral {a} vs fd {b}");
        }
    }

    #[test]
    fn ddx_of_constant_and_cos2x() {
        let sp = workspace(32);
        let c = Field2D::constant(*sp.grid(), 3.0);
        assert!(sp.ddx(&c).unwrap().max_abs() <= 1e-13);
        let f = Field2D::from_fn(*sp.grid(), |x, _| (2.0 * x).cos()).unwrap();
        let exact = Field2D::from_fn(*sp.grid(), |x, _| -2.0 * (2.0 * x).sin()).unwrap();
        assert!(sp.ddx(&f).unwrap().max_abs_diff(&exact).unwrap() <= 1e-12);
    }

    #[test]
    fn ddx_rejects_non_finite() {
        let sp = workspace(8);
        let mut v = vec![0.0; 64];
        v[3] = f64::INFINITY;
        let f = Field2D::from_raw(*sp.grid(), v);
        assert!(matches!(sp.ddx(&f), Err(Error::NonFinite { index: 3, .. })));
    }

    #[test]
    fn bracket_examples() {
        let sp = workspace(32);
        let g = *sp.grid();
        let a = Field2D::from_fn(g, |x, _| x.sin()).unwrap();
        let b = Field2D::from_fn(g, |_, y| y.sin()).unwrap();
        let ab = sp.bracket(&a, &b).unwrap();
        let exact = Field2D::from_fn(g, |x, y| -x.cos() * y.cos()).unwrap();
        assert!(ab.max_abs_diff(&exact).unwrap() <= 1e-13);
        assert_abs_diff_eq!(ab.at(0, 0), -1.0, epsilon = 1e-13);
        assert_eq!(sp.bracket(&a, &a).unwrap().max_abs(), 0.0);
        let ba = sp.bracket(&b, &a).unwrap();
        assert_eq!(ab.add(&ba).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bracket_grid_mismatch() {
        let a = Field2D::zeros(Grid2D::square(16).unwrap());
        let b = Field2D::zeros(Grid2D::square(8).unwrap());
        assert_eq!(workspace(16).bracket(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn invert_laplacian_examples() {
        let sp = workspace(32);
        let g = *sp.grid();
        let s = Field2D::from_fn(g, |x, _| x.sin()).unwrap();
        let u = sp.invert_laplacian(&s).unwrap();
        assert!(u.max_abs_diff(&s.scale(-1.0)).unwrap() <= 1e-14);
        let c = Field2D::constant(g, 2.5);
        assert!(sp.invert_laplacian(&c).unwrap().max_abs() <= 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_band_limited_2d(g, 6, 1.0, &mut rng).add(&Field2D::constant(g, 0.3)).unwrap();
        let back = sp.laplacian(&sp.invert_laplacian(&f).unwrap()).unwrap();
        let target = f.map(|v| v - f.mean());
        assert!(back.max_abs_diff(&target).unwrap() <= 1e-11);
        assert!(sp.invert_laplacian(&f).unwrap().mean().abs() <= 1e-14);
    }

    #[test]
    fn dealias_mask_bounds() {
        for n in [8usize, 16, 64, 96] {
            for idx in 0..n {
                let m = signed_mode(idx, n).abs() as f64;
                if m > n as f64 / 3.0 {
                    assert!(!keeps_mode(idx, n), "n={n} m={m}");
                }
            }
            assert!(!keeps_mode(n / 2, n));
        }
    }

    #[test]
    fn spectral_1d_derivatives() {
        let g = Grid1D::periodic(64).unwrap();
        let sp = Spectral1D::new(g);
        let f = Field1D::from_fn(g, |x| (3.0 * x).sin()).unwrap();
        let d1 = Field1D::from_fn(g, |x| 3.0 * (3.0 * x).cos()).unwrap();
        let d3 = Field1D::from_fn(g, |x| -27.0 * (3.0 * x).cos()).unwrap();
        assert!(sp.ddx(&f).unwrap().max_abs_diff(&d1).unwrap() <= 1e-12);
        // rounding noise is amplified by up to k_max³ ≈ 3e4
        assert!(sp.ddx3(&f).unwrap().max_abs_diff(&d3).unwrap() <= 1e-10);
        assert!(sp.ddxx(&f).unwrap().max_abs_diff(&f.scale(-9.0)).unwrap() <= 1e-12);
    }
}
