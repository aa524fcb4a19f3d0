//! The planar system `ż = x J_c ∇H(z)` and its singular line `x = 0`.
//!
//! Besides the dynamics this module carries the objects used to probe the
//! kernel of `x J_c`: regularized kernel one-forms `ν_x^ε = (δ_ε(x), 0)` and
//! `ν_y^ε = (0, δ_ε(x))`, a sampled curl test for closedness, and the smoothed
//! exterior Casimir `Y_ε(x)`.
//!
//! The regularization is `δ_ε(x) = exp(−x²/ε²) / (ε√π)` and
//! `Y_ε(x) = (1 + erf(x/ε)) / 2`, so that `Y_ε' = δ_ε` holds exactly and
//! `ν_x^ε` is the gradient of `Y_ε`.

use std::f64::consts::PI;

use rand::Rng;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::poisson::{CotangentVector, Functional, PoissonOperator, StateTag, StateVector, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteState {
    pub x: f64,
    pub y: f64,
}

impl FiniteState {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite { context: "finite state", index: 0 });
        }
        Ok(Self { x, y })
    }

    pub fn to_state(self) -> StateVector {
        StateVector::FiniteDim(vec![self.x, self.y])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: f64,
    pub powers: Vec<u32>,
}

/// Polynomial functional on `R^n` with exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    label: String,
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(label: impl Into<String>, dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.powers.len() != dim) {
            return Err(Error::InvalidParameter(format!(
                "monomial has {} exponents in dimension {dim}",
                t.powers.len()
            )));
        }
        Ok(Self { label: label.into(), dim, terms })
    }

    /// `z_k`
    pub fn coordinate(dim: usize, k: usize) -> Self {
        let mut powers = vec![0; dim];
        powers[k] = 1;
        Self {
            label: format!("z{}", k + 1),
            dim,
            terms: vec![Monomial { coefficient: 1.0, powers }],
        }
    }

    /// `(x² + y²) / 2` on the plane.
    pub fn planar_energy() -> Self {
        Self {
            label: "(x^2+y^2)/2".into(),
            dim: 2,
            terms: vec![
                Monomial { coefficient: 0.5, powers: vec![2, 0] },
                Monomial { coefficient: 0.5, powers: vec![0, 2] },
            ],
        }
    }

    /// Every monomial of total degree 1..=3 with a coefficient uniform in `[-scale, scale]`.
    pub fn random_cubic<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut terms = Vec::new();
        for powers in exponents_up_to(dim, 3) {
            let degree: u32 = powers.iter().sum();
            if degree == 0 {
                continue;
            }
            terms.push(Monomial { coefficient: rng.gen_range(-scale..=scale), powers });
        }
        Self { label: "random cubic".into(), dim, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Adds `other` term by term (same dimension required).
    pub fn plus(mut self, other: &Polynomial) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::InvalidParameter("polynomial dimensions differ".into()));
        }
        self.terms.extend(other.terms.iter().cloned());
        Ok(self)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * t.powers.iter().zip(z).map(|(&p, &v)| v.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                self.terms
                    .iter()
                    .filter(|t| t.powers[k] > 0)
                    .map(|t| {
                        let mut prod = t.coefficient * t.powers[k] as f64;
                        for (m, (&p, &v)) in t.powers.iter().zip(z).enumerate() {
                            let p = if m == k { p - 1 } else { p };
                            prod *= v.powi(p as i32);
                        }
                        prod
                    })
                    .sum()
            })
            .collect()
    }

    fn point<'a>(&self, z: &'a StateVector) -> Result<&'a [f64]> {
        match z {
            StateVector::FiniteDim(p) if p.len() == self.dim => Ok(p),
            StateVector::FiniteDim(p) => Err(Error::LengthMismatch { expected: self.dim, found: p.len() }),
            other => Err(Error::TagMismatch { expected: StateTag::FiniteDim, found: other.tag() }),
        }
    }
}

fn exponents_up_to(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    if dim == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in 0..=degree {
        for mut rest in exponents_up_to(dim - 1, degree - p) {
            rest.insert(0, p);
            out.push(rest);
        }
    }
    out
}

impl Functional for Polynomial {
    fn label(&self) -> &str {
        &self.label
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(self.eval(self.point(z)?))
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        Ok(StateVector::FiniteDim(self.grad(self.point(z)?)))
    }
}

/// Finite-dimensional Poisson operators used by the singular-plane example and
/// the Jacobi checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiniteOperator {
    /// Constant symplectic `J_c` on `R^{2n}`.
    Canonical { half_dim: usize },
    /// `x J_c` on `R²`; rank drops to zero on `x = 0`.
    SingularCanonical,
    /// Rigid-body `so(3)` bracket: `J12 = z3`, `J23 = z1`, `J31 = z2`.
    So3,
    /// `so(3)` with `J12 = z2²`: antisymmetric, but `b·(∇×b) = 2 z1 z2 ≠ 0`
    /// for `b = (J23, J31, J12)`, so the Jacobi identity fails.
    BrokenSo3,
}

impl FiniteOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Canonical { half_dim } => 2 * half_dim,
            Self::SingularCanonical => 2,
            Self::So3 | Self::BrokenSo3 => 3,
        }
    }

    pub fn matrix(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let dim = self.dim();
        if z.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, found: z.len() });
        }
        let mut m = vec![vec![0.0; dim]; dim];
        match self {
            Self::Canonical { half_dim } => {
                for i in 0..*half_dim {
                    m[i][i + half_dim] = 1.0;
                    m[i + half_dim][i] = -1.0;
                }
            }
            Self::SingularCanonical => {
                m[0][1] = z[0];
                m[1][0] = -z[0];
            }
            Self::So3 | Self::BrokenSo3 => {
                let j12 = if *self == Self::So3 { z[2] } else { z[1] * z[1] };
                let (j23, j31) = (z[0], z[1]);
                m[0][1] = j12;
                m[1][0] = -j12;
                m[1][2] = j23;
                m[2][1] = -j23;
                m[2][0] = j31;
                m[0][2] = -j31;
            }
        }
        Ok(m)
    }
}

impl PoissonOperator for FiniteOperator {
    fn label(&self) -> &str {
        match self {
            Self::Canonical { .. } => "J_c",
            Self::SingularCanonical => "x J_c",
            Self::So3 => "so(3)",
            Self::BrokenSo3 => "broken so(3)",
        }
    }

    fn apply(&self, z: &StateVector, g: &CotangentVector) -> Result<TangentVector> {
        let (StateVector::FiniteDim(point), StateVector::FiniteDim(cov)) = (z, g) else {
            let found = if z.tag() != StateTag::FiniteDim { z.tag() } else { g.tag() };
            return Err(Error::TagMismatch { expected: StateTag::FiniteDim, found });
        };
        let m = self.matrix(point)?;
        if cov.len() != m.len() {
            return Err(Error::LengthMismatch { expected: m.len(), found: cov.len() });
        }
        Ok(StateVector::FiniteDim(
            m.iter().map(|row| row.iter().zip(cov).map(|(a, b)| a * b).sum()).collect(),
        ))
    }
}

/// `x J_c ∇H(z) = (x ∂_y H, −x ∂_x H)`
pub fn fd_rhs(z: FiniteState, h: &dyn Functional) -> Result<[f64; 2]> {
    let state = z.to_state();
    match FiniteOperator::SingularCanonical.apply(&state, &h.gradient(&state)?)? {
        StateVector::FiniteDim(v) => Ok([v[0], v[1]]),
        _ => unreachable!("finite operator returns finite vectors"),
    }
}

/// Unit-mass Gaussian `exp(−x²/ε²) / (ε√π)`.
pub fn nascent_delta(x: f64, eps: f64) -> f64 {
    (-(x / eps).powi(2)).exp() / (eps * PI.sqrt())
}

/// Smoothed step `Y_ε(x) = (1 + erf(x/ε)) / 2`.
pub fn exterior_casimir_fd(z: FiniteState, eps: f64) -> f64 {
    0.5 * (1.0 + erf(z.x / eps))
}

/// `Y_ε(x)` as a [`Functional`]; its gradient is `ν_x^ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedStep {
    pub eps: f64,
}

impl Functional for SmoothedStep {
    fn label(&self) -> &str {
        "Y_eps(x)"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let p = planar(z)?;
        Ok(exterior_casimir_fd(FiniteState { x: p[0], y: p[1] }, self.eps))
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let p = planar(z)?;
        Ok(StateVector::FiniteDim(vec![nascent_delta(p[0], self.eps), 0.0]))
    }
}

fn planar(z: &StateVector) -> Result<&[f64]> {
    match z {
        StateVector::FiniteDim(p) if p.len() == 2 => Ok(p),
        StateVector::FiniteDim(p) => Err(Error::LengthMismatch { expected: 2, found: p.len() }),
        other => Err(Error::TagMismatch { expected: StateTag::FiniteDim, found: other.tag() }),
    }
}

/// Rectangular sampling window `[x0, x1] × [y0, y1]` with `nx × ny` points
/// including both edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalWindow {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for EvalWindow {
    fn default() -> Self {
        Self { x0: -2.0, x1: 2.0, y0: -2.0, y1: 2.0, nx: 401, ny: 401 }
    }
}

impl EvalWindow {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.x1 <= self.x0 || self.y1 <= self.y0 || self.nx < 3 || self.ny < 3 {
            return Err(Error::InvalidParameter(format!("degenerate window {self:?}")));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy()
    }
}

/// A one-form `w_x dx + w_y dy` sampled on a window (row-major by y then x).
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm2 {
    pub window: EvalWindow,
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
}

impl OneForm2 {
    pub fn from_fn(
        window: EvalWindow,
        wx: impl Fn(f64, f64) -> f64,
        wy: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        window.validate()?;
        let mut form = Self { window, wx: Vec::new(), wy: Vec::new() };
        for j in 0..window.ny {
            for i in 0..window.nx {
                let (x, y) = (window.x(i), window.y(j));
                form.wx.push(wx(x, y));
                form.wy.push(wy(x, y));
            }
        }
        if let Some(index) = form.wx.iter().chain(&form.wy).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "one-form sample", index });
        }
        Ok(form)
    }
}

/// `(ν_x^ε, ν_y^ε)` sampled on `window`.
pub fn kernel_basis_regularized(eps: f64, window: EvalWindow) -> Result<(OneForm2, OneForm2)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("regularization width {eps} must be positive")));
    }
    let nu_x = OneForm2::from_fn(window, |x, _| nascent_delta(x, eps), |_, _| 0.0)?;
    let nu_y = OneForm2::from_fn(window, |_, _| 0.0, |x, _| nascent_delta(x, eps))?;
    Ok((nu_x, nu_y))
}

/// `max |∂_x w_y − ∂_y w_x|` over interior samples, by central differences.
pub fn closedness_residual(w: &OneForm2) -> Result<f64> {
    let win = w.window;
    win.validate()?;
    if w.wx.len() != win.nx * win.ny || w.wy.len() != win.nx * win.ny {
        return Err(Error::LengthMismatch { expected: win.nx * win.ny, found: w.wx.len() });
    }
    let (dx, dy) = (win.dx(), win.dy());
    let at = |a: &[f64], i: usize, j: usize| a[j * win.nx + i];
    let mut worst: f64 = 0.0;
    for j in 1..win.ny - 1 {
        for i in 1..win.nx - 1 {
            let dwy_dx = (at(&w.wy, i + 1, j) - at(&w.wy, i - 1, j)) / (2.0 * dx);
            let dwx_dy = (at(&w.wx, i, j + 1) - at(&w.wx, i, j - 1)) / (2.0 * dy);
            worst = worst.max((dwy_dx - dwx_dy).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::gradient_check;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fd_rhs_examples() {
        let h = Polynomial::planar_energy();
        assert_eq!(fd_rhs(FiniteState::new(1.0, 0.0).unwrap(), &h).unwrap(), [0.0, -1.0]);
        let hy = Polynomial::coordinate(2, 1);
        assert_eq!(fd_rhs(FiniteState::new(2.0, 5.0).unwrap(), &hy).unwrap(), [2.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h = Polynomial::random_cubic(2, 1.0, &mut rng);
            let y = rng.gen_range(-3.0..3.0);
            assert_eq!(fd_rhs(FiniteState::new(0.0, y).unwrap(), &h).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn polynomial_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2usize, 3] {
            let p = Polynomial::random_cubic(dim, 1.0, &mut rng);
            let z = StateVector::FiniteDim((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let d = StateVector::FiniteDim((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let check = gradient_check(&p, &z, &d, 1e-5).unwrap();
            assert!(check.relative_error() <= 1e-8, "{check:?}");
        }
        assert_eq!(exponents_up_to(2, 3).len(), 10);
    }

    #[test]
    fn kernel_basis_unit_mass_and_decay() {
        let window = EvalWindow::default();
        for eps in [0.05, 0.1, 0.5] {
            let (nu_x, _) = kernel_basis_regularized(eps, window).unwrap();
            // trapezoid along x on one row
            let row = &nu_x.wx[..window.nx];
            let mass = window.dx()
                * (row.iter().sum::<f64>() - 0.5 * (row[0] + row[window.nx - 1]));
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        }
        let eps = 0.1;
        for x in [0.5, 1.0, 1.5] {
            let z = StateVector::FiniteDim(vec![x, 0.3]);
            let image = FiniteOperator::SingularCanonical
                .apply(&z, &StateVector::FiniteDim(vec![nascent_delta(x, eps), 0.0]))
                .unwrap();
            assert!(image.norm() <= (-x * x / (2.0 * eps * eps)).exp());
        }
        let z0 = StateVector::FiniteDim(vec![0.0, 0.7]);
        for g in [vec![nascent_delta(0.0, eps), 0.0], vec![0.0, nascent_delta(0.0, eps)]] {
            let image = FiniteOperator::SingularCanonical.apply(&z0, &StateVector::FiniteDim(g)).unwrap();
            assert_eq!(image.norm(), 0.0);
        }
        assert!(kernel_basis_regularized(0.0, window).is_err());
    }

    #[test]
    fn closedness_separates_kernel_elements() {
        let window = EvalWindow::default();
        for eps in [0.05, 0.1, 0.2, 0.5] {
            let (nu_x, nu_y) = kernel_basis_regularized(eps, window).unwrap();
            assert!(closedness_residual(&nu_x).unwrap() <= 1e-10);
            assert!(closedness_residual(&nu_y).unwrap() > 1.0, "eps={eps}");
        }
        let exact = OneForm2::from_fn(window, |x, _| 2.0 * x, |_, y| 3.0 * y * y).unwrap();
        assert!(closedness_residual(&exact).unwrap() <= 1e-9);
        let bad = EvalWindow { x1: -2.0, ..window };
        assert!(OneForm2::from_fn(bad, |_, _| 0.0, |_, _| 0.0).is_err());
    }

    #[test]
    fn smoothed_step_values_and_gradient() {
        let eps = 0.1;
        assert_abs_diff_eq!(exterior_casimir_fd(FiniteState { x: 10.0 * eps, y: 0.0 }, eps), 1.0, epsilon = 1e-6);
        assert_eq!(exterior_casimir_fd(FiniteState { x: 0.0, y: 3.0 }, eps), 0.5);
        let z = StateVector::FiniteDim(vec![0.07, 0.2]);
        let d = StateVector::FiniteDim(vec![1.0, 0.4]);
        let check = gradient_check(&SmoothedStep { eps }, &z, &d, 1e-6).unwrap();
        assert!(check.relative_error() <= 1e-7, "{check:?}");
    }

    #[test]
    fn operator_matrices_are_antisymmetric() {
        let z = [0.3, -1.2, 0.8];
        for op in [FiniteOperator::So3, FiniteOperator::BrokenSo3] {
            let m = op.matrix(&z).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m[i][j], -m[j][i]);
                }
            }
        }
        assert!(FiniteOperator::So3.matrix(&[1.0, 2.0]).is_err());
    }
}
