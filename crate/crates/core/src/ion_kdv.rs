//! One-dimensional ion acoustic flow with a Boltzmann-electron closure, and
//! the KdV equation on its irrotational leaf.
//!
//! The potential solves `−φ'' = ρ − e^φ`. The ion system uses
//! `J = [[0, −∂ₓ], [−∂ₓ, 0]]` with `∂H = (V²/2 + φ, ρV)`. KdV uses `J = ∂ₓ`
//! and `H = ∫(−w³ + w'²/2)`, i.e. `w_t + 6 w w_x + w_xxx = 0`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field1D, Grid1D, Spectral1D};
use crate::poisson::{CotangentVector, Functional, PoissonOperator, StateTag, StateVector, TangentVector};

pub const PHI_TOLERANCE: f64 = 1e-12;
pub const MAX_NEWTON_ITERATIONS: usize = 25;
/// Evolution aborts once `min ρ` drops below this value.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

const PCG_RELATIVE_TOLERANCE: f64 = 1e-14;
const PCG_MAX_ITERATIONS: usize = 200;
const MAX_BACKTRACKS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSolve {
    pub phi: Field1D,
    /// Newton updates performed.
    pub iterations: usize,
    /// `‖−φ'' − ρ + e^φ‖∞` at the returned `φ`.
    pub residual: f64,
    /// Residual before each update, ending with the final one.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PhiSolverOptions {
    fn default() -> Self {
        Self { tol: PHI_TOLERANCE, max_iterations: MAX_NEWTON_ITERATIONS }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn minus_second_derivative(sp: &Spectral1D, f: &[f64]) -> Vec<f64> {
    let mut hat = sp.forward(f);
    for (idx, c) in hat.iter_mut().enumerate() {
        let k = sp.k_even(idx);
        *c *= k * k;
    }
    sp.inverse(hat)
}

fn pb_residual(sp: &Spectral1D, rho: &[f64], phi: &[f64]) -> Vec<f64> {
    minus_second_derivative(sp, phi)
        .iter()
        .zip(rho)
        .zip(phi)
        .map(|((lap, r), p)| lap - r + p.exp())
        .collect()
}

/// Preconditioned CG for `(−∂ₓₓ + diag(weight)) x = b`, preconditioned by
/// `−∂ₓₓ + mean(weight)` inverted in Fourier space.
fn solve_linearized(sp: &Spectral1D, weight: &[f64], b: &[f64]) -> Vec<f64> {
    let shift = weight.iter().sum::<f64>() / weight.len() as f64;
    let apply = |x: &[f64]| -> Vec<f64> {
        minus_second_derivative(sp, x).iter().zip(weight).zip(x).map(|((l, w), v)| l + w * v).collect()
    };
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut hat = sp.forward(r);
        for (idx, c) in hat.iter_mut().enumerate() {
            let k = sp.k_even(idx);
            *c /= k * k + shift;
        }
        sp.inverse(hat)
    };
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if b_norm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..PCG_MAX_ITERATIONS {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= PCG_RELATIVE_TOLERANCE * b_norm {
            break;
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Newton solve of `−φ'' = ρ − e^φ` starting from `φ = ln ρ`.
pub fn solve_phi(sp: &Spectral1D, rho: &Field1D, tol: f64) -> Result<PhiSolve> {
    solve_phi_with(sp, rho, PhiSolverOptions { tol, ..Default::default() })
}

pub fn solve_phi_with(sp: &Spectral1D, rho: &Field1D, opts: PhiSolverOptions) -> Result<PhiSolve> {
    if *rho.grid() != *sp.grid() {
        return Err(Error::GridMismatch);
    }
    rho.check_finite("ion density")?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("Newton tolerance {} must be positive", opts.tol)));
    }
    if rho.min() <= 0.0 {
        return Err(Error::Domain(format!("ion density must be positive, min is {}", rho.min())));
    }
    let rho_v = rho.values();
    let mut phi: Vec<f64> = rho_v.iter().map(|r| r.ln()).collect();
    let mut f = pb_residual(sp, rho_v, &phi);
    let mut residual = max_abs(&f);
    let mut history = vec![residual];
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations == opts.max_iterations || !residual.is_finite() {
            return Err(Error::NewtonDiverged { iterations, residual });
        }
        let weight: Vec<f64> = phi.iter().map(|p| p.exp()).collect();
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = solve_linearized(sp, &weight, &rhs);
        let mut t = 1.0;
        let (mut trial, mut trial_f, mut trial_res);
        let mut backtracks = 0;
        loop {
            trial = phi.iter().zip(&delta).map(|(p, d)| p + t * d).collect::<Vec<_>>();
            trial_f = pb_residual(sp, rho_v, &trial);
            trial_res = max_abs(&trial_f);
            if trial_res < residual || backtracks == MAX_BACKTRACKS {
                break;
            }
            t *= 0.5;
            backtracks += 1;
        }
        phi = trial;
        f = trial_f;
        residual = trial_res;
        iterations += 1;
        history.push(residual);
    }
    Ok(PhiSolve { phi: Field1D::new(*rho.grid(), phi)?, iterations, residual, history })
}

fn ion_fields(z: &StateVector) -> Result<(&Field1D, &Field1D)> {
    match z {
        StateVector::Ion1D { rho, v } => Ok((rho, v)),
        other => Err(Error::TagMismatch { expected: StateTag::Ion1D, found: other.tag() }),
    }
}

fn guard_positivity(rho: &Field1D) -> Result<()> {
    let min_density = rho.min();
    if min_density < POSITIVITY_FLOOR {
        return Err(Error::PositivityLost { min_density });
    }
    Ok(())
}

/// `J_ion = [[0, −∂ₓ], [−∂ₓ, 0]]`
#[derive(Debug, Clone)]
pub struct IonOperator {
    spectral: Arc<Spectral1D>,
}

impl IonOperator {
    pub fn new(spectral: Arc<Spectral1D>) -> Self {
        Self { spectral }
    }
}

impl PoissonOperator for IonOperator {
    fn label(&self) -> &str {
        "J_ion"
    }

    fn apply(&self, z: &StateVector, g: &CotangentVector) -> Result<TangentVector> {
        ion_fields(z)?;
        let (g_rho, g_v) = ion_fields(g)?;
        let sp = &self.spectral;
        StateVector::ion(sp.ddx(g_v)?.scale(-1.0), sp.ddx(g_rho)?.scale(-1.0))
    }
}

/// `H = ∫[ρV²/2 + φ'²/2 + (φ − 1)e^φ]` with `φ = Φ(ρ)`.
#[derive(Debug, Clone)]
pub struct IonHamiltonian {
    spectral: Arc<Spectral1D>,
    tol: f64,
}

impl IonHamiltonian {
    pub fn new(spectral: Arc<Spectral1D>) -> Self {
        Self { spectral, tol: PHI_TOLERANCE }
    }

    pub fn with_tolerance(spectral: Arc<Spectral1D>, tol: f64) -> Self {
        Self { spectral, tol }
    }

    pub fn potential(&self, z: &StateVector) -> Result<PhiSolve> {
        let (rho, _) = ion_fields(z)?;
        guard_positivity(rho)?;
        solve_phi(&self.spectral, rho, self.tol)
    }
}

impl Functional for IonHamiltonian {
    fn label(&self) -> &str {
        "H_ion"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let (rho, v) = ion_fields(z)?;
        let phi = self.potential(z)?.phi;
        let e_field = self.spectral.ddx(&phi)?;
        let kinetic = rho.zip_map(v, |r, u| 0.5 * r * u * u)?;
        let field = e_field.zip_map(&phi, |e, p| 0.5 * e * e + (p - 1.0) * p.exp())?;
        Ok(kinetic.integrate() + field.integrate())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let (rho, v) = ion_fields(z)?;
        let phi = self.potential(z)?.phi;
        StateVector::ion(v.zip_map(&phi, |u, p| 0.5 * u * u + p)?, rho.mul(v)?)
    }
}

/// Total ion number `∫ρ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IonMass;

impl Functional for IonMass {
    fn label(&self) -> &str {
        "mass"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(ion_fields(z)?.0.integrate())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let (rho, _) = ion_fields(z)?;
        StateVector::ion(Field1D::constant(*rho.grid(), 1.0), Field1D::zeros(*rho.grid()))
    }
}

/// Momentum `∫V` along the line.
#[derive(Debug, Clone, Copy, Default)]
pub struct IonMomentum;

impl Functional for IonMomentum {
    fn label(&self) -> &str {
        "momentum"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(ion_fields(z)?.1.integrate())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let (rho, _) = ion_fields(z)?;
        StateVector::ion(Field1D::zeros(*rho.grid()), Field1D::constant(*rho.grid(), 1.0))
    }
}

pub fn casimir_mass(z: &StateVector) -> Result<f64> {
    IonMass.value(z)
}

pub fn casimir_momentum(z: &StateVector) -> Result<f64> {
    IonMomentum.value(z)
}

/// `(ρ̇, V̇) = (−∂ₓ(ρV), −∂ₓ(φ + V²/2))`
pub fn ion_rhs(spectral: &Arc<Spectral1D>, z: &StateVector) -> Result<TangentVector> {
    let h = IonHamiltonian::new(spectral.clone());
    IonOperator::new(spectral.clone()).apply(z, &h.gradient(z)?)
}

/// `(2/L) ∫ (f − f̄) cos(kx)`: amplitude of the cosine component with wavenumber `k`.
pub fn cosine_amplitude(f: &Field1D, k: f64) -> f64 {
    let grid = *f.grid();
    let mean = f.mean();
    let weighted = f.values().iter().enumerate().map(|(i, v)| (v - mean) * (k * grid.x(i)).cos());
    2.0 * weighted.sum::<f64>() / grid.n as f64
}

/// `(2/L)∫(ρ − ρ̄) cos(kx)` as a functional of an ion state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitude {
    label: String,
    k: f64,
}

impl ModeAmplitude {
    pub fn new(k: f64) -> Self {
        Self { label: format!("mode(k={k})"), k }
    }

    pub fn wavenumber(&self) -> f64 {
        self.k
    }
}

impl Functional for ModeAmplitude {
    fn label(&self) -> &str {
        &self.label
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(cosine_amplitude(ion_fields(z)?.0, self.k))
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let grid = *ion_fields(z)?.0.grid();
        let basis = Field1D::from_fn(grid, |x| (self.k * x).cos())?;
        let mean = basis.mean();
        StateVector::ion(basis.map(|v| 2.0 * (v - mean) / grid.l), Field1D::zeros(grid))
    }
}

/// Angular frequency of an oscillating signal from its zero crossings.
///
/// Crossing times are linearly interpolated; the result is
/// `π (#crossings − 1) / (t_last − t_first)`. Needs at least three crossings.
pub fn measure_mode_frequency(times: &[f64], signal: &[f64]) -> Option<f64> {
    if times.len() != signal.len() {
        return None;
    }
    let mut crossings = Vec::new();
    for i in 1..signal.len() {
        let (a, b) = (signal[i - 1], signal[i]);
        if a == 0.0 && i == 1 {
            crossings.push(times[0]);
        }
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            if b == 0.0 {
                crossings.push(times[i]);
            } else {
                crossings.push(times[i - 1] + (times[i] - times[i - 1]) * a / (a - b));
            }
        }
    }
    crossings.dedup();
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(std::f64::consts::PI * (crossings.len() - 1) as f64 / span)
}

fn kdv_field(z: &StateVector) -> Result<&Field1D> {
    match z {
        StateVector::KdV { w } => Ok(w),
        other => Err(Error::TagMismatch { expected: StateTag::KdV, found: other.tag() }),
    }
}

/// The constant operator `∂ₓ`.
#[derive(Debug, Clone)]
pub struct GardnerOperator {
    spectral: Arc<Spectral1D>,
}

impl GardnerOperator {
    pub fn new(spectral: Arc<Spectral1D>) -> Self {
        Self { spectral }
    }
}

impl PoissonOperator for GardnerOperator {
    fn label(&self) -> &str {
        "J_Gardner"
    }

    fn apply(&self, z: &StateVector, g: &CotangentVector) -> Result<TangentVector> {
        kdv_field(z)?;
        Ok(StateVector::kdv(self.spectral.ddx(kdv_field(g)?)?))
    }
}

/// `∫(−w³ + w'²/2)`
#[derive(Debug, Clone)]
pub struct KdvHamiltonian {
    spectral: Arc<Spectral1D>,
}

impl KdvHamiltonian {
    pub fn new(spectral: Arc<Spectral1D>) -> Self {
        Self { spectral }
    }
}

impl Functional for KdvHamiltonian {
    fn label(&self) -> &str {
        "H_KdV"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let w = kdv_field(z)?;
        let wx = self.spectral.ddx(w)?;
        Ok(w.zip_map(&wx, |a, b| -a * a * a + 0.5 * b * b)?.integrate())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let w = kdv_field(z)?;
        let wxx = self.spectral.ddxx(w)?;
        Ok(StateVector::kdv(w.zip_map(&wxx, |a, b| -3.0 * a * a - b)?))
    }
}

/// `∫w`, the Casimir of `∂ₓ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KdvMass;

impl Functional for KdvMass {
    fn label(&self) -> &str {
        "I1"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(kdv_field(z)?.integrate())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        Ok(StateVector::kdv(Field1D::constant(*kdv_field(z)?.grid(), 1.0)))
    }
}

/// `∫w²/2`
#[derive(Debug, Clone, Copy, Default)]
pub struct KdvMomentum;

impl Functional for KdvMomentum {
    fn label(&self) -> &str {
        "I2"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        Ok(0.5 * kdv_field(z)?.norm_squared())
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        Ok(StateVector::kdv(kdv_field(z)?.clone()))
    }
}

/// `∂ₓ δH/δw = −6 w w' − w'''`
pub fn gardner_rhs(spectral: &Arc<Spectral1D>, w: &Field1D) -> Result<Field1D> {
    let z = StateVector::kdv(w.clone());
    let g = KdvHamiltonian::new(spectral.clone()).gradient(&z)?;
    match GardnerOperator::new(spectral.clone()).apply(&z, &g)? {
        StateVector::KdV { w } => Ok(w),
        _ => unreachable!("Gardner operator returns KdV tangents"),
    }
}

/// `(I1, I2, I3) = (∫w, ∫w²/2, H_KdV)`
pub fn kdv_invariants(spectral: &Arc<Spectral1D>, w: &Field1D) -> Result<(f64, f64, f64)> {
    let z = StateVector::kdv(w.clone());
    Ok((KdvMass.value(&z)?, KdvMomentum.value(&z)?, KdvHamiltonian::new(spectral.clone()).value(&z)?))
}

/// `(c/2) sech²(√c (x − x₀)/2)` summed over the nearest periodic images.
pub fn kdv_soliton(c: f64, x0: f64, grid: Grid1D) -> Result<Field1D> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("soliton speed {c} must be positive")));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidParameter("soliton centre must be finite".into()));
    }
    let half_root = 0.5 * c.sqrt();
    Field1D::from_fn(grid, |x| {
        (-3..=3)
            .map(|m| {
                let s = (half_root * (x - x0 - m as f64 * grid.l)).cosh();
                0.5 * c / (s * s)
            })
            .sum()
    })
}

/// KdV as `w_t = L w + N(w)` with `L = −∂ₓₓₓ` and `N(w) = −3 ∂ₓ(w²)`,
/// for integrating-factor stepping.
#[derive(Debug, Clone)]
pub struct KdvFlow {
    spectral: Arc<Spectral1D>,
}

impl KdvFlow {
    pub fn new(spectral: Arc<Spectral1D>) -> Self {
        Self { spectral }
    }

    pub fn spectral(&self) -> &Arc<Spectral1D> {
        &self.spectral
    }

    pub fn rhs(&self, z: &StateVector) -> Result<TangentVector> {
        Ok(StateVector::kdv(gardner_rhs(&self.spectral, kdv_field(z)?)?))
    }

    pub fn nonlinear(&self, z: &StateVector) -> Result<TangentVector> {
        let w = kdv_field(z)?;
        Ok(StateVector::kdv(self.spectral.ddx(&w.mul(w)?)?.scale(-3.0)))
    }

    /// `exp(τL) w`, i.e. multiplication by `exp(i k³ τ)`.
    pub fn propagate(&self, z: &StateVector, tau: f64) -> Result<StateVector> {
        let sp = &self.spectral;
        let w = sp.apply_symbol(kdv_field(z)?, |idx| {
            let k = sp.k_odd(idx);
            Complex64::from_polar(1.0, k * k * k * tau)
        })?;
        Ok(StateVector::kdv(w))
    }
}
