//! Two-dimensional vortex hierarchy: Euler vorticity (I), reduced MHD with a
//! flux / phantom field (II) and its extension by a second phantom (III).
//!
//! Sign convention: `δH_E/δω = −Δ⁻¹ω = φ` with `ω = −Δφ`, so
//! `∂_t ω = [ω, φ] = −V·∇ω` for `V = (∂_y φ, −∂_x φ)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Field2D, Spectral2D};
use crate::poisson::{CotangentVector, Functional, PoissonOperator, StateTag, StateVector, TangentVector};

/// Default squared-norm threshold for membership in the leaf `ψ = 0`.
pub const LEAF_TOLERANCE: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    I,
    II,
    III,
}

impl Level {
    pub fn tag(self) -> StateTag {
        match self {
            Level::I => StateTag::SystemI,
            Level::II => StateTag::SystemII,
            Level::III => StateTag::SystemIII,
        }
    }

    pub fn of(z: &StateVector) -> Result<Self> {
        match z.tag() {
            StateTag::SystemI => Ok(Level::I),
            StateTag::SystemII => Ok(Level::II),
            StateTag::SystemIII => Ok(Level::III),
            found => Err(Error::TagMismatch { expected: StateTag::SystemI, found }),
        }
    }
}

struct VortexFields<'a> {
    omega: &'a Field2D,
    psi: Option<&'a Field2D>,
    psi_check: Option<&'a Field2D>,
}

fn unpack(z: &StateVector) -> Result<VortexFields<'_>> {
    match z {
        StateVector::SystemI { omega } => Ok(VortexFields { omega, psi: None, psi_check: None }),
        StateVector::SystemII { omega, psi } => Ok(VortexFields { omega, psi: Some(psi), psi_check: None }),
        StateVector::SystemIII { omega, psi, psi_check } => {
            Ok(VortexFields { omega, psi: Some(psi), psi_check: Some(psi_check) })
        }
        other => Err(Error::TagMismatch { expected: StateTag::SystemI, found: other.tag() }),
    }
}

/// Builds a cotangent vector shaped like `z`, filling absent slots with zeros.
fn shaped_like(
    z: &StateVector,
    omega: Option<Field2D>,
    psi: Option<Field2D>,
    psi_check: Option<Field2D>,
) -> Result<CotangentVector> {
    let fields = unpack(z)?;
    let zero = || Field2D::zeros(*fields.omega.grid());
    let omega = omega.unwrap_or_else(zero);
    Ok(match Level::of(z)? {
        Level::I => StateVector::SystemI { omega },
        Level::II => StateVector::SystemII { omega, psi: psi.unwrap_or_else(zero) },
        Level::III => StateVector::SystemIII {
            omega,
            psi: psi.unwrap_or_else(zero),
            psi_check: psi_check.unwrap_or_else(zero),
        },
    })
}

/// `J_I`, `J_II` or `J_III`, built from the dealiased canonical bracket.
#[derive(Debug, Clone)]
pub struct VortexOperator {
    level: Level,
    spectral: Arc<Spectral2D>,
}

impl VortexOperator {
    pub fn new(level: Level, spectral: Arc<Spectral2D>) -> Self {
        Self { level, spectral }
    }

    pub fn level(&self) -> Level {
        self.level
    }
}

impl PoissonOperator for VortexOperator {
    fn label(&self) -> &str {
        match self.level {
            Level::I => "J_I",
            Level::II => "J_II",
            Level::III => "J_III",
        }
    }

    fn apply(&self, z: &StateVector, g: &CotangentVector) -> Result<TangentVector> {
        z.expect_tag(self.level.tag())?;
        g.expect_tag(self.level.tag())?;
        let sp = &self.spectral;
        Ok(match (z, g) {
            (StateVector::SystemI { omega }, StateVector::SystemI { omega: g_omega }) => {
                StateVector::SystemI { omega: sp.bracket(omega, g_omega)? }
            }
            (
                StateVector::SystemII { omega, psi },
                StateVector::SystemII { omega: g_omega, psi: g_psi },
            ) => {
                let vorticity = sp.bracket(omega, g_omega)?.add(&sp.bracket(psi, g_psi)?)?;
                StateVector::SystemII { omega: vorticity, psi: sp.bracket(psi, g_omega)? }
            }
            (
                StateVector::SystemIII { omega, psi, psi_check },
                StateVector::SystemIII { omega: g_omega, psi: g_psi, psi_check: g_check },
            ) => {
                let vorticity = sp
                    .bracket(omega, g_omega)?
                    .add(&sp.bracket(psi, g_psi)?)?
                    .add(&sp.bracket(psi_check, g_check)?)?;
                StateVector::SystemIII {
                    omega: vorticity,
                    psi: sp.bracket(psi, g_omega)?,
                    psi_check: sp.bracket(psi_check, g_omega)?,
                }
            }
            _ => unreachable!("tags checked above"),
        })
    }
}

/// `H_E(ω) = −½ ∫ ω Δ⁻¹ω`. On levels II/III the phantom gradients are zero.
#[derive(Debug, Clone)]
pub struct EulerEnergy {
    spectral: Arc<Spectral2D>,
}

impl EulerEnergy {
    pub fn new(spectral: Arc<Spectral2D>) -> Self {
        Self { spectral }
    }
}

impl Functional for EulerEnergy {
    fn label(&self) -> &str {
        "H_E"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let omega = unpack(z)?.omega;
        Ok(-0.5 * omega.inner(&self.spectral.invert_laplacian(omega)?)?)
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let omega = unpack(z)?.omega;
        let stream = self.spectral.invert_laplacian(omega)?.scale(-1.0);
        shaped_like(z, Some(stream), None, None)
    }
}

/// `H_RMHD(ω, ψ) = −½ ∫ [ω Δ⁻¹ω + ψ Δψ]`.
#[derive(Debug, Clone)]
pub struct RmhdEnergy {
    spectral: Arc<Spectral2D>,
}

impl RmhdEnergy {
    pub fn new(spectral: Arc<Spectral2D>) -> Self {
        Self { spectral }
    }
}

fn flux<'a>(fields: &VortexFields<'a>, z: &StateVector) -> Result<&'a Field2D> {
    fields
        .psi
        .ok_or(Error::TagMismatch { expected: StateTag::SystemII, found: z.tag() })
}

impl Functional for RmhdEnergy {
    fn label(&self) -> &str {
        "H_RMHD"
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let fields = unpack(z)?;
        let psi = flux(&fields, z)?;
        let kinetic = fields.omega.inner(&self.spectral.invert_laplacian(fields.omega)?)?;
        let magnetic = psi.inner(&self.spectral.laplacian(psi)?)?;
        Ok(-0.5 * (kinetic + magnetic))
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let fields = unpack(z)?;
        let psi = flux(&fields, z)?;
        let stream = self.spectral.invert_laplacian(fields.omega)?.scale(-1.0);
        let current = self.spectral.laplacian(psi)?.scale(-1.0);
        shaped_like(z, Some(stream), Some(current), None)
    }
}

/// `J(z) ∂H(z)` for the vortex level `level`.
pub fn vortex_rhs(
    level: Level,
    spectral: &Arc<Spectral2D>,
    z: &StateVector,
    h: &dyn Functional,
) -> Result<TangentVector> {
    VortexOperator::new(level, spectral.clone()).apply(z, &h.gradient(z)?)
}

/// Scalar map with analytic derivative, used as a Casimir density or as a
/// kernel-state profile.
#[derive(Clone)]
pub enum Profile {
    Identity,
    /// `s²/2`
    HalfSquare,
    Square,
    Cube,
    Quartic,
    Sin,
    Cos,
    Tanh,
    Exp,
    /// `Σ c_k s^k`
    Polynomial(Vec<f64>),
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.name())
    }
}

impl Profile {
    pub const NAMES: [&'static str; 9] =
        ["identity", "half_square", "square", "cube", "quartic", "sin", "cos", "tanh", "exp"];

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "identity" => Self::Identity,
            "half_square" => Self::HalfSquare,
            "square" => Self::Square,
            "cube" => Self::Cube,
            "quartic" => Self::Quartic,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tanh" => Self::Tanh,
            "exp" => Self::Exp,
            other => return Err(Error::UnknownProfile(other.to_string())),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::HalfSquare => "half_square".into(),
            Self::Square => "square".into(),
            Self::Cube => "cube".into(),
            Self::Quartic => "quartic".into(),
            Self::Sin => "sin".into(),
            Self::Cos => "cos".into(),
            Self::Tanh => "tanh".into(),
            Self::Exp => "exp".into(),
            Self::Polynomial(c) => format!("poly{c:?}"),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Identity => s,
            Self::HalfSquare => 0.5 * s * s,
            Self::Square => s * s,
            Self::Cube => s * s * s,
            Self::Quartic => s.powi(4),
            Self::Sin => s.sin(),
            Self::Cos => s.cos(),
            Self::Tanh => s.tanh(),
            Self::Exp => s.exp(),
            Self::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * s + ck),
            Self::Custom { f, .. } => f(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::HalfSquare => s,
            Self::Square => 2.0 * s,
            Self::Cube => 3.0 * s * s,
            Self::Quartic => 4.0 * s * s * s,
            Self::Sin => s.cos(),
            Self::Cos => -s.sin(),
            Self::Tanh => 1.0 - s.tanh().powi(2),
            Self::Exp => s.exp(),
            Self::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * s + k as f64 * ck),
            Self::Custom { df, .. } => df(s),
        }
    }

    pub fn apply(&self, f: &Field2D) -> Field2D {
        f.map(|s| self.value(s))
    }

    pub fn apply_derivative(&self, f: &Field2D) -> Field2D {
        f.map(|s| self.derivative(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CasimirFamily {
    /// `∫ f(ω)`
    C0,
    /// `∫ ω g(ψ)` (cross helicity)
    C1,
    /// `∫ f(ψ)`
    C2,
    /// `∫ h(ψ ψ̌)`
    C3,
    /// `∫ f̌(ψ̌)`
    C4,
}

impl CasimirFamily {
    /// Level at which this family is a Casimir of the vortex operator.
    pub fn declared_level(self) -> Level {
        match self {
            Self::C0 => Level::I,
            Self::C1 | Self::C2 => Level::II,
            Self::C3 | Self::C4 => Level::III,
        }
    }

    fn min_level(self) -> Level {
        match self {
            Self::C0 => Level::I,
            Self::C1 | Self::C2 => Level::II,
            Self::C3 | Self::C4 => Level::III,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CasimirSpec {
    pub family: CasimirFamily,
    pub profile: Profile,
}

/// A member of the vortex Casimir catalog.
#[derive(Debug, Clone)]
pub struct Casimir2D {
    spec: CasimirSpec,
    label: String,
}

pub fn make_casimir(spec: CasimirSpec) -> Casimir2D {
    let label = format!("{:?}[{}]", spec.family, spec.profile.name());
    Casimir2D { spec, label }
}

impl Casimir2D {
    pub fn family(&self) -> CasimirFamily {
        self.spec.family
    }

    fn fields<'a>(&self, z: &'a StateVector) -> Result<VortexFields<'a>> {
        let fields = unpack(z)?;
        let level = Level::of(z)?;
        let enough = match self.spec.family.min_level() {
            Level::I => true,
            Level::II => level != Level::I,
            Level::III => level == Level::III,
        };
        if !enough {
            return Err(Error::TagMismatch { expected: self.spec.family.min_level().tag(), found: z.tag() });
        }
        Ok(fields)
    }
}

impl Functional for Casimir2D {
    fn label(&self) -> &str {
        &self.label
    }

    fn value(&self, z: &StateVector) -> Result<f64> {
        let v = self.fields(z)?;
        let p = &self.spec.profile;
        Ok(match self.spec.family {
            CasimirFamily::C0 => p.apply(v.omega).integrate(),
            CasimirFamily::C1 => v.omega.inner(&p.apply(v.psi.unwrap()))?,
            CasimirFamily::C2 => p.apply(v.psi.unwrap()).integrate(),
            CasimirFamily::C3 => p.apply(&v.psi.unwrap().mul(v.psi_check.unwrap())?).integrate(),
            CasimirFamily::C4 => p.apply(v.psi_check.unwrap()).integrate(),
        })
    }

    fn gradient(&self, z: &StateVector) -> Result<CotangentVector> {
        let v = self.fields(z)?;
        let p = &self.spec.profile;
        match self.spec.family {
            CasimirFamily::C0 => shaped_like(z, Some(p.apply_derivative(v.omega)), None, None),
            CasimirFamily::C1 => {
                let psi = v.psi.unwrap();
                let d_psi = v.omega.mul(&p.apply_derivative(psi))?;
                shaped_like(z, Some(p.apply(psi)), Some(d_psi), None)
            }
            CasimirFamily::C2 => shaped_like(z, None, Some(p.apply_derivative(v.psi.unwrap())), None),
            CasimirFamily::C3 => {
                let (psi, check) = (v.psi.unwrap(), v.psi_check.unwrap());
                let dh = p.apply_derivative(&psi.mul(check)?);
                shaped_like(z, None, Some(check.mul(&dh)?), Some(psi.mul(&dh)?))
            }
            CasimirFamily::C4 => {
                shaped_like(z, None, None, Some(p.apply_derivative(v.psi_check.unwrap())))
            }
        }
    }
}

/// `(ω, ψ) = (ξ(ζ), η(ζ))`: a state with `[ω, ψ] = 0`, i.e. `ψ ∈ Ker J_I(ω)`.
pub fn make_kernel_state(zeta: &Field2D, xi: &Profile, eta: &Profile) -> Result<StateVector> {
    zeta.check_finite("kernel-state generator")?;
    let omega = xi.apply(zeta);
    let psi = eta.apply(zeta);
    omega.check_finite("kernel-state vorticity")?;
    psi.check_finite("kernel-state flux")?;
    StateVector::system_ii(omega, psi)
}

/// Two samples with (numerically) equal `ω` but distinct `ψ`, proving that `ψ`
/// is not a function of `ω` on this grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonFunctionalWitness {
    pub first: usize,
    pub second: usize,
    pub omega_gap: f64,
    pub psi_gap: f64,
}

/// Searches for the pair with `|ω_a − ω_b| ≤ omega_tol` maximizing `|ψ_a − ψ_b|`.
pub fn non_functional_witness(
    omega: &Field2D,
    psi: &Field2D,
    omega_tol: f64,
) -> Result<Option<NonFunctionalWitness>> {
    omega.same_grid(psi)?;
    let (w, p) = (omega.values(), psi.values());
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    let mut best: Option<NonFunctionalWitness> = None;
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            let omega_gap = w[b] - w[a];
            if omega_gap > omega_tol {
                break;
            }
            let psi_gap = (p[a] - p[b]).abs();
            if best.is_none_or(|bst| psi_gap > bst.psi_gap) {
                best = Some(NonFunctionalWitness { first: a, second: b, omega_gap, psi_gap });
            }
        }
    }
    Ok(best)
}

/// `(‖ψ‖², ‖ψ‖² < tol)`: squared norm and membership in the singular leaf `ψ = 0`.
pub fn singular_leaf_indicator(psi: &Field2D, tol: f64) -> Result<(f64, bool)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("leaf tolerance {tol} must be positive")));
    }
    let norm2 = psi.norm_squared();
    Ok((norm2, norm2 < tol))
}

/// `‖J_II ∂C_in‖` for `C_in = ∫ f(ω)`, evaluated at `(ω, ψ)`.
pub fn interior_casimir_residual_at(
    spectral: &Arc<Spectral2D>,
    omega: &Field2D,
    psi: &Field2D,
    f: &Profile,
) -> Result<f64> {
    let z = StateVector::system_ii(omega.clone(), psi.clone())?;
    let c_in = make_casimir(CasimirSpec { family: CasimirFamily::C0, profile: f.clone() });
    let image = VortexOperator::new(Level::II, spectral.clone()).apply(&z, &c_in.gradient(&z)?)?;
    Ok(image.norm())
}

/// Same as [`interior_casimir_residual_at`] on the singular leaf `ψ = 0`.
pub fn interior_casimir_residual(spectral: &Arc<Spectral2D>, omega: &Field2D, f: &Profile) -> Result<f64> {
    interior_casimir_residual_at(spectral, omega, &Field2D::zeros(*omega.grid()), f)
}
