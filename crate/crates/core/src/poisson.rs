//! Functionals, state-dependent Poisson operators and the checks built on them.
//!
//! States, cotangent vectors (functional gradients) and tangent vectors share
//! one representation, [`StateVector`]; the pairing between them is the L²
//! inner product on each component, summed.

use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateTag {
    FiniteDim,
    SystemI,
    SystemII,
    SystemIII,
    Ion1D,
    KdV,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateVector {
    FiniteDim(Vec<f64>),
    SystemI { omega: Field2D },
    SystemII { omega: Field2D, psi: Field2D },
    SystemIII { omega: Field2D, psi: Field2D, psi_check: Field2D },
    Ion1D { rho: Field1D, v: Field1D },
    KdV { w: Field1D },
}

/// Gradient of a functional; same shape as the state it is evaluated at.
pub type CotangentVector = StateVector;
/// Output of a Poisson operator; same shape as the state.
pub type TangentVector = StateVector;

impl StateVector {
    pub fn system_i(omega: Field2D) -> Self {
        Self::SystemI { omega }
    }

    pub fn system_ii(omega: Field2D, psi: Field2D) -> Result<Self> {
        omega.same_grid(&psi)?;
        Ok(Self::SystemII { omega, psi })
    }

    pub fn system_iii(omega: Field2D, psi: Field2D, psi_check: Field2D) -> Result<Self> {
        omega.same_grid(&psi)?;
        omega.same_grid(&psi_check)?;
        Ok(Self::SystemIII { omega, psi, psi_check })
    }

    pub fn ion(rho: Field1D, v: Field1D) -> Result<Self> {
        rho.same_grid(&v)?;
        Ok(Self::Ion1D { rho, v })
    }

    pub fn kdv(w: Field1D) -> Self {
        Self::KdV { w }
    }

    pub fn tag(&self) -> StateTag {
        match self {
            Self::FiniteDim(_) => StateTag::FiniteDim,
            Self::SystemI { .. } => StateTag::SystemI,
            Self::SystemII { .. } => StateTag::SystemII,
            Self::SystemIII { .. } => StateTag::SystemIII,
            Self::Ion1D { .. } => StateTag::Ion1D,
            Self::KdV { .. } => StateTag::KdV,
        }
    }

    pub fn expect_tag(&self, expected: StateTag) -> Result<()> {
        if self.tag() == expected {
            Ok(())
        } else {
            Err(Error::TagMismatch { expected, found: self.tag() })
        }
    }

    pub fn component_names(&self) -> &'static [&'static str] {
        match self {
            Self::FiniteDim(_) => &["z"],
            Self::SystemI { .. } => &["omega"],
            Self::SystemII { .. } => &["omega", "psi"],
            Self::SystemIII { .. } => &["omega", "psi", "psi_check"],
            Self::Ion1D { .. } => &["rho", "v"],
            Self::KdV { .. } => &["w"],
        }
    }

    /// Raw sample arrays, in [`component_names`](Self::component_names) order.
    pub fn components(&self) -> Vec<&[f64]> {
        match self {
            Self::FiniteDim(z) => vec![z.as_slice()],
            Self::SystemI { omega } => vec![omega.values()],
            Self::SystemII { omega, psi } => vec![omega.values(), psi.values()],
            Self::SystemIII { omega, psi, psi_check } => {
                vec![omega.values(), psi.values(), psi_check.values()]
            }
            Self::Ion1D { rho, v } => vec![rho.values(), v.values()],
            Self::KdV { w } => vec![w.values()],
        }
    }

    /// Component-wise `f(self, other)`; both must share tag and grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Self> {
        use StateVector::*;
        Ok(match (self, other) {
            (FiniteDim(a), FiniteDim(b)) => {
                if a.len() != b.len() {
                    return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
                }
                FiniteDim(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            }
            (SystemI { omega: a }, SystemI { omega: b }) => SystemI { omega: a.zip_map(b, f)? },
            (SystemII { omega: a, psi: p }, SystemII { omega: b, psi: q }) => SystemII {
                omega: a.zip_map(b, f)?,
                psi: p.zip_map(q, f)?,
            },
            (
                SystemIII { omega: a, psi: p, psi_check: c },
                SystemIII { omega: b, psi: q, psi_check: d },
            ) => SystemIII {
                omega: a.zip_map(b, f)?,
                psi: p.zip_map(q, f)?,
                psi_check: c.zip_map(d, f)?,
            },
            (Ion1D { rho: a, v: p }, Ion1D { rho: b, v: q }) => Ion1D {
                rho: a.zip_map(b, f)?,
                v: p.zip_map(q, f)?,
            },
            (KdV { w: a }, KdV { w: b }) => KdV { w: a.zip_map(b, f)? },
            _ => return Err(Error::TagMismatch { expected: self.tag(), found: other.tag() }),
        })
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.zip_with(self, |a, _| factor * a).expect("a state always matches itself")
    }

    /// L² pairing `⟨self, other⟩` (Euclidean for finite-dimensional states).
    pub fn inner(&self, other: &Self) -> Result<f64> {
        use StateVector::*;
        match (self, other) {
            (FiniteDim(a), FiniteDim(b)) => {
                if a.len() != b.len() {
                    return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
                }
                Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
            }
            (SystemI { omega: a }, SystemI { omega: b }) => a.inner(b),
            (SystemII { omega: a, psi: p }, SystemII { omega: b, psi: q }) => {
                Ok(a.inner(b)? + p.inner(q)?)
            }
            (
                SystemIII { omega: a, psi: p, psi_check: c },
                SystemIII { omega: b, psi: q, psi_check: d },
            ) => Ok(a.inner(b)? + p.inner(q)? + c.inner(d)?),
            (Ion1D { rho: a, v: p }, Ion1D { rho: b, v: q }) => Ok(a.inner(b)? + p.inner(q)?),
            (KdV { w: a }, KdV { w: b }) => a.inner(b),
            _ => Err(Error::TagMismatch { expected: self.tag(), found: other.tag() }),
        }
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).expect("a state always matches itself").sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (c, values) in self.components().into_iter().enumerate() {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                let offset: usize = self.components()[..c].iter().map(|v| v.len()).sum();
                return Err(Error::NonFinite { context: "state vector", index: offset + i });
            }
        }
        Ok(())
    }

    /// Largest absolute component-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let diff = self.zip_with(other, |a, b| a - b)?;
        Ok(diff
            .components()
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs())))
    }
}

/// A real-valued functional together with its analytic gradient.
pub trait Functional: Send + Sync {
    fn label(&self) -> &str;
    fn value(&self, z: &StateVector) -> Result<f64>;
    fn gradient(&self, z: &StateVector) -> Result<CotangentVector>;
}

/// A state-dependent antisymmetric operator from cotangent to tangent vectors.
pub trait PoissonOperator: Send + Sync {
    fn label(&self) -> &str;
    fn apply(&self, z: &StateVector, g: &CotangentVector) -> Result<TangentVector>;
}

/// `{F, G}(z) = ⟨∂F(z), J(z) ∂G(z)⟩`
pub fn eval_poisson_bracket(
    f: &dyn Functional,
    g: &dyn Functional,
    z: &StateVector,
    op: &dyn PoissonOperator,
) -> Result<f64> {
    let df = f.gradient(z)?;
    let jdg = op.apply(z, &g.gradient(z)?)?;
    df.inner(&jdg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CasimirResidual {
    /// `‖J ∂C‖ / (‖∂C‖ · ‖z‖)`; `‖z‖` is replaced by 1 for the zero state.
    pub value: f64,
    /// Set when `∂C(z)` vanishes; `value` is then reported as 0.
    pub degenerate: bool,
}

pub fn casimir_residual(
    c: &dyn Functional,
    z: &StateVector,
    op: &dyn PoissonOperator,
) -> Result<CasimirResidual> {
    let grad = c.gradient(z)?;
    let grad_norm = grad.norm();
    if grad_norm == 0.0 {
        return Ok(CasimirResidual { value: 0.0, degenerate: true });
    }
    let image = op.apply(z, &grad)?;
    let z_norm = z.norm();
    let scale = if z_norm > 0.0 { z_norm } else { 1.0 };
    Ok(CasimirResidual { value: image.norm() / (grad_norm * scale), degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub finite_difference: f64,
    pub analytic: f64,
}

impl GradientCheck {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.finite_difference.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.finite_difference - self.analytic).abs() / scale
        }
    }
}

/// Compares `(F(z+εδ) − F(z−εδ)) / 2ε` against `⟨∂F(z), δ⟩`.
pub fn gradient_check(
    f: &dyn Functional,
    z: &StateVector,
    direction: &StateVector,
    eps: f64,
) -> Result<GradientCheck> {
    let plus = f.value(&z.axpy(eps, direction)?)?;
    let minus = f.value(&z.axpy(-eps, direction)?)?;
    Ok(GradientCheck {
        finite_difference: (plus - minus) / (2.0 * eps),
        analytic: f.gradient(z)?.inner(direction)?,
    })
}

fn finite_point(z: &StateVector) -> Result<&[f64]> {
    match z {
        StateVector::FiniteDim(p) => Ok(p),
        other => Err(Error::TagMismatch { expected: StateTag::FiniteDim, found: other.tag() }),
    }
}

/// Cyclic sum `{F,{G,H}} + {G,{H,F}} + {H,{F,G}}` at a finite-dimensional point.
///
/// The inner brackets are differentiated by fourth-order central differences
/// with the given step; the outer pairing uses analytic gradients.
pub fn jacobi_residual(
    op: &dyn PoissonOperator,
    z: &StateVector,
    f: &dyn Functional,
    g: &dyn Functional,
    h: &dyn Functional,
    step: f64,
) -> Result<f64> {
    let point = finite_point(z)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {step}")));
    }
    let bracket_gradient = |a: &dyn Functional, b: &dyn Functional| -> Result<StateVector> {
        let mut grad = vec![0.0; point.len()];
        for (k, slot) in grad.iter_mut().enumerate() {
            let at = |offset: f64| -> Result<f64> {
                let mut shifted = point.to_vec();
                shifted[k] += offset;
                eval_poisson_bracket(a, b, &StateVector::FiniteDim(shifted), op)
            };
            let near = at(step)? - at(-step)?;
            let far = at(2.0 * step)? - at(-2.0 * step)?;
            *slot = (8.0 * near - far) / (12.0 * step);
        }
        Ok(StateVector::FiniteDim(grad))
    };
    let outer = |a: &dyn Functional, b: &dyn Functional, c: &dyn Functional| -> Result<f64> {
        let inner_grad = bracket_gradient(b, c)?;
        a.gradient(z)?.inner(&op.apply(z, &inner_grad)?)
    };
    let sum = outer(f, g, h)? + outer(g, h, f)? + outer(h, f, g)?;
    if !sum.is_finite() {
        return Err(Error::NonFinite { context: "jacobi cyclic sum", index: 0 });
    }
    Ok(sum.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid1D, Grid2D};

    #[test]
    fn tag_mismatch_in_pairing() {
        let a = StateVector::FiniteDim(vec![1.0, 2.0]);
        let b = StateVector::kdv(Field1D::zeros(Grid1D::periodic(8).unwrap()));
        assert!(matches!(a.inner(&b), Err(Error::TagMismatch { .. })));
        assert!(matches!(a.axpy(1.0, &b), Err(Error::TagMismatch { .. })));
    }

    #[test]
    fn composite_constructors_check_grids() {
        let a = Field2D::zeros(Grid2D::square(8).unwrap());
        let b = Field2D::zeros(Grid2D::square(16).unwrap());
        assert_eq!(StateVector::system_ii(a.clone(), b.clone()), Err(Error::GridMismatch));
        assert!(StateVector::system_iii(a.clone(), a.clone(), b).is_err());
        assert!(StateVector::system_iii(a.clone(), a.clone(), a).is_ok());
    }

    #[test]
    fn non_finite_state_is_located() {
        let z = StateVector::FiniteDim(vec![0.0, f64::NAN]);
        assert_eq!(
            z.check_finite(),
            Err(Error::NonFinite { context: "state vector", index: 1 })
        );
    }
}
