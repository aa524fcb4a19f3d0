//! Explicit time stepping and invariant-drift bookkeeping.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ion_kdv::KdvFlow;
use crate::poisson::{Functional, PoissonOperator, StateVector, TangentVector};

/// A stiff linear part `L` and the remainder `N` of a vector field `Lz + N(z)`.
pub trait LinearSplit {
    /// `exp(τL) z`
    fn propagate(&self, z: &StateVector, tau: f64) -> Result<StateVector>;
    fn nonlinear(&self, z: &StateVector) -> Result<TangentVector>;
}

pub trait VectorField: Send + Sync {
    fn eval(&self, z: &StateVector) -> Result<TangentVector>;

    fn split(&self) -> Option<&dyn LinearSplit> {
        None
    }
}

/// `ż = J(z) ∂H(z)`
#[derive(Clone)]
pub struct HamiltonianFlow {
    pub operator: Arc<dyn PoissonOperator>,
    pub hamiltonian: Arc<dyn Functional>,
}

impl HamiltonianFlow {
    pub fn new(operator: Arc<dyn PoissonOperator>, hamiltonian: Arc<dyn Functional>) -> Self {
        Self { operator, hamiltonian }
    }
}

impl VectorField for HamiltonianFlow {
    fn eval(&self, z: &StateVector) -> Result<TangentVector> {
        self.operator.apply(z, &self.hamiltonian.gradient(z)?)
    }
}

impl LinearSplit for KdvFlow {
    fn propagate(&self, z: &StateVector, tau: f64) -> Result<StateVector> {
        KdvFlow::propagate(self, z, tau)
    }

    fn nonlinear(&self, z: &StateVector) -> Result<TangentVector> {
        KdvFlow::nonlinear(self, z)
    }
}

impl VectorField for KdvFlow {
    fn eval(&self, z: &StateVector) -> Result<TangentVector> {
        self.rhs(z)
    }

    fn split(&self) -> Option<&dyn LinearSplit> {
        Some(self)
    }
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F> VectorField for FnField<F>
where
    F: Fn(&StateVector) -> Result<TangentVector> + Send + Sync,
{
    fn eval(&self, z: &StateVector) -> Result<TangentVector> {
        (self.0)(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Rk4,
    Midpoint,
    /// Integrating-factor RK4 (Lawson form); needs a [`LinearSplit`].
    IfRk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    scheme: Scheme,
    dt: f64,
}

impl Integrator {
    pub fn new(scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive and finite")));
        }
        Ok(Self { scheme, dt })
    }

    pub fn rk4(dt: f64) -> Result<Self> {
        Self::new(Scheme::Rk4, dt)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step; the result is rejected if any component is NaN or infinite.
    pub fn step(&self, field: &dyn VectorField, z: &StateVector) -> Result<StateVector> {
        let h = self.dt;
        let next = match self.scheme {
            Scheme::Rk4 => {
                let k1 = field.eval(z)?;
                let k2 = field.eval(&z.axpy(0.5 * h, &k1)?)?;
                let k3 = field.eval(&z.axpy(0.5 * h, &k2)?)?;
                let k4 = field.eval(&z.axpy(h, &k3)?)?;
                let incr = k1.axpy(2.0, &k2)?.axpy(2.0, &k3)?.axpy(1.0, &k4)?;
                z.axpy(h / 6.0, &incr)?
            }
            Scheme::Midpoint => {
                let k1 = field.eval(z)?;
                z.axpy(h, &field.eval(&z.axpy(0.5 * h, &k1)?)?)?
            }
            Scheme::IfRk4 => {
                let split = field.split().ok_or_else(|| {
                    Error::InvalidParameter("integrating-factor RK4 needs a linear/nonlinear split".into())
                })?;
                let half = |v: &StateVector| split.propagate(v, 0.5 * h);
                let full = |v: &StateVector| split.propagate(v, h);
                let u_half = half(z)?;
                let k1 = split.nonlinear(z)?;
                let k2 = split.nonlinear(&half(&z.axpy(0.5 * h, &k1)?)?)?;
                let k3 = split.nonlinear(&u_half.axpy(0.5 * h, &k2)?)?;
                let k4 = split.nonlinear(&full(z)?.axpy(h, &half(&k3)?)?)?;
                let mid = half(&k2.axpy(1.0, &k3)?)?;
                let incr = full(&k1)?.axpy(2.0, &mid)?.axpy(1.0, &k4)?;
                full(z)?.axpy(h / 6.0, &incr)?
            }
        };
        next.check_finite()?;
        Ok(next)
    }

    /// Takes `n_steps` steps, reporting the last valid state on failure.
    pub fn integrate(
        &self,
        field: &dyn VectorField,
        z0: &StateVector,
        n_steps: usize,
    ) -> std::result::Result<StateVector, StepFailure> {
        let mut z = z0.clone();
        for step in 0..n_steps {
            z = self.step(field, &z).map_err(|error| StepFailure {
                step,
                time: step as f64 * self.dt,
                last_valid: z.clone(),
                error,
            })?;
        }
        Ok(z)
    }
}

/// Raised when a step fails; `step` is the index of the step that failed and
/// `last_valid` the state at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub time: f64,
    pub last_valid: StateVector,
    pub error: Error,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} (t = {}) failed: {}", self.step, self.time, self.error)
    }
}

impl std::error::Error for StepFailure {}

/// Sampled values of watched functionals along a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[i][s]` is functional `i` at sample `s`.
    pub values: Vec<Vec<f64>>,
}

impl DiagnosticSeries {
    pub fn new(labels: Vec<String>) -> Self {
        let values = vec![Vec::new(); labels.len()];
        Self { times: Vec::new(), labels, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, sample: Vec<f64>) -> Result<()> {
        if sample.len() != self.labels.len() {
            return Err(Error::LengthMismatch { expected: self.labels.len(), found: sample.len() });
        }
        if self.times.last().is_some_and(|&last| t <= last) {
            return Err(Error::InvalidParameter(format!("sample time {t} is not increasing")));
        }
        self.times.push(t);
        for (column, v) in self.values.iter_mut().zip(sample) {
            column.push(v);
        }
        Ok(())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn initial(&self, i: usize) -> Option<f64> {
        self.values.get(i)?.first().copied()
    }

    pub fn last(&self, i: usize) -> Option<f64> {
        self.values.get(i)?.last().copied()
    }

    /// `max_s |v_s − v_0|`
    pub fn max_abs_drift(&self, i: usize) -> f64 {
        let col = &self.values[i];
        col.first().map_or(0.0, |&v0| col.iter().fold(0.0, |m, v| m.max((v - v0).abs())))
    }

    /// `max_s |v_s − v_0| / |v_0|`, or the absolute drift when `v_0 = 0`.
    pub fn max_relative_drift(&self, i: usize) -> f64 {
        let abs = self.max_abs_drift(i);
        match self.initial(i) {
            Some(v0) if v0 != 0.0 => abs / v0.abs(),
            _ => abs,
        }
    }

    /// `|v_end − v_0|`
    pub fn final_abs_drift(&self, i: usize) -> f64 {
        match (self.initial(i), self.last(i)) {
            (Some(a), Some(b)) => (b - a).abs(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub series: DiagnosticSeries,
    pub final_state: StateVector,
    pub steps: usize,
}

/// A failed run; `series` holds every sample taken before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub series: DiagnosticSeries,
    pub failure: StepFailure,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} samples", self.failure, self.series.len())
    }
}

impl std::error::Error for RunFailure {}

/// Number of steps of size `dt` that reach `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must be positive and finite")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

fn sample(watch: &[&dyn Functional], z: &StateVector) -> Result<Vec<f64>> {
    watch.iter().map(|f| f.value(z)).collect()
}

/// Integrates to `t_end`, sampling `watch` at `t = 0`, every `output_every`
/// steps and at the final step.
pub fn run_and_record(
    integ: &Integrator,
    field: &dyn VectorField,
    z0: &StateVector,
    t_end: f64,
    output_every: usize,
    watch: &[&dyn Functional],
) -> std::result::Result<Run, Box<RunFailure>> {
    run_and_record_observed(integ, field, z0, t_end, output_every, watch, &mut |_, _| {})
}

/// [`run_and_record`] that also hands every accepted state to `observer`
/// together with its step number (1-based).
pub fn run_and_record_observed(
    integ: &Integrator,
    field: &dyn VectorField,
    z0: &StateVector,
    t_end: f64,
    output_every: usize,
    watch: &[&dyn Functional],
    observer: &mut dyn FnMut(usize, &StateVector),
) -> std::result::Result<Run, Box<RunFailure>> {
    let labels = watch.iter().map(|f| f.label().to_string()).collect();
    let mut series = DiagnosticSeries::new(labels);
    let fail = |series: DiagnosticSeries, step: usize, last_valid: &StateVector, error: Error| {
        Box::new(RunFailure {
            series,
            failure: StepFailure { step, time: step as f64 * integ.dt(), last_valid: last_valid.clone(), error },
        })
    };
    let n_steps = match step_count(t_end, integ.dt()) {
        Ok(n) => n,
        Err(e) => return Err(fail(series, 0, z0, e)),
    };
    if output_every == 0 {
        let e = Error::InvalidParameter("output interval must be at least one step".into());
        return Err(fail(series, 0, z0, e));
    }
    let record = |series: &mut DiagnosticSeries, step: usize, z: &StateVector| -> Result<()> {
        let values = sample(watch, z)?;
        series.push(step as f64 * integ.dt(), values)
    };
    if let Err(e) = record(&mut series, 0, z0) {
        return Err(fail(series, 0, z0, e));
    }
    let mut z = z0.clone();
    for step in 0..n_steps {
        let next = match integ.step(field, &z) {
            Ok(next) => next,
            Err(e) => return Err(fail(series, step, &z, e)),
        };
        let done = step + 1;
        observer(done, &next);
        if done % output_every == 0 || done == n_steps {
            if let Err(e) = record(&mut series, done, &next) {
                return Err(fail(series, step, &z, e));
            }
        }
        z = next;
    }
    Ok(Run { series, final_state: z, steps: n_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finitedim::{FiniteOperator, Polynomial};

    fn harmonic() -> HamiltonianFlow {
        HamiltonianFlow::new(Arc::new(FiniteOperator::Canonical { half_dim: 1 }), Arc::new(Polynomial::planar_energy()))
    }

    #[test]
    fn zero_field_leaves_state_bitwise() {
        let z = StateVector::FiniteDim(vec![0.1234567, -7.5e-3]);
        let zero = FnField(|z: &StateVector| Ok(z.scale(0.0)));
        for scheme in [Scheme::Rk4, Scheme::Midpoint] {
            let out = Integrator::new(scheme, 0.1).unwrap().integrate(&zero, &z, 10).unwrap();
            assert_eq!(out, z);
        }
    }

    #[test]
    fn rejects_bad_dt_and_unsplit_if_rk4() {
        assert!(Integrator::rk4(0.0).is_err());
        assert!(Integrator::rk4(-0.1).is_err());
        assert!(Integrator::rk4(f64::NAN).is_err());
        let z = StateVector::FiniteDim(vec![1.0, 0.0]);
        let ifrk = Integrator::new(Scheme::IfRk4, 0.1).unwrap();
        assert!(matches!(ifrk.step(&harmonic(), &z), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rk4_harmonic_order() {
        // exact solution: rotation, z(t) = (cos t, −sin t) from (1, 0)
        let z0 = StateVector::FiniteDim(vec![1.0, 0.0]);
        let period = 2.0 * std::f64::consts::PI;
        let errors = |n: usize| {
            let dt = period / n as f64;
            let z = Integrator::rk4(dt).unwrap().integrate(&harmonic(), &z0, n).unwrap();
            let StateVector::FiniteDim(p) = z else { unreachable!() };
            let traj = ((p[0] - 1.0).powi(2) + p[1].powi(2)).sqrt();
            let energy = (0.5 * (p[0] * p[0] + p[1] * p[1]) - 0.5).abs();
            (traj, energy)
        };
        let (t1, e1) = errors(100);
        let (t2, e2) = errors(200);
        assert!((14.0..18.0).contains(&(t1 / t2)), "trajectory ratio {}", t1 / t2);
        // RK4 energy error on a linear rotation is O(dt⁵) per period
        assert!((28.0..36.0).contains(&(e1 / e2)), "energy ratio {}", e1 / e2);
    }

    #[test]
    fn midpoint_is_second_order() {
        let z0 = StateVector::FiniteDim(vec![1.0, 0.0]);
        let err = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let z = Integrator::new(Scheme::Midpoint, dt).unwrap().integrate(&harmonic(), &z0, n).unwrap();
            z.max_abs_diff(&StateVector::FiniteDim(vec![1f64.cos(), -1f64.sin()])).unwrap()
        };
        let ratio = err(0.01) / err(0.005);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn singular_plane_orbit_matches_fine_reference() {
        let flow = HamiltonianFlow::new(Arc::new(FiniteOperator::SingularCanonical), Arc::new(Polynomial::planar_energy()));
        let z0 = StateVector::FiniteDim(vec![1.0, 0.0]);
        let coarse = Integrator::rk4(1e-2).unwrap().integrate(&flow, &z0, 100).unwrap();
        let fine = Integrator::rk4(1e-4).unwrap().integrate(&flow, &z0, 10_000).unwrap();
        assert!(coarse.max_abs_diff(&fine).unwrap() <= 1e-8);
    }

    #[test]
    fn nan_guard_reports_last_valid_state() {
        let blow = FnField(|z: &StateVector| {
            let StateVector::FiniteDim(p) = z else { unreachable!() };
            Ok(StateVector::FiniteDim(vec![if p[0] > 2.5 { f64::INFINITY } else { 1.0 }]))
        });
        let z0 = StateVector::FiniteDim(vec![0.0]);
        let failure = Integrator::new(Scheme::Midpoint, 1.0).unwrap().integrate(&blow, &z0, 10).unwrap_err();
        assert_eq!(failure.step, 3);
        assert_eq!(failure.last_valid, StateVector::FiniteDim(vec![3.0]));
        assert!(matches!(failure.error, Error::NonFinite { .. }));

        let watch = Polynomial::coordinate(1, 0);
        let err = run_and_record(&Integrator::new(Scheme::Midpoint, 1.0).unwrap(), &blow, &z0, 10.0, 1, &[&watch])
            .unwrap_err();
        assert_eq!(err.series.times, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(err.failure.step, 3);
    }

    #[test]
    fn series_sampling_and_drifts() {
        let z0 = StateVector::FiniteDim(vec![1.0, 0.0]);
        let integ = Integrator::rk4(0.01).unwrap();
        let energy = Polynomial::planar_energy();
        let run = run_and_record(&integ, &harmonic(), &z0, 1.0, 30, &[&energy]).unwrap();
        assert_eq!(run.steps, 100);
        assert_eq!(run.series.times, vec![0.0, 0.3, 0.6, 0.9, 1.0].iter().map(|t| (t * 100.0f64).round() * 0.01).collect::<Vec<_>>());
        assert!(run.series.max_relative_drift(0) <= 1e-10);
        let empty = run_and_record(&integ, &harmonic(), &z0, 1.0, 50, &[]).unwrap();
        assert_eq!(empty.series.times.len(), 3);
        assert!(empty.series.values.is_empty());
        assert!(run_and_record(&integ, &harmonic(), &z0, 0.0, 1, &[]).is_err());
        assert!(run_and_record(&integ, &harmonic(), &z0, 1.005, 1, &[]).is_err());
    }

    #[test]
    fn observer_sees_every_step() {
        let z0 = StateVector::FiniteDim(vec![1.0, 0.0]);
        let integ = Integrator::rk4(0.1).unwrap();
        let mut seen = Vec::new();
        let run = run_and_record_observed(&integ, &harmonic(), &z0, 1.0, 5, &[], &mut |k, z| seen.push((k, z.clone())))
            .unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        assert_eq!(seen.last().unwrap().1, run.final_state);
    }

    #[test]
    fn series_rejects_non_increasing_times() {
        let mut s = DiagnosticSeries::new(vec!["a".into()]);
        s.push(0.0, vec![1.0]).unwrap();
        assert!(s.push(0.0, vec![1.0]).is_err());
        assert!(s.push(1.0, vec![]).is_err());
        s.push(1.0, vec![0.0]).unwrap();
        assert_eq!(s.max_relative_drift(0), 1.0);
        let mut z = DiagnosticSeries::new(vec!["zero".into()]);
        z.push(0.0, vec![0.0]).unwrap();
        z.push(1.0, vec![2e-3]).unwrap();
        assert_eq!(z.max_relative_drift(0), 2e-3);
    }
}
