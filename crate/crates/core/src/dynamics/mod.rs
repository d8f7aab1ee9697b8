//! Closed and open time propagation plus measurement utilities.

mod calibrate;
mod fidelity;
mod gate;
mod lindblad;
mod spectral;
mod stepper;

pub use calibrate::{
    calibrate_effective_frequencies, transition_contrast, Calibration, CalibrationWindow,
};
pub use fidelity::{average_gate_fidelity, state_fidelity, xx_gate, GateFidelity};
pub use gate::{
    run_gate_benchmark, sample_dressed_columns, sample_dressed_maps, GateBenchmark, GateRunConfig,
    GateSamples, IsingCondition,
};
pub use lindblad::{
    propagate_lindblad, propagate_lindblad_channels, Coherence, CollapseOperator, LindbladSpec,
    Rates,
};
pub use spectral::{extract_oscillation_frequency, OscillationFit};
pub use stepper::{Cf4Stepper, SparseGenerator};

use std::collections::BTreeMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::device::DeviceError;
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::operators::{Operator, OperatorError, ParametricOperator, QuantumState};
use crate::swt::SwtError;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid propagation setup: {0}")]
    Config(String),
    #[error("integrator failure at t = {time:.6e} s: {reason}")]
    IntegratorFailure { time: f64, reason: String },
    #[error("positivity breach at t = {time:.6e} s: smallest eigenvalue {min_eigenvalue:.3e}")]
    PositivityBreach { time: f64, min_eigenvalue: f64 },
    #[error("frequency extraction failed: {0}")]
    ExtractionFailure(String),
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("leakage {leakage:.3e} exceeds threshold {threshold:.3e} at t = {time:.6e} s")]
    Leakage {
        time: f64,
        leakage: f64,
        threshold: f64,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Swt(#[from] SwtError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Only one integrator is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Fourth-order commutator-free Magnus, two exponentials per step.
    #[default]
    CommutatorFree4,
}

/// Points per period of the fastest frequency the step must resolve.
pub const MIN_POINTS_PER_PERIOD: f64 = 20.0;
pub const DEFAULT_STEP: f64 = 1e-12;
pub const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    pub t_final: f64,
    pub step: f64,
    pub method: Method,
    /// Record every `sample_stride` steps (the final time is always recorded).
    pub sample_stride: usize,
    /// Keep the sampled states in the trajectory.
    pub keep_states: bool,
    pub norm_tolerance: f64,
}

impl PropagationConfig {
    pub fn new(t_final: f64, step: f64) -> Self {
        Self {
            t_final,
            step,
            method: Method::CommutatorFree4,
            sample_stride: 1,
            keep_states: true,
            norm_tolerance: NORM_TOLERANCE,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride.max(1);
        self
    }

    /// Stride chosen so samples are roughly `dt` apart.
    pub fn with_sample_interval(mut self, dt: f64) -> Self {
        self.sample_stride = ((dt / self.step).round() as usize).max(1);
        self
    }

    pub fn without_states(mut self) -> Self {
        self.keep_states = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(DynamicsError::Config(format!(
                "t_final must be >= 0, got {}",
                self.t_final
            )));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(DynamicsError::Config(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Rejects steps coarser than `(2π/ω_max)/20`.
    pub fn check_resolution(&self, omega_max: f64) -> Result<()> {
        if omega_max > 0.0 && self.step > 2.0 * PI / omega_max / MIN_POINTS_PER_PERIOD {
            return Err(DynamicsError::Config(format!(
                "step {:.3e} s does not resolve the fastest frequency {:.3e} rad/s",
                self.step, omega_max
            )));
        }
        Ok(())
    }

    /// Number of steps and the actual (uniform) step landing on `t_final`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.step - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            (0, 0.0)
        } else {
            (n, self.t_final / n as f64)
        }
    }
}

/// Largest transition frequency of `H(t)` at the given times.
pub fn spectral_spread<H: ParametricOperator + ?Sized>(h: &H, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| {
            let m = h.at(t).into_matrix();
            let herm = (&m + m.adjoint()) * linalg::cr(0.5);
            let ev = linalg::eigvalsh(&herm);
            ev[ev.len() - 1] - ev[0]
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub steps: usize,
    /// Max |‖ψ‖ - 1| (pure) or |Tr ρ - 1| (mixed) over the samples.
    pub norm_drift: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub final_state: QuantumState,
    pub diagnostics: Diagnostics,
}

/// Observer signature: sample index, time, current block.
pub type Observer<'a> = dyn FnMut(usize, f64, &CMatrix) -> Result<()> + 'a;

/// Drives `block' = prefactor · Σ c_k(t) M_k · block` over the configured
/// horizon, calling `observe` at t = 0, every stride, and at the end.
pub(crate) fn run_generator(
    pieces: &[CMatrix],
    prefactor: C64,
    coeffs: &dyn Fn(f64, &mut [C64]),
    mut block: CMatrix,
    cfg: &PropagationConfig,
    observe: &mut Observer<'_>,
) -> Result<(CMatrix, usize)> {
    cfg.validate()?;
    let gen = SparseGenerator::new(pieces, prefactor);
    if gen.dim() != block.nrows() {
        return Err(DynamicsError::Config(format!(
            "state dimension {} does not match generator dimension {}",
            block.nrows(),
            gen.dim()
        )));
    }
    let mut stepper = Cf4Stepper::new(gen);
    let (n, h) = cfg.steps();
    let mut sample = 0;
    observe(sample, 0.0, &block)?;
    for s in 0..n {
        let t = s as f64 * h;
        stepper.step(coeffs, t, h, &mut block);
        let done = s + 1 == n;
        if (s + 1) % cfg.sample_stride == 0 || done {
            let t_now = if done {
                cfg.t_final
            } else {
                (s + 1) as f64 * h
            };
            if block.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(DynamicsError::IntegratorFailure {
                    time: t_now,
                    reason: "non-finite state".into(),
                });
            }
            sample += 1;
            observe(sample, t_now, &block)?;
        }
    }
    Ok((block, n))
}

/// Propagates the columns of `initial` under `-i H(t)`.
pub fn propagate_block<H: ParametricOperator + ?Sized>(
    h: &H,
    initial: CMatrix,
    cfg: &PropagationConfig,
    observe: &mut Observer<'_>,
) -> Result<CMatrix> {
    let norms0: Vec<f64> = initial.column_iter().map(|c| c.norm()).collect();
    let tol = cfg.norm_tolerance;
    let mut wrapped = |k: usize, t: f64, b: &CMatrix| -> Result<()> {
        for (col, n0) in b.column_iter().zip(&norms0) {
            let drift = (col.norm() - n0).abs();
            if drift > tol * n0.max(1.0) {
                return Err(DynamicsError::IntegratorFailure {
                    time: t,
                    reason: format!("norm drift {drift:.3e} exceeds {tol:.1e}"),
                });
            }
        }
        observe(k, t, b)
    };
    let coeffs = |t: f64, out: &mut [C64]| h.coefficients(t, out);
    let (b, _) = run_generator(
        h.pieces(),
        C64::new(0.0, -1.0),
        &coeffs,
        initial,
        cfg,
        &mut wrapped,
    )?;
    Ok(b)
}

fn check_hermitian<H: ParametricOperator + ?Sized>(h: &H, cfg: &PropagationConfig) -> Result<()> {
    for t in [0.0, cfg.t_final] {
        let err = h.at(t).hermiticity_error();
        if err > 1e-12 {
            return Err(DynamicsError::Config(format!(
                "Hamiltonian is not hermitian at t = {t:.3e} s (error {err:.3e})"
            )));
        }
    }
    Ok(())
}

/// Unitary evolution of a pure state with optional expectation-value records.
pub fn propagate_schrodinger<H: ParametricOperator + ?Sized>(
    h: &H,
    psi0: &QuantumState,
    cfg: &PropagationConfig,
    observables: &[(&str, &Operator)],
) -> Result<Trajectory> {
    let psi = psi0
        .as_vector()
        .ok_or_else(|| DynamicsError::Config("initial state must be pure".into()))?
        .clone();
    if psi0.space() != h.space() {
        return Err(DynamicsError::Config(
            "initial state and Hamiltonian live on different spaces".into(),
        ));
    }
    for (name, op) in observables {
        if op.space() != h.space() {
            return Err(DynamicsError::Config(format!(
                "observable {name} lives on a different space"
            )));
        }
    }
    check_hermitian(h, cfg)?;
    let space = h.space().clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut obs: BTreeMap<String, Vec<f64>> = observables
        .iter()
        .map(|(n, _)| (n.to_string(), Vec::new()))
        .collect();
    let mut drift = 0.0f64;
    let n = psi.len();
    let initial = CMatrix::from_column_slice(n, 1, psi.as_slice());
    let mut record = |_k: usize, t: f64, b: &CMatrix| -> Result<()> {
        let v = CVector::from_column_slice(b.as_slice());
        drift = drift.max((v.norm() - 1.0).abs());
        times.push(t);
        for (name, op) in observables {
            let e = v.dotc(&(op.matrix() * &v));
            obs.get_mut(*name).expect("registered").push(e.re);
        }
        if cfg.keep_states {
            states.push(QuantumState::pure_normalized(space.clone(), v)?);
        }
        Ok(())
    };
    let final_block = propagate_block(h, initial, cfg, &mut record)?;
    let final_state =
        QuantumState::pure_normalized(space, CVector::from_column_slice(final_block.as_slice()))?;
    let (steps, _) = cfg.steps();
    Ok(Trajectory {
        times,
        states,
        observables: obs,
        final_state,
        diagnostics: Diagnostics {
            steps,
            norm_drift: drift,
            hermiticity_drift: 0.0,
            min_eigenvalue: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr};
    use crate::operators::{local, FnOperator, HilbertSpace, StaticOperator};

    fn qubit() -> HilbertSpace {
        HilbertSpace::new([("q", 2)]).unwrap()
    }

    #[test]
    fn constant_diagonal_phases() {
        let space = HilbertSpace::new([("a", 3)]).unwrap();
        let e = [1.3e9, -0.4e9, 2.2e9];
        let h = Operator::new(
            space.clone(),
            CMatrix::from_diagonal(&CVector::from_iterator(3, e.iter().map(|&x| cr(x)))),
        )
        .unwrap();
        let psi = CVector::from_vec(vec![cr(0.6), c(0.0, 0.48), cr(0.64)]);
        let st = QuantumState::pure(space, psi.clone()).unwrap();
        let t = 3.7e-9;
        let cfg = PropagationConfig::new(t, 1e-12).without_states();
        let traj = propagate_schrodinger(&StaticOperator::new(h), &st, &cfg, &[]).unwrap();
        let out = traj.final_state.as_vector().unwrap();
        for k in 0..3 {
            let exact = psi[k] * C64::from_polar(1.0, -e[k] * t);
            assert!(
                (out[k] - exact).norm() < 1e-12,
                "{k}: {}",
                (out[k] - exact).norm()
            );
        }
    }

    #[test]
    fn rabi_oscillation_matches_closed_form() {
        let f = 2.0 * PI * 20e6;
        let h = Operator::new(qubit(), local::pauli_x() * cr(f / 2.0)).unwrap();
        let st = QuantumState::basis(&qubit(), &[0]).unwrap();
        let p1 = Operator::new(qubit(), local::number(2)).unwrap();
        let cfg = PropagationConfig::new(100e-9, 1e-11).with_stride(50);
        let traj =
            propagate_schrodinger(&StaticOperator::new(h), &st, &cfg, &[("p1", &p1)]).unwrap();
        for (t, p) in traj.times.iter().zip(&traj.observables["p1"]) {
            assert!((p - (f * t / 2.0).sin().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn driven_qubit_step_halving_is_fourth_order() {
        let space = qubit();
        let pieces = vec![local::pauli_z(), local::pauli_x()];
        let w = 2.0 * PI * 1e9;
        let h = FnOperator::new(space.clone(), pieces, move |t, out| {
            out[0] = cr(-w / 2.0);
            out[1] = cr(0.3 * w * (w * t).cos());
        });
        let st = QuantumState::basis(&space, &[0]).unwrap();
        let run = |step: f64| {
            let cfg = PropagationConfig::new(5e-9, step).without_states();
            propagate_schrodinger(&h, &st, &cfg, &[])
                .unwrap()
                .final_state
                .as_vector()
                .unwrap()
                .clone()
        };
        let a = run(40e-12);
        let b = run(20e-12);
        let r = run(1e-12);
        let ratio = (&a - &r).norm() / (&b - &r).norm();
        assert!((10.0..22.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_config_and_coarse_steps() {
        assert!(PropagationConfig::new(-1.0, 1e-12).validate().is_err());
        assert!(PropagationConfig::new(1.0, 0.0).validate().is_err());
        let cfg = PropagationConfig::new(1e-9, 1e-12);
        assert!(cfg.check_resolution(2.0 * PI * 10e9).is_ok());
        assert!(cfg.check_resolution(2.0 * PI * 100e9).is_err());
    }

    #[test]
    fn steps_land_on_final_time() {
        let (n, h) = PropagationConfig::new(1e-9, 3e-13).steps();
        assert_eq!(n, 3334);
        assert!((n as f64 * h - 1e-9).abs() < 1e-24);
        assert_eq!(PropagationConfig::new(0.0, 1e-12).steps().0, 0);
    }
}
