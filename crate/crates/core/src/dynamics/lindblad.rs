//! Lindblad master equation on the column-stacked density matrix.

use std::collections::BTreeMap;

use super::{run_generator, Diagnostics, DynamicsError, PropagationConfig, Result, Trajectory};
use crate::linalg::{self, cr, kron, CMatrix, C64};
use crate::operators::{embed, local, HilbertSpace, Operator, ParametricOperator, QuantumState};

/// Coherence times of one subsystem in seconds. `f64::INFINITY` disables a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Γ⁻ = 1/T1
    pub relaxation: f64,
    /// Γᶻ = (1/T2 - 1/(2 T1)) / 2
    pub dephasing: f64,
}

fn inv(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / t
    }
}

impl Coherence {
    pub fn new(t1: f64, t2: f64) -> Self {
        Self { t1, t2 }
    }

    pub fn ideal() -> Self {
        Self {
            t1: f64::INFINITY,
            t2: f64::INFINITY,
        }
    }

    pub fn rates(&self) -> Result<Rates> {
        if !(self.t1 > 0.0 && self.t2 > 0.0) || self.t1.is_nan() || self.t2.is_nan() {
            return Err(DynamicsError::Config(format!(
                "coherence times must be positive, got T1 = {:e}, T2 = {:e}",
                self.t1, self.t2
            )));
        }
        if self.t2 > 2.0 * self.t1 {
            return Err(DynamicsError::Config(format!(
                "T2 = {:e} s exceeds 2 T1 = {:e} s",
                self.t2,
                2.0 * self.t1
            )));
        }
        Ok(Rates {
            relaxation: inv(self.t1),
            dephasing: 0.5 * (inv(self.t2) - 0.5 * inv(self.t1)),
        })
    }
}

/// Per-subsystem coherence times, keyed by subsystem label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LindbladSpec {
    pub channels: BTreeMap<String, Coherence>,
}

/// `rate · L[C]` with `L[C]ρ = C ρ C† - {C†C, ρ}/2`.
#[derive(Debug, Clone)]
pub struct CollapseOperator {
    pub operator: CMatrix,
    pub rate: f64,
}

impl LindbladSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: &str, t1: f64, t2: f64) -> Result<Self> {
        Coherence::new(t1, t2).rates()?;
        self.channels
            .insert(label.to_string(), Coherence::new(t1, t2));
        Ok(self)
    }

    pub fn rates(&self, label: &str) -> Result<Option<Rates>> {
        self.channels.get(label).map(|c| c.rates()).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.channels.values() {
            c.rates()?;
        }
        Ok(())
    }

    /// Relaxation `a_s` and dephasing `a_s† a_s` at each subsystem's dimension.
    pub fn collapse_operators(&self, space: &HilbertSpace) -> Result<Vec<CollapseOperator>> {
        let mut out = Vec::new();
        for (label, coh) in &self.channels {
            let r = coh.rates()?;
            let d = space.dim_of(label)?;
            if r.relaxation > 0.0 {
                out.push(CollapseOperator {
                    operator: embed(&local::lowering(d), label, space)?.into_matrix(),
                    rate: r.relaxation,
                });
            }
            if r.dephasing > 0.0 {
                out.push(CollapseOperator {
                    operator: embed(&local::number(d), label, space)?.into_matrix(),
                    rate: r.dephasing,
                });
            }
        }
        Ok(out)
    }
}

fn superoperator_pieces(hpieces: &[CMatrix], channels: &[CollapseOperator]) -> Vec<CMatrix> {
    let n = hpieces.first().map(|m| m.nrows()).unwrap_or(0);
    let id = CMatrix::identity(n, n);
    let mut out: Vec<CMatrix> = hpieces
        .iter()
        .map(|m| (kron(&id, m) - kron(&m.transpose(), &id)) * C64::new(0.0, -1.0))
        .collect();
    let mut diss = CMatrix::zeros(n * n, n * n);
    for ch in channels {
        let c = &ch.operator;
        let cdc = c.adjoint() * c;
        diss += (kron(&c.conjugate(), c)
            - kron(&id, &cdc) * cr(0.5)
            - kron(&cdc.transpose(), &id) * cr(0.5))
            * cr(ch.rate);
    }
    out.push(diss);
    out
}

/// Lindblad evolution with collapse operators built from `spec`.
pub fn propagate_lindblad<H: ParametricOperator + ?Sized>(
    h: &H,
    rho0: &QuantumState,
    spec: &LindbladSpec,
    cfg: &PropagationConfig,
    observables: &[(&str, &Operator)],
) -> Result<Trajectory> {
    let channels = spec.collapse_operators(h.space())?;
    propagate_lindblad_channels(h, rho0, &channels, cfg, observables)
}

pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const HERMITICITY_TOLERANCE: f64 = 1e-9;
pub const POSITIVITY_FLOOR: f64 = -1e-7;

/// Lindblad evolution with explicit collapse operators.
pub fn propagate_lindblad_channels<H: ParametricOperator + ?Sized>(
    h: &H,
    rho0: &QuantumState,
    channels: &[CollapseOperator],
    cfg: &PropagationConfig,
    observables: &[(&str, &Operator)],
) -> Result<Trajectory> {
    let space = h.space().clone();
    if rho0.space() != &space {
        return Err(DynamicsError::Config(
            "initial state and Hamiltonian live on different spaces".into(),
        ));
    }
    let n = space.dim();
    for ch in channels {
        if ch.operator.nrows() != n || ch.operator.ncols() != n || !(ch.rate >= 0.0) {
            return Err(DynamicsError::Config(
                "collapse operator has wrong shape or negative rate".into(),
            ));
        }
    }
    let pieces = superoperator_pieces(h.pieces(), channels);
    let k = h.pieces().len();
    let coeffs = |t: f64, out: &mut [C64]| {
        h.coefficients(t, &mut out[..k]);
        out[k] = cr(1.0);
    };
    let rho = rho0.density_matrix();
    let initial = CMatrix::from_column_slice(n * n, 1, rho.as_slice());
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut obs: BTreeMap<String, Vec<f64>> = observables
        .iter()
        .map(|(name, _)| (name.to_string(), Vec::new()))
        .collect();
    let mut diag = Diagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut record = |_k: usize, t: f64, b: &CMatrix| -> Result<()> {
        let r = CMatrix::from_column_slice(n, n, b.as_slice());
        let tr = linalg::trace(&r);
        let tdrift = (tr - cr(1.0)).norm();
        let hdrift = linalg::max_abs(&(&r - r.adjoint()));
        if tdrift > TRACE_TOLERANCE {
            return Err(DynamicsError::IntegratorFailure {
                time: t,
                reason: format!("trace drift {tdrift:.3e}"),
            });
        }
        if hdrift > HERMITICITY_TOLERANCE {
            return Err(DynamicsError::IntegratorFailure {
                time: t,
                reason: format!("hermiticity drift {hdrift:.3e}"),
            });
        }
        let herm = (&r + r.adjoint()) * cr(0.5);
        let min_ev = linalg::eigvalsh(&herm)[0];
        if min_ev < POSITIVITY_FLOOR {
            return Err(DynamicsError::PositivityBreach {
                time: t,
                min_eigenvalue: min_ev,
            });
        }
        diag.norm_drift = diag.norm_drift.max(tdrift);
        diag.hermiticity_drift = diag.hermiticity_drift.max(hdrift);
        diag.min_eigenvalue = diag.min_eigenvalue.min(min_ev);
        times.push(t);
        for (name, op) in observables {
            let e = linalg::trace(&(op.matrix() * &herm));
            obs.get_mut(*name).expect("registered").push(e.re);
        }
        if cfg.keep_states {
            states.push(QuantumState::mixed(space.clone(), normalise(herm))?);
        }
        Ok(())
    };
    let (fin, steps) = run_generator(&pieces, cr(1.0), &coeffs, initial, cfg, &mut record)?;
    let r = CMatrix::from_column_slice(n, n, fin.as_slice());
    let final_state = QuantumState::mixed(space, normalise((&r + r.adjoint()) * cr(0.5)))?;
    diag.steps = steps;
    Ok(Trajectory {
        times,
        states,
        observables: obs,
        final_state,
        diagnostics: diag,
    })
}

/// Clips rounding-level negative eigenvalues and renormalises.
fn normalise(r: CMatrix) -> CMatrix {
    let r = if linalg::eigvalsh(&r)[0] < 0.0 {
        let (vals, vecs) = linalg::eigh(&r);
        let d = CMatrix::from_diagonal(&crate::CVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| cr(v.max(0.0))),
        ));
        &vecs * d * vecs.adjoint()
    } else {
        r
    };
    let tr = linalg::trace(&r).re;
    r * cr(1.0 / tr)
}
