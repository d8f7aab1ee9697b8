//! Adiabatic ground-state preparation with parametric couplings.

mod molecule;
mod run;
mod schedule;

pub use molecule::{MoleculeRow, MoleculeTable, CHEMICAL_ACCURACY_MHA};
pub use run::{
    chemical_accuracy_crossing, coherence_sweep, effective_collapse_operators, gap_series,
    run_protocol, scan_optimal_runtime, AnnealResult, CoherenceRow, CouplerVariant, EffectiveModel,
    GapSeries, Mode, ModelChoice, RunOptions, RuntimeScan,
};
pub use schedule::{build_schedule, EffectiveTrack, ProtocolSchedule, ScheduleOptions};

use thiserror::Error;

use crate::device::DeviceError;
use crate::dynamics::DynamicsError;
use crate::linalg::{self, cr, kron, CMatrix};
use crate::operators::{local, OperatorError, QuantumState};
use crate::swt::SwtError;

#[derive(Debug, Error)]
pub enum AdiabaticError {
    #[error("invalid protocol: {0}")]
    Config(String),
    #[error("molecule table: {0}")]
    Table(String),
    #[error(transparent)]
    Swt(#[from] SwtError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

pub type Result<T> = std::result::Result<T, AdiabaticError>;

/// `Σ_i (a_i σz_i + b_i σx_i + c_i σy_i) + J_x σx σx + J_y σy σy` on two qubits (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetHamiltonian {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
    pub jx: f64,
    pub jy: f64,
}

/// Two-qubit Pauli products in `q1 ⊗ q2` order.
fn pauli2(p1: &CMatrix, p2: &CMatrix) -> CMatrix {
    kron(p1, p2)
}

fn single(j: usize, p: &CMatrix) -> CMatrix {
    let id = local::identity(2);
    if j == 0 {
        kron(p, &id)
    } else {
        kron(&id, p)
    }
}

impl TargetHamiltonian {
    /// `A_y (σy_1 + σy_2) + J_x σxσx + J_y σyσy`.
    pub fn h2(ay: f64, jx: f64, jy: f64) -> Self {
        Self {
            a: [0.0; 2],
            b: [0.0; 2],
            c: [ay, ay],
            jx,
            jy,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    pub fn matrix(&self) -> CMatrix {
        let mut h = pauli2(&local::pauli_x(), &local::pauli_x()) * cr(self.jx)
            + pauli2(&local::pauli_y(), &local::pauli_y()) * cr(self.jy);
        for j in 0..2 {
            h += single(j, &local::pauli_z()) * cr(self.a[j])
                + single(j, &local::pauli_x()) * cr(self.b[j])
                + single(j, &local::pauli_y()) * cr(self.c[j]);
        }
        h
    }

    /// Ground energy, ground state and first excitation gap of the 4×4 matrix.
    pub fn ground(&self) -> (f64, crate::CVector, f64) {
        let (vals, vecs) = linalg::eigh(&self.matrix());
        (vals[0], vecs.column(0).into_owned(), vals[1] - vals[0])
    }

    /// Projector onto the ground eigenspace (degeneracy within `tol` rad/s).
    pub fn ground_projector(&self, tol: f64) -> CMatrix {
        let (vals, vecs) = linalg::eigh(&self.matrix());
        let mut p = CMatrix::zeros(4, 4);
        for k in 0..4 {
            if vals[k] - vals[0] <= tol {
                let v = vecs.column(k);
                p += v * v.adjoint();
            }
        }
        p
    }

    /// Energy estimator from Pauli expectation values of a two-qubit state.
    pub fn energy(&self, state: &QuantumState) -> Result<f64> {
        if state.space().dims() != vec![2, 2] {
            return Err(AdiabaticError::Config(
                "energy needs a two-qubit state".into(),
            ));
        }
        let rho = state.density_matrix();
        let ev = |m: CMatrix| linalg::trace(&(m * &rho)).re;
        let mut e = self.jx * ev(pauli2(&local::pauli_x(), &local::pauli_x()))
            + self.jy * ev(pauli2(&local::pauli_y(), &local::pauli_y()));
        for j in 0..2 {
            if self.a[j] != 0.0 {
                e += self.a[j] * ev(single(j, &local::pauli_z()));
            }
            if self.b[j] != 0.0 {
                e += self.b[j] * ev(single(j, &local::pauli_x()));
            }
            if self.c[j] != 0.0 {
                e += self.c[j] * ev(single(j, &local::pauli_y()));
            }
        }
        Ok(e)
    }

    /// Drive amplitude and phase giving `f/2 (cos φ σx - sin φ σy) = (b σx + c σy)/2`.
    pub fn drive_settings(&self, j: usize) -> (f64, f64) {
        let (b, cc) = (self.b[j], self.c[j]);
        if b == 0.0 {
            (cc, -std::f64::consts::FRAC_PI_2)
        } else {
            (b.hypot(cc), (-cc).atan2(b))
        }
    }
}

/// Fidelity of a two-qubit state with the target ground state; population of
/// the ground eigenspace when it is degenerate.
pub fn ground_fidelity(target: &TargetHamiltonian, state: &QuantumState) -> Result<f64> {
    let (_, psi, gap) = target.ground();
    let scale = target
        .matrix()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let rho = state.density_matrix();
    let f = if gap > 1e-9 * scale {
        psi.dotc(&(&rho * &psi)).re
    } else {
        linalg::trace(&(target.ground_projector(1e-9 * scale) * &rho)).re
    };
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::HilbertSpace;
    use std::f64::consts::PI;

    fn two() -> HilbertSpace {
        HilbertSpace::new([("q1", 2), ("q2", 2)]).unwrap()
    }

    #[test]
    fn estimator_reproduces_ground_energy() {
        let mhz = 2.0 * PI * 1e6;
        for (ay, jx, jy) in [
            (8.0, 0.5, 0.1),
            (1.0, 0.8, 0.2),
            (-3.0, 2.0, -1.0),
            (0.0, 1.0, 1.0),
        ] {
            let t = TargetHamiltonian::h2(ay * mhz, jx * mhz, jy * mhz);
            let (e0, psi, _) = t.ground();
            let st = QuantumState::pure(two(), psi).unwrap();
            assert!((t.energy(&st).unwrap() - e0).abs() < 1e-12 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn drive_settings_match_h2_convention() {
        let t = TargetHamiltonian::h2(3.0, 0.0, 0.0);
        assert_eq!(t.drive_settings(0), (3.0, -PI / 2.0));
        let g = TargetHamiltonian {
            b: [1.0, 0.0],
            c: [1.0, 0.0],
            ..Default::default()
        };
        let (f, phi) = g.drive_settings(0);
        assert!((f - 2f64.sqrt()).abs() < 1e-15);
        assert!(((f * phi.cos()) - 1.0).abs() < 1e-12 && ((-f * phi.sin()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ground_uses_eigenspace() {
        // J_x = J_y = 0, A_y = 0 and only σz on qubit 1: twofold ground space
        let t = TargetHamiltonian {
            a: [1.0, 0.0],
            ..Default::default()
        };
        let st = QuantumState::basis(&two(), &[1, 1]).unwrap();
        assert!((ground_fidelity(&t, &st).unwrap() - 1.0).abs() < 1e-12);
        let st = QuantumState::basis(&two(), &[0, 1]).unwrap();
        assert!(ground_fidelity(&t, &st).unwrap() < 1e-12);
    }
}
