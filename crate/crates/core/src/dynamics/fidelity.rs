use super::{DynamicsError, Result};
use crate::linalg::{self, c, cr, kron, CMatrix};
use crate::operators::{local, QuantumState};

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, clamped to [0, 1].
pub fn state_fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.space().dims() != b.space().dims() {
        return Err(DynamicsError::Config(
            "fidelity between states of different spaces".into(),
        ));
    }
    let f = match (a.as_vector(), b.as_vector()) {
        (Some(x), Some(y)) => x.dotc(y).norm_sqr(),
        (Some(x), None) => x.dotc(&(b.density_matrix() * x)).re,
        (None, Some(y)) => y.dotc(&(a.density_matrix() * y)).re,
        (None, None) => {
            let s = linalg::psd_sqrt(&a.density_matrix());
            let m = &s * b.density_matrix() * &s;
            let tr: f64 = linalg::eigvalsh(&((&m + m.adjoint()) * cr(0.5)))
                .iter()
                .map(|v| v.max(0.0).sqrt())
                .sum();
            tr * tr
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// `exp(i ξ σx⊗σx / 2)`.
pub fn xx_gate(xi: f64) -> CMatrix {
    let xx = kron(&local::pauli_x(), &local::pauli_x());
    CMatrix::identity(4, 4) * cr((xi / 2.0).cos()) + xx * c(0.0, (xi / 2.0).sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateFidelity {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub max: f64,
    pub t_max: f64,
}

/// `F(t) = ¼ Σ_ψ0 |⟨ψ0| U† M(t) |ψ0⟩|²` over the computational basis, where
/// column `b` of `maps[t]` is the evolved (projected) basis state `b`.
pub fn average_gate_fidelity(
    times: &[f64],
    maps: &[CMatrix],
    target: &CMatrix,
) -> Result<GateFidelity> {
    if times.len() != maps.len() || maps.is_empty() {
        return Err(DynamicsError::Config("need one map per sample time".into()));
    }
    let d = target.nrows();
    let ud = target.adjoint();
    let mut fidelity = Vec::with_capacity(maps.len());
    for m in maps {
        if m.nrows() != d || m.ncols() != d {
            return Err(DynamicsError::Config(
                "map and target dimensions differ".into(),
            ));
        }
        let p = &ud * m;
        fidelity.push((0..d).map(|b| p[(b, b)].norm_sqr()).sum::<f64>() / d as f64);
    }
    let (imax, max) =
        fidelity
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, f)| if f > acc.1 { (i, f) } else { acc },
            );
    Ok(GateFidelity {
        times: times.to_vec(),
        fidelity,
        max,
        t_max: times[imax],
    })
}
