//! Operator algebra on small labelled tensor-product spaces.
//!
//! Subsystem order fixes the Kronecker order and levels are indexed from the
//! ground state upwards. For qubits `σz = diag(+1, -1)`, so `σz|0⟩ = +|0⟩`.

use crate::linalg::{self, c, cr, CMatrix, CVector, C64};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("subsystem `{label}` must have dimension >= 2, got {dim}")]
    InvalidDimension { label: String, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("projection onto the two-level subspace is degenerate (leakage {leakage:.3e})")]
    DegenerateProjection { leakage: f64 },
    #[error("empty subsystem selection")]
    EmptySelection,
}

pub type Result<T> = std::result::Result<T, OperatorError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace {
    subsystems: Vec<Subsystem>,
}

impl HilbertSpace {
    pub fn new<S: Into<String>>(subsystems: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut out: Vec<Subsystem> = Vec::new();
        for (label, dim) in subsystems {
            let label = label.into();
            if dim < 2 {
                return Err(OperatorError::InvalidDimension { label, dim });
            }
            if out.iter().any(|s| s.label == label) {
                return Err(OperatorError::DuplicateLabel(label));
            }
            out.push(Subsystem { label, dim });
        }
        if out.is_empty() {
            return Err(OperatorError::EmptySelection);
        }
        Ok(Self { subsystems: out })
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.subsystems.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| OperatorError::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.subsystems[self.index_of(label)?].dim)
    }

    /// Flat basis index of a product state given per-subsystem levels.
    pub fn basis_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.subsystems.len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.subsystems.len(),
                got: levels.len(),
            });
        }
        let mut idx = 0;
        for (s, &l) in self.subsystems.iter().zip(levels) {
            if l >= s.dim {
                return Err(OperatorError::DimensionMismatch {
                    expected: s.dim,
                    got: l,
                });
            }
            idx = idx * s.dim + l;
        }
        Ok(idx)
    }

    /// Inverse of [`basis_index`](Self::basis_index).
    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.subsystems.len()];
        for (k, s) in self.subsystems.iter().enumerate().rev() {
            levels[k] = index % s.dim;
            index /= s.dim;
        }
        levels
    }

    pub fn basis_state(&self, levels: &[usize]) -> Result<CVector> {
        let mut v = CVector::zeros(self.dim());
        v[self.basis_index(levels)?] = cr(1.0);
        Ok(v)
    }

    /// The space restricted to `keep`, in this space's subsystem order.
    pub fn restrict(&self, keep: &[&str]) -> Result<HilbertSpace> {
        if keep.is_empty() {
            return Err(OperatorError::EmptySelection);
        }
        for k in keep {
            self.index_of(k)?;
        }
        Ok(HilbertSpace {
            subsystems: self
                .subsystems
                .iter()
                .filter(|s| keep.contains(&s.label.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// Same labels with every subsystem truncated to two levels.
    pub fn two_level(&self) -> HilbertSpace {
        HilbertSpace {
            subsystems: self
                .subsystems
                .iter()
                .map(|s| Subsystem {
                    label: s.label.clone(),
                    dim: 2,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let n = space.dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::zeros(n, n),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * s,
        }
    }

    pub fn compose(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    fn check_same(&self, rhs: &Operator) -> Result<()> {
        if self.space != rhs.space {
            return Err(OperatorError::DimensionMismatch {
                expected: self.space.dim(),
                got: rhs.space.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateRepr {
    Pure(CVector),
    Mixed(CMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    space: HilbertSpace,
    repr: StateRepr,
}

pub const PURE_NORM_TOL: f64 = 1e-9;
pub const MIXED_TRACE_TOL: f64 = 1e-9;
pub const MIXED_HERMITIAN_TOL: f64 = 1e-10;
pub const MIXED_EIGEN_FLOOR: f64 = -1e-8;

impl QuantumState {
    pub fn pure(space: HilbertSpace, psi: CVector) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: space.dim(),
                got: psi.len(),
            });
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > PURE_NORM_TOL {
            return Err(OperatorError::InvalidState(format!(
                "norm {norm} differs from 1"
            )));
        }
        Ok(Self {
            space,
            repr: StateRepr::Pure(psi),
        })
    }

    /// Normalises `psi` before wrapping it.
    pub fn pure_normalized(space: HilbertSpace, psi: CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(OperatorError::InvalidState(
                "zero or non-finite vector".into(),
            ));
        }
        Self::pure(space, psi / cr(norm))
    }

    pub fn mixed(space: HilbertSpace, rho: CMatrix) -> Result<Self> {
        let n = space.dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(OperatorError::DimensionMismatch {
                expected: n,
                got: rho.nrows(),
            });
        }
        let tr = linalg::trace(&rho);
        if (tr - cr(1.0)).norm() > MIXED_TRACE_TOL {
            return Err(OperatorError::InvalidState(format!(
                "trace {tr} differs from 1"
            )));
        }
        let herm = linalg::hermiticity_error(&rho);
        if herm > MIXED_HERMITIAN_TOL {
            return Err(OperatorError::InvalidState(format!(
                "hermiticity error {herm:e}"
            )));
        }
        let min = linalg::eigvalsh(&rho)[0];
        if min < MIXED_EIGEN_FLOOR {
            return Err(OperatorError::InvalidState(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(Self {
            space,
            repr: StateRepr::Mixed(rho),
        })
    }

    pub fn basis(space: &HilbertSpace, levels: &[usize]) -> Result<Self> {
        Ok(Self {
            space: space.clone(),
            repr: StateRepr::Pure(space.basis_state(levels)?),
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn repr(&self) -> &StateRepr {
        &self.repr
    }

    pub fn is_pure_repr(&self) -> bool {
        matches!(self.repr, StateRepr::Pure(_))
    }

    pub fn as_vector(&self) -> Option<&CVector> {
        match &self.repr {
            StateRepr::Pure(v) => Some(v),
            StateRepr::Mixed(_) => None,
        }
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.repr {
            StateRepr::Pure(v) => v * v.adjoint(),
            StateRepr::Mixed(m) => m.clone(),
        }
    }

    pub fn to_mixed(&self) -> QuantumState {
        QuantumState {
            space: self.space.clone(),
            repr: StateRepr::Mixed(self.density_matrix()),
        }
    }

    /// `‖ψ‖²` for pure states, `Tr ρ` for mixed ones.
    pub fn weight(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(v) => v.norm_squared(),
            StateRepr::Mixed(m) => linalg::trace(m).re,
        }
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.space.dim() != self.space.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.space.dim(),
                got: op.space.dim(),
            });
        }
        Ok(match &self.repr {
            StateRepr::Pure(v) => (v.adjoint() * &op.matrix * v)[(0, 0)],
            StateRepr::Mixed(m) => linalg::trace(&(&op.matrix * m)),
        })
    }

    pub fn populations(&self) -> Vec<f64> {
        match &self.repr {
            StateRepr::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            StateRepr::Mixed(m) => (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
        }
    }
}

/// Standard single-subsystem operators.
pub mod local {
    use super::*;

    pub fn identity(d: usize) -> CMatrix {
        CMatrix::identity(d, d)
    }

    /// Truncated annihilation operator `a` with `a|n⟩ = √n |n-1⟩`.
    pub fn lowering(d: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        for n in 1..d {
            m[(n - 1, n)] = cr((n as f64).sqrt());
        }
        m
    }

    pub fn raising(d: usize) -> CMatrix {
        lowering(d).adjoint()
    }

    pub fn number(d: usize) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_fn(d, |n, _| cr(n as f64)))
    }

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
    }

    pub fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
    }

    /// Two-level raising operator `|1⟩⟨0|`, the truncation of `a†`.
    pub fn sigma_plus() -> CMatrix {
        raising(2)
    }

    pub fn sigma_minus() -> CMatrix {
        lowering(2)
    }
}

/// `I ⊗ … ⊗ local ⊗ … ⊗ I` with `local` in the slot labelled `label`.
pub fn embed(local: &CMatrix, label: &str, space: &HilbertSpace) -> Result<Operator> {
    embed_many(&[(label, local)], space)
}

/// Tensor product of local operators on distinct subsystems, identity elsewhere.
pub fn embed_many(parts: &[(&str, &CMatrix)], space: &HilbertSpace) -> Result<Operator> {
    let mut slots: Vec<Option<&CMatrix>> = vec![None; space.subsystems.len()];
    for (label, m) in parts {
        let k = space.index_of(label)?;
        let d = space.subsystems[k].dim;
        if m.nrows() != d || m.ncols() != d {
            return Err(OperatorError::DimensionMismatch {
                expected: d,
                got: m.nrows(),
            });
        }
        if slots[k].is_some() {
            return Err(OperatorError::DuplicateLabel(label.to_string()));
        }
        slots[k] = Some(m);
    }
    let mut acc = CMatrix::identity(1, 1);
    for (k, slot) in slots.iter().enumerate() {
        let d = space.subsystems[k].dim;
        acc = match slot {
            Some(m) => linalg::kron(&acc, m),
            None => linalg::kron(&acc, &CMatrix::identity(d, d)),
        };
    }
    Operator::new(space.clone(), acc)
}

/// Maps every full index to `(kept index, traced index)`.
fn split_indices(space: &HilbertSpace, keep_mask: &[bool]) -> Vec<(usize, usize)> {
    let dims = space.dims();
    (0..space.dim())
        .map(|i| {
            let levels = space.levels_of(i);
            let (mut a, mut b) = (0, 0);
            for (k, &l) in levels.iter().enumerate() {
                if keep_mask[k] {
                    a = a * dims[k] + l;
                } else {
                    b = b * dims[k] + l;
                }
            }
            (a, b)
        })
        .collect()
}

/// Reduced density matrix on `keep`; kept subsystems retain this space's order.
pub fn partial_trace(state: &QuantumState, keep: &[&str]) -> Result<QuantumState> {
    let space = &state.space;
    let reduced = space.restrict(keep)?;
    let mask: Vec<bool> = space
        .subsystems
        .iter()
        .map(|s| keep.contains(&s.label.as_str()))
        .collect();
    let split = split_indices(space, &mask);
    let dk = reduced.dim();
    let dt = space.dim() / dk;
    // group full indices by traced index
    let mut table = vec![vec![0usize; dk]; dt];
    for (full, &(a, b)) in split.iter().enumerate() {
        table[b][a] = full;
    }
    let mut out = CMatrix::zeros(dk, dk);
    match &state.repr {
        StateRepr::Pure(psi) => {
            for row in &table {
                for a in 0..dk {
                    let pa = psi[row[a]];
                    for b in 0..dk {
                        out[(a, b)] += pa * psi[row[b]].conj();
                    }
                }
            }
        }
        StateRepr::Mixed(rho) => {
            for row in &table {
                for a in 0..dk {
                    for b in 0..dk {
                        out[(a, b)] += rho[(row[a], row[b])];
                    }
                }
            }
        }
    }
    Ok(QuantumState {
        space: reduced,
        repr: StateRepr::Mixed(out),
    })
}

pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub state: QuantumState,
    /// Discarded weight `1 - Tr(PρP)`.
    pub leakage: f64,
    /// Set when `leakage` exceeds the threshold.
    pub warning: bool,
}

/// Indices of the full space that lie inside `{0,1}^N`, in two-level basis order.
pub fn two_level_indices(space: &HilbertSpace) -> Vec<usize> {
    let sub = space.two_level();
    (0..sub.dim())
        .map(|i| {
            space
                .basis_index(&sub.levels_of(i))
                .expect("levels are in range")
        })
        .collect()
}

/// Projects onto levels {0,1} of every subsystem and renormalises.
pub fn project_two_level(state: &QuantumState, threshold: f64) -> Result<Projection> {
    let idx = two_level_indices(&state.space);
    let sub = state.space.two_level();
    let total = state.weight();
    let (repr, kept) = match &state.repr {
        StateRepr::Pure(psi) => {
            let v = CVector::from_iterator(idx.len(), idx.iter().map(|&i| psi[i]));
            let w = v.norm_squared();
            (StateRepr::Pure(v), w)
        }
        StateRepr::Mixed(rho) => {
            let m = CMatrix::from_fn(idx.len(), idx.len(), |a, b| rho[(idx[a], idx[b])]);
            let w = linalg::trace(&m).re;
            (StateRepr::Mixed(m), w)
        }
    };
    let leakage = (total - kept).max(0.0);
    if kept <= 1e-12 {
        return Err(OperatorError::DegenerateProjection { leakage });
    }
    let repr = match repr {
        StateRepr::Pure(v) => StateRepr::Pure(v / cr(kept.sqrt())),
        StateRepr::Mixed(m) => StateRepr::Mixed(m / cr(kept)),
    };
    let warning = leakage > threshold;
    if warning {
        log::warn!("two-level projection discarded weight {leakage:.3e}");
    }
    Ok(Projection {
        state: QuantumState { space: sub, repr },
        leakage,
        warning,
    })
}

/// Diagonal frame unitary `⊗_j exp(-i ϑ_j σz_j / 2)`, extended to `d`-level
/// subsystems as `e^{-iϑ/2} e^{iϑ n}`.
pub fn frame_unitary(space: &HilbertSpace, phases: &[(&str, f64)]) -> Result<CVector> {
    let mut per_slot = vec![0.0; space.subsystems.len()];
    for (label, theta) in phases {
        per_slot[space.index_of(label)?] += theta;
    }
    Ok(CVector::from_fn(space.dim(), |i, _| {
        let levels = space.levels_of(i);
        let phase: f64 = levels
            .iter()
            .zip(&per_slot)
            .map(|(&n, &th)| th * (n as f64 - 0.5))
            .sum();
        C64::from_polar(1.0, phase)
    }))
}

/// Something the rotating-frame map can act on.
pub trait FrameTarget: Sized {
    fn transform(&self, diag: &CVector) -> Self;
    fn frame_space(&self) -> &HilbertSpace;
}

impl FrameTarget for QuantumState {
    fn transform(&self, u: &CVector) -> Self {
        let repr = match &self.repr {
            StateRepr::Pure(v) => StateRepr::Pure(v.component_mul(u)),
            StateRepr::Mixed(m) => {
                StateRepr::Mixed(CMatrix::from_fn(m.nrows(), m.ncols(), |a, b| {
                    u[a] * m[(a, b)] * u[b].conj()
                }))
            }
        };
        QuantumState {
            space: self.space.clone(),
            repr,
        }
    }
    fn frame_space(&self) -> &HilbertSpace {
        &self.space
    }
}

impl FrameTarget for Operator {
    fn transform(&self, u: &CVector) -> Self {
        let m = &self.matrix;
        Operator {
            space: self.space.clone(),
            matrix: CMatrix::from_fn(m.nrows(), m.ncols(), |a, b| u[a] * m[(a, b)] * u[b].conj()),
        }
    }
    fn frame_space(&self) -> &HilbertSpace {
        &self.space
    }
}

/// Conjugation `U x U†` by the frame unitary (vectors map to `U ψ`).
pub fn apply_frame<T: FrameTarget>(target: &T, phases: &[(&str, f64)]) -> Result<T> {
    let u = frame_unitary(target.frame_space(), phases)?;
    Ok(target.transform(&u))
}

/// `Σ_k c_k(t) M_k` with fixed matrices `M_k`.
pub trait ParametricOperator: Send + Sync {
    fn space(&self) -> &HilbertSpace;
    fn pieces(&self) -> &[CMatrix];
    fn coefficients(&self, t: f64, out: &mut [C64]);

    fn at(&self, t: f64) -> Operator {
        let mut coeffs = vec![C64::new(0.0, 0.0); self.pieces().len()];
        self.coefficients(t, &mut coeffs);
        let n = self.space().dim();
        let mut m = CMatrix::zeros(n, n);
        for (p, c) in self.pieces().iter().zip(&coeffs) {
            if *c != C64::new(0.0, 0.0) {
                m += p * *c;
            }
        }
        Operator {
            space: self.space().clone(),
            matrix: m,
        }
    }
}

/// A time-independent operator seen as a parametric one.
#[derive(Debug, Clone)]
pub struct StaticOperator {
    space: HilbertSpace,
    pieces: Vec<CMatrix>,
}

impl StaticOperator {
    pub fn new(op: Operator) -> Self {
        Self {
            space: op.space,
            pieces: vec![op.matrix],
        }
    }
}

impl ParametricOperator for StaticOperator {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }
    fn pieces(&self) -> &[CMatrix] {
        &self.pieces
    }
    fn coefficients(&self, _t: f64, out: &mut [C64]) {
        out[0] = cr(1.0);
    }
}

/// Generic `Σ_k f_k(t) M_k` built from closures.
pub struct FnOperator {
    space: HilbertSpace,
    pieces: Vec<CMatrix>,
    coeffs: Box<dyn Fn(f64, &mut [C64]) + Send + Sync>,
}

impl FnOperator {
    pub fn new(
        space: HilbertSpace,
        pieces: Vec<CMatrix>,
        coeffs: impl Fn(f64, &mut [C64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            pieces,
            coeffs: Box::new(coeffs),
        }
    }
}

impl ParametricOperator for FnOperator {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }
    fn pieces(&self) -> &[CMatrix] {
        &self.pieces
    }
    fn coefficients(&self, t: f64, out: &mut [C64]) {
        (self.coeffs)(t, out)
    }
}
