//! Fourth-order commutator-free Magnus stepper for `Ψ' = G(t) Ψ` with
//! `G(t) = Σ_k c_k(t) G_k`.
//!
//! The fixed pieces `G_k` are stored on the union of their sparsity patterns;
//! each exponential is applied to the state block by a scaled Taylor series.

use crate::linalg::{CMatrix, C64};

const SQRT3: f64 = 1.732_050_807_568_877_2;
/// Gauss nodes of the step.
const NODE1: f64 = 0.5 - SQRT3 / 6.0;
const NODE2: f64 = 0.5 + SQRT3 / 6.0;
/// Weights: the first exponential uses (W_BIG, W_SMALL), the second (W_SMALL, W_BIG).
const W_BIG: f64 = 0.25 + SQRT3 / 6.0;
const W_SMALL: f64 = 0.25 - SQRT3 / 6.0;

/// Union pattern of the pieces in row-compressed form.
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// `values[k][e]` is entry `e` of piece `k` times the prefactor.
    values: Vec<Vec<C64>>,
    diag: Vec<Option<usize>>,
    missing_diag: Vec<usize>,
}

impl SparseGenerator {
    /// Pieces `prefactor · M_k` compressed onto their common pattern.
    pub fn new(pieces: &[CMatrix], prefactor: C64) -> Self {
        let dim = pieces.first().map(|m| m.nrows()).unwrap_or(0);
        let zero = C64::new(0.0, 0.0);
        let mut row_ptr = vec![0];
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                if pieces.iter().any(|m| m[(r, c)] != zero) {
                    rows.push(r);
                    cols.push(c);
                }
            }
            row_ptr.push(cols.len());
        }
        let values = pieces
            .iter()
            .map(|m| {
                rows.iter()
                    .zip(&cols)
                    .map(|(&r, &c)| m[(r, c)] * prefactor)
                    .collect()
            })
            .collect();
        let mut diag = vec![None; dim];
        for (e, (&r, &c)) in rows.iter().zip(&cols).enumerate() {
            if r == c {
                diag[r] = Some(e);
            }
        }
        let missing_diag = (0..dim).filter(|&c| diag[c].is_none()).collect();
        Self {
            dim,
            row_ptr,
            cols,
            values,
            diag,
            missing_diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn num_pieces(&self) -> usize {
        self.values.len()
    }

    fn combine(&self, weights: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (w, vals) in weights.iter().zip(&self.values) {
            if *w == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, v) in out.iter_mut().zip(vals) {
                *o += *w * *v;
            }
        }
    }
}

/// Work buffers for repeated exponential actions; blocks are held row-major.
struct ActionWork {
    vals: Vec<C64>,
    x: Vec<C64>,
    term: Vec<C64>,
    next: Vec<C64>,
    colsum: Vec<f64>,
}

impl ActionWork {
    fn new(nnz: usize, n: usize) -> Self {
        Self {
            vals: vec![C64::default(); nnz],
            x: Vec::with_capacity(n),
            term: Vec::with_capacity(n),
            next: Vec::with_capacity(n),
            colsum: vec![0.0; n],
        }
    }
}

/// `next = A · term` on row-major blocks with `ncols` columns.
fn sparse_apply(gen: &SparseGenerator, vals: &[C64], term: &[C64], next: &mut [C64], ncols: usize) {
    match ncols {
        1 => sparse_apply_n::<1>(gen, vals, term, next),
        2 => sparse_apply_n::<2>(gen, vals, term, next),
        4 => sparse_apply_n::<4>(gen, vals, term, next),
        _ => {
            let zero = C64::new(0.0, 0.0);
            for r in 0..gen.dim {
                let acc = &mut next[r * ncols..(r + 1) * ncols];
                acc.iter_mut().for_each(|v| *v = zero);
                let (lo, hi) = (gen.row_ptr[r], gen.row_ptr[r + 1]);
                for (v, &c) in vals[lo..hi].iter().zip(&gen.cols[lo..hi]) {
                    let src = &term[c * ncols..(c + 1) * ncols];
                    for (a, t) in acc.iter_mut().zip(src) {
                        *a += *v * *t;
                    }
                }
            }
        }
    }
}

fn sparse_apply_n<const N: usize>(
    gen: &SparseGenerator,
    vals: &[C64],
    term: &[C64],
    next: &mut [C64],
) {
    let n = gen.dim;
    assert!(term.len() == n * N && next.len() == n * N && vals.len() == gen.cols.len());
    for r in 0..n {
        let mut acc = [(0.0f64, 0.0f64); N];
        let (lo, hi) = (gen.row_ptr[r], gen.row_ptr[r + 1]);
        for e in lo..hi {
            // SAFETY: e < nnz (checked above) and column indices are < n by construction
            let (v, c) = unsafe { (*vals.get_unchecked(e), *gen.cols.get_unchecked(e)) };
            for (j, a) in acc.iter_mut().enumerate() {
                let t = unsafe { *term.get_unchecked(c * N + j) };
                a.0 += v.re * t.re - v.im * t.im;
                a.1 += v.re * t.im + v.im * t.re;
            }
        }
        for (j, a) in acc.iter().enumerate() {
            next[r * N + j] = C64::new(a.0, a.1);
        }
    }
}

/// `block ← exp(A) block` for the sparse `A` given by `work.vals` on `gen`'s pattern.
fn expm_action(gen: &SparseGenerator, work: &mut ActionWork, block: &mut [C64], ncols: usize) {
    let n = gen.dim;
    let zero = C64::new(0.0, 0.0);
    // shift by the mean diagonal, re-applied as a scalar factor
    let mut mu = zero;
    for d in gen.diag.iter().flatten() {
        mu += work.vals[*d];
    }
    mu /= n as f64;
    for d in gen.diag.iter().flatten() {
        work.vals[*d] -= mu;
    }
    work.colsum.iter_mut().for_each(|v| *v = 0.0);
    for (v, &c) in work.vals.iter().zip(&gen.cols) {
        work.colsum[c] += v.norm();
    }
    for &c in &gen.missing_diag {
        work.colsum[c] += mu.norm();
    }
    let norm = work.colsum.iter().copied().fold(0.0, f64::max);
    let s = norm.ceil().max(1.0) as usize;
    let scale = 1.0 / s as f64;
    let len = n * ncols;
    work.x.clear();
    work.x.resize(len, zero);
    for col in 0..ncols {
        for r in 0..n {
            work.x[r * ncols + col] = block[col * n + r];
        }
    }
    work.term.resize(len, zero);
    work.next.resize(len, zero);
    let tol = f64::EPSILON;
    for _ in 0..s {
        work.term.copy_from_slice(&work.x);
        let xnorm = work
            .x
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max)
            .sqrt();
        for k in 1..=40 {
            let f = scale / k as f64;
            sparse_apply(gen, &work.vals, &work.term, &mut work.next, ncols);
            for &c in &gen.missing_diag {
                for j in 0..ncols {
                    let t = work.term[c * ncols + j];
                    work.next[c * ncols + j] -= mu * t;
                }
            }
            let mut tnorm = 0.0f64;
            for ((t, x), nx) in work.term.iter_mut().zip(work.x.iter_mut()).zip(&work.next) {
                let v = *nx * f;
                *t = v;
                *x += v;
                tnorm = tnorm.max(v.norm_sqr());
            }
            if tnorm.sqrt() <= tol * xnorm.max(1e-300) {
                break;
            }
        }
    }
    let factor = mu.exp();
    for col in 0..ncols {
        for r in 0..n {
            block[col * n + r] = work.x[r * ncols + col] * factor;
        }
    }
    for d in gen.diag.iter().flatten() {
        work.vals[*d] += mu;
    }
}

/// Fourth-order commutator-free Magnus integrator.
pub struct Cf4Stepper {
    gen: SparseGenerator,
    c1: Vec<C64>,
    c2: Vec<C64>,
    weights: Vec<C64>,
    work: ActionWork,
}

impl Cf4Stepper {
    pub fn new(gen: SparseGenerator) -> Self {
        let k = gen.num_pieces();
        let nnz = gen.nnz();
        let n = gen.dim;
        Self {
            gen,
            c1: vec![C64::default(); k],
            c2: vec![C64::default(); k],
            weights: vec![C64::default(); k],
            work: ActionWork::new(nnz, n),
        }
    }

    pub fn generator(&self) -> &SparseGenerator {
        &self.gen
    }

    /// Advances the column-major `block` from `t` to `t + h`.
    pub fn step(&mut self, coeffs: &dyn Fn(f64, &mut [C64]), t: f64, h: f64, block: &mut CMatrix) {
        coeffs(t + NODE1 * h, &mut self.c1);
        coeffs(t + NODE2 * h, &mut self.c2);
        let ncols = block.ncols();
        let data = block.as_mut_slice();
        for (w, (a, b)) in self.weights.iter_mut().zip(self.c1.iter().zip(&self.c2)) {
            *w = (*a * W_BIG + *b * W_SMALL) * h;
        }
        self.gen.combine(&self.weights, &mut self.work.vals);
        expm_action(&self.gen, &mut self.work, data, ncols);
        for (w, (a, b)) in self.weights.iter_mut().zip(self.c1.iter().zip(&self.c2)) {
            *w = (*a * W_SMALL + *b * W_BIG) * h;
        }
        self.gen.combine(&self.weights, &mut self.work.vals);
        expm_action(&self.gen, &mut self.work, data, ncols);
    }
}
