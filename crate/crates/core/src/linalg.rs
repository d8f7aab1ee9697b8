//! Small dense complex linear algebra used throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Largest element-wise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Element-wise `max |M - M†|`, relative to `max(1, max |M|)`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / max_abs(m).max(1.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Column `k` of the returned matrix is the eigenvector for value `k`.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    // symmetrise to keep the solver on the Hermitian path
    let h = (m + m.adjoint()) * cr(0.5);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

/// Principal square root of a positive semi-definite Hermitian matrix.
/// Negative eigenvalues from round-off are clipped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut d = CMatrix::zeros(n, n);
    for (k, v) in vals.iter().enumerate() {
        d[(k, k)] = cr(v.max(0.0).sqrt());
    }
    &vecs * d * vecs.adjoint()
}

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * cr(0.5f64.powi(s));
    let b = PADE13;
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * cr(b[13]) + &a4 * cr(b[11]) + &a2 * cr(b[9]))
        + &a6 * cr(b[7])
        + &a4 * cr(b[5])
        + &a2 * cr(b[3])
        + &id * cr(b[1]);
    let u = &a * inner_u;
    let v = &a6 * (&a6 * cr(b[12]) + &a4 * cr(b[10]) + &a2 * cr(b[8]))
        + &a6 * cr(b[6])
        + &a4 * cr(b[4])
        + &a2 * cr(b[2])
        + &id * cr(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is non-singular for scaled arguments");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `exp(-i H t)` for Hermitian `H` via eigen-decomposition.
pub fn unitary_from_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    let n = vals.len();
    let mut d = CMatrix::zeros(n, n);
    for (k, v) in vals.iter().enumerate() {
        d[(k, k)] = C64::from_polar(1.0, -v * t);
    }
    &vecs * d * vecs.adjoint()
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_matches_eigen_route_for_hermitian_generator() {
        let h = CMatrix::from_fn(5, 5, |i, j| {
            let x = (i * 7 + j * 3) as f64 * 0.37;
            if i == j {
                cr(x.sin() * 4.0)
            } else {
                c(x.cos(), (i as f64 - j as f64) * 0.2)
            }
        });
        let h = (&h + h.adjoint()) * cr(0.5);
        for t in [0.01, 0.7, 9.0] {
            let a = expm(&(&h * c(0.0, -t)));
            let b = unitary_from_hermitian(&h, t);
            assert!(max_abs(&(a - b)) < 1e-11, "t = {t}");
        }
    }

    #[test]
    fn expm_of_nilpotent_is_truncated_series() {
        let mut n = CMatrix::zeros(3, 3);
        n[(0, 1)] = cr(2.0);
        n[(1, 2)] = cr(3.0);
        let e = expm(&n);
        assert!((e[(0, 2)] - cr(3.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - cr(2.0)).norm() < 1e-14);
        assert!((e[(0, 0)] - cr(1.0)).norm() < 1e-14);
    }

    #[test]
    fn eigh_sorts_and_reconstructs() {
        let m = CMatrix::from_row_slice(2, 2, &[cr(1.0), c(0.0, -1.0), c(0.0, 1.0), cr(1.0)]);
        let (vals, vecs) = eigh(&m);
        assert!((vals[0] - 0.0).abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vals.iter().map(|&v| cr(v)).collect()));
        assert!(max_abs(&(&vecs * d * vecs.adjoint() - m)) < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = CMatrix::from_fn(4, 4, |i, j| c((i + j) as f64 * 0.1, i as f64 - j as f64));
        let m = &a * a.adjoint();
        let r = psd_sqrt(&m);
        assert!(max_abs(&(&r * &r - &m)) < 1e-10 * max_abs(&m));
    }
}
