//! Dense complex matrix helpers shared by the flow engine and the samplers.
//!
//! Matrices are `ndarray::Array2<Complex64>`; products go through ndarray's
//! `dot` (matrixmultiply's complex gemm). Linear solves use the row-oriented
//! LU below; Schur and Hermitian eigen-decompositions are delegated to
//! nalgebra through the conversion helpers.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// Maximum absolute column sum (the ℓ¹-induced operator norm).
pub fn norm1(a: &CMatrix) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(1/N) Tr(a)`.
pub fn normalized_trace(a: &CMatrix) -> Complex64 {
    let n = a.nrows();
    if n == 0 {
        return ZERO;
    }
    a.diag().sum() / n as f64
}

pub fn to_nalgebra(a: &CMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_nalgebra(a: &DMatrix<Complex64>) -> CMatrix {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Inverse via LU with partial pivoting, `None` when a pivot vanishes.
pub fn inverse(a: &CMatrix) -> Option<CMatrix> {
    solve(a, &identity(a.nrows()))
}

/// `‖A‖₁‖A⁻¹‖₁`, infinite for an exactly singular matrix.
pub fn condition_1(a: &CMatrix) -> (f64, Option<CMatrix>) {
    match inverse(a) {
        Some(inv) => {
            let c = norm1(a) * norm1(&inv);
            (if c.is_finite() { c } else { f64::INFINITY }, Some(inv))
        }
        None => (f64::INFINITY, None),
    }
}

/// Inverse that refuses matrices whose condition estimate exceeds `cap`.
pub fn checked_inverse(a: &CMatrix, cap: f64) -> Result<CMatrix> {
    let (condition, inv) = condition_1(a);
    match inv {
        Some(inv) if condition <= cap => Ok(inv),
        _ => Err(Error::SingularMatrix { condition, cap }),
    }
}

/// Solves `a x = b` for a square `a` by Gaussian elimination with partial
/// pivoting, applied to whole rows of `b`. `None` when a pivot vanishes.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "solve needs a square matrix");
    assert_eq!(b.nrows(), n, "right-hand side has the wrong number of rows");
    let m = b.ncols();
    let mut lu: Vec<Complex64> = a.iter().copied().collect();
    let mut x: Vec<Complex64> = b.iter().copied().collect();

    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| lu[i * n + k].norm_sqr().total_cmp(&lu[j * n + k].norm_sqr()))
            .expect("non-empty pivot range");
        let p = lu[pivot * n + k];
        if p == ZERO || !p.is_finite() {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                lu.swap(k * n + j, pivot * n + j);
            }
            for j in 0..m {
                x.swap(k * m + j, pivot * m + j);
            }
        }
        let inv = ONE / p;
        let (upper, lower) = lu.split_at_mut((k + 1) * n);
        let row_k = &upper[k * n..];
        let (x_upper, x_lower) = x.split_at_mut((k + 1) * m);
        let x_k = &x_upper[k * m..];
        for (row_i, x_i) in lower.chunks_exact_mut(n).zip(x_lower.chunks_exact_mut(m)) {
            let f = row_i[k] * inv;
            if f == ZERO {
                continue;
            }
            row_i[k] = f;
            for (r, &s) in row_i[k + 1..].iter_mut().zip(&row_k[k + 1..]) {
                *r -= f * s;
            }
            for (r, &s) in x_i.iter_mut().zip(x_k) {
                *r -= f * s;
            }
        }
    }

    for k in (0..n).rev() {
        let (head, tail) = x.split_at_mut((k + 1) * m);
        let x_k = &mut head[k * m..];
        for (j, x_j) in tail.chunks_exact(m).enumerate() {
            let c = lu[k * n + k + 1 + j];
            if c == ZERO {
                continue;
            }
            for (r, &s) in x_k.iter_mut().zip(x_j) {
                *r -= c * s;
            }
        }
        let inv = ONE / lu[k * n + k];
        for r in x_k.iter_mut() {
            *r *= inv;
        }
    }
    Some(Array2::from_shape_vec((n, m), x).expect("shape matches"))
}

/// `a^k` for `k ≥ 0` by repeated squaring.
pub fn matrix_power(a: &CMatrix, mut k: u32) -> CMatrix {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = result.dot(&base);
        }
        k >>= 1;
        if k > 0 {
            base = base.dot(&base);
        }
    }
    result
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its column-sum norm is at most 0.5;
/// the series is summed until the ratio of the latest term's norm to the
/// partial sum's norm drops below 1e-18.
pub fn expm_taylor(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = norm1(a);
    if norm == 0.0 {
        return identity(n);
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * Complex64::new(scale, 0.0);

    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..=60 {
        term = term.dot(&scaled) / k as f64;
        sum += &term;
        if norm1(&term) <= 1e-18 * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
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

fn scaled_sum(terms: &[(&CMatrix, f64)], n: usize) -> CMatrix {
    let mut out = Array2::zeros((n, n));
    for (m, c) in terms {
        out.scaled_add(Complex64::new(*c, 0.0), *m);
    }
    out
}

/// Matrix exponential by scaling-and-squaring with diagonal Padé approximants
/// of degree 3, 5, 7, 9 or 13, chosen from the column-sum norm.
///
/// Small arguments (the per-step Lie-algebra increments of the samplers) get
/// a low-degree approximant; larger ones fall through to degree 13 with
/// scaling.
pub fn expm_pade(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    let norm = norm1(a);
    let eye = identity(n);
    let a2 = a.dot(a);

    let low = |coeffs: &[f64]| -> (CMatrix, CMatrix) {
        // coeffs has even length m+1; build powers A^2, A^4, ...
        let m = coeffs.len() - 1;
        let mut powers = vec![eye.clone(), a2.clone()];
        while 2 * (powers.len() - 1) < m - 1 {
            let next = powers.last().unwrap().dot(&a2);
            powers.push(next);
        }
        let mut u_inner = Array2::zeros((n, n));
        let mut v = Array2::zeros((n, n));
        for (j, c) in coeffs.iter().enumerate() {
            let p = &powers[j / 2];
            if j % 2 == 1 {
                u_inner.scaled_add(Complex64::new(*c, 0.0), p);
            } else {
                v.scaled_add(Complex64::new(*c, 0.0), p);
            }
        }
        (a.dot(&u_inner), v)
    };

    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = low(&PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = low(&PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = low(&PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = low(&PADE_9);
        (u, v, 0)
    } else {
        let s = if norm > THETA_13 {
            (norm / THETA_13).log2().ceil() as i32
        } else {
            0
        };
        let factor = 2f64.powi(-s);
        let a1 = a * Complex64::new(factor, 0.0);
        let a2 = &a2 * Complex64::new(factor * factor, 0.0);
        let a4 = a2.dot(&a2);
        let a6 = a2.dot(&a4);
        let b = &PADE_13;
        let w1 = scaled_sum(&[(&a6, b[13]), (&a4, b[11]), (&a2, b[9])], n);
        let w = w1.dot(&a6) + scaled_sum(&[(&a6, b[7]), (&a4, b[5]), (&a2, b[3]), (&eye, b[1])], n);
        let u = a1.dot(&w);
        let z1 = scaled_sum(&[(&a6, b[12]), (&a4, b[10]), (&a2, b[8])], n);
        let v = z1.dot(&a6)
            + scaled_sum(&[(&a6, b[6]), (&a4, b[4]), (&a2, b[2]), (&eye, b[0])], n);
        (u, v, s as u32)
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p).expect("Padé denominator is nonsingular for admissible norms");
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    r
}

/// Projects a nearly unitary matrix onto the unitary group (its polar factor)
/// with Newton–Schulz steps `U ← U(3I − U*U)/2`.
pub fn reunitarize(u: &CMatrix) -> CMatrix {
    let n = u.nrows();
    let eye = identity(n);
    let mut x = u.clone();
    for _ in 0..8 {
        let gram = adjoint(&x).dot(&x);
        let defect = max_abs(&(&gram - &eye));
        if defect < 1e-15 {
            break;
        }
        let corr = (&eye * Complex64::new(3.0, 0.0) - &gram) * 0.5;
        x = x.dot(&corr);
    }
    x
}

/// Eigenvalues of a general complex matrix through nalgebra's complex Schur
/// form (Hessenberg reduction followed by shifted QR).
pub fn eigenvalues(a: &CMatrix) -> Result<Array1<Complex64>> {
    let m = to_nalgebra(a);
    let schur = m
        .try_schur(1e-14, 10_000)
        .ok_or_else(|| Error::EigFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(Array1::from_iter((0..t.nrows()).map(|i| t[(i, i)])))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    let m = to_nalgebra(a);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(m, 1e-14, 10_000)
        .ok_or_else(|| Error::EigFailure("Hermitian eigen-solver did not converge".into()))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}
