//! Dense complex linear-algebra helpers shared by the physics modules.

use ndarray::{Array1, Array2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, Inverse, UPLO};

use crate::{CMatrix, CVector, Result, C64};

pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr[A^† B]`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    let n = u.len();
    let m = v.len();
    Array2::from_shape_fn((n, m), |(i, j)| u[i] * v[j].conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
        a[[i / br, j / bc]] * b[[i % br, j % bc]]
    })
}

/// Column-stacking vectorization: element `(a, b)` goes to `a + rows * b`.
pub fn vec(m: &CMatrix) -> CVector {
    let (rows, cols) = m.dim();
    Array1::from_shape_fn(rows * cols, |k| m[[k % rows, k / rows]])
}

/// Inverse of [`vec`] for a square `d x d` matrix.
pub fn unvec(v: &CVector, d: usize) -> CMatrix {
    assert_eq!(v.len(), d * d, "unvec length mismatch");
    Array2::from_shape_fn((d, d), |(a, b)| v[a + d * b])
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + &dagger(m)).mapv(|z| z * 0.5)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    frobenius(&(m - &dagger(m)))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    // LAPACK works column-major; a row-major input would be read as its
    // transpose (the complex conjugate, for a Hermitian matrix).
    let mut h = Array2::<C64>::zeros(m.dim().f());
    h.assign(&hermitian_part(m));
    let (w, v) = h.eigh(UPLO::Lower)?;
    Ok((w, v.as_standard_layout().to_owned()))
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    let (w, v) = eigh(m)?;
    let mut scaled = v.clone();
    for (mut col, &lambda) in scaled.axis_iter_mut(Axis(1)).zip(w.iter()) {
        let fl = f(lambda);
        col.mapv_inplace(|z| z * fl);
    }
    Ok(scaled.dot(&dagger(&v)))
}

/// Principal square root of a positive semidefinite matrix. Small negative
/// eigenvalues from round-off are clamped to zero.
pub fn sqrtm_psd(m: &CMatrix) -> Result<CMatrix> {
    hermitian_function(m, |x| C64::new(x.max(0.0).sqrt(), 0.0))
}

/// Singular values of an arbitrary complex matrix, descending.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let (rows, cols) = m.dim();
    let gram = if rows >= cols {
        dagger(m).dot(m)
    } else {
        m.dot(&dagger(m))
    };
    let (w, _) = eigh(&gram)?;
    let mut s: Vec<f64> = w.iter().map(|x| x.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Polar factor `V (V^dag V)^{-1/2}` of a full-column-rank matrix: the
/// nearest isometry in Frobenius norm. Returns `None` when the smallest
/// singular value falls below `rank_tol` times the largest.
pub fn polar_isometry(v: &CMatrix, rank_tol: f64) -> Result<Option<CMatrix>> {
    let gram = dagger(v).dot(v);
    let (w, q) = eigh(&gram)?;
    let max = w.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 || w[0] <= rank_tol * rank_tol * max {
        return Ok(None);
    }
    let mut scaled = q.clone();
    for (mut col, &lambda) in scaled.axis_iter_mut(Axis(1)).zip(w.iter()) {
        let f = C64::new(1.0 / lambda.sqrt(), 0.0);
        col.mapv_inplace(|z| z * f);
    }
    let inv_sqrt = scaled.dot(&dagger(&q));
    Ok(Some(v.dot(&inv_sqrt)))
}

fn one_norm(m: &CMatrix) -> f64 {
    m.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant. Used for non-normal generators; Hermitian generators go
/// through [`hermitian_function`] instead.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));
    let id = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| C64::new(PADE13[k], 0.0);

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_tail = &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1);
    let u = a.dot(&(a6.dot(&u_inner) + u_tail));

    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&v_inner) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);

    let denom = (&v - &u).inv()?;
    let mut r = denom.dot(&(&v + &u));
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}
