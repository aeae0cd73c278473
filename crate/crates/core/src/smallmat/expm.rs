//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005 coefficients).

use num_complex::Complex64;

use super::lu::solve;
use super::matrix::CMatrix;
use super::LinalgError;

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

pub fn expm(m: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    let norm = m.norm_one();
    if !norm.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if norm == 0.0 {
        return Ok(CMatrix::identity(n));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m.scale_real(0.5f64.powi(s));
    let id = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let lin = |terms: &[(&CMatrix, usize)]| -> CMatrix {
        let mut acc = CMatrix::zeros(n, n);
        for (mat, k) in terms {
            acc = &acc + &mat.scale(b(*k));
        }
        acc
    };
    let u_inner = &(&a6 * &lin(&[(&a6, 13), (&a4, 11), (&a2, 9)])) + &lin(&[(&a6, 7), (&a4, 5), (&a2, 3), (&id, 1)]);
    let u = &a * &u_inner;
    let v = &(&a6 * &lin(&[(&a6, 12), (&a4, 10), (&a2, 8)])) + &lin(&[(&a6, 6), (&a4, 4), (&a2, 2), (&id, 0)]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// exp(M·t)·v.
pub fn expm_apply(m: &CMatrix, v: &[Complex64], t: f64) -> Result<Vec<Complex64>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    if v.len() != m.cols() {
        return Err(LinalgError::Shape(format!(
            "vector of length {} does not match {}x{} matrix",
            v.len(),
            m.rows(),
            m.cols()
        )));
    }
    let e = expm(&m.scale_real(t))?;
    Ok(e.matvec_unchecked(v))
}
