use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use super::LinalgError;

/// Largest dimension accepted by the kernel (a 3-level Liouvillian is 9×9,
/// its Kronecker square 81).
pub const MAX_DIM: usize = 81;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(LinalgError::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: nrows, cols: ncols, data })
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                m[(i, j)] = x * y.conj();
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn adjoint(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].conj();
            }
        }
        t
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise |M - M†|.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.mul_unchecked(rhs))
    }

    pub(crate) fn mul_unchecked(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::Shape(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.matvec_unchecked(v))
    }

    pub fn matvec_unchecked(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    pub fn matvec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
        }
    }

    /// Sesquilinear form ⟨u|M|v⟩.
    pub fn expectation(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        let mv = self.matvec_unchecked(v);
        u.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    /// Row-major flattening; the vectorization convention used for superoperators.
    pub fn vectorize(&self) -> Vec<Complex64> {
        self.data.clone()
    }

    pub fn unvectorize(v: &[Complex64], n: usize) -> Result<Self, LinalgError> {
        Self::from_vec(n, n, v.to_vec())
    }

    /// Entrywise maximum deviation from `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        self.mul_unchecked(rhs)
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>11.4e}{:+.4e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product A⊗B; entry ((i,k),(j,l)) = A[i,j]·B[k,l].
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if a.data.is_empty() || b.data.is_empty() {
        return Err(LinalgError::Shape("kron of an empty matrix".into()));
    }
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(LinalgError::TooLarge { dim: rows.max(cols), max: MAX_DIM });
    }
    let mut out = CMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_identity() {
        let k = kron(&CMatrix::identity(2), &CMatrix::identity(2)).unwrap();
        assert_eq!(k, CMatrix::identity(4));
    }

    #[test]
    fn kron_diag_with_identity() {
        let a = CMatrix::from_diag(&[c(2.0, 1.0), c(-3.0, 0.0)]);
        let k = kron(&a, &CMatrix::identity(2)).unwrap();
        let want = CMatrix::from_diag(&[c(2.0, 1.0), c(2.0, 1.0), c(-3.0, 0.0), c(-3.0, 0.0)]);
        assert_eq!(k, want);
    }

    #[test]
    fn kron_lowering_operators() {
        let sm = CMatrix::from_rows(&[[ZERO, ZERO], [ONE, ZERO]]).unwrap();
        let k = kron(&sm, &sm).unwrap();
        // direct index formula: (i*2+k, j*2+l) nonzero only for i=k=1, j=l=0
        for r in 0..4 {
            for s in 0..4 {
                let (i, kk) = (r / 2, r % 2);
                let (j, l) = (s / 2, s % 2);
                let want = sm[(i, j)] * sm[(kk, l)];
                assert_eq!(k[(r, s)], want);
            }
        }
        assert_eq!(k[(3, 0)], ONE);
        assert_eq!(k.as_slice().iter().filter(|z| **z != ZERO).count(), 1);
    }

    #[test]
    fn kron_rejects_oversize() {
        let a = CMatrix::identity(9);
        let b = CMatrix::identity(10);
        assert!(matches!(kron(&a, &b), Err(LinalgError::TooLarge { .. })));
    }

    #[test]
    fn from_vec_checks_count() {
        assert!(CMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
    }

    #[test]
    fn adjoint_and_hermiticity() {
        let m = CMatrix::from_rows(&[[c(1.0, 0.0), c(0.0, 2.0)], [c(0.0, -2.0), c(3.0, 0.0)]]).unwrap();
        assert!(m.is_hermitian(1e-12));
        assert_eq!(m.adjoint(), m);
        let n = CMatrix::from_rows(&[[ZERO, ONE], [ZERO, ZERO]]).unwrap();
        assert!(!n.is_hermitian(1e-12));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn square(max: usize) -> impl Strategy<Value = CMatrix> {
            (1usize..=max).prop_flat_map(|n| {
                prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n * n)
                    .prop_map(move |d| CMatrix::from_vec(n, n, d.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
            })
        }

        proptest! {
            #[test]
            fn trace_of_kron(a in square(3), b in square(3)) {
                let k = kron(&a, &b).unwrap();
                prop_assert!((k.trace() - a.trace() * b.trace()).norm() <= 1e-12);
            }

            #[test]
            fn vectorization_identity(a in square(3), seed in 0u64..100) {
                // vec(A ρ B) = (A ⊗ Bᵀ) vec ρ in row-major order
                let n = a.rows();
                let rho = CMatrix::from_vec(n, n, (0..n * n).map(|k| c(((k as u64 + seed) % 5) as f64, (k % 2) as f64)).collect()).unwrap();
                let b = a.adjoint().scale(c(0.5, 1.0));
                let lhs = a.matmul(&rho).unwrap().matmul(&b).unwrap().vectorize();
                let rhs = kron(&a, &b.transpose()).unwrap().matvec(&rho.vectorize()).unwrap();
                let d = lhs.iter().zip(&rhs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                prop_assert!(d <= 1e-10);
            }
        }
    }
}
