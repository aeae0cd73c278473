//! Eigendecomposition of small dense complex matrices.
//!
//! 1×1 and 2×2 inputs use closed forms. Larger inputs are reduced to upper
//! Hessenberg form by Householder reflections and then to complex Schur form
//! by single-shift QR with Wilkinson shifts; eigenvectors come from
//! back-substitution on the triangular factor.

use num_complex::Complex64;

use super::lu::Lu;
use super::matrix::{vec_norm, CMatrix, ONE, ZERO};
use super::svd::numerical_rank;
use super::LinalgError;

/// Largest matrix the eigensolver accepts.
pub const MAX_EIG_DIM: usize = 9;

/// Relative rank tolerance used to decide whether the eigenvector matrix is
/// deficient.
pub const DEFAULT_DEFECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub defect_tol: f64,
    /// QR sweeps allowed per eigenvalue before giving up.
    pub max_iter_per_eig: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { defect_tol: DEFAULT_DEFECT_TOL, max_iter_per_eig: 60 }
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors stored as columns.
    pub right_eigenvectors: CMatrix,
    /// Eigenvalue condition numbers 1/|yᴴx| with unit left/right vectors;
    /// infinite when the eigenvector matrix is not invertible.
    pub condition: Vec<f64>,
    pub defective: bool,
}

impl EigResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        self.right_eigenvectors.column(k)
    }

    /// Rows of V⁻¹, i.e. left eigenvectors scaled so that yₖᴴxₖ = 1.
    pub fn dual_basis(&self) -> Result<CMatrix, LinalgError> {
        if self.defective {
            return Err(LinalgError::Defective);
        }
        super::lu::inverse(&self.right_eigenvectors)
    }

    /// V·diag(λ)·V⁻¹.
    pub fn reconstruct(&self) -> Result<CMatrix, LinalgError> {
        let vinv = self.dual_basis()?;
        let mut vl = self.right_eigenvectors.clone();
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                vl[(i, j)] *= self.eigenvalues[j];
            }
        }
        Ok(&vl * &vinv)
    }
}

pub fn eigendecompose(m: &CMatrix) -> Result<EigResult, LinalgError> {
    eigendecompose_with(m, &EigOptions::default())
}

pub fn eigendecompose_with(m: &CMatrix, opts: &EigOptions) -> Result<EigResult, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    if n == 0 {
        return Err(LinalgError::Shape("empty matrix".into()));
    }
    if n > MAX_EIG_DIM {
        return Err(LinalgError::TooLarge { dim: n, max: MAX_EIG_DIM });
    }
    if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let (values, vectors) = match n {
        1 => (vec![m[(0, 0)]], CMatrix::identity(1)),
        2 => eig2(m),
        _ => eig_schur(m, opts)?,
    };
    finish(values, vectors, opts)
}

fn finish(values: Vec<Complex64>, mut vectors: CMatrix, opts: &EigOptions) -> Result<EigResult, LinalgError> {
    let n = values.len();
    for j in 0..n {
        let col = vectors.column(j);
        let nrm = vec_norm(&col);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(LinalgError::NoConvergence(format!("eigenvector {j} degenerated")));
        }
        let scaled: Vec<Complex64> = col.iter().map(|z| z / nrm).collect();
        vectors.set_column(j, &scaled);
    }
    let defective = numerical_rank(&vectors, opts.defect_tol) < n;
    let condition = if defective {
        vec![f64::INFINITY; n]
    } else {
        match Lu::new(&vectors).and_then(|lu| lu.solve(&CMatrix::identity(n))) {
            Ok(vinv) => (0..n)
                .map(|k| {
                    // row k of V⁻¹ is y_k† with y_k† x_k = 1, |x_k| = 1
                    let row: Vec<Complex64> = (0..n).map(|j| vinv[(k, j)]).collect();
                    vec_norm(&row)
                })
                .collect(),
            Err(_) => vec![f64::INFINITY; n],
        }
    };
    Ok(EigResult { eigenvalues: values, right_eigenvectors: vectors, condition, defective })
}

fn eig2(m: &CMatrix) -> (Vec<Complex64>, CMatrix) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let mean = (a + d) * 0.5;
    let half = (a - d) * 0.5;
    let disc = half * half + b * c;
    let (l1, l2) = if disc == ZERO {
        (mean, mean)
    } else {
        let mut root = disc.sqrt();
        // larger-magnitude root first, the other from the determinant
        if (mean.conj() * root).re < 0.0 {
            root = -root;
        }
        let big = mean + root;
        let det = a * d - b * c;
        let small = if big == ZERO { mean - root } else { det / big };
        (big, small)
    };
    let vec_for = |lambda: Complex64, fallback: usize| -> [Complex64; 2] {
        let u = [b, lambda - a];
        let w = [lambda - d, c];
        let nu = u[0].norm() + u[1].norm();
        let nw = w[0].norm() + w[1].norm();
        if nu == 0.0 && nw == 0.0 {
            // b = c = 0 and λ equals both diagonal entries
            if fallback == 0 {
                [ONE, ZERO]
            } else {
                [ZERO, ONE]
            }
        } else if nu >= nw {
            u
        } else {
            w
        }
    };
    // diagonal input: keep the natural basis order
    if b == ZERO && c == ZERO {
        return (vec![a, d], CMatrix::identity(2));
    }
    let v1 = vec_for(l1, 0);
    let v2 = vec_for(l2, 1);
    let v = CMatrix::from_rows(&[[v1[0], v2[0]], [v1[1], v2[1]]]).expect("2x2");
    (vec![l1, l2], v)
}

/// Householder reduction to upper Hessenberg form, A = Q H Q†.
fn hessenberg(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = CMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha_norm = vec_norm(&x);
        if alpha_norm == 0.0 {
            continue;
        }
        let tail: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let phase = if x[0] == ZERO { ONE } else { x[0] / x[0].norm() };
        let mut v = x.clone();
        v[0] += phase * alpha_norm;
        let vnorm = vec_norm(&v);
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H ← (I − 2vv†) H (I − 2vv†) acting on indices k+1..n
        for j in 0..n {
            let s: Complex64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * h[(k + 1 + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= *vi * s * 2.0;
            }
        }
        for mat in [&mut h, &mut q] {
            for i in 0..n {
                let s: Complex64 = v.iter().enumerate().map(|(j, vj)| mat[(i, k + 1 + j)] * vj).sum();
                for (j, vj) in v.iter().enumerate() {
                    mat[(i, k + 1 + j)] -= s * vj.conj() * 2.0;
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

/// Complex Givens rotation G = [[c, s], [−s̄, c]] with G·(a, b)ᵀ = (r, 0)ᵀ.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    if na == 0.0 {
        return (0.0, ONE);
    }
    let r = na.hypot(nb);
    let c = na / r;
    let s = (a / na) * b.conj() / r;
    (c, s)
}

fn schur(a: &CMatrix, opts: &EigOptions) -> Result<(CMatrix, CMatrix), LinalgError> {
    let n = a.rows();
    let (mut h, mut q) = hessenberg(a);
    let norm = h.max_abs().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let cap = opts.max_iter_per_eig * n;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            let diag = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let scale = if diag == 0.0 { norm } else { diag };
            if sub <= f64::EPSILON * scale {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > cap {
            return Err(LinalgError::NoConvergence(format!("QR iteration exceeded {cap} sweeps")));
        }
        let shift = if iter % 11 == 10 {
            // exceptional shift to break cycles
            let below = if hi >= l + 2 { h[(hi - 1, hi - 2)].norm() } else { 0.0 };
            h[(hi, hi)] + Complex64::new(h[(hi, hi - 1)].norm() + below, 0.0)
        } else {
            wilkinson(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        for k in l..=hi {
            h[(k, k)] -= shift;
        }
        let mut rots = Vec::with_capacity(hi - l);
        for k in l..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            h[(k + 1, k)] = ZERO;
            rots.push((k, c, s));
        }
        for &(k, c, s) in &rots {
            for i in 0..=(k + 1).min(hi) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + y * s.conj();
                h[(i, k + 1)] = -x * s + y * c;
            }
            for i in 0..n {
                let x = q[(i, k)];
                let y = q[(i, k + 1)];
                q[(i, k)] = x * c + y * s.conj();
                q[(i, k + 1)] = -x * s + y * c;
            }
        }
        for k in l..=hi {
            h[(k, k)] += shift;
        }
    }
    // clean below-diagonal roundoff
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok((h, q))
}

fn wilkinson(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let mean = (a + d) * 0.5;
    let half = (a - d) * 0.5;
    let root = (half * half + b * c).sqrt();
    let m1 = mean + root;
    let m2 = mean - root;
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

fn eig_schur(a: &CMatrix, opts: &EigOptions) -> Result<(Vec<Complex64>, CMatrix), LinalgError> {
    let n = a.rows();
    let (t, q) = schur(a, opts)?;
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let smin = (f64::EPSILON * t.max_abs()).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        let mut v = vec![ZERO; n];
        v[k] = ONE;
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..=k).map(|j| t[(i, j)] * v[j]).sum();
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < smin {
                d = Complex64::new(smin, 0.0);
            }
            v[i] = -s / d;
            let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if big > 1e100 {
                for z in v.iter_mut() {
                    *z /= big;
                }
            }
        }
        x.set_column(k, &v);
    }
    Ok((values, &q * &x))
}
