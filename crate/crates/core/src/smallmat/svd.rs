//! Singular values by one-sided (Hestenes) Jacobi rotations.

use num_complex::Complex64;

use super::matrix::{inner, vec_norm, CMatrix};

const MAX_SWEEPS: usize = 60;

/// Singular values of `a`, sorted descending.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    // work on columns of A (or A† when wide, same nonzero spectrum)
    let m = if a.rows() >= a.cols() { a.clone() } else { a.adjoint() };
    let mut cols: Vec<Vec<Complex64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let n = cols.len();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = cols[p].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let beta = cols[q].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let gamma = inner(&cols[p], &cols[q]);
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // rotate phase so that the cross term is real positive
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let yq = *y * phase.conj();
                    let nx = *x * c - yq * s;
                    let ny = *x * s + yq * c;
                    *x = nx;
                    *y = ny;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| vec_norm(c)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_singular_values() {
        let a = CMatrix::from_diag(&[Complex64::new(0.0, -3.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let sv = singular_values(&a);
        assert!((sv[0] - 3.0).abs() < 1e-14);
        assert!((sv[1] - 1.0).abs() < 1e-14);
        assert!(sv[2].abs() < 1e-14);
        assert_eq!(numerical_rank(&a, 1e-8), 2);
    }

    #[test]
    fn rank_one_complex() {
        let u = [Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0), Complex64::new(-1.0, 0.5)];
        let v = [Complex64::new(0.3, -0.2), Complex64::new(1.0, 0.0)];
        let a = CMatrix::outer(&u, &v);
        let sv = singular_values(&a);
        let want = vec_norm(&u) * vec_norm(&v);
        assert!((sv[0] - want).abs() < 1e-13);
        assert!(sv[1] < 1e-14);
        assert_eq!(numerical_rank(&a, 1e-8), 1);
    }

    #[test]
    fn sum_of_squares_matches_frobenius() {
        let a = CMatrix::from_rows(&[
            [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0), Complex64::new(0.0, 1.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(2.0, -1.0), Complex64::new(3.0, 0.0)],
        ])
        .unwrap();
        let sv = singular_values(&a);
        let ss: f64 = sv.iter().map(|s| s * s).sum();
        assert!((ss - a.frobenius_norm().powi(2)).abs() < 1e-12);
    }
}
