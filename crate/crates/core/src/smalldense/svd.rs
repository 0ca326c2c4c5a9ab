use crate::scalar::Scalar;

use super::matrix::DenseMatrix;

const MAX_SWEEPS: usize = 100;

/// Singular values in descending order, by one-sided (Hestenes) Jacobi.
pub fn svd_small<T: Scalar>(a: &DenseMatrix<T>) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let tol = 1e-15;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = T::zero();
                    for i in 0..m {
                        alpha += cp[i].abs() * cp[i].abs();
                        beta += cq[i].abs() * cq[i].abs();
                        gamma += cp[i].conj() * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                let g = gamma.abs();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma.conj().scale(1.0 / g);
                let zeta = (beta - alpha) / (2.0 * g);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..m {
                    let x = cp[i];
                    let y = cq[i] * phase;
                    cp[i] = x.scale(c) - y.scale(s);
                    cq[i] = x.scale(s) + y.scale(c);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x.abs() * x.abs()).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma
}

/// Spectral norm.
pub fn norm2<T: Scalar>(a: &DenseMatrix<T>) -> f64 {
    svd_small(a).first().copied().unwrap_or(0.0)
}

/// 2-norm condition number; `inf` for a singular matrix.
pub fn cond2<T: Scalar>(a: &DenseMatrix<T>) -> f64 {
    let s = svd_small(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}
