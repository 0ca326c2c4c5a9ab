use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lu::dense_inverse;
use super::matrix::CDenseMat;
use super::schur::SchurForm;
use super::svd::cond2;

/// `a = x diag(lambda) x⁻¹`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigDecomp {
    pub x: CDenseMat,
    pub lambda: Vec<Complex64>,
    pub cond_x: f64,
}

impl EigDecomp {
    pub fn reconstruct(&self) -> Result<CDenseMat> {
        let xinv = dense_inverse(&self.x)?;
        Ok(self.x.matmul(&CDenseMat::diag(&self.lambda)).matmul(&xinv))
    }
}

/// Converts a real Schur form to a complex one, `q r qᵀ = u t uᴴ`, by
/// annihilating the subdiagonal of each 2×2 block with a complex rotation.
/// Each block contributes its eigenvalue with positive imaginary part first.
pub fn rsf2csf(sf: &SchurForm) -> (CDenseMat, CDenseMat) {
    let n = sf.n();
    let mut u = sf.q.to_complex();
    let mut t = sf.r.to_complex();
    let starts = sf.block_starts();
    for (&k, &b) in starts.iter().zip(&sf.block_sizes).rev() {
        if b != 2 {
            continue;
        }
        let m = k + 1;
        let (a, bb, c, d) = (sf.r[(k, k)], sf.r[(k, m)], sf.r[(m, k)], sf.r[(m, m)]);
        let mean = 0.5 * (a + d);
        let half = 0.5 * (a - d);
        let lambda = Complex64::new(mean, (-(half * half + bb * c)).max(0.0).sqrt());
        let mu = lambda - t[(m, m)];
        let sub = t[(m, k)];
        let r = mu.norm().hypot(sub.norm());
        let cr = mu / r;
        let sr = sub / r;
        // G = [conj(c) s; -s c]
        let g = [[cr.conj(), sr], [-sr, cr]];
        for j in k..n {
            let x = t[(k, j)];
            let y = t[(m, j)];
            t[(k, j)] = g[0][0] * x + g[0][1] * y;
            t[(m, j)] = g[1][0] * x + g[1][1] * y;
        }
        // right-multiply by Gᴴ
        let gh = [[g[0][0].conj(), g[1][0].conj()], [g[0][1].conj(), g[1][1].conj()]];
        for i in 0..=m {
            let x = t[(i, k)];
            let y = t[(i, m)];
            t[(i, k)] = x * gh[0][0] + y * gh[1][0];
            t[(i, m)] = x * gh[0][1] + y * gh[1][1];
        }
        for i in 0..n {
            let x = u[(i, k)];
            let y = u[(i, m)];
            u[(i, k)] = x * gh[0][0] + y * gh[1][0];
            u[(i, m)] = x * gh[0][1] + y * gh[1][1];
        }
        t[(m, k)] = Complex64::new(0.0, 0.0);
    }
    (u, t)
}

/// Eigenvectors by back-substitution on the complex Schur form.
pub fn eig_from_schur(sf: &SchurForm) -> Result<EigDecomp> {
    let n = sf.n();
    let (u, t) = rsf2csf(sf);
    let lambda = t.diagonal();
    let threshold = 1e-10 * sf.r.max_abs().max(f64::MIN_POSITIVE);
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            gap = gap.min((lambda[i] - lambda[j]).norm());
        }
    }
    if gap < threshold {
        return Err(Error::Defective { gap, threshold });
    }
    let mut y = CDenseMat::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            y[(i, k)] = -acc / (t[(i, i)] - lambda[k]);
        }
    }
    let mut x = u.matmul(&y);
    for k in 0..n {
        let norm = (0..n).map(|i| x[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            x[(i, k)] /= norm;
        }
    }
    let cond_x = cond2(&x);
    Ok(EigDecomp { x, lambda, cond_x })
}
