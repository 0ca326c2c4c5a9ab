use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::smalldense::DenseMat;

use super::csr::{combine, CsrMatrix};

/// `𝓐 = I_s ⊗ M + δt A ⊗ K` acting on stage vectors laid out as s
/// contiguous blocks of length m.
#[derive(Clone, Debug)]
pub struct StageOperator {
    pub m: CsrMatrix<f64>,
    /// `M = I`: mass products are skipped.
    pub mass_identity: bool,
    pub k: CsrMatrix<f64>,
    pub a: DenseMat,
    pub dt: f64,
}

impl StageOperator {
    pub fn new(m: CsrMatrix<f64>, k: CsrMatrix<f64>, a: DenseMat, dt: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || k.nrows() != k.ncols() || m.nrows() != k.nrows() {
            return Err(Error::Dimension("M and K must be square and of equal size".into()));
        }
        if !a.is_square() {
            return Err(Error::Dimension("Butcher matrix must be square".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("time step {dt} must be positive")));
        }
        let mass_identity = m == CsrMatrix::identity(m.nrows());
        Ok(StageOperator { m, mass_identity, k, a, dt })
    }

    /// Operator with `M = I`.
    pub fn with_identity_mass(k: CsrMatrix<f64>, a: DenseMat, dt: f64) -> Result<Self> {
        StageOperator::new(CsrMatrix::identity(k.nrows()), k, a, dt)
    }

    pub fn block_size(&self) -> usize {
        self.k.nrows()
    }

    pub fn stages(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.stages() * self.block_size()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        stage_apply(self, u)
    }
}

/// Block i of the result is `M uᵢ + δt Σⱼ aᵢⱼ K uⱼ`, with one K product per
/// stage.
pub fn stage_apply(op: &StageOperator, u: &[f64]) -> Vec<f64> {
    let (s, m) = (op.stages(), op.block_size());
    assert_eq!(u.len(), s * m, "stage vector has wrong length");
    let ku: Vec<Vec<f64>> = (0..s).map(|j| op.k.spmv(&u[j * m..(j + 1) * m])).collect();
    let mut y = vec![0.0; s * m];
    for i in 0..s {
        let yi = &mut y[i * m..(i + 1) * m];
        if op.mass_identity {
            yi.copy_from_slice(&u[i * m..(i + 1) * m]);
        } else {
            op.m.spmv_into(&u[i * m..(i + 1) * m], yi);
        }
        for j in 0..s {
            let c = op.dt * op.a[(i, j)];
            if c != 0.0 {
                for (y, k) in yi.iter_mut().zip(&ku[j]) {
                    *y += c * k;
                }
            }
        }
    }
    y
}

/// `M + σ K` for a real or complex shift `σ` (already including `δt`).
pub fn assemble_shift<T: Scalar>(m: &CsrMatrix<f64>, k: &CsrMatrix<f64>, sigma: T) -> Result<CsrMatrix<T>> {
    combine(T::one(), &m.map(T::from_real), sigma, &k.map(T::from_real))
}

/// The 2m×2m matrix `I₂ ⊗ M + δt r ⊗ K` for a 2×2 diagonal block `r`.
pub fn assemble_2x2(m: &CsrMatrix<f64>, k: &CsrMatrix<f64>, r: [[f64; 2]; 2], dt: f64) -> Result<CsrMatrix<f64>> {
    let n = m.nrows();
    if k.nrows() != n {
        return Err(Error::Dimension("M and K differ in size".into()));
    }
    let mut t = Vec::with_capacity(2 * m.nnz() + 4 * k.nnz());
    for bi in 0..2 {
        for bj in 0..2 {
            let c = dt * r[bi][bj];
            for i in 0..n {
                if bi == bj {
                    for (j, v) in m.row(i) {
                        t.push((bi * n + i, bj * n + j, v));
                    }
                }
                if c != 0.0 {
                    for (j, v) in k.row(i) {
                        t.push((bi * n + i, bj * n + j, c * v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(2 * n, 2 * n, t)
}
