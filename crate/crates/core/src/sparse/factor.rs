use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::csr::CsrMatrix;
use super::order::{equilibrate, rcm_ordering};

const PIVOT_RTOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    #[serde(rename = "ILU0", alias = "ilu0")]
    Ilu0,
    #[serde(rename = "SparseLU", alias = "sparselu", alias = "lu")]
    SparseLu,
}

impl std::str::FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ilu0" | "ilu" => Ok(FactorKind::Ilu0),
            "sparselu" | "lu" => Ok(FactorKind::SparseLu),
            _ => Err(Error::Invalid(format!("unknown backend '{s}' (expected ILU0 or SparseLU)"))),
        }
    }
}

impl std::fmt::Display for FactorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FactorKind {
    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Ilu0 => "ILU0",
            FactorKind::SparseLu => "SparseLU",
        }
    }
}

/// `P D_r A D_c Pᵀ ≈ L U` with unit lower `L` (strict part stored) and upper
/// `U` (diagonal included). `perm[new] = old`.
#[derive(Clone, Debug)]
pub struct FactorizedBlock<T> {
    pub kind: FactorKind,
    pub l: CsrMatrix<T>,
    pub u: CsrMatrix<T>,
    pub perm: Vec<usize>,
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
}

impl<T: Scalar> FactorizedBlock<T> {
    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn nnz(&self) -> usize {
        self.l.nnz() + self.u.nnz()
    }

    /// Solves `A x = b` with the (approximate) factors.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        block_solve(self, b)
    }

    /// Product `L U` of the factors in the preprocessed ordering/scaling.
    pub fn product(&self) -> CsrMatrix<T> {
        let n = self.n();
        let mut t = Vec::new();
        for i in 0..n {
            let mut row = vec![T::zero(); n];
            for (j, v) in self.u.row(i) {
                row[j] += v;
            }
            for (k, lik) in self.l.row(i) {
                for (j, v) in self.u.row(k) {
                    row[j] += lik * v;
                }
            }
            for (j, v) in row.into_iter().enumerate() {
                if v != T::zero() {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t).expect("product entries in range")
    }
}

/// The reordered and equilibrated matrix the factors approximate.
pub fn preprocess<T: Scalar>(a: &CsrMatrix<T>) -> (CsrMatrix<T>, Vec<usize>, Vec<f64>, Vec<f64>) {
    let perm = rcm_ordering(a);
    let p = a.permute_symmetric(&perm);
    let (r, c) = equilibrate(&p);
    let scaled = p.scale_rows_cols(&r, &c);
    // scalings are stored in the original numbering
    let n = a.nrows();
    let mut row_scale = vec![0.0; n];
    let mut col_scale = vec![0.0; n];
    for (new, &old) in perm.iter().enumerate() {
        row_scale[old] = r[new];
        col_scale[old] = c[new];
    }
    (scaled, perm, row_scale, col_scale)
}

/// Row-wise (IKJ) elimination. With `fill = false` updates outside the
/// pattern of `a` are dropped (ILU(0)).
fn eliminate<T: Scalar>(a: &CsrMatrix<T>, fill: bool, kind: &'static str) -> Result<(CsrMatrix<T>, CsrMatrix<T>)> {
    let n = a.nrows();
    let mut work = vec![T::zero(); n];
    let mut mark = vec![usize::MAX; n];
    let (mut l_off, mut l_col, mut l_val) = (vec![0usize], Vec::new(), Vec::new());
    let (mut u_off, mut u_col, mut u_val) = (vec![0usize], Vec::new(), Vec::new());
    let mut u_diag: Vec<T> = Vec::with_capacity(n);
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut upper: Vec<usize> = Vec::new();
    for i in 0..n {
        upper.clear();
        let mut rowmax = 0.0f64;
        for (j, v) in a.row(i) {
            mark[j] = i;
            work[j] = v;
            rowmax = rowmax.max(v.abs());
            if j < i {
                heap.push(Reverse(j));
            } else {
                upper.push(j);
            }
        }
        while let Some(Reverse(k)) = heap.pop() {
            let lik = work[k] / u_diag[k];
            if lik == T::zero() {
                continue;
            }
            for p in u_off[k]..u_off[k + 1] {
                let j = u_col[p];
                if j == k {
                    continue;
                }
                if mark[j] != i {
                    if !fill {
                        continue;
                    }
                    mark[j] = i;
                    work[j] = T::zero();
                    if j < i {
                        heap.push(Reverse(j));
                    } else {
                        upper.push(j);
                    }
                }
                work[j] -= lik * u_val[p];
            }
            l_col.push(k);
            l_val.push(lik);
        }
        // heap pops ascending, so the L row is already sorted
        l_off.push(l_col.len());
        upper.sort_unstable();
        if mark[i] != i || upper.first() != Some(&i) {
            return Err(Error::ZeroPivot { row: i, kind });
        }
        let pivot = work[i];
        if !(pivot.abs() > PIVOT_RTOL * rowmax) || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: i, kind });
        }
        u_diag.push(pivot);
        for &j in &upper {
            u_col.push(j);
            u_val.push(work[j]);
        }
        u_off.push(u_col.len());
    }
    Ok((
        CsrMatrix::from_parts_unchecked(n, n, l_off, l_col, l_val),
        CsrMatrix::from_parts_unchecked(n, n, u_off, u_col, u_val),
    ))
}

fn factor<T: Scalar>(a: &CsrMatrix<T>, kind: FactorKind) -> Result<FactorizedBlock<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("factorization needs a square matrix".into()));
    }
    let (scaled, perm, row_scale, col_scale) = preprocess(a);
    let (l, u) = eliminate(&scaled, kind == FactorKind::SparseLu, kind.name())?;
    Ok(FactorizedBlock { kind, l, u, perm, row_scale, col_scale })
}

/// Incomplete LU restricted to the pattern of the preprocessed matrix.
pub fn ilu0<T: Scalar>(a: &CsrMatrix<T>) -> Result<FactorizedBlock<T>> {
    factor(a, FactorKind::Ilu0)
}

/// Complete LU with fill; no pivoting beyond the preprocessing.
pub fn sparse_lu<T: Scalar>(a: &CsrMatrix<T>) -> Result<FactorizedBlock<T>> {
    factor(a, FactorKind::SparseLu)
}

pub fn factorize<T: Scalar>(a: &CsrMatrix<T>, kind: FactorKind) -> Result<FactorizedBlock<T>> {
    factor(a, kind)
}

/// `x = D_c Pᵀ U⁻¹ L⁻¹ P D_r b`.
pub fn block_solve<T: Scalar>(f: &FactorizedBlock<T>, b: &[T]) -> Vec<T> {
    let n = f.n();
    assert_eq!(b.len(), n, "block_solve: rhs has wrong length");
    let mut y: Vec<T> = f.perm.iter().map(|&old| b[old].scale(f.row_scale[old])).collect();
    for i in 0..n {
        let mut acc = y[i];
        for (k, v) in f.l.row(i) {
            acc -= v * y[k];
        }
        y[i] = acc;
    }
    for i in (0..n).rev() {
        let cols = f.u.row_cols(i);
        let vals = f.u.row_values(i);
        let mut acc = y[i];
        for (&j, &v) in cols.iter().zip(vals).skip(1) {
            acc -= v * y[j];
        }
        y[i] = acc / vals[0];
    }
    let mut x = vec![T::zero(); n];
    for (new, &old) in f.perm.iter().enumerate() {
        x[old] = y[new].scale(f.col_scale[old]);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_fdm, Grid, PdeCoeffs};
    use crate::smalldense::{dense_lu_solve, DenseLu};
    use crate::sparse::assemble_shift;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(rng: &mut ChaCha8Rng, n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen::<f64>()));
            if i > 0 {
                t.push((i, i - 1, rng.gen_range(-1.0..1.0)));
                t.push((i - 1, i, rng.gen_range(-1.0..1.0)));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    fn max_rel(x: &[f64], y: &[f64]) -> f64 {
        let s = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / s
    }

    #[test]
    fn identity_factors() {
        let id = CsrMatrix::<f64>::identity(5);
        for f in [ilu0(&id).unwrap(), sparse_lu(&id).unwrap()] {
            assert_eq!(f.l.nnz(), 0);
            assert_eq!(f.u.to_dense(), crate::smalldense::DenseMat::identity(5));
            let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
            assert_eq!(f.solve(&b), b);
        }
    }

    #[test]
    fn diagonal_divides() {
        let d = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (1, 1, -4.0), (2, 2, 0.5)]).unwrap();
        let x = sparse_lu(&d).unwrap().solve(&[2.0, 2.0, 2.0]);
        assert!(max_rel(&x, &[1.0, -0.5, 4.0]) < 1e-15);
    }

    #[test]
    fn ilu0_is_exact_without_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = tridiag(&mut rng, 40);
            let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xi = ilu0(&a).unwrap().solve(&b);
            let xl = sparse_lu(&a).unwrap().solve(&b);
            let xd = dense_lu_solve(&a.to_dense(), &[b.clone()]).unwrap().remove(0);
            assert!(max_rel(&xi, &xd) < 1e-12);
            assert!(max_rel(&xl, &xd) < 1e-12);
            let fi = ilu0(&a).unwrap();
            let fl = sparse_lu(&a).unwrap();
            assert!(fi.product().to_dense().max_diff(&fl.product().to_dense()) < 1e-14);
        }
    }

    #[test]
    fn ilu0_keeps_pattern() {
        let k = assemble_fdm(&Grid::cube(5).unwrap(), &PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]), 4).unwrap();
        let a = assemble_shift(&CsrMatrix::identity(k.nrows()), &k, 0.05).unwrap();
        let f = ilu0(&a).unwrap();
        let (scaled, ..) = preprocess(&a);
        for i in 0..a.nrows() {
            for &j in f.l.row_cols(i).iter().chain(f.u.row_cols(i)) {
                assert!(scaled.row_cols(i).binary_search(&j).is_ok(), "fill at ({i}, {j})");
            }
        }
        let res = f.product().to_dense().sub(&scaled.to_dense()).frobenius() / scaled.frobenius();
        assert!(res > 0.0 && res.is_finite());
    }

    #[test]
    fn sparse_lu_solves_fdm_blocks() {
        let k = assemble_fdm(&Grid::cube(4).unwrap(), &PdeCoeffs::new(1.0, [1.0, 1.0, 1.0]), 2).unwrap();
        let n = k.nrows();
        let m = CsrMatrix::identity(n);
        let z = Complex64::new(0.1423, 0.1358) * 0.25;
        let a = assemble_shift(&m, &k, z).unwrap();
        let f = sparse_lu(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
        let x = f.solve(&b);
        let r = a.spmv(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let bn = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-12 * bn, "residual {err}");
    }

    #[test]
    fn sparse_lu_matches_dense_on_random_tridiagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = tridiag(&mut rng, 60);
        let b: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = DenseLu::factor(&a.to_dense()).unwrap();
        assert!(max_rel(&sparse_lu(&a).unwrap().solve(&b), &lu.solve(&b)) < 1e-12);
    }

    #[test]
    fn zero_pivot_reports_row() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(sparse_lu(&a), Err(Error::ZeroPivot { .. })));
    }
}
