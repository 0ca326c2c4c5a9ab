use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::smalldense::DenseMatrix;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Validating constructor.
    pub fn new(nrows: usize, ncols: usize, row_offsets: Vec<usize>, col_indices: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::Dimension("row offsets inconsistent with entries".into()));
        }
        if values.len() != col_indices.len() {
            return Err(Error::Dimension("values and column indices differ in length".into()));
        }
        for i in 0..nrows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::Invalid(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::Invalid(format!("row {i} has unsorted, duplicate or out-of-range columns")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite value".into()));
        }
        Ok(CsrMatrix { nrows, ncols, row_offsets, col_indices, values })
    }

    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        CsrMatrix { nrows, ncols, row_offsets, col_indices, values }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= nrows || *j >= ncols) {
            return Err(Error::Dimension(format!("entry ({i}, {j}) outside {nrows}×{ncols}")));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        CsrMatrix::new(nrows, ncols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix { nrows: n, ncols: n, row_offsets: (0..=n).collect(), col_indices: (0..n).collect(), values: vec![T::one(); n] }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, row_offsets: vec![0; nrows + 1], col_indices: vec![], values: vec![] }
    }

    pub fn from_dense(d: &DenseMatrix<T>) -> Self {
        let mut t = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != T::zero() {
                    t.push((i, j, d[(i, j)]));
                }
            }
        }
        CsrMatrix::from_triplets(d.nrows(), d.ncols(), t).expect("dense entries are in range")
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[T] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.row_cols(i).iter().copied().zip(self.row_values(i).iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.row_cols(i).binary_search(&j) {
            Ok(p) => self.row_values(i)[p],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols, "spmv: x has wrong length");
        assert_eq!(y.len(), self.nrows, "spmv: y has wrong length");
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t).expect("transpose stays in range")
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_complex(&self) -> CsrMatrix<Complex64> {
        self.map(|v| v.to_complex())
    }

    /// `B = P A Pᵀ` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        let n = self.nrows;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        let mut buf: Vec<(usize, T)> = Vec::new();
        for &old in perm {
            buf.clear();
            buf.extend(self.row(old).map(|(j, v)| (inv[j], v)));
            buf.sort_by_key(|e| e.0);
            for &(j, v) in &buf {
                col_indices.push(j);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix { nrows: n, ncols: n, row_offsets, col_indices, values }
    }

    /// `D_r A D_c`.
    pub fn scale_rows_cols(&self, row_scale: &[f64], col_scale: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.values[p] = self.values[p].scale(row_scale[i] * col_scale[self.col_indices[p]]);
            }
        }
        out
    }

    /// Maximum of `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.nrows).flat_map(|i| self.row_cols(i).iter().map(move |&j| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row_values(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.abs() * v.abs()).sum::<f64>().sqrt()
    }
}

/// `α m + β k` on the union pattern.
pub fn combine<T: Scalar>(alpha: T, m: &CsrMatrix<T>, beta: T, k: &CsrMatrix<T>) -> Result<CsrMatrix<T>> {
    if m.nrows != k.nrows || m.ncols != k.ncols {
        return Err(Error::Dimension(format!(
            "combine: {}×{} vs {}×{}",
            m.nrows, m.ncols, k.nrows, k.ncols
        )));
    }
    let mut row_offsets = Vec::with_capacity(m.nrows + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::with_capacity(m.nnz() + k.nnz());
    let mut values = Vec::with_capacity(m.nnz() + k.nnz());
    for i in 0..m.nrows {
        let (mc, mv) = (m.row_cols(i), m.row_values(i));
        let (kc, kv) = (k.row_cols(i), k.row_values(i));
        let (mut p, mut q) = (0, 0);
        while p < mc.len() || q < kc.len() {
            let take_m = q >= kc.len() || (p < mc.len() && mc[p] <= kc[q]);
            let take_k = p >= mc.len() || (q < kc.len() && kc[q] <= mc[p]);
            if take_m && take_k {
                col_indices.push(mc[p]);
                values.push(alpha * mv[p] + beta * kv[q]);
                p += 1;
                q += 1;
            } else if take_m {
                col_indices.push(mc[p]);
                values.push(alpha * mv[p]);
                p += 1;
            } else {
                col_indices.push(kc[q]);
                values.push(beta * kv[q]);
                q += 1;
            }
        }
        row_offsets.push(col_indices.len());
    }
    Ok(CsrMatrix { nrows: m.nrows, ncols: m.ncols, row_offsets, col_indices, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smalldense::DenseMat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.gen::<f64>() < density {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn spmv_identity_and_zero() {
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        assert_eq!(CsrMatrix::<f64>::identity(7).spmv(&x), x);
        assert_eq!(CsrMatrix::<f64>::zeros(7, 7).spmv(&x), vec![0.0; 7]);
    }

    #[test]
    fn spmv_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_sparse(&mut rng, 50, 0.1);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.spmv(&x);
        let yd = a.to_dense().matvec(&x);
        for (u, v) in y.iter().zip(&yd) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn combine_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_sparse(&mut rng, 20, 0.15);
        let k = random_sparse(&mut rng, 20, 0.15);
        assert_eq!(combine(1.0, &m, 0.0, &k).unwrap().to_dense(), m.to_dense());
        assert_eq!(combine(0.0, &m, 1.0, &k).unwrap().to_dense(), k.to_dense());
        let c = combine(2.0, &m, -3.0, &k).unwrap();
        let d: DenseMat = m.to_dense().scaled(2.0).add(&k.to_dense().scaled(-3.0));
        assert!(c.to_dense().max_diff(&d) < 1e-15);
        let (a, b) = (Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25));
        let cc = combine(a, &m.to_complex(), b, &k.to_complex()).unwrap();
        let dd = m.to_dense().to_complex().scaled(a).add(&k.to_dense().to_complex().scaled(b));
        assert!(cc.to_dense().max_diff(&dd) < 1e-15);
    }

    #[test]
    fn triplets_sum_duplicates_and_validate() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.nnz(), 2);
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn symmetric_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sparse(&mut rng, 9, 0.3);
        let perm = vec![3, 1, 8, 0, 2, 7, 5, 4, 6];
        let b = a.permute_symmetric(&perm);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
            }
        }
    }
}
