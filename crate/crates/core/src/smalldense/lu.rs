use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::matrix::DenseMatrix;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("LU of a {}x{} matrix", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let threshold = 1e-14 * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= threshold || pmax == 0.0 {
                return Err(Error::Singular { step: k, pivot: pmax });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }
}

/// Solves `a x = b` for each right-hand side in `rhs`.
pub fn dense_lu_solve<T: Scalar>(a: &DenseMatrix<T>, rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let lu = DenseLu::factor(a)?;
    Ok(rhs.iter().map(|b| lu.solve(b)).collect())
}

pub fn dense_inverse<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.nrows();
    let lu = DenseLu::factor(a)?;
    let mut inv = DenseMatrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = T::zero());
        e[j] = T::one();
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::smalldense::{cond2, DenseMat};

    #[test]
    fn identity_returns_rhs() {
        let b = vec![vec![1.5, -2.0, 3.0]];
        let x = dense_lu_solve(&DenseMat::identity(3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_system() {
        let a = DenseMat::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = dense_lu_solve(&a, &[vec![2.0, 8.0]]).unwrap();
        assert_eq!(x[0], vec![1.0, 2.0]);
    }

    #[test]
    fn random_complex_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DenseMatrix::from_fn(6, 6, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b: Vec<Complex64> = (0..6).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let x = &dense_lu_solve(&a, &[b.clone()]).unwrap()[0];
        let ax = a.matvec(x);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-12 * cond2(&a) * bn, "residual {res}");
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DenseMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(DenseLu::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = DenseMat::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.0], vec![0.2, 0.0, 2.0]]);
        let inv = dense_inverse(&a).unwrap();
        assert!(a.matmul(&inv).max_diff(&DenseMat::identity(3)) < 1e-14);
    }
}
