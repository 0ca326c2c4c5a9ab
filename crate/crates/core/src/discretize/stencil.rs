use crate::error::{Error, Result};

/// Finite-difference weights for the `deriv`-th derivative at 0 on the
/// integer `offsets` (unit spacing), by Fornberg's recurrence.
pub fn fd_weights(deriv: usize, offsets: &[i64]) -> Result<Vec<f64>> {
    let n = offsets.len();
    if n <= deriv {
        return Err(Error::Invalid(format!("{n} points cannot resolve derivative {deriv}")));
    }
    let mut sorted = offsets.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("stencil offsets must be distinct".into()));
    }
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let m = deriv;
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0];
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    Ok(c.into_iter().map(|row| row[m]).collect())
}

/// Offsets (relative to the node) of the order-`p` stencil for derivative
/// `deriv` at grid index `g ∈ 1..=n` on the index range `0..=n+1`, where
/// indices 0 and n+1 are the boundary. Centered where it fits, otherwise
/// shifted inward; the shifted second-derivative stencil carries one extra
/// point to keep order `p`.
pub fn stencil_offsets(deriv: usize, p: usize, g: usize, n: usize) -> Vec<i64> {
    let half = (p / 2) as i64;
    let (g, last) = (g as i64, n as i64 + 1);
    if g - half >= 0 && g + half <= last {
        return (-half..=half).collect();
    }
    let width = if deriv == 2 { p as i64 + 2 } else { p as i64 + 1 };
    let start = if g - half < 0 { 0 } else { last - (width - 1) };
    (start..start + width).map(|k| k - g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn classic_stencils() {
        assert!(close(&fd_weights(1, &[-1, 0, 1]).unwrap(), &[-0.5, 0.0, 0.5]));
        assert!(close(&fd_weights(2, &[-1, 0, 1]).unwrap(), &[1.0, -2.0, 1.0]));
        assert!(close(
            &fd_weights(2, &[-2, -1, 0, 1, 2]).unwrap(),
            &[-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0]
        ));
    }

    #[test]
    fn vandermonde_conditions() {
        for deriv in 1..=2 {
            for offsets in [vec![0i64, 1, 2, 3, 4, 5], vec![-1, 0, 1, 2, 3, 4, 5], vec![-3, -2, -1, 0, 1, 2, 3]] {
                let w = fd_weights(deriv, &offsets).unwrap();
                let mut fact = 1.0;
                for k in 0..offsets.len() {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    let moment: f64 = w.iter().zip(&offsets).map(|(w, &o)| w * (o as f64).powi(k as i32)).sum::<f64>() / fact;
                    let want = if k == deriv { 1.0 } else { 0.0 };
                    assert!((moment - want).abs() < 1e-12, "deriv {deriv} k {k} {offsets:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_offsets() {
        assert!(fd_weights(2, &[0, 1]).is_err());
        assert!(fd_weights(1, &[0, 0, 1]).is_err());
    }

    #[test]
    fn offsets_near_boundary() {
        assert_eq!(stencil_offsets(2, 2, 1, 5), vec![-1, 0, 1]);
        assert_eq!(stencil_offsets(2, 4, 1, 7), vec![-1, 0, 1, 2, 3, 4]);
        assert_eq!(stencil_offsets(1, 4, 1, 7), vec![-1, 0, 1, 2, 3]);
        assert_eq!(stencil_offsets(2, 4, 7, 7), vec![-4, -3, -2, -1, 0, 1]);
        assert_eq!(stencil_offsets(2, 4, 2, 7), vec![-2, -1, 0, 1, 2]);
    }
}
