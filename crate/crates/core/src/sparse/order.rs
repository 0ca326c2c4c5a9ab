use std::collections::VecDeque;

use crate::scalar::Scalar;

use super::csr::CsrMatrix;

const EQUILIBRATION_SWEEPS: usize = 5;

/// Symmetrized adjacency lists (pattern of `A + Aᵀ` without the diagonal).
fn adjacency<T: Scalar>(a: &CsrMatrix<T>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row_cols(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// Breadth-first level structure from `root` restricted to unvisited nodes;
/// returns the nodes of the last level and the depth.
fn last_level(adj: &[Vec<usize>], root: usize, done: &[bool]) -> (Vec<usize>, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut depth = 0;
    let mut last = vec![root];
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !done[w] && dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                if dist[w] > depth {
                    depth = dist[w];
                    last.clear();
                }
                if dist[w] == depth {
                    last.push(w);
                }
                queue.push_back(w);
            }
        }
    }
    (last, depth)
}

/// Reverse Cuthill-McKee ordering; `perm[new] = old`. Each connected
/// component starts from a pseudo-peripheral node.
pub fn rcm_ordering<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let adj = adjacency(a);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&v| !done[v]).min_by_key(|&v| (degree[v], v)).unwrap();
        // pseudo-peripheral node search (George-Liu)
        let mut root = seed;
        let (mut last, mut depth) = last_level(&adj, root, &done);
        loop {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, d2) = last_level(&adj, cand, &done);
            if d2 > depth {
                root = cand;
                last = l2;
                depth = d2;
            } else {
                break;
            }
        }
        let start = order.len();
        done[root] = true;
        order.push(root);
        let mut head = start;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !done[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                done[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Row and column scalings `(r, c)` such that `diag(r) A diag(c)` has unit
/// max-abs entry in every column and at most one in every row: alternating
/// max-norm row/column normalization.
pub fn equilibrate<T: Scalar>(a: &CsrMatrix<T>) -> (Vec<f64>, Vec<f64>) {
    let (nr, nc) = (a.nrows(), a.ncols());
    let mut r = vec![1.0; nr];
    let mut c = vec![1.0; nc];
    for _ in 0..EQUILIBRATION_SWEEPS {
        for i in 0..nr {
            let mx = a.row(i).map(|(j, v)| v.abs() * c[j]).fold(0.0, f64::max);
            if mx > 0.0 {
                r[i] = 1.0 / mx;
            }
        }
        let mut colmax = vec![0.0f64; nc];
        for i in 0..nr {
            for (j, v) in a.row(i) {
                colmax[j] = colmax[j].max(v.abs() * r[i]);
            }
        }
        for j in 0..nc {
            if colmax[j] > 0.0 {
                c[j] = 1.0 / colmax[j];
            }
        }
    }
    (r, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn is_permutation(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
    }

    fn tridiag(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn rcm_identity_and_banded() {
        let id = CsrMatrix::<f64>::identity(6);
        let p = rcm_ordering(&id);
        assert!(is_permutation(&p));
        assert_eq!(id.permute_symmetric(&p).bandwidth(), 0);
        let t = tridiag(20);
        let p = rcm_ordering(&t);
        assert!(is_permutation(&p));
        assert_eq!(t.permute_symmetric(&p).bandwidth(), 1);
    }

    #[test]
    fn rcm_does_not_worsen_random_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = 40;
            // random banded symmetric pattern, scrambled
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 4.0));
                for j in i + 1..(i + 4).min(n) {
                    if rng.gen::<f64>() < 0.6 {
                        t.push((i, j, -1.0));
                        t.push((j, i, -1.0));
                    }
                }
            }
            let a = CsrMatrix::from_triplets(n, n, t).unwrap();
            let mut scramble: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                scramble.swap(i, rng.gen_range(0..=i));
            }
            let b = a.permute_symmetric(&scramble);
            let p = rcm_ordering(&b);
            assert!(is_permutation(&p));
            assert!(b.permute_symmetric(&p).bandwidth() <= b.bandwidth());
        }
    }

    #[test]
    fn equilibration_cases() {
        let (r, c) = equilibrate(&CsrMatrix::<f64>::identity(4));
        assert!(r.iter().chain(&c).all(|&v| v == 1.0));

        let d = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1e6), (1, 1, 1.0)]).unwrap();
        let (r, c) = equilibrate(&d);
        assert!((r[0] * c[0] - 1e-6).abs() < 1e-18 && (r[1] * c[1] - 1.0).abs() < 1e-12);
        assert!((r[0] - 1e-6).abs() < 1e-18 && (c[0] - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.gen::<f64>() < 0.2 {
                    t.push((i, j, rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-6.0..6.0))));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let (r, c) = equilibrate(&a);
        let s = a.scale_rows_cols(&r, &c);
        let mut colmax = vec![0.0f64; n];
        for i in 0..n {
            let rm = s.row_values(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!((0.1..=1.0 + 1e-12).contains(&rm), "row {i} max {rm}");
            for (j, v) in s.row(i) {
                colmax[j] = colmax[j].max(v.abs());
            }
        }
        assert!(colmax.iter().all(|&m| (0.1..=1.0 + 1e-12).contains(&m)));
    }
}
