//! Real Schur decomposition (Householder Hessenberg reduction followed by
//! Francis double-shift QR), adjacent-block reordering and 2×2 block
//! orientation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lu::DenseLu;
use super::matrix::DenseMat;

const EPS: f64 = f64::EPSILON;
const MAX_ITERS_PER_EIG: usize = 40;

/// `a = q r qᵀ` with `q` orthogonal and `r` standardized quasi-upper-triangular:
/// every 2×2 diagonal block has equal diagonal entries and off-diagonals of
/// opposite sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurForm {
    pub q: DenseMat,
    pub r: DenseMat,
    pub block_sizes: Vec<usize>,
}

/// Ordering applied to the diagonal blocks by [`reorder_schur`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKey {
    DescendingRealPart,
    AscendingRealPart,
    AscendingModulus,
    DescendingModulus,
}

impl OrderKey {
    fn value(self, z: Complex64) -> f64 {
        match self {
            OrderKey::DescendingRealPart | OrderKey::AscendingRealPart => z.re,
            OrderKey::AscendingModulus | OrderKey::DescendingModulus => z.norm(),
        }
    }

    fn ascending(self) -> bool {
        matches!(self, OrderKey::AscendingRealPart | OrderKey::AscendingModulus)
    }

    pub fn reversed(self) -> Self {
        match self {
            OrderKey::DescendingRealPart => OrderKey::AscendingRealPart,
            OrderKey::AscendingRealPart => OrderKey::DescendingRealPart,
            OrderKey::AscendingModulus => OrderKey::DescendingModulus,
            OrderKey::DescendingModulus => OrderKey::AscendingModulus,
        }
    }
}

impl SchurForm {
    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    /// Start row of each diagonal block.
    pub fn block_starts(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .scan(0, |acc, &b| {
                let start = *acc;
                *acc += b;
                Some(start)
            })
            .collect()
    }

    pub fn reconstruct(&self) -> DenseMat {
        self.q.matmul(&self.r).matmul(&self.q.transpose())
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        block_eigenvalues(&self.r, &self.block_sizes)
    }
}

/// Eigenvalues of a standardized quasi-triangular matrix, block by block;
/// each 2×2 block yields its pair with positive imaginary part first.
pub fn block_eigenvalues(r: &DenseMat, block_sizes: &[usize]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(r.nrows());
    let mut k = 0;
    for &b in block_sizes {
        if b == 1 {
            out.push(Complex64::new(r[(k, k)], 0.0));
        } else {
            let z = pair_eigenvalue(r[(k, k)], r[(k, k + 1)], r[(k + 1, k)], r[(k + 1, k + 1)]);
            out.push(z);
            out.push(z.conj());
        }
        k += b;
    }
    out
}

/// Eigenvalue with nonnegative imaginary part of a 2×2 block with complex spectrum.
fn pair_eigenvalue(a: f64, b: f64, c: f64, d: f64) -> Complex64 {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    Complex64::new(mean, (-disc).max(0.0).sqrt())
}

fn householder(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    // Returns (v, beta) with (I - beta v vᵀ) x = ∓‖x‖ e1, or None if x[1..] == 0.
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return None;
    }
    let norm = (x[0] * x[0] + tail).sqrt();
    let mut v = x.to_vec();
    v[0] += if x[0] >= 0.0 { norm } else { -norm };
    let vv: f64 = v.iter().map(|t| t * t).sum();
    Some((v, 2.0 / vv))
}

/// Left-apply `I - beta v vᵀ` to rows `rows.start..` of `h`, columns `cols`.
fn reflect_rows(h: &mut DenseMat, v: &[f64], beta: f64, row0: usize, cols: std::ops::Range<usize>) {
    for j in cols {
        let mut s = 0.0;
        for (t, vt) in v.iter().enumerate() {
            s += vt * h[(row0 + t, j)];
        }
        s *= beta;
        for (t, vt) in v.iter().enumerate() {
            h[(row0 + t, j)] -= s * vt;
        }
    }
}

/// Right-apply `I - beta v vᵀ` to columns `col0..` of `h`, rows `rows`.
fn reflect_cols(h: &mut DenseMat, v: &[f64], beta: f64, col0: usize, rows: std::ops::Range<usize>) {
    for i in rows {
        let mut s = 0.0;
        for (t, vt) in v.iter().enumerate() {
            s += vt * h[(i, col0 + t)];
        }
        s *= beta;
        for (t, vt) in v.iter().enumerate() {
            h[(i, col0 + t)] -= s * vt;
        }
    }
}

fn hessenberg(a: &DenseMat) -> (DenseMat, DenseMat) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut z = DenseMat::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        if let Some((v, beta)) = householder(&x) {
            reflect_rows(&mut h, &v, beta, k + 1, 0..n);
            reflect_cols(&mut h, &v, beta, k + 1, 0..n);
            reflect_cols(&mut z, &v, beta, k + 1, 0..n);
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    (h, z)
}

/// LAPACK `dlanv2`-style standardization of a 2×2 block.
/// Returns the standardized entries and `(cs, sn)` with
/// `[a b; c d] = G [aa bb; cc dd] Gᵀ`, `G = [cs -sn; sn cs]`.
fn standardize_2x2(a: f64, b: f64, c: f64, d: f64) -> ([f64; 4], f64, f64) {
    let sign = |x: f64, y: f64| if y >= 0.0 { x.abs() } else { -x.abs() };
    let (mut a, mut b, mut c, mut d) = (a, b, c, d);
    let (mut cs, mut sn);
    if c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if b == 0.0 {
        cs = 0.0;
        sn = 1.0;
        std::mem::swap(&mut a, &mut d);
        b = -c;
        c = 0.0;
    } else if a - d == 0.0 && sign(1.0, b) != sign(1.0, c) {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = a - d;
        let mut p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * sign(1.0, b) * sign(1.0, c);
        let scale = p.abs().max(bcmax);
        let mut z = p / scale * p + bcmax / scale * bcmis;
        if z >= 4.0 * EPS {
            // real eigenvalues: make the block upper triangular
            z = p + sign(scale.sqrt() * z.sqrt(), p);
            a = d + z;
            d -= bcmax / z * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = c / tau;
            b -= c;
            c = 0.0;
        } else {
            let sigma = b + c;
            let tau = sigma.hypot(temp);
            cs = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            sn = -(p / (tau * cs)) * sign(1.0, sigma);
            let aa = a * cs + b * sn;
            let bb = -a * sn + b * cs;
            let cc = c * cs + d * sn;
            let dd = -c * sn + d * cs;
            a = aa * cs + cc * sn;
            b = bb * cs + dd * sn;
            c = -aa * sn + cc * cs;
            d = -bb * sn + dd * cs;
            let mean = 0.5 * (a + d);
            a = mean;
            d = mean;
            if c != 0.0 {
                if b != 0.0 {
                    if sign(1.0, b) == sign(1.0, c) {
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        p = sign(sab * sac, c);
                        let tau = 1.0 / (b + c).abs().sqrt();
                        a = mean + p;
                        d = mean - p;
                        b -= c;
                        c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t = cs * cs1 - sn * sn1;
                        sn = cs * sn1 + sn * cs1;
                        cs = t;
                    }
                } else {
                    b = -c;
                    c = 0.0;
                    let t = cs;
                    cs = -sn;
                    sn = t;
                }
            }
        }
    }
    ([a, b, c, d], cs, sn)
}

/// Applies the similarity `Gᵀ R G` on rows/cols `k, k+1` and `Q ← Q G`.
fn rotate_pair(r: &mut DenseMat, q: &mut DenseMat, k: usize, cs: f64, sn: f64) {
    let n = r.nrows();
    for j in 0..n {
        let x = r[(k, j)];
        let y = r[(k + 1, j)];
        r[(k, j)] = cs * x + sn * y;
        r[(k + 1, j)] = -sn * x + cs * y;
    }
    for i in 0..n {
        let x = r[(i, k)];
        let y = r[(i, k + 1)];
        r[(i, k)] = cs * x + sn * y;
        r[(i, k + 1)] = -sn * x + cs * y;
    }
    for i in 0..q.nrows() {
        let x = q[(i, k)];
        let y = q[(i, k + 1)];
        q[(i, k)] = cs * x + sn * y;
        q[(i, k + 1)] = -sn * x + cs * y;
    }
}

/// Standardizes the 2×2 block at `k`; returns true if it stays a 2×2 block.
fn standardize_block(r: &mut DenseMat, q: &mut DenseMat, k: usize) -> bool {
    let ([a, b, c, d], cs, sn) = standardize_2x2(r[(k, k)], r[(k, k + 1)], r[(k + 1, k)], r[(k + 1, k + 1)]);
    if !(cs == 1.0 && sn == 0.0) {
        rotate_pair(r, q, k, cs, sn);
    }
    r[(k, k)] = a;
    r[(k, k + 1)] = b;
    r[(k + 1, k)] = c;
    r[(k + 1, k + 1)] = d;
    c != 0.0
}

/// Zeroes everything below the block diagonal and recomputes block sizes
/// from the subdiagonal.
fn finalize_structure(r: &mut DenseMat) -> Vec<usize> {
    let n = r.nrows();
    let mut sizes = Vec::new();
    let mut k = 0;
    while k < n {
        let b = if k + 1 < n && r[(k + 1, k)] != 0.0 { 2 } else { 1 };
        for i in k + b..n {
            for j in k..k + b {
                r[(i, j)] = 0.0;
            }
        }
        sizes.push(b);
        k += b;
    }
    sizes
}

/// Flips the sign of `q`'s column for every 1×1 block whose first nonzero
/// entry is negative.
fn normalize_signs(sf: &mut SchurForm) {
    let n = sf.n();
    for start in sf.block_starts().into_iter().zip(sf.block_sizes.clone()).filter(|&(_, b)| b == 1).map(|(s, _)| s) {
        let first = (0..n).map(|i| sf.q[(i, start)]).find(|&v| v.abs() > 1e-14);
        if matches!(first, Some(v) if v < 0.0) {
            for i in 0..n {
                sf.q[(i, start)] = -sf.q[(i, start)];
                sf.r[(i, start)] = -sf.r[(i, start)];
                sf.r[(start, i)] = -sf.r[(start, i)];
            }
            // the diagonal entry was negated twice
        }
    }
}

/// Real Schur decomposition `a = q r qᵀ`.
pub fn real_schur(a: &DenseMat) -> Result<SchurForm> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("real_schur of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if !a.all_finite() {
        return Err(Error::Invalid("real_schur input has non-finite entries".into()));
    }
    let n = a.nrows();
    let (mut h, mut z) = hessenberg(a);
    let norm = h.max_abs().max(f64::MIN_POSITIVE);

    let mut hi = n as isize - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi >= 1 {
        let hiu = hi as usize;
        let mut l = hiu;
        while l > 0 {
            let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == hiu {
            hi -= 1;
            iter = 0;
            continue;
        }
        if l + 1 == hiu {
            hi -= 2;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > MAX_ITERS_PER_EIG * n {
            return Err(Error::SchurNoConvergence { iterations: total, row: hiu });
        }
        francis_step(&mut h, &mut z, l, hiu, iter);
    }

    let mut r = h;
    let mut q = z;
    // standardize 2×2 blocks
    let mut k = 0;
    while k < n {
        if k + 1 < n && r[(k + 1, k)] != 0.0 {
            standardize_block(&mut r, &mut q, k);
            k += 2;
        } else {
            k += 1;
        }
    }
    let block_sizes = finalize_structure(&mut r);
    let mut sf = SchurForm { q, r, block_sizes };
    normalize_signs(&mut sf);
    Ok(sf)
}

fn francis_step(h: &mut DenseMat, z: &mut DenseMat, l: usize, hi: usize, iter: usize) {
    let n = h.nrows();
    let (s, t) = if iter % 10 == 0 {
        // exceptional shift
        let w = h[(hi, hi - 1)].abs() + h[(hi - 1, hi - 2)].abs();
        let x = h[(hi, hi)] + 0.75 * w;
        (2.0 * x, x * x - 0.4375 * w * w)
    } else {
        let (a, b, c, d) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
        (a + d, a * d - b * c)
    };
    let mut x = h[(l, l)] * h[(l, l)] + h[(l, l + 1)] * h[(l + 1, l)] - s * h[(l, l)] + t;
    let mut y = h[(l + 1, l)] * (h[(l, l)] + h[(l + 1, l + 1)] - s);
    let mut zz = h[(l + 1, l)] * h[(l + 2, l + 1)];
    for k in l..=hi - 2 {
        if let Some((v, beta)) = householder(&[x, y, zz]) {
            let q = if k > l { k - 1 } else { l };
            reflect_rows(h, &v, beta, k, q..n);
            let r = (k + 3).min(hi);
            reflect_cols(h, &v, beta, k, 0..r + 1);
            reflect_cols(z, &v, beta, k, 0..n);
        }
        x = h[(k + 1, k)];
        y = h[(k + 2, k)];
        if k < hi - 2 {
            zz = h[(k + 3, k)];
        }
    }
    if let Some((v, beta)) = householder(&[x, y]) {
        reflect_rows(h, &v, beta, hi - 1, hi - 2..n);
        reflect_cols(h, &v, beta, hi - 1, 0..hi + 1);
        reflect_cols(z, &v, beta, hi - 1, 0..n);
    }
    // bulge remnants below the subdiagonal are roundoff
    for j in l..hi {
        for i in j + 2..=hi {
            h[(i, j)] = 0.0;
        }
    }
}

/// Swaps the adjacent diagonal blocks starting at `k` (sizes `p` then `q`).
fn swap_blocks(sf: &mut SchurForm, k: usize, p: usize, qs: usize) -> Result<()> {
    let n = sf.n();
    let m = p + qs;
    let r = &sf.r;
    // Sylvester equation A11 X - X A22 = A12
    let dim = p * qs;
    let mut sys = DenseMat::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    let idx = |i: usize, j: usize| i * qs + j;
    for i in 0..p {
        for j in 0..qs {
            rhs[idx(i, j)] = r[(k + i, k + p + j)];
            for l in 0..p {
                sys[(idx(i, j), idx(l, j))] += r[(k + i, k + l)];
            }
            for l in 0..qs {
                sys[(idx(i, j), idx(i, l))] -= r[(k + p + l, k + p + j)];
            }
        }
    }
    let lu = DenseLu::factor(&sys).map_err(|e| Error::SwapFailed { position: k, reason: format!("Sylvester solve: {e}") })?;
    let x = lu.solve(&rhs);
    if x.iter().any(|v| !v.is_finite() || v.abs() > 1e10) {
        return Err(Error::SwapFailed { position: k, reason: "ill-conditioned Sylvester solution".into() });
    }
    // orthogonal basis of span [-X; I]
    let mut basis = DenseMat::zeros(m, qs);
    for i in 0..p {
        for j in 0..qs {
            basis[(i, j)] = -x[idx(i, j)];
        }
    }
    for j in 0..qs {
        basis[(p + j, j)] = 1.0;
    }
    let mut qfull = DenseMat::identity(m);
    for j in 0..qs {
        let col: Vec<f64> = (j..m).map(|i| basis[(i, j)]).collect();
        if let Some((v, beta)) = householder(&col) {
            reflect_rows(&mut basis, &v, beta, j, 0..qs);
            reflect_cols(&mut qfull, &v, beta, j, 0..m);
        }
    }
    // apply the similarity to R and accumulate into Q
    let before = sf.r.max_abs();
    {
        let r = &mut sf.r;
        let mut tmp = vec![0.0; m];
        for j in 0..n {
            for (a, t) in tmp.iter_mut().enumerate() {
                *t = (0..m).map(|b| qfull[(b, a)] * r[(k + b, j)]).sum();
            }
            for a in 0..m {
                r[(k + a, j)] = tmp[a];
            }
        }
        for i in 0..n {
            for (a, t) in tmp.iter_mut().enumerate() {
                *t = (0..m).map(|b| r[(i, k + b)] * qfull[(b, a)]).sum();
            }
            for a in 0..m {
                r[(i, k + a)] = tmp[a];
            }
        }
        let qm = &mut sf.q;
        for i in 0..n {
            for (a, t) in tmp.iter_mut().enumerate() {
                *t = (0..m).map(|b| qm[(i, k + b)] * qfull[(b, a)]).sum();
            }
            for a in 0..m {
                qm[(i, k + a)] = tmp[a];
            }
        }
    }
    // the new lower-left block must vanish
    let mut resid: f64 = 0.0;
    for i in qs..m {
        for j in 0..qs {
            resid = resid.max(sf.r[(k + i, k + j)].abs());
            sf.r[(k + i, k + j)] = 0.0;
        }
    }
    if resid > 1e-10 * before.max(1.0) {
        return Err(Error::SwapFailed { position: k, reason: format!("residual {resid:e} after exchange") });
    }
    if qs == 2 {
        standardize_block(&mut sf.r, &mut sf.q, k);
    }
    if p == 2 {
        standardize_block(&mut sf.r, &mut sf.q, k + qs);
    }
    sf.block_sizes = finalize_structure(&mut sf.r);
    Ok(())
}

/// Reorders the diagonal blocks of `sf` by `key` using adjacent swaps
/// (stable: blocks with equal keys keep their relative order).
pub fn reorder_schur(sf: &SchurForm, key: OrderKey) -> Result<SchurForm> {
    let mut out = sf.clone();
    let scale = sf.r.max_abs().max(f64::MIN_POSITIVE);
    let tie = 1e-12 * scale;
    let block_key = |f: &SchurForm, idx: usize| -> f64 {
        let start = f.block_starts()[idx];
        let z = block_eigenvalues(&f.r, &f.block_sizes)[start];
        key.value(z)
    };
    let max_passes = out.block_sizes.len() * out.block_sizes.len() + 1;
    for _ in 0..max_passes {
        let mut swapped = false;
        let mut b = 0;
        while b + 1 < out.block_sizes.len() {
            let (left, right) = (block_key(&out, b), block_key(&out, b + 1));
            let out_of_order = if key.ascending() { left > right + tie } else { left < right - tie };
            if out_of_order {
                let k = out.block_starts()[b];
                let (p, q) = (out.block_sizes[b], out.block_sizes[b + 1]);
                let expected = out.block_sizes.len();
                swap_blocks(&mut out, k, p, q)?;
                if out.block_sizes.len() != expected {
                    return Err(Error::SwapFailed { position: k, reason: "block structure changed during exchange".into() });
                }
                swapped = true;
            }
            b += 1;
        }
        if !swapped {
            normalize_signs(&mut out);
            return Ok(out);
        }
    }
    Err(Error::SwapFailed { position: 0, reason: "ordering did not settle".into() })
}

/// Conjugates every 2×2 block `[α γ; β α]` with `|β| > |γ|` by the 2×2 flip,
/// leaving `|r₂₁| ≤ |r₁₂|` in every block.
pub fn orient_2x2_blocks(sf: &SchurForm) -> Result<SchurForm> {
    let mut out = sf.clone();
    for (k, b) in sf.block_starts().into_iter().zip(sf.block_sizes.iter().copied()) {
        if b != 2 {
            continue;
        }
        let (alpha, gamma, beta) = (out.r[(k, k)], out.r[(k, k + 1)], out.r[(k + 1, k)]);
        if !(alpha > 0.0) {
            return Err(Error::Orientation { row: k, reason: format!("diagonal {alpha} is not positive") });
        }
        if !(beta * gamma < 0.0) {
            return Err(Error::Orientation { row: k, reason: format!("off-diagonal product {} is not negative", beta * gamma) });
        }
        if beta.abs() > gamma.abs() {
            out.r.swap_rows(k, k + 1);
            out.r.swap_cols(k, k + 1);
            out.q.swap_cols(k, k + 1);
        }
    }
    Ok(out)
}
