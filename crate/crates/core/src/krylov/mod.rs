//! Restarted GMRES with right preconditioning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iters: usize,
    pub rtol: f64,
    /// Record `‖VᵀV − I‖_max` of every cycle's basis (costly; for testing).
    #[serde(default)]
    pub track_orthogonality: bool,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig { restart: 30, max_iters: 500, rtol: 1e-6, track_orthogonality: false }
    }
}

impl GmresConfig {
    pub fn with_rtol(rtol: f64) -> Self {
        GmresConfig { rtol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 || self.max_iters < self.restart || !(self.rtol > 0.0) {
            return Err(Error::Invalid(format!(
                "GMRES config needs restart ≥ 1, max_iters ≥ restart, rtol > 0 (got {}, {}, {})",
                self.restart, self.max_iters, self.rtol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual after every iteration (Givens recurrence).
    pub residual_history: Vec<f64>,
    /// Iteration count at which each restart cycle ended.
    pub cycle_ends: Vec<usize>,
    /// `(recurrence, true)` relative residuals at each cycle end.
    pub cycle_checks: Vec<(f64, f64)>,
    pub converged: bool,
    pub breakdown: Option<String>,
    /// True relative residual `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub final_residual: f64,
    pub orthogonality_loss: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` through `A M⁻¹ y = b`, `x = M⁻¹ y`. Convergence is
/// declared on the true residual `‖b − A x‖ ≤ rtol ‖b‖`.
pub fn gmres_right(
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_minv: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: &[f64],
    cfg: &GmresConfig,
) -> (Vec<f64>, SolveStats) {
    let n = b.len();
    assert_eq!(x0.len(), n, "initial guess has wrong length");
    let mut stats = SolveStats::default();
    let mut x = x0.to_vec();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        stats.converged = true;
        return (vec![0.0; n], stats);
    }
    let restart = cfg.restart.max(1);
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let ax = apply_a(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = true_residual(&x);
    loop {
        let beta = norm(&r);
        let rel = beta / bnorm;
        stats.final_residual = rel;
        if rel <= cfg.rtol {
            stats.converged = true;
            break;
        }
        if stats.iterations >= cfg.max_iters {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new(); // columns, already rotated
        let mut cs: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];
        let mut happy = false;
        while z.len() < restart && stats.iterations < cfg.max_iters {
            let j = z.len();
            let zj = apply_minv(&v[j]);
            let mut w = apply_a(&zj);
            z.push(zj);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            let mut wn = norm(&w);
            if wn > 0.0 && v.iter().any(|vi| (dot(&w, vi) / wn).abs() > 1e-8) {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(&w, vi);
                    col[i] += c;
                    axpy(-c, vi, &mut w);
                }
                wn = norm(&w);
            }
            col[j + 1] = wn;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            cs.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            stats.iterations += 1;
            let rel = g[j + 1].abs() / bnorm;
            stats.residual_history.push(rel);
            if wn <= 1e-14 * beta {
                happy = true;
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
            if rel <= cfg.rtol {
                break;
            }
        }
        if cfg.track_orthogonality {
            let mut loss = 0.0f64;
            for (i, vi) in v.iter().enumerate() {
                for (k, vk) in v.iter().enumerate() {
                    let d = dot(vi, vk) - if i == k { 1.0 } else { 0.0 };
                    loss = loss.max(d.abs());
                }
            }
            stats.orthogonality_loss.push(loss);
        }
        // back substitution for the cycle's least-squares coefficients
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for l in i + 1..k {
                acc -= h[l][i] * y[l];
            }
            y[i] = acc / h[i][i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            stats.breakdown = Some("singular Hessenberg least-squares system".into());
            break;
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        r = true_residual(&x);
        let recurrence = g[k].abs() / bnorm;
        let actual = norm(&r) / bnorm;
        stats.cycle_ends.push(stats.iterations);
        stats.cycle_checks.push((recurrence, actual));
        stats.final_residual = actual;
        if happy && actual > cfg.rtol && stats.iterations >= cfg.max_iters {
            stats.breakdown = Some("Krylov space exhausted before reaching tolerance".into());
        }
    }
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smalldense::{dense_lu_solve, DenseMat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    #[test]
    fn identity_system_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let (x, st) = gmres_right(&identity, &identity, &b, &[0.0; 3], &GmresConfig::with_rtol(1e-12));
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert!(x.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-14));
    }

    #[test]
    fn zero_rhs() {
        let (x, st) = gmres_right(&identity, &identity, &[0.0; 4], &[1.0; 4], &GmresConfig::default());
        assert!(st.converged && st.iterations == 0 && x == vec![0.0; 4]);
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMat {
        let b = DenseMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        b.transpose().matmul(&b).add(&DenseMat::identity(n).scaled(n as f64 * 0.05))
    }

    #[test]
    fn spd_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 100;
        let a = random_spd(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = GmresConfig { rtol: 1e-10, max_iters: 2000, restart: 30, track_orthogonality: true };
        let op = |x: &[f64]| a.matvec(x);
        let (x, st) = gmres_right(&op, &identity, &b, &vec![0.0; n], &cfg);
        assert!(st.converged, "{:?}", st.final_residual);
        let xd = dense_lu_solve(&a, &[b.clone()]).unwrap().remove(0);
        let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = x.iter().zip(&xd).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err <= 1e-8 * scale.max(1.0), "err {err}");
        for &(rec, act) in &st.cycle_checks {
            assert!((rec - act).abs() <= 1e-8 * act.max(1e-300) + 1e-14, "{rec} vs {act}");
        }
        assert!(st.orthogonality_loss.iter().all(|&l| l <= 1e-8));
        // nonincreasing within each cycle
        let mut start = 0;
        for &end in &st.cycle_ends {
            for w in st.residual_history[start..end].windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            start = end;
        }
    }

    #[test]
    fn random_nonsymmetric_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100;
        let a = DenseMat::from_fn(n, n, |i, j| rng.gen_range(-1.0..1.0) + if i == j { 12.0 } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = |x: &[f64]| a.matvec(x);
        let (x, st) = gmres_right(&op, &identity, &b, &vec![0.0; n], &GmresConfig { rtol: 1e-10, ..Default::default() });
        assert!(st.converged);
        let xd = dense_lu_solve(&a, &[b.clone()]).unwrap().remove(0);
        assert!(x.iter().zip(&xd).all(|(p, q)| (p - q).abs() <= 1e-8));
    }

    #[test]
    fn exact_preconditioner_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 40;
        let a = random_spd(&mut rng, n);
        let inv = crate::smalldense::dense_inverse(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (op, pc) = (|x: &[f64]| a.matvec(x), |x: &[f64]| inv.matvec(x));
        let (_, st) = gmres_right(&op, &pc, &b, &vec![0.0; n], &GmresConfig::with_rtol(1e-10));
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let n = 60;
        let a = DenseMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = |x: &[f64]| a.matvec(x);
        let cfg = GmresConfig { restart: 5, max_iters: 10, rtol: 1e-12, track_orthogonality: false };
        let (_, st) = gmres_right(&op, &identity, &b, &vec![0.0; n], &cfg);
        assert!(!st.converged);
        assert_eq!(st.iterations, 10);
        assert_eq!(st.residual_history.len(), 10);
    }

    #[test]
    fn identity_preconditioner_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = 50;
        let a = random_spd(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = |x: &[f64]| a.matvec(x);
        let scaled_identity = |x: &[f64]| x.iter().map(|v| v * 1.0).collect::<Vec<_>>();
        let cfg = GmresConfig::with_rtol(1e-9);
        let (_, s1) = gmres_right(&op, &identity, &b, &vec![0.0; n], &cfg);
        let (_, s2) = gmres_right(&op, &scaled_identity, &b, &vec![0.0; n], &cfg);
        assert_eq!(s1.iterations, s2.iterations);
    }

    #[test]
    fn config_validation() {
        assert!(GmresConfig::default().validate().is_ok());
        assert!(GmresConfig { restart: 0, ..Default::default() }.validate().is_err());
        assert!(GmresConfig { rtol: 0.0, ..Default::default() }.validate().is_err());
    }
}
