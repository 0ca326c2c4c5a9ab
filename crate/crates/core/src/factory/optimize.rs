//! Derivative-free minimizers and the two-step singly-diagonal fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smalldense::{svd_small, DenseMat};

/// Relative convergence tolerance for both optimization steps.
pub const REL_TOL: f64 = 1e-12;
const STARTS: usize = 8;
const PERTURBATION: f64 = 0.2;
const SEED: u64 = 0x5AB_75D;

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search with standard coefficients. Converges when the
/// spread of simplex values falls below `rel_tol · |f_best|` (or the simplex
/// collapses).
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, rel_tol: f64, max_evals: usize) -> Minimum {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    if n == 0 {
        return Minimum { x: vec![], value: eval(x0), evaluations: 1, converged: true };
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        let h = if p[i] != 0.0 { step * p[i].abs() } else { step };
        p[i] += h;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
    let mut evals = n + 1;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[n]);
        let spread = worst - best;
        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0, f64::max);
        let xscale = simplex[0].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if (best.is_finite() && spread <= rel_tol * best.abs().max(f64::MIN_POSITIVE)) || diameter <= 1e-15 * xscale {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, p)| b + sigma * (p - b)).collect();
                    values[i] = eval(&shrunk);
                    simplex[i] = shrunk;
                }
                evals += n;
            }
        }
    }
    let (i, &value) = values.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    Minimum { x: simplex[i].clone(), value, evaluations: evals, converged }
}

/// Golden-section search for a unimodal function on `[lo, hi]`.
pub fn golden_section(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    // endpoints included so a boundary optimum (e.g. α = 1) is not missed
    [(lo, f(lo)), (hi, f(hi)), (x1, f1), (x2, f2)]
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
}

/// Outcome of the singly-diagonal fit of a (quasi-)triangular matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdutFit {
    /// `α · R̂*`: upper triangular with every diagonal entry equal to `alpha`.
    pub rhat: DenseMat,
    pub alpha: f64,
    /// `κ₂(R R̂⁻¹)`.
    pub kappa: f64,
    /// `‖I − R R̂⁻¹‖₂`.
    pub residual_norm: f64,
}

fn strict_upper_len(s: usize) -> usize {
    s * (s - 1) / 2
}

/// Unit upper-triangular matrix from its strict upper triangle (row-major).
pub fn unit_upper(s: usize, x: &[f64]) -> DenseMat {
    let mut m = DenseMat::identity(s);
    let mut k = 0;
    for i in 0..s {
        for j in i + 1..s {
            m[(i, j)] = x[k];
            k += 1;
        }
    }
    m
}

/// `r · u⁻¹` for upper-triangular `u`, by column-oriented substitution.
pub fn right_divide_upper(r: &DenseMat, u: &DenseMat) -> DenseMat {
    let s = r.nrows();
    // solve X u = r row by row: X[i, j] = (r[i, j] - Σ_{k<j} X[i, k] u[k, j]) / u[j, j]
    let mut x = DenseMat::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            let mut acc = r[(i, j)];
            for k in 0..j {
                acc -= x[(i, k)] * u[(k, j)];
            }
            x[(i, j)] = acc / u[(j, j)];
        }
    }
    x
}

/// `κ₂(r u⁻¹)`, or `+∞` if the product is numerically singular.
pub fn kappa_of(r: &DenseMat, u: &DenseMat) -> f64 {
    let p = right_divide_upper(r, u);
    if !p.all_finite() {
        return f64::INFINITY;
    }
    let sv = svd_small(&p);
    let lo = *sv.last().unwrap();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        sv[0] / lo
    }
}

/// `‖I − r u⁻¹‖₂`.
pub fn residual_norm_of(r: &DenseMat, u: &DenseMat) -> f64 {
    let s = r.nrows();
    let p = right_divide_upper(r, u);
    if !p.all_finite() {
        return f64::INFINITY;
    }
    crate::smalldense::norm2(&DenseMat::identity(s).sub(&p))
}

/// Two-step fit: minimize `κ₂(r R̂*⁻¹)` over unit upper-triangular `R̂*`,
/// then the scale `α ∈ (0, 1]` minimizing `‖I − r (α R̂*)⁻¹‖₂`.
pub fn optimize_sdut(r: &DenseMat) -> Result<SdutFit> {
    let s = r.nrows();
    if !r.is_square() || s == 0 {
        return Err(Error::Dimension("optimize_sdut needs a nonempty square matrix".into()));
    }
    let nvar = strict_upper_len(s);
    let mean_diag = r.diagonal().iter().sum::<f64>() / s as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::Invalid("optimize_sdut needs a positive mean diagonal".into()));
    }
    let mut x0 = Vec::with_capacity(nvar);
    for i in 0..s {
        for j in i + 1..s {
            x0.push(r[(i, j)] / mean_diag);
        }
    }
    let objective = |x: &[f64]| kappa_of(r, &unit_upper(s, x));
    let max_evals = 4000 * (nvar + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let typical = if nvar == 0 { 1.0 } else { x0.iter().map(|v| v.abs()).sum::<f64>() / nvar as f64 }.max(1e-3);
    let mut best: Option<Minimum> = None;
    for start in 0..=STARTS {
        let mut x = x0.clone();
        if start > 0 {
            for v in x.iter_mut() {
                let scale = v.abs().max(typical);
                *v += PERTURBATION * scale * rng.gen_range(-1.0..1.0);
            }
        }
        // restart from the incumbent until a fresh simplex stops improving
        let mut m = nelder_mead(&objective, &x, 0.1, REL_TOL, max_evals);
        for _ in 0..8 {
            let again = nelder_mead(&objective, &m.x, 0.05, REL_TOL, max_evals);
            let improved = again.value < m.value * (1.0 - REL_TOL);
            let evals = m.evaluations + again.evaluations;
            if again.value <= m.value {
                m = Minimum { evaluations: evals, ..again };
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
        if nvar == 0 {
            break;
        }
    }
    let best = best.expect("at least one start");
    if !best.converged || !best.value.is_finite() {
        return Err(Error::OptimizerNoConvergence { best_value: best.value, best_point: best.x });
    }
    let unit = unit_upper(s, &best.x);
    let product = right_divide_upper(r, &unit);
    let eye = DenseMat::identity(s);
    let scaled_residual = |alpha: f64| crate::smalldense::norm2(&eye.sub(&product.scaled(1.0 / alpha)));
    let (alpha, _) = golden_section(&scaled_residual, 1e-9, 1.0, REL_TOL);
    let rhat = unit.scaled(alpha);
    Ok(SdutFit {
        kappa: kappa_of(r, &rhat),
        residual_norm: residual_norm_of(r, &rhat),
        rhat,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 1.0;
        let m = nelder_mead(&f, &[0.0, 0.0], 0.5, 1e-14, 10_000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) = golden_section(&|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6 && fx < 1e-12);
        let (x, _) = golden_section(&|x| -x, 0.0, 1.0, 1e-12);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn one_by_one_fit_is_exact() {
        let r = DenseMat::from_rows(&[vec![0.5]]);
        let fit = optimize_sdut(&r).unwrap();
        assert!((fit.rhat[(0, 0)] - 0.5).abs() < 1e-10);
        assert!(fit.residual_norm < 1e-9);
        assert!((fit.kappa - 1.0).abs() < 1e-15);
    }

    #[test]
    fn right_division_inverts_product() {
        let u = DenseMat::from_rows(&[vec![2.0, 1.0, -1.0], vec![0.0, 1.0, 0.5], vec![0.0, 0.0, 4.0]]);
        let x = DenseMat::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, -1.0, 1.0], vec![2.0, 0.0, 1.0]]);
        let r = x.matmul(&u);
        assert!(right_divide_upper(&r, &u).max_diff(&x) < 1e-14);
    }
}
