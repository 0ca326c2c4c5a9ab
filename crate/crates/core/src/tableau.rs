//! Gauss-Legendre Butcher tableaux and their order conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smalldense::{DenseLu, DenseMat};

pub const MAX_STAGES: usize = 12;

/// The coefficients `(A, b, c)` of an s-stage Runge-Kutta scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButcherTableau {
    pub a: DenseMat,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Checks the structural invariants of a collocation tableau.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if self.a.nrows() != s || self.a.ncols() != s || self.c.len() != s {
            return Err(Error::Dimension("tableau A, b, c sizes disagree".into()));
        }
        for i in 0..s {
            let row: f64 = self.a.row(i).iter().sum();
            if (row - self.c[i]).abs() > 1e-12 {
                return Err(Error::Invalid(format!("row sum {i} = {row} differs from c = {}", self.c[i])));
            }
        }
        if (self.b.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("weights do not sum to one".into()));
        }
        if self.c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("abscissae are not strictly increasing".into()));
        }
        for i in 0..s {
            if (self.a[(i, i)] - self.a[(s - 1 - i, s - 1 - i)]).abs() > 1e-12 {
                return Err(Error::Invalid(format!("diagonal entry {i} breaks the two-way symmetry")));
            }
        }
        DenseLu::factor(&self.a).map(|_| ())
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::LegendreNoConvergence { stages: n });
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok((nodes, weights))
}

/// The s-stage Gauss-Legendre collocation scheme (order 2s).
pub fn gauss_legendre(s: usize) -> Result<ButcherTableau> {
    if s == 0 || s > MAX_STAGES {
        return Err(Error::Invalid(format!("stage count {s} outside 1..={MAX_STAGES}")));
    }
    let (x, w) = gauss_legendre_rule(s)?;
    let c: Vec<f64> = x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
    let b: Vec<f64> = w.iter().map(|&wi| 0.5 * wi).collect();
    // a_ij = ∫_0^{c_i} ℓ_j(t) dt with the same s-point rule mapped to [0, c_i];
    // ℓ_j has degree s - 1 so the rule is exact.
    let lagrange = |j: usize, t: f64| -> f64 {
        (0..s).filter(|&k| k != j).map(|k| (t - c[k]) / (c[j] - c[k])).product()
    };
    let a = DenseMat::from_fn(s, s, |i, j| {
        x.iter().zip(&w).map(|(&xq, &wq)| {
            let t = 0.5 * c[i] * (xq + 1.0);
            0.5 * c[i] * wq * lagrange(j, t)
        }).sum()
    });
    Ok(ButcherTableau { a, b, c })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    /// `B(k)` or `C(k)`.
    pub name: String,
    pub max_violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderReport {
    pub checks: Vec<ConditionCheck>,
    pub tolerance: f64,
}

impl OrderReport {
    pub fn max_violation(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.max_violation))
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(move |c| c.max_violation > self.tolerance)
    }
}

/// Simplifying assumptions `B(2s)`: `bᵀc^{k-1} = 1/k`, and `C(s)`:
/// `A c^{k-1} = c^k / k`.
pub fn verify_order_conditions(tab: &ButcherTableau) -> OrderReport {
    let s = tab.stages();
    let mut checks = Vec::with_capacity(3 * s);
    for k in 1..=2 * s {
        let lhs: f64 = tab.b.iter().zip(&tab.c).map(|(b, c)| b * c.powi(k as i32 - 1)).sum();
        checks.push(ConditionCheck { name: format!("B({k})"), max_violation: (lhs - 1.0 / k as f64).abs() });
    }
    for k in 1..=s {
        let mut worst: f64 = 0.0;
        for i in 0..s {
            let lhs: f64 = (0..s).map(|j| tab.a[(i, j)] * tab.c[j].powi(k as i32 - 1)).sum();
            worst = worst.max((lhs - tab.c[i].powi(k as i32) / k as f64).abs());
        }
        checks.push(ConditionCheck { name: format!("C({k})"), max_violation: worst });
    }
    OrderReport { checks, tolerance: 1e-11 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_midpoint() {
        let t = gauss_legendre(1).unwrap();
        assert!((t.c[0] - 0.5).abs() < 1e-15);
        assert!((t.b[0] - 1.0).abs() < 1e-15);
        assert!((t.a[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(verify_order_conditions(&t).passed());
    }

    #[test]
    fn two_stage_closed_form() {
        let t = gauss_legendre(2).unwrap();
        let r = 3f64.sqrt() / 6.0;
        assert!((t.c[0] - (0.5 - r)).abs() < 1e-15 && (t.c[1] - (0.5 + r)).abs() < 1e-15);
        assert!((t.b[0] - 0.5).abs() < 1e-15 && (t.b[1] - 0.5).abs() < 1e-15);
        let want = DenseMat::from_rows(&[vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]]);
        assert!(t.a.max_diff(&want) < 1e-15);
        let report = verify_order_conditions(&t);
        assert_eq!(report.checks.len(), 6);
        assert!(report.passed());
    }

    #[test]
    fn perturbation_is_flagged() {
        let mut t = gauss_legendre(3).unwrap();
        t.a[(0, 0)] += 1e-3;
        let report = verify_order_conditions(&t);
        let c1 = report.checks.iter().find(|c| c.name == "C(1)").unwrap();
        assert!((c1.max_violation - 1e-3).abs() < 1e-12);
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name == "C(1)"));
    }

    #[test]
    fn tableaux_validate_up_to_twelve_stages() {
        for s in 1..=MAX_STAGES {
            gauss_legendre(s).unwrap().validate().unwrap();
        }
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(13).is_err());
    }
}
