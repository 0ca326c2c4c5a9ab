//! s×s-level recipes for the block preconditioners.
//!
//! Every plan describes `𝓜` through small matrices derived from the Butcher
//! matrix `A`; the sparse side (`M`, `K`, `δt`) is attached later by
//! [`crate::precondops`].

mod optimize;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smalldense::{
    dense_inverse, eig_from_schur, orient_2x2_blocks, real_schur, reorder_schur, rsf2csf, CDenseMat, DenseMat,
    OrderKey, SchurForm,
};
use crate::tableau::ButcherTableau;

pub use optimize::{
    golden_section, kappa_of, nelder_mead, optimize_sdut, residual_norm_of, right_divide_upper, unit_upper, Minimum,
    SdutFit, REL_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Bcsd,
    Brsd,
    Bjf,
    Sabrsd,
    Tbrsd,
    Sobt,
    Bgs,
    Bd,
    Kps,
    Pnkp,
    Bc,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Bcsd,
        Variant::Brsd,
        Variant::Bjf,
        Variant::Sabrsd,
        Variant::Tbrsd,
        Variant::Sobt,
        Variant::Bgs,
        Variant::Bd,
        Variant::Kps,
        Variant::Pnkp,
        Variant::Bc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bcsd => "BCSD",
            Variant::Brsd => "BRSD",
            Variant::Bjf => "BJF",
            Variant::Sabrsd => "SABRSD",
            Variant::Tbrsd => "TBRSD",
            Variant::Sobt => "SOBT",
            Variant::Bgs => "BGS",
            Variant::Bd => "BD",
            Variant::Kps => "KPS",
            Variant::Pnkp => "PNKP",
            Variant::Bc => "BC",
        }
    }

    /// Whether the variant depends on an ordering of the Schur blocks.
    pub fn is_ordered(self) -> bool {
        matches!(self, Variant::Bcsd | Variant::Brsd | Variant::Sabrsd | Variant::Tbrsd)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == up)
            .ok_or_else(|| Error::Invalid(format!("unknown preconditioner '{s}'")))
    }
}

/// Variant plus ordering flag, parsed from names such as `SABRSD-R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanSpec {
    pub variant: Variant,
    pub reversed: bool,
}

impl PlanSpec {
    pub fn new(variant: Variant, reversed: bool) -> Self {
        PlanSpec { variant, reversed }
    }

    pub fn label(&self) -> String {
        if self.reversed {
            format!("{}-R", self.variant)
        } else {
            self.variant.to_string()
        }
    }
}

impl FromStr for PlanSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let (name, reversed) = match up.strip_suffix("-R") {
            Some(stem) => (stem, true),
            None => (up.as_str(), false),
        };
        let variant: Variant = name.parse()?;
        if reversed && !variant.is_ordered() {
            return Err(Error::Invalid(format!("{variant} has no reversed ordering")));
        }
        Ok(PlanSpec { variant, reversed })
    }
}

impl fmt::Display for PlanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PlanData {
    /// `A = U T Uᴴ`, `T` upper triangular.
    ComplexSchur { u: CDenseMat, t: CDenseMat },
    /// `A = Q R Qᵀ`, `R` quasi-upper-triangular.
    RealSchur { q: DenseMat, r: DenseMat, block_sizes: Vec<usize> },
    /// `A = X Λ X⁻¹`.
    Eigen { x: CDenseMat, x_inv: CDenseMat, lambda: Vec<Complex64>, cond_x: f64 },
    /// `A ≈ Q R̂ Qᵀ`, `R̂` upper triangular. `source` is the oriented Schur
    /// factor `R` that `R̂` approximates.
    UpperTriangular { q: DenseMat, rhat: DenseMat, source: DenseMat, fit: Option<SdutFit> },
    /// `A ≈ L`, lower triangular.
    LowerTriangular { l: DenseMat, fit: Option<SdutFit> },
    Diagonal { d: Vec<f64> },
    /// `𝓜 = 1/(2α) (I + αA) ⊗ (δtK + αM)`.
    Kps { alpha: f64, objective: f64 },
    /// `𝓜 = δt A ⊗ K`.
    Pnkp,
    /// `C = F diag(λ) Fᴴ`, `c` the first column of `C`.
    Circulant { c: Vec<f64>, f: CDenseMat, lambda: Vec<Complex64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrecondPlan {
    pub spec: PlanSpec,
    /// The Butcher matrix the plan was built from.
    pub a: DenseMat,
    pub data: PlanData,
}

impl PrecondPlan {
    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn stages(&self) -> usize {
        self.a.nrows()
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    /// The s×s matrix `Ã` with `𝓜 = I ⊗ M + δt Ã ⊗ K`, for the variants of
    /// that form (all but KPS and PNKP).
    pub fn approximation(&self) -> Option<CDenseMat> {
        let c = match &self.data {
            PlanData::ComplexSchur { u, t } => u.matmul(t).matmul(&u.adjoint()),
            PlanData::RealSchur { q, r, .. } => q.matmul(r).matmul(&q.transpose()).to_complex(),
            PlanData::Eigen { x, x_inv, lambda, .. } => x.matmul(&CDenseMat::diag(lambda)).matmul(x_inv),
            PlanData::UpperTriangular { q, rhat, .. } => q.matmul(rhat).matmul(&q.transpose()).to_complex(),
            PlanData::LowerTriangular { l, .. } => l.to_complex(),
            PlanData::Diagonal { d } => DenseMat::diag(d).to_complex(),
            PlanData::Circulant { f, lambda, .. } => f.matmul(&CDenseMat::diag(lambda)).matmul(&f.adjoint()),
            PlanData::Kps { .. } | PlanData::Pnkp => return None,
        };
        Some(c)
    }
}

fn require_square(tab: &ButcherTableau) -> Result<usize> {
    let s = tab.stages();
    if s == 0 || !tab.a.is_square() || tab.a.nrows() != s {
        return Err(Error::Dimension("Butcher matrix must be a nonempty s×s matrix".into()));
    }
    Ok(s)
}

fn plan(variant: Variant, reversed: bool, tab: &ButcherTableau, data: PlanData) -> PrecondPlan {
    PrecondPlan { spec: PlanSpec::new(variant, reversed), a: tab.a.clone(), data }
}

/// Builds any plan by spec.
pub fn build_plan(spec: PlanSpec, tab: &ButcherTableau) -> Result<PrecondPlan> {
    let r = spec.reversed;
    match spec.variant {
        Variant::Bcsd => build_bcsd_ordered(tab, r),
        Variant::Brsd => build_brsd_ordered(tab, r),
        Variant::Bjf => build_bjf(tab),
        Variant::Sabrsd => build_sabrsd_ordered(tab, r),
        Variant::Tbrsd => build_tbrsd_ordered(tab, r),
        Variant::Sobt => build_sobt(tab),
        Variant::Bgs => build_bgs(tab),
        Variant::Bd => build_bd(tab),
        Variant::Kps => build_kps(tab),
        Variant::Pnkp => build_pnkp(tab),
        Variant::Bc => build_bc(tab),
    }
}

/// Complex Schur form with diagonal moduli ascending.
pub fn build_bcsd(tab: &ButcherTableau) -> Result<PrecondPlan> {
    build_bcsd_ordered(tab, false)
}

/// `reversed` sorts the moduli descending instead.
pub fn build_bcsd_ordered(tab: &ButcherTableau, reversed: bool) -> Result<PrecondPlan> {
    require_square(tab)?;
    let key = if reversed { OrderKey::DescendingModulus } else { OrderKey::AscendingModulus };
    let sf = reorder_schur(&real_schur(&tab.a)?, key)?;
    let (u, t) = rsf2csf(&sf);
    Ok(plan(Variant::Bcsd, reversed, tab, PlanData::ComplexSchur { u, t }))
}

/// Real Schur form with block real parts descending, 2×2 blocks oriented
/// upper-dominant. A matrix that is already in standardized Schur form is
/// kept as is.
pub fn build_brsd(tab: &ButcherTableau) -> Result<PrecondPlan> {
    build_brsd_ordered(tab, false)
}

pub fn build_brsd_ordered(tab: &ButcherTableau, reversed: bool) -> Result<PrecondPlan> {
    require_square(tab)?;
    let key = if reversed { OrderKey::AscendingRealPart } else { OrderKey::DescendingRealPart };
    let mut sf = reorder_schur(&real_schur(&tab.a)?, key)?;
    if sf.q.max_diff(&DenseMat::identity(sf.n())) > 1e-14 {
        sf = orient_2x2_blocks(&sf)?;
    }
    let SchurForm { q, r, block_sizes } = sf;
    Ok(plan(Variant::Brsd, reversed, tab, PlanData::RealSchur { q, r, block_sizes }))
}

/// Eigendecomposition, eigenvalues in ascending modulus.
pub fn build_bjf(tab: &ButcherTableau) -> Result<PrecondPlan> {
    require_square(tab)?;
    let sf = reorder_schur(&real_schur(&tab.a)?, OrderKey::AscendingModulus)?;
    let eig = eig_from_schur(&sf)?;
    let x_inv = dense_inverse(&eig.x)?;
    Ok(plan(
        Variant::Bjf,
        false,
        tab,
        PlanData::Eigen { x: eig.x, x_inv, lambda: eig.lambda, cond_x: eig.cond_x },
    ))
}

fn check_positive_spectrum(sf: &SchurForm) -> Result<()> {
    if let Some(z) = sf.eigenvalues().into_iter().find(|z| z.re <= 0.0) {
        return Err(Error::Invalid(format!("eigenvalue {z} has non-positive real part")));
    }
    Ok(())
}

/// Oriented real Schur form sorted by ascending real part (descending if
/// `reversed`): the shared source of SABRSD and TBRSD.
fn sorted_oriented_schur(tab: &ButcherTableau, reversed: bool) -> Result<SchurForm> {
    require_square(tab)?;
    let key = if reversed { OrderKey::DescendingRealPart } else { OrderKey::AscendingRealPart };
    let sf = reorder_schur(&real_schur(&tab.a)?, key)?;
    check_positive_spectrum(&sf)?;
    orient_2x2_blocks(&sf)
}

/// Singly-diagonal upper-triangular approximation of the oriented Schur factor.
pub fn build_sabrsd(tab: &ButcherTableau) -> Result<PrecondPlan> {
    build_sabrsd_ordered(tab, false)
}

pub fn build_sabrsd_ordered(tab: &ButcherTableau, reversed: bool) -> Result<PrecondPlan> {
    let sf = sorted_oriented_schur(tab, reversed)?;
    let fit = optimize_sdut(&sf.r)?;
    Ok(plan(
        Variant::Sabrsd,
        reversed,
        tab,
        PlanData::UpperTriangular { q: sf.q, rhat: fit.rhat.clone(), source: sf.r, fit: Some(fit) },
    ))
}

/// Upper-triangular part of the SABRSD source factor.
pub fn build_tbrsd(tab: &ButcherTableau) -> Result<PrecondPlan> {
    build_tbrsd_ordered(tab, false)
}

pub fn build_tbrsd_ordered(tab: &ButcherTableau, reversed: bool) -> Result<PrecondPlan> {
    let sf = sorted_oriented_schur(tab, reversed)?;
    let rhat = sf.r.upper();
    Ok(plan(Variant::Tbrsd, reversed, tab, PlanData::UpperTriangular { q: sf.q, rhat, source: sf.r, fit: None }))
}

/// Singly-diagonal lower-triangular approximation of `A` itself, obtained by
/// running the upper-triangular fit on the flipped matrix.
pub fn build_sobt(tab: &ButcherTableau) -> Result<PrecondPlan> {
    let s = require_square(tab)?;
    let p = DenseMat::flip(s);
    let flipped = p.matmul(&tab.a).matmul(&p);
    let fit = optimize_sdut(&flipped)?;
    let l = p.matmul(&fit.rhat).matmul(&p);
    Ok(plan(Variant::Sobt, false, tab, PlanData::LowerTriangular { l, fit: Some(fit) }))
}

pub fn build_bgs(tab: &ButcherTableau) -> Result<PrecondPlan> {
    require_square(tab)?;
    Ok(plan(Variant::Bgs, false, tab, PlanData::LowerTriangular { l: tab.a.lower(), fit: None }))
}

pub fn build_bd(tab: &ButcherTableau) -> Result<PrecondPlan> {
    require_square(tab)?;
    Ok(plan(Variant::Bd, false, tab, PlanData::Diagonal { d: tab.a.diagonal() }))
}

pub fn build_pnkp(tab: &ButcherTableau) -> Result<PrecondPlan> {
    require_square(tab)?;
    dense_inverse(&tab.a)?;
    Ok(plan(Variant::Pnkp, false, tab, PlanData::Pnkp))
}

/// `max_μ |(μ − α)/(μ + α)|` over the given eigenvalues `μ` of `A⁻¹`.
pub fn kps_objective(mu: &[Complex64], alpha: f64) -> f64 {
    mu.iter().map(|&m| ((m - alpha) / (m + alpha)).norm()).fold(0.0, f64::max)
}

/// Splitting parameter minimizing [`kps_objective`]: a 64-point log-grid scan
/// over the range of `|μ|`, then golden section in `log α`.
pub fn build_kps(tab: &ButcherTableau) -> Result<PrecondPlan> {
    require_square(tab)?;
    let lambda = real_schur(&tab.a)?.eigenvalues();
    if lambda.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::Singular { step: 0, pivot: 0.0 });
    }
    let mu: Vec<Complex64> = lambda.iter().map(|z| z.inv()).collect();
    let lo = mu.iter().map(|m| m.norm()).fold(f64::INFINITY, f64::min).ln();
    let hi = mu.iter().map(|m| m.norm()).fold(0.0, f64::max).ln();
    let g = |t: f64| kps_objective(&mu, t.exp());
    let (log_alpha, objective) = if hi - lo < 1e-14 {
        (lo, g(lo))
    } else {
        const GRID: usize = 64;
        let pts: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
        let best = (0..GRID).min_by(|&i, &j| g(pts[i]).partial_cmp(&g(pts[j])).unwrap()).unwrap();
        let a = pts[best.saturating_sub(1)];
        let b = pts[(best + 1).min(GRID - 1)];
        golden_section(&g, a, b, 1e-12)
    };
    let alpha = log_alpha.exp();
    Ok(plan(Variant::Kps, false, tab, PlanData::Kps { alpha, objective }))
}

/// Frobenius-optimal circulant approximation: `c_k` averages the k-th
/// wrapped diagonal.
pub fn optimal_circulant(a: &DenseMat) -> Vec<f64> {
    let s = a.nrows();
    (0..s).map(|k| (0..s).map(|j| a[((j + k) % s, j)]).sum::<f64>() / s as f64).collect()
}

/// Circulant matrix with first column `c`.
pub fn circulant(c: &[f64]) -> DenseMat {
    let s = c.len();
    DenseMat::from_fn(s, s, |i, j| c[(i + s - j) % s])
}

/// Unitary Fourier matrix `F_{jk} = ω^{jk}/√s`, `ω = e^{2πi/s}`.
pub fn fourier_matrix(s: usize) -> CDenseMat {
    let scale = 1.0 / (s as f64).sqrt();
    CDenseMat::from_fn(s, s, |j, k| Complex64::from_polar(scale, 2.0 * PI * ((j * k) % s) as f64 / s as f64))
}

pub fn build_bc(tab: &ButcherTableau) -> Result<PrecondPlan> {
    let s = require_square(tab)?;
    let c = optimal_circulant(&tab.a);
    let lambda: Vec<Complex64> = (0..s)
        .map(|k| {
            (0..s)
                .map(|l| c[l] * Complex64::from_polar(1.0, -2.0 * PI * ((l * k) % s) as f64 / s as f64))
                .sum::<Complex64>()
        })
        .map(|z| if z.im.abs() <= 1e-14 * (1.0 + z.re.abs()) { Complex64::new(z.re, 0.0) } else { z })
        .collect();
    Ok(plan(Variant::Bc, false, tab, PlanData::Circulant { c, f: fourier_matrix(s), lambda }))
}
