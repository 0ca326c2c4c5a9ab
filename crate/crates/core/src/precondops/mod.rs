//! Block preconditioners assembled from a plan and the sparse pair `(M, K)`.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factory::{PlanData, PrecondPlan, Variant};
use crate::smalldense::{dense_inverse, norm2, CDenseMat, DenseMat};
use crate::sparse::{assemble_2x2, assemble_shift, factorize, CsrMatrix, FactorKind, FactorizedBlock, StageOperator};

/// Shifts closer than this (relative) share one factorization.
const SHIFT_RTOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockTag {
    Real1,
    Complex1,
    Real2,
    /// Solved through the conjugate of another block's factorization.
    ConjugateShared,
}

#[derive(Clone, Debug)]
enum Factor {
    Real(FactorizedBlock<f64>),
    Complex(FactorizedBlock<Complex64>),
}

/// One diagonal block of the (block-)triangular or diagonal structure.
#[derive(Clone, Debug)]
struct DiagBlock {
    /// First stage index and width (1 or 2).
    start: usize,
    size: usize,
    factor: usize,
    conjugate: bool,
    tag: BlockTag,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FactorStats {
    pub real_m: usize,
    pub complex_m: usize,
    pub real_2m: usize,
    pub seconds: f64,
    pub nnz: usize,
}

impl FactorStats {
    pub fn total(&self) -> usize {
        self.real_m + self.complex_m + self.real_2m
    }
}

#[derive(Clone, Debug)]
pub struct BlockPreconditioner {
    pub plan: PrecondPlan,
    pub dt: f64,
    pub backend: FactorKind,
    m: CsrMatrix<f64>,
    k: CsrMatrix<f64>,
    factors: Vec<Factor>,
    blocks: Vec<DiagBlock>,
    /// Strictly triangular coupling coefficients `c_ij` (already times δt).
    coupling: Option<CDenseMat>,
    /// Left/right recombinations: `out = post · solve(pre · v)`.
    pre: Option<CDenseMat>,
    post: Option<CDenseMat>,
    /// Output scale (KPS, PNKP).
    out_scale: f64,
    pub stats: FactorStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shift {
    Scalar(Complex64),
    Pair([[f64; 2]; 2]),
    /// Factor `K` itself.
    Stiffness,
}

fn same(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= SHIFT_RTOL * a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

struct Builder<'a> {
    m: &'a CsrMatrix<f64>,
    k: &'a CsrMatrix<f64>,
    backend: FactorKind,
    shifts: Vec<Shift>,
    factors: Vec<Factor>,
    stats: FactorStats,
}

impl<'a> Builder<'a> {
    /// Factor index and conjugation flag for a shift, reusing earlier work.
    fn get(&mut self, shift: Shift, block: usize) -> Result<(usize, bool, BlockTag)> {
        for (i, s) in self.shifts.iter().enumerate() {
            match (shift, *s) {
                (Shift::Scalar(z), Shift::Scalar(w)) => {
                    let is_real = z.im == 0.0;
                    if same(z, w) {
                        return Ok((i, false, if is_real { BlockTag::Real1 } else { BlockTag::Complex1 }));
                    }
                    if !is_real && same(z, w.conj()) {
                        return Ok((i, true, BlockTag::ConjugateShared));
                    }
                }
                (Shift::Pair(a), Shift::Pair(b)) if a == b => return Ok((i, false, BlockTag::Real2)),
                (Shift::Stiffness, Shift::Stiffness) => return Ok((i, false, BlockTag::Real1)),
                _ => {}
            }
        }
        let t0 = Instant::now();
        let wrap = |e: Error| Error::Block { block, source: Box::new(e) };
        let (factor, tag) = match shift {
            Shift::Scalar(z) if z.im == 0.0 => {
                let a = assemble_shift(self.m, self.k, z.re).map_err(wrap)?;
                self.stats.real_m += 1;
                (Factor::Real(factorize(&a, self.backend).map_err(wrap)?), BlockTag::Real1)
            }
            Shift::Scalar(z) => {
                let a = assemble_shift(self.m, self.k, z).map_err(wrap)?;
                self.stats.complex_m += 1;
                (Factor::Complex(factorize(&a, self.backend).map_err(wrap)?), BlockTag::Complex1)
            }
            Shift::Pair(r) => {
                let a = assemble_2x2(self.m, self.k, r, 1.0).map_err(wrap)?;
                self.stats.real_2m += 1;
                (Factor::Real(factorize(&a, self.backend).map_err(wrap)?), BlockTag::Real2)
            }
            Shift::Stiffness => {
                self.stats.real_m += 1;
                (Factor::Real(factorize(self.k, self.backend).map_err(wrap)?), BlockTag::Real1)
            }
        };
        self.stats.seconds += t0.elapsed().as_secs_f64();
        self.stats.nnz += match &factor {
            Factor::Real(f) => f.nnz(),
            Factor::Complex(f) => f.nnz(),
        };
        self.shifts.push(shift);
        self.factors.push(factor);
        Ok((self.factors.len() - 1, false, tag))
    }

    fn scalar_blocks(&mut self, diag: &[Complex64], dt: f64) -> Result<Vec<DiagBlock>> {
        diag.iter()
            .enumerate()
            .map(|(i, &d)| {
                let (factor, conjugate, tag) = self.get(Shift::Scalar(d * dt), i)?;
                Ok(DiagBlock { start: i, size: 1, factor, conjugate, tag })
            })
            .collect()
    }
}

fn real_diag(m: &DenseMat) -> Vec<Complex64> {
    m.diagonal().into_iter().map(|d| Complex64::new(d, 0.0)).collect()
}

/// Strictly upper (or lower) part scaled by δt, as complex coefficients.
fn off_diagonal(m: &CDenseMat, blocks: &[DiagBlock], dt: f64) -> CDenseMat {
    let mut c = m.scaled(Complex64::new(dt, 0.0));
    for b in blocks {
        for i in b.start..b.start + b.size {
            for j in b.start..b.start + b.size {
                c[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    c
}

impl BlockPreconditioner {
    pub fn assemble(plan: &PrecondPlan, m: &CsrMatrix<f64>, k: &CsrMatrix<f64>, dt: f64, backend: FactorKind) -> Result<Self> {
        if m.nrows() != k.nrows() || m.nrows() != m.ncols() || k.nrows() != k.ncols() {
            return Err(Error::Dimension("M and K must be square and of equal size".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("time step {dt} must be positive")));
        }
        let s = plan.stages();
        let mut b = Builder { m, k, backend, shifts: vec![], factors: vec![], stats: FactorStats::default() };
        let mut pre = None;
        let mut post = None;
        let mut coupling = None;
        let mut out_scale = 1.0;
        let blocks = match &plan.data {
            PlanData::ComplexSchur { u, t } => {
                let blocks = b.scalar_blocks(&t.diagonal(), dt)?;
                coupling = Some(off_diagonal(t, &blocks, dt));
                pre = Some(u.adjoint());
                post = Some(u.clone());
                blocks
            }
            PlanData::RealSchur { q, r, block_sizes } => {
                let mut blocks = Vec::new();
                let mut start = 0;
                for (bi, &size) in block_sizes.iter().enumerate() {
                    let shift = if size == 1 {
                        Shift::Scalar(Complex64::new(dt * r[(start, start)], 0.0))
                    } else {
                        let e = |i: usize, j: usize| dt * r[(start + i, start + j)];
                        Shift::Pair([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
                    };
                    let (factor, conjugate, tag) = b.get(shift, bi)?;
                    blocks.push(DiagBlock { start, size, factor, conjugate, tag });
                    start += size;
                }
                coupling = Some(off_diagonal(&r.to_complex(), &blocks, dt));
                pre = Some(q.transpose().to_complex());
                post = Some(q.to_complex());
                blocks
            }
            PlanData::Eigen { x, x_inv, lambda, .. } => {
                pre = Some(x_inv.clone());
                post = Some(x.clone());
                b.scalar_blocks(lambda, dt)?
            }
            PlanData::UpperTriangular { q, rhat, .. } => {
                let blocks = b.scalar_blocks(&real_diag(rhat), dt)?;
                coupling = Some(off_diagonal(&rhat.to_complex(), &blocks, dt));
                pre = Some(q.transpose().to_complex());
                post = Some(q.to_complex());
                blocks
            }
            PlanData::LowerTriangular { l, .. } => {
                let blocks = b.scalar_blocks(&real_diag(l), dt)?;
                coupling = Some(off_diagonal(&l.to_complex(), &blocks, dt));
                blocks
            }
            PlanData::Diagonal { d } => {
                b.scalar_blocks(&d.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(), dt)?
            }
            PlanData::Kps { alpha, .. } => {
                // 𝓜⁻¹ = 2 (I + αA)⁻¹ ⊗ (M + (δt/α) K)⁻¹
                let (factor, conjugate, tag) = b.get(Shift::Scalar(Complex64::new(dt / alpha, 0.0)), 0)?;
                let inv = dense_inverse(&DenseMat::identity(s).add(&plan.a.scaled(*alpha)))?;
                post = Some(inv.to_complex());
                out_scale = 2.0;
                (0..s).map(|i| DiagBlock { start: i, size: 1, factor, conjugate, tag }).collect()
            }
            PlanData::Pnkp => {
                // 𝓜⁻¹ = (1/δt) A⁻¹ ⊗ K⁻¹
                let (factor, conjugate, tag) = b.get(Shift::Stiffness, 0)?;
                post = Some(dense_inverse(&plan.a)?.to_complex());
                out_scale = 1.0 / dt;
                (0..s).map(|i| DiagBlock { start: i, size: 1, factor, conjugate, tag }).collect()
            }
            PlanData::Circulant { f, lambda, .. } => {
                pre = Some(f.adjoint());
                post = Some(f.clone());
                b.scalar_blocks(lambda, dt)?
            }
        };
        Ok(BlockPreconditioner {
            plan: plan.clone(),
            dt,
            backend,
            m: m.clone(),
            k: k.clone(),
            factors: b.factors,
            blocks,
            coupling,
            pre,
            post,
            out_scale,
            stats: b.stats,
        })
    }

    pub fn stages(&self) -> usize {
        self.plan.stages()
    }

    pub fn block_size(&self) -> usize {
        self.m.nrows()
    }

    pub fn dim(&self) -> usize {
        self.stages() * self.block_size()
    }

    /// Number of sparse factorizations performed by `assemble`.
    pub fn factorization_count(&self) -> usize {
        self.factors.len()
    }

    pub fn block_tags(&self) -> Vec<BlockTag> {
        self.blocks.iter().map(|b| b.tag).collect()
    }

    fn solve_block(&self, blk: &DiagBlock, rhs: &[Complex64]) -> Vec<Complex64> {
        match &self.factors[blk.factor] {
            Factor::Complex(f) => {
                if blk.conjugate {
                    let c: Vec<Complex64> = rhs.iter().map(|z| z.conj()).collect();
                    f.solve(&c).into_iter().map(|z| z.conj()).collect()
                } else {
                    f.solve(rhs)
                }
            }
            Factor::Real(f) => {
                let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
                let xr = f.solve(&re);
                if rhs.iter().all(|z| z.im == 0.0) {
                    xr.into_iter().map(|x| Complex64::new(x, 0.0)).collect()
                } else {
                    let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
                    let xi = f.solve(&im);
                    xr.into_iter().zip(xi).map(|(a, b)| Complex64::new(a, b)).collect()
                }
            }
        }
    }

    /// `𝓜⁻¹ v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (s, m) = (self.stages(), self.block_size());
        assert_eq!(v.len(), s * m, "preconditioner input has wrong length");
        let stage = |x: &[f64], i: usize| -> Vec<Complex64> { x[i * m..(i + 1) * m].iter().map(|&a| Complex64::new(a, 0.0)).collect() };
        let w: Vec<Vec<Complex64>> = match &self.pre {
            Some(p) => recombine(p, &(0..s).map(|i| stage(v, i)).collect::<Vec<_>>()),
            None => (0..s).map(|i| stage(v, i)).collect(),
        };
        let y = self.block_solve(w);
        let out = match &self.post {
            Some(p) => recombine(p, &y),
            None => y,
        };
        let mut result = Vec::with_capacity(s * m);
        for block in out {
            // with inexact blocks the complex-transformed operator is not
            // conjugate-symmetric; only exact blocks give a real result
            debug_assert!(
                self.backend != FactorKind::SparseLu || {
                    let scale = block.iter().fold(1.0f64, |m, z| m.max(z.re.abs()));
                    block.iter().all(|z| z.im.abs() <= 1e-9 * scale)
                },
                "complex residue in output"
            );
            result.extend(block.into_iter().map(|z| self.out_scale * z.re));
        }
        result
    }

    /// Solves the block (quasi-)triangular or diagonal middle factor.
    fn block_solve(&self, mut w: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
        let s = self.stages();
        let m = self.block_size();
        let zero = Complex64::new(0.0, 0.0);
        let mut y: Vec<Option<Vec<Complex64>>> = vec![None; s];
        let upper = matches!(self.plan.data, PlanData::ComplexSchur { .. } | PlanData::RealSchur { .. } | PlanData::UpperTriangular { .. });
        let order: Vec<usize> = if upper { (0..self.blocks.len()).rev().collect() } else { (0..self.blocks.len()).collect() };
        for bi in order {
            let blk = &self.blocks[bi];
            if let Some(c) = &self.coupling {
                // subtract couplings to solved stages, K yⱼ computed once per column
                for j in 0..s {
                    let Some(yj) = &y[j] else { continue };
                    let mut kyj: Option<Vec<Complex64>> = None;
                    for i in blk.start..blk.start + blk.size {
                        let cij = c[(i, j)];
                        if cij == zero {
                            continue;
                        }
                        let ky = kyj.get_or_insert_with(|| spmv_mixed(&self.k, yj));
                        for (wi, kv) in w[i].iter_mut().zip(ky.iter()) {
                            *wi -= cij * kv;
                        }
                    }
                }
            }
            let rhs: Vec<Complex64> = (blk.start..blk.start + blk.size).flat_map(|i| w[i].iter().copied()).collect();
            let x = self.solve_block(blk, &rhs);
            for (o, i) in (blk.start..blk.start + blk.size).enumerate() {
                y[i] = Some(x[o * m..(o + 1) * m].to_vec());
            }
        }
        y.into_iter().map(|b| b.expect("every stage solved")).collect()
    }

    /// `‖𝓧⁻¹ 𝓐 𝓜⁻¹ 𝓧 − I‖₂` with `𝓧` the plan's stage transform, computed
    /// densely. Fails if the stage dimension exceeds `max_dim`.
    pub fn accuracy_diagnostic(&self, op: &StageOperator, max_dim: usize) -> Result<f64> {
        let n = self.dim();
        if n > max_dim {
            return Err(Error::Invalid(format!("dimension {n} exceeds diagnostic limit {max_dim}")));
        }
        if op.dim() != n {
            return Err(Error::Dimension("operator and preconditioner sizes differ".into()));
        }
        let (s, m) = (self.stages(), self.block_size());
        let mut g = DenseMat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = op.apply(&self.apply(&e));
            e[j] = 0.0;
            for i in 0..n {
                g[(i, j)] = col[i];
            }
        }
        let (x, xinv) = match &self.plan.data {
            PlanData::ComplexSchur { u, .. } => (u.clone(), u.adjoint()),
            PlanData::RealSchur { q, .. } | PlanData::UpperTriangular { q, .. } => (q.to_complex(), q.transpose().to_complex()),
            PlanData::Eigen { x, x_inv, .. } => (x.clone(), x_inv.clone()),
            PlanData::Circulant { f, .. } => (f.clone(), f.adjoint()),
            _ => (CDenseMat::identity(s), CDenseMat::identity(s)),
        };
        let kron_id = |t: &CDenseMat| CDenseMat::from_fn(n, n, |i, j| if i % m == j % m { t[(i / m, j / m)] } else { Complex64::new(0.0, 0.0) });
        let similar = kron_id(&xinv).matmul(&g.to_complex()).matmul(&kron_id(&x)).sub(&CDenseMat::identity(n));
        Ok(norm2(&similar))
    }
}

/// `out_i = Σⱼ p_ij w_j` on stage blocks.
fn recombine(p: &CDenseMat, w: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let s = w.len();
    let m = w.first().map_or(0, Vec::len);
    (0..s)
        .map(|i| {
            let mut out = vec![Complex64::new(0.0, 0.0); m];
            for (j, wj) in w.iter().enumerate() {
                let c = p[(i, j)];
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                for (o, x) in out.iter_mut().zip(wj) {
                    *o += c * x;
                }
            }
            out
        })
        .collect()
}

/// Real matrix times complex vector.
fn spmv_mixed(k: &CsrMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    (0..k.nrows()).map(|i| k.row(i).fold(Complex64::new(0.0, 0.0), |acc, (j, v)| acc + x[j] * v)).collect()
}

/// Expected number of factorizations for a GL plan.
pub fn expected_factorizations(variant: Variant, s: usize) -> usize {
    match variant {
        Variant::Sabrsd | Variant::Sobt | Variant::Pnkp | Variant::Kps => 1,
        Variant::Brsd | Variant::Bcsd | Variant::Bjf | Variant::Bc => s / 2 + s % 2,
        Variant::Bgs | Variant::Bd | Variant::Tbrsd => s.div_ceil(2),
    }
}

#[cfg(test)]
mod tests;
