//! Finite-difference advection-diffusion operators on uniform grids of the
//! unit cube (square, interval) with homogeneous Dirichlet boundaries, plus
//! the manufactured solution used by the experiments.

mod stencil;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{read_matrix_market, CsrMatrix};

pub use stencil::{fd_weights, stencil_offsets};

/// `n` interior nodes per axis, spacing `h = 1/(n+1)`. Nodes are numbered
/// lexicographically with x fastest: `i + n (j + n k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!("grid dimension {dim} not in 1..=3")));
        }
        if n < 3 {
            return Err(Error::Invalid(format!("grid needs at least 3 interior nodes per axis, got {n}")));
        }
        Ok(Grid { dim, n })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Grid::new(3, n)
    }

    /// Grid with spacing `h`, which must be `1/(n+1)` for an integer `n`.
    pub fn from_spacing(dim: usize, h: f64) -> Result<Self> {
        let cells = (1.0 / h).round();
        if !(h > 0.0) || (cells * h - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("spacing {h} does not divide the unit interval")));
        }
        Grid::new(dim, cells as usize - 1)
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of node `idx` (unused trailing axes are 0.5).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.h();
        let mut x = [0.5; 3];
        let mut rest = idx;
        for xa in x.iter_mut().take(self.dim) {
            *xa = ((rest % self.n) + 1) as f64 * h;
            rest /= self.n;
        }
        x
    }

    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeCoeffs {
    pub mu: f64,
    pub v: [f64; 3],
}

impl PdeCoeffs {
    pub fn new(mu: f64, v: [f64; 3]) -> Self {
        PdeCoeffs { mu, v }
    }
}

/// Cell Péclet number `2 h ‖v‖ / μ`.
pub fn compute_peclet(h: f64, coeffs: &PdeCoeffs) -> f64 {
    let speed = coeffs.v.iter().map(|v| v * v).sum::<f64>().sqrt();
    2.0 * h * speed / coeffs.mu
}

/// Stiffness matrix of `−μΔu + v·∇u` on the interior nodes, order `p`.
pub fn assemble_fdm(grid: &Grid, coeffs: &PdeCoeffs, p: usize) -> Result<CsrMatrix<f64>> {
    if ![2, 4, 6].contains(&p) {
        return Err(Error::Invalid(format!("accuracy order {p} not in {{2, 4, 6}}")));
    }
    if !(coeffs.mu > 0.0) {
        return Err(Error::Invalid("diffusion coefficient must be positive".into()));
    }
    let n = grid.n;
    if n < p {
        return Err(Error::Invalid(format!("{n} nodes per axis too few for order {p}")));
    }
    let h = grid.h();
    // per 1D node: combined weights of −μ d²/dx² + v_a d/dx on each axis
    let mut axis_rows: Vec<Vec<Vec<(i64, f64)>>> = Vec::with_capacity(grid.dim);
    for a in 0..grid.dim {
        let mut rows = Vec::with_capacity(n);
        for g in 1..=n {
            let mut entries: Vec<(i64, f64)> = Vec::new();
            let mut add = |off: i64, w: f64| match entries.iter_mut().find(|e| e.0 == off) {
                Some(e) => e.1 += w,
                None => entries.push((off, w)),
            };
            let o2 = stencil_offsets(2, p, g, n);
            for (o, w) in o2.iter().zip(fd_weights(2, &o2)?) {
                add(*o, -coeffs.mu * w / (h * h));
            }
            if coeffs.v[a] != 0.0 {
                let o1 = stencil_offsets(1, p, g, n);
                for (o, w) in o1.iter().zip(fd_weights(1, &o1)?) {
                    add(*o, coeffs.v[a] * w / h);
                }
            }
            // boundary nodes carry the value 0 and drop out
            entries.retain(|&(o, _)| {
                let k = g as i64 + o;
                k >= 1 && k <= n as i64
            });
            rows.push(entries);
        }
        axis_rows.push(rows);
    }
    let stride: Vec<usize> = (0..grid.dim).map(|a| n.pow(a as u32)).collect();
    let mut trip = Vec::with_capacity(grid.len() * (grid.dim * (p + 2) + 1));
    for idx in 0..grid.len() {
        for a in 0..grid.dim {
            let i = (idx / stride[a]) % n;
            for &(o, w) in &axis_rows[a][i] {
                let j = (idx as i64 + o * stride[a] as i64) as usize;
                trip.push((idx, j, w));
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), trip)
}

const OMEGA_T: f64 = 1.5 * PI;

/// `u = sin(1.5πt) sin(πx) sin(πy) sin(πz)`.
pub fn manufactured_solution(x: f64, y: f64, z: f64, t: f64) -> f64 {
    (OMEGA_T * t).sin() * (PI * x).sin() * (PI * y).sin() * (PI * z).sin()
}

/// `f = u_t − μΔu + v·∇u` for [`manufactured_solution`].
pub fn manufactured_source(x: f64, y: f64, z: f64, t: f64, coeffs: &PdeCoeffs) -> f64 {
    let (sx, sy, sz) = ((PI * x).sin(), (PI * y).sin(), (PI * z).sin());
    let (cx, cy, cz) = ((PI * x).cos(), (PI * y).cos(), (PI * z).cos());
    let s3 = sx * sy * sz;
    let st = (OMEGA_T * t).sin();
    OMEGA_T * (OMEGA_T * t).cos() * s3
        + 3.0 * PI * PI * coeffs.mu * st * s3
        + st * PI * (coeffs.v[0] * cx * sy * sz + coeffs.v[1] * sx * cy * sz + coeffs.v[2] * sx * sy * cz)
}

/// Manufactured solution restricted to the first `dim` axes.
pub fn manufactured_solution_nd(dim: usize, x: [f64; 3], t: f64) -> f64 {
    (OMEGA_T * t).sin() * x.iter().take(dim).map(|&xa| (PI * xa).sin()).product::<f64>()
}

/// Source matching [`manufactured_solution_nd`].
pub fn manufactured_source_nd(dim: usize, x: [f64; 3], t: f64, coeffs: &PdeCoeffs) -> f64 {
    if dim == 3 {
        return manufactured_source(x[0], x[1], x[2], t, coeffs);
    }
    let s: f64 = x.iter().take(dim).map(|&xa| (PI * xa).sin()).product();
    let st = (OMEGA_T * t).sin();
    let mut adv = 0.0;
    for a in 0..dim {
        let mut term = coeffs.v[a] * PI * (PI * x[a]).cos();
        for (b, &xb) in x.iter().enumerate().take(dim) {
            if b != a {
                term *= (PI * xb).sin();
            }
        }
        adv += term;
    }
    OMEGA_T * (OMEGA_T * t).cos() * s + dim as f64 * PI * PI * coeffs.mu * st * s + st * adv
}

/// Metadata accompanying externally assembled `(M, K)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub dof: usize,
    pub symmetric_mass: bool,
    pub source: String,
}

/// Loads a Matrix Market `(M, K)` pair, checking it against the optional
/// JSON sidecar.
pub fn load_matrix_pair(
    m_path: impl AsRef<Path>,
    k_path: impl AsRef<Path>,
    sidecar: Option<&Path>,
) -> Result<(CsrMatrix<f64>, CsrMatrix<f64>, Option<MatrixSidecar>)> {
    let m = read_matrix_market(m_path)?.into_real()?;
    let k = read_matrix_market(k_path)?.into_real()?;
    if m.nrows() != m.ncols() || k.nrows() != k.ncols() || m.nrows() != k.nrows() {
        return Err(Error::Dimension("M and K must be square and of equal size".into()));
    }
    let meta = match sidecar {
        Some(p) => {
            let meta: MatrixSidecar = serde_json::from_str(&fs::read_to_string(p)?)?;
            if meta.dof != m.nrows() {
                return Err(Error::Dimension(format!("sidecar declares {} dof, matrices have {}", meta.dof, m.nrows())));
            }
            Some(meta)
        }
        None => None,
    };
    Ok((m, k, meta))
}

#[cfg(test)]
mod tests;
