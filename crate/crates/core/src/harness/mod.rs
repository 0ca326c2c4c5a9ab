//! Time stepping, experiment runs, sweeps and order studies.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discretize::{assemble_fdm, load_matrix_pair, manufactured_solution_nd, manufactured_source_nd, Grid, PdeCoeffs};
use crate::error::{Error, Result};
use crate::factory::{build_plan, PlanSpec};
use crate::krylov::{gmres_right, GmresConfig};
use crate::precondops::BlockPreconditioner;
use crate::sparse::{CsrMatrix, FactorKind, StageOperator};
use crate::tableau::{gauss_legendre, ButcherTableau};

/// What the GMRES initial guess is on steps after the first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStart {
    /// previous step's converged stage vector
    #[default]
    Stage,
    /// previous nodal solution `uₙ`, repeated in every stage block
    Solution,
    Zero,
}

impl std::str::FromStr for WarmStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stage" => Ok(WarmStart::Stage),
            "solution" => Ok(WarmStart::Solution),
            "zero" => Ok(WarmStart::Zero),
            _ => Err(Error::Invalid(format!("unknown warm start '{s}' (stage|solution|zero)"))),
        }
    }
}

/// Grid over which [`run_iteration_sweep`] varies a base config. Empty lists
/// keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub precond: Vec<String>,
    pub dt: Vec<f64>,
    pub n: Vec<usize>,
    pub stages: Vec<usize>,
}

/// Refinement ladder for [`run_convergence_study`]; `n[i]` pairs with `dt[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub n: Vec<usize>,
    pub dt: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// interior points per axis
    pub n: Option<usize>,
    /// grid spacing, alternative to `n`
    pub h: Option<f64>,
    pub dim: usize,
    /// FDM order
    pub order: usize,
    /// Matrix Market mass/stiffness pair, replacing the grid
    pub mass: Option<PathBuf>,
    pub stiffness: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub mu: f64,
    pub velocity: [f64; 3],
    pub stages: usize,
    pub dt: f64,
    pub steps: usize,
    /// overrides `steps` with `round(final_time / dt)`
    pub final_time: Option<f64>,
    pub precond: String,
    pub backend: FactorKind,
    pub gmres: GmresConfig,
    pub warm_start: WarmStart,
    /// seeds the initial state of matrix-file problems
    pub seed: u64,
    /// include wall-clock columns in CSV output
    pub timings: bool,
    pub output: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
    pub ladder: Option<Ladder>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: Some(15),
            h: None,
            dim: 3,
            order: 2,
            mass: None,
            stiffness: None,
            sidecar: None,
            mu: 1.0,
            velocity: [1.0, 1.0, 1.0],
            stages: 2,
            dt: 1.0 / 16.0,
            steps: 10,
            final_time: None,
            precond: "BRSD".into(),
            backend: FactorKind::Ilu0,
            gmres: GmresConfig::default(),
            warm_start: WarmStart::Stage,
            seed: 0,
            timings: true,
            output: None,
            manifest: None,
            sweep: None,
            ladder: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.mass.is_some() != self.stiffness.is_some() {
            return Err(Error::Invalid("mass and stiffness files must be given together".into()));
        }
        if self.mass.is_none() && self.n.is_none() && self.h.is_none() {
            return Err(Error::Invalid("need n, h, or a matrix pair".into()));
        }
        if let Some(t) = self.final_time {
            if !(t > 0.0) {
                return Err(Error::Invalid(format!("final_time must be positive, got {t}")));
            }
        }
        self.plan_spec()?;
        self.gmres.validate()?;
        self.step_count().map(|_| ())
    }

    pub fn plan_spec(&self) -> Result<PlanSpec> {
        self.precond.parse()
    }

    pub fn step_count(&self) -> Result<usize> {
        match self.final_time {
            None if self.steps == 0 => Err(Error::Invalid("steps must be ≥ 1".into())),
            None => Ok(self.steps),
            Some(t) => {
                let k = (t / self.dt).round();
                if k < 1.0 || (k * self.dt - t).abs() > 1e-9 * t {
                    return Err(Error::Invalid(format!("final_time {t} is not a multiple of dt {}", self.dt)));
                }
                Ok(k as usize)
            }
        }
    }

    pub fn coeffs(&self) -> PdeCoeffs {
        PdeCoeffs::new(self.mu, self.velocity)
    }

    pub fn grid(&self) -> Result<Grid> {
        match (self.n, self.h) {
            (Some(n), _) => Grid::new(self.dim, n),
            (None, Some(h)) => Grid::from_spacing(self.dim, h),
            _ => Err(Error::Invalid("no grid specified".into())),
        }
    }
}

/// Spatial problem: `M u' + K u = f`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub m: CsrMatrix<f64>,
    pub k: CsrMatrix<f64>,
    /// present for FDM problems, which carry the manufactured solution
    pub grid: Option<Grid>,
    pub coeffs: PdeCoeffs,
    pub seed: u64,
}

impl Problem {
    pub fn fdm(grid: Grid, coeffs: PdeCoeffs, order: usize) -> Result<Self> {
        let k = assemble_fdm(&grid, &coeffs, order)?;
        let m = CsrMatrix::identity(grid.len());
        Ok(Problem { m, k, grid: Some(grid), coeffs, seed: 0 })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match (&cfg.mass, &cfg.stiffness) {
            (Some(mp), Some(kp)) => {
                let (m, k, _) = load_matrix_pair(mp, kp, cfg.sidecar.as_deref())?;
                Ok(Problem { m, k, grid: None, coeffs: cfg.coeffs(), seed: cfg.seed })
            }
            _ => Problem::fdm(cfg.grid()?, cfg.coeffs(), cfg.order),
        }
    }

    pub fn dof(&self) -> usize {
        self.k.nrows()
    }

    /// Source samples at time `t`; zero for matrix-file problems.
    pub fn source(&self, t: f64) -> Vec<f64> {
        match &self.grid {
            Some(g) => g.sample(|x| manufactured_source_nd(g.dim, x, t, &self.coeffs)),
            None => vec![0.0; self.dof()],
        }
    }

    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.grid.as_ref().map(|g| g.sample(|x| manufactured_solution_nd(g.dim, x, t)))
    }

    /// Manufactured data at `t = 0` (identically zero), or a seeded random
    /// state for matrix-file problems.
    pub fn initial(&self) -> Vec<f64> {
        match self.exact(0.0) {
            Some(u) => u,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.dof()).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// relative 2-norm error against the manufactured solution
    pub error: Option<f64>,
    pub seconds: f64,
}

/// Block `i` = `f(tₙ + cᵢ δt) − K uₙ`.
pub fn stage_rhs(
    u_n: &[f64],
    t_n: f64,
    tab: &ButcherTableau,
    dt: f64,
    k: &CsrMatrix<f64>,
    f: &dyn Fn(f64) -> Vec<f64>,
) -> Vec<f64> {
    let m = k.nrows();
    assert_eq!(u_n.len(), m, "state length does not match K");
    let ku = k.spmv(u_n);
    let mut out = Vec::with_capacity(tab.stages() * m);
    for &ci in &tab.c {
        let fi = f(t_n + ci * dt);
        assert_eq!(fi.len(), m, "source length does not match K");
        out.extend(fi.iter().zip(&ku).map(|(a, b)| a - b));
    }
    out
}

pub struct TimeState {
    pub u: Vec<f64>,
    pub t: f64,
    pub step: usize,
    pub stage_vector: Option<Vec<f64>>,
}

impl TimeState {
    pub fn new(u0: Vec<f64>, t0: f64) -> Self {
        TimeState { u: u0, t: t0, step: 0, stage_vector: None }
    }
}

/// Everything fixed over a run: operator, preconditioner and solver settings.
pub struct Integrator<'a> {
    pub op: StageOperator,
    pub tab: &'a ButcherTableau,
    pub pre: &'a BlockPreconditioner,
    pub gmres: GmresConfig,
    pub warm_start: WarmStart,
}

impl<'a> Integrator<'a> {
    pub fn new(
        problem: &Problem,
        tab: &'a ButcherTableau,
        pre: &'a BlockPreconditioner,
        dt: f64,
        gmres: GmresConfig,
        warm_start: WarmStart,
    ) -> Result<Self> {
        let op = StageOperator::new(problem.m.clone(), problem.k.clone(), tab.a.clone(), dt)?;
        if pre.dim() != op.dim() {
            return Err(Error::Dimension(format!("preconditioner acts on {}, operator on {}", pre.dim(), op.dim())));
        }
        Ok(Integrator { op, tab, pre, gmres, warm_start })
    }

    pub fn dt(&self) -> f64 {
        self.op.dt
    }
}

/// Solves one stage system and applies `uₙ₊₁ = uₙ + δt Σ bᵢ kᵢ`.
pub fn advance_step(state: &mut TimeState, integ: &Integrator<'_>, problem: &Problem) -> StepRecord {
    let start = Instant::now();
    let dt = integ.dt();
    let m = problem.dof();
    let s = integ.tab.stages();
    let src = |t: f64| problem.source(t);
    let rhs = stage_rhs(&state.u, state.t, integ.tab, dt, &problem.k, &src);
    let x0 = match (integ.warm_start, &state.stage_vector) {
        (WarmStart::Stage, Some(prev)) => prev.clone(),
        (WarmStart::Solution, Some(_)) => state.u.iter().copied().cycle().take(s * m).collect(),
        _ => vec![0.0; s * m],
    };
    let apply_a = |x: &[f64]| integ.op.apply(x);
    let apply_m = |x: &[f64]| integ.pre.apply(x);
    let (kvec, stats) = gmres_right(&apply_a, &apply_m, &rhs, &x0, &integ.gmres);
    for (i, &bi) in integ.tab.b.iter().enumerate() {
        for (u, k) in state.u.iter_mut().zip(&kvec[i * m..(i + 1) * m]) {
            *u += dt * bi * k;
        }
    }
    state.t += dt;
    state.step += 1;
    state.stage_vector = Some(kvec);
    let error = problem.exact(state.t).map(|ex| relative_error(&state.u, &ex));
    StepRecord {
        step: state.step,
        iterations: stats.iterations,
        residual: stats.final_residual,
        converged: stats.converged,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// `‖u − ref‖₂ / ‖ref‖₂` (absolute when `ref = 0`).
pub fn relative_error(u: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = u.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let nr: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nr > 0.0 {
        diff / nr
    } else {
        diff
    }
}

/// Mean iteration count over steps 2.. (or step 1 alone for one-step runs).
pub fn average_iterations(records: &[StepRecord]) -> f64 {
    let tail = if records.len() > 1 { &records[1..] } else { records };
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.iterations as f64).sum::<f64>() / tail.len() as f64
}

fn average_seconds(records: &[StepRecord]) -> f64 {
    let tail = if records.len() > 1 { &records[1..] } else { records };
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|r| r.seconds).sum::<f64>() / tail.len() as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub precond: String,
    pub backend: FactorKind,
    pub stages: usize,
    pub dof: usize,
    pub h: Option<f64>,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub avg_iterations: f64,
    pub factorizations: usize,
    pub factor_seconds: f64,
    pub avg_solve_seconds: f64,
    pub final_error: Option<f64>,
    pub all_converged: bool,
}

/// Runs the configured number of steps with one preconditioner assembled
/// up front.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    run_on_problem(cfg, &problem)
}

pub fn run_on_problem(cfg: &ExperimentConfig, problem: &Problem) -> Result<RunSummary> {
    let spec = cfg.plan_spec()?;
    let tab = gauss_legendre(cfg.stages)?;
    let plan = build_plan(spec, &tab)?;
    let pre = BlockPreconditioner::assemble(&plan, &problem.m, &problem.k, cfg.dt, cfg.backend)?;
    let integ = Integrator::new(problem, &tab, &pre, cfg.dt, cfg.gmres, cfg.warm_start)?;
    let steps = cfg.step_count()?;
    let mut state = TimeState::new(problem.initial(), 0.0);
    let records: Vec<StepRecord> = (0..steps).map(|_| advance_step(&mut state, &integ, problem)).collect();
    Ok(RunSummary {
        precond: spec.label(),
        backend: cfg.backend,
        stages: cfg.stages,
        dof: problem.dof(),
        h: problem.grid.as_ref().map(|g| g.h()),
        dt: cfg.dt,
        avg_iterations: average_iterations(&records),
        factorizations: pre.factorization_count(),
        factor_seconds: pre.stats.seconds,
        avg_solve_seconds: average_seconds(&records),
        final_error: records.last().and_then(|r| r.error),
        all_converged: records.iter().all(|r| r.converged),
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub precond: String,
    pub backend: FactorKind,
    pub stages: usize,
    pub n: Option<usize>,
    pub h: Option<f64>,
    pub dt: f64,
    pub avg_iterations: f64,
    pub factorizations: usize,
    pub factor_seconds: f64,
    pub avg_solve_seconds: f64,
    pub converged: bool,
}

/// Expands the sweep grid into one config per cell, in row order
/// (precond slowest, then stages, n, dt).
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let grid = cfg.sweep.clone().unwrap_or_default();
    let or = |v: &Vec<String>| if v.is_empty() { vec![cfg.precond.clone()] } else { v.clone() };
    let preconds = or(&grid.precond);
    let stages = if grid.stages.is_empty() { vec![cfg.stages] } else { grid.stages.clone() };
    let ns: Vec<Option<usize>> = if grid.n.is_empty() { vec![cfg.n] } else { grid.n.iter().map(|&n| Some(n)).collect() };
    let dts = if grid.dt.is_empty() { vec![cfg.dt] } else { grid.dt.clone() };
    let mut cells = Vec::new();
    for p in &preconds {
        for &s in &stages {
            for &n in &ns {
                for &dt in &dts {
                    let mut c = cfg.clone();
                    c.precond = p.clone();
                    c.stages = s;
                    c.n = n;
                    if n.is_some() {
                        c.h = None;
                    }
                    c.dt = dt;
                    c.sweep = None;
                    c.ladder = None;
                    cells.push(c);
                }
            }
        }
    }
    cells
}

/// One row per sweep cell. Cells run concurrently; row order is fixed.
pub fn run_iteration_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(cfg);
    for c in &cells {
        c.validate()?;
    }
    cells
        .par_iter()
        .map(|c| {
            let s = run_experiment(c)?;
            Ok(SweepRow {
                precond: s.precond,
                backend: s.backend,
                stages: s.stages,
                n: if c.mass.is_some() { None } else { Some(c.grid()?.n) },
                h: s.h,
                dt: s.dt,
                avg_iterations: s.avg_iterations,
                factorizations: s.factorizations,
                factor_seconds: s.factor_seconds,
                avg_solve_seconds: s.avg_solve_seconds,
                converged: s.all_converged,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "precond,backend,stages,n,h,dt,avg_iterations,factorizations,converged";
pub const SWEEP_TIMING_HEADER: &str = ",factor_seconds,avg_solve_seconds";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow], timings: bool) -> String {
    let mut out = String::from(SWEEP_HEADER);
    if timings {
        out.push_str(SWEEP_TIMING_HEADER);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.4},{},{}",
            r.precond,
            r.backend,
            r.stages,
            opt(r.n),
            opt(r.h),
            r.dt,
            r.avg_iterations,
            r.factorizations,
            r.converged
        ));
        if timings {
            out.push_str(&format!(",{:.6},{:.6}", r.factor_seconds, r.avg_solve_seconds));
        }
        out.push('\n');
    }
    out
}

pub const STEP_HEADER: &str = "step,iterations,residual,converged,error";

pub fn steps_csv(records: &[StepRecord], timings: bool) -> String {
    let mut out = String::from(STEP_HEADER);
    if timings {
        out.push_str(",seconds");
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6e},{},{}",
            r.step,
            r.iterations,
            r.residual,
            r.converged,
            r.error.map(|e| format!("{e:.6e}")).unwrap_or_default()
        ));
        if timings {
            out.push_str(&format!(",{:.6}", r.seconds));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `log₂(e_{i−1} / e_i)`; absent on the first level
    pub order: Option<f64>,
    pub avg_iterations: f64,
}

/// Runs every ladder level to the same final time (default 1) and reports
/// errors and observed orders.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    let ladder = cfg.ladder.as_ref().ok_or_else(|| Error::Invalid("convergence study needs a ladder".into()))?;
    if ladder.n.len() != ladder.dt.len() || ladder.n.is_empty() {
        return Err(Error::Invalid("ladder n and dt lists must be non-empty and of equal length".into()));
    }
    if cfg.mass.is_some() {
        return Err(Error::Invalid("convergence study needs a manufactured (grid) problem".into()));
    }
    let final_time = cfg.final_time.unwrap_or(1.0);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (&n, &dt) in ladder.n.iter().zip(&ladder.dt) {
        let mut c = cfg.clone();
        c.n = Some(n);
        c.h = None;
        c.dt = dt;
        c.final_time = Some(final_time);
        c.ladder = None;
        c.sweep = None;
        let s = run_experiment(&c)?;
        if !s.all_converged {
            return Err(Error::Invalid(format!("GMRES failed to converge at n = {n}, dt = {dt}")));
        }
        let error = s.final_error.expect("grid problems carry an exact solution");
        let order = rows.last().map(|prev| (prev.error / error).log2());
        rows.push(ConvergenceRow { n, h: s.h.unwrap_or(f64::NAN), dt, error, order, avg_iterations: s.avg_iterations });
    }
    Ok(rows)
}

pub const CONVERGENCE_HEADER: &str = "n,h,dt,error,order,avg_iterations";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6e},{},{:.4}\n",
            r.n,
            r.h,
            r.dt,
            r.error,
            r.order.map(|o| format!("{o:.3}")).unwrap_or_default(),
            r.avg_iterations
        ));
    }
    out
}

/// Git-style content hash: SHA-256 over `"blob <len>\0" ‖ bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub output_hash: String,
    pub rows: usize,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, csv: &str) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            output_hash: content_hash(csv.as_bytes()),
            rows: csv.lines().count().saturating_sub(1),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
