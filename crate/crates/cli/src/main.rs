use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use irk_precond::factory::{build_plan, PlanData, PlanSpec, PrecondPlan};
use irk_precond::harness::{
    convergence_csv, run_convergence_study, run_experiment, run_iteration_sweep, steps_csv, sweep_csv,
    ExperimentConfig, Ladder, RunManifest, SweepGrid, WarmStart,
};
use irk_precond::smalldense::{CDenseMat, DenseMat};
use irk_precond::sparse::FactorKind;
use irk_precond::tableau::{gauss_legendre, verify_order_conditions};

#[derive(Parser)]
#[command(name = "irk-precond", version, about = "Block preconditioners for Gauss-Legendre IRK stage systems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the Gauss-Legendre tableau and its order-condition report.
    Tableau {
        #[arg(long, short)]
        stages: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Dump a preconditioner plan's small matrices.
    Plan {
        #[arg(long, default_value = "gl")]
        scheme: String,
        #[arg(long, short)]
        stages: usize,
        #[arg(long, short)]
        precond: String,
        #[arg(long)]
        reverse_order: bool,
        /// json, or csv with columns `matrix,i,j,re,im`
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Single run; per-step CSV `step,iterations,residual,converged,error[,seconds]`.
    Solve(RunArgs),
    /// Grid of runs; CSV `precond,backend,stages,n,h,dt,avg_iterations,factorizations,converged[,factor_seconds,avg_solve_seconds]`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        precond_list: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        dt_list: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        stages_list: Vec<usize>,
    },
    /// Order study; CSV `n,h,dt,error,order,avg_iterations`.
    Converge {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        ladder_n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        ladder_dt: Vec<f64>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

/// Config file plus overrides; flags win over the file.
#[derive(Args)]
struct RunArgs {
    /// TOML file with ExperimentConfig keys
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// FDM order (2, 4 or 6)
    #[arg(long)]
    order: Option<usize>,
    /// Matrix Market mass matrix (with --stiffness, replaces the grid)
    #[arg(long)]
    mass: Option<PathBuf>,
    #[arg(long)]
    stiffness: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    velocity: Option<Vec<f64>>,
    #[arg(long, short)]
    stages: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    final_time: Option<f64>,
    /// e.g. BRSD, SABRSD-R, KPS
    #[arg(long, short)]
    precond: Option<String>,
    /// ILU0 or SparseLU
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// stage, solution or zero
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// omit wall-clock columns (bit-reproducible output)
    #[arg(long)]
    no_timings: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if self.n.is_some() {
            c.n = self.n;
            c.h = None;
        }
        if self.h.is_some() {
            c.h = self.h;
            c.n = None;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(dim, order, mu, stages, dt, steps, seed);
        if self.mass.is_some() {
            c.mass = self.mass.clone();
        }
        if self.stiffness.is_some() {
            c.stiffness = self.stiffness.clone();
        }
        if self.sidecar.is_some() {
            c.sidecar = self.sidecar.clone();
        }
        if let Some(v) = &self.velocity {
            c.velocity = [v[0], v[1], v[2]];
        }
        if self.final_time.is_some() {
            c.final_time = self.final_time;
        }
        if let Some(p) = &self.precond {
            c.precond = p.clone();
        }
        if let Some(b) = &self.backend {
            c.backend = b.parse::<FactorKind>()?;
        }
        if let Some(w) = &self.warm_start {
            c.warm_start = w.parse::<WarmStart>()?;
        }
        if let Some(r) = self.rtol {
            c.gmres.rtol = r;
        }
        if let Some(r) = self.restart {
            c.gmres.restart = r;
        }
        if let Some(m) = self.max_iters {
            c.gmres.max_iters = m;
        }
        if self.no_timings {
            c.timings = false;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.manifest.is_some() {
            c.manifest = self.manifest.clone();
        }
        Ok(c)
    }
}

fn emit(cfg: &ExperimentConfig, command: &str, csv: &str) -> Result<()> {
    match &cfg.output {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    if let Some(p) = &cfg.manifest {
        write_manifest(p, &RunManifest::new(command, cfg, csv))?;
    }
    Ok(())
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    fs::write(path, m.to_json()?).with_context(|| format!("writing {}", path.display()))
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

fn tableau(stages: usize, format: Format) -> Result<()> {
    let tab = gauss_legendre(stages)?;
    let report = verify_order_conditions(&tab);
    let s = tab.stages();
    match format {
        Format::Csv => {
            println!("kind,i,j,value");
            for i in 0..s {
                println!("c,{i},,{:.16e}", tab.c[i]);
            }
            for i in 0..s {
                println!("b,{i},,{:.16e}", tab.b[i]);
            }
            for i in 0..s {
                for j in 0..s {
                    println!("A,{i},{j},{:.16e}", tab.a[(i, j)]);
                }
            }
            for ch in &report.checks {
                println!("{},,,{:.3e}", ch.name, ch.max_violation);
            }
        }
        Format::Json => {
            let v = serde_json::json!({ "tableau": tab, "order_conditions": report });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Format::Text => {
            println!("Gauss-Legendre, s = {s}");
            println!("c = [{}]", fmt_row(&tab.c));
            println!("b = [{}]", fmt_row(&tab.b));
            println!("A =");
            for i in 0..s {
                println!("  [{}]", fmt_row(tab.a.row(i)));
            }
            for ch in &report.checks {
                println!("{:<6} {:.3e}", ch.name, ch.max_violation);
            }
            println!("order conditions {} (tol {:.0e})", if report.passed() { "passed" } else { "FAILED" }, report.tolerance);
        }
    }
    Ok(())
}

fn real_rows(name: &str, m: &DenseMat, out: &mut String) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push_str(&format!("{name},{i},{j},{:.16e},0\n", m[(i, j)]));
        }
    }
}

fn complex_rows(name: &str, m: &CDenseMat, out: &mut String) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push_str(&format!("{name},{i},{j},{:.16e},{:.16e}\n", z.re, z.im));
        }
    }
}

fn plan_csv(plan: &PrecondPlan) -> String {
    let mut out = String::from("matrix,i,j,re,im\n");
    real_rows("A", &plan.a, &mut out);
    match &plan.data {
        PlanData::ComplexSchur { u, t } => {
            complex_rows("U", u, &mut out);
            complex_rows("T", t, &mut out);
        }
        PlanData::RealSchur { q, r, .. } => {
            real_rows("Q", q, &mut out);
            real_rows("R", r, &mut out);
        }
        PlanData::Eigen { x, lambda, .. } => {
            complex_rows("X", x, &mut out);
            complex_rows("Lambda", &CDenseMat::diag(lambda), &mut out);
        }
        PlanData::UpperTriangular { q, rhat, source, .. } => {
            real_rows("Q", q, &mut out);
            real_rows("R", source, &mut out);
            real_rows("Rhat", rhat, &mut out);
        }
        PlanData::LowerTriangular { l, .. } => real_rows("L", l, &mut out),
        PlanData::Diagonal { d } => real_rows("D", &DenseMat::diag(d), &mut out),
        PlanData::Kps { alpha, objective } => {
            out.push_str(&format!("alpha,0,0,{alpha:.16e},0\nobjective,0,0,{objective:.16e},0\n"));
        }
        PlanData::Pnkp => {}
        PlanData::Circulant { c, lambda, .. } => {
            real_rows("C", &irk_precond::factory::circulant(c), &mut out);
            complex_rows("Lambda", &CDenseMat::diag(lambda), &mut out);
        }
    }
    if let Some(approx) = plan.approximation() {
        complex_rows("Atilde", &approx, &mut out);
    }
    out
}

fn plan(scheme: &str, stages: usize, precond: &str, reverse: bool, format: Format) -> Result<()> {
    if !scheme.eq_ignore_ascii_case("gl") {
        bail!("only the Gauss-Legendre scheme ('gl') is supported");
    }
    let mut spec: PlanSpec = precond.parse()?;
    if reverse {
        if !spec.variant.is_ordered() {
            bail!("{} has no ordering to reverse", spec.variant);
        }
        spec.reversed = true;
    }
    let tab = gauss_legendre(stages)?;
    let plan = build_plan(spec, &tab)?;
    match format {
        Format::Csv => print!("{}", plan_csv(&plan)),
        _ => println!("{}", serde_json::to_string_pretty(&plan)?),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Tableau { stages, format } => tableau(stages, format),
        Cmd::Plan { scheme, stages, precond, reverse_order, format } => {
            plan(&scheme, stages, &precond, reverse_order, format)
        }
        Cmd::Solve(args) => {
            let cfg = args.resolve()?;
            let summary = run_experiment(&cfg)?;
            eprintln!(
                "{} {} s={} dof={} dt={}: avg iterations {:.2} (steps 2..), {} factorizations in {:.3}s, final error {}",
                summary.precond,
                summary.backend,
                summary.stages,
                summary.dof,
                summary.dt,
                summary.avg_iterations,
                summary.factorizations,
                summary.factor_seconds,
                summary.final_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "n/a".into())
            );
            if !summary.all_converged {
                eprintln!("warning: GMRES did not converge on every step");
            }
            emit(&cfg, "solve", &steps_csv(&summary.records, cfg.timings))
        }
        Cmd::Sweep { run, precond_list, dt_list, n_list, stages_list } => {
            let mut cfg = run.resolve()?;
            let mut grid = cfg.sweep.take().unwrap_or_default();
            if !precond_list.is_empty() {
                grid.precond = precond_list;
            }
            if !dt_list.is_empty() {
                grid.dt = dt_list;
            }
            if !n_list.is_empty() {
                grid.n = n_list;
            }
            if !stages_list.is_empty() {
                grid.stages = stages_list;
            }
            cfg.sweep = Some(SweepGrid { ..grid });
            let rows = run_iteration_sweep(&cfg)?;
            emit(&cfg, "sweep", &sweep_csv(&rows, cfg.timings))
        }
        Cmd::Converge { run, ladder_n, ladder_dt } => {
            let mut cfg = run.resolve()?;
            if !ladder_n.is_empty() || !ladder_dt.is_empty() {
                cfg.ladder = Some(Ladder { n: ladder_n, dt: ladder_dt });
            }
            let rows = run_convergence_study(&cfg)?;
            emit(&cfg, "converge", &convergence_csv(&rows))
        }
    }
}
