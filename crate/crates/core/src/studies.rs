//! Benchmark sweeps, eigenvalue checks, convergence studies and
//! morphology post-processing.

use std::fmt::Write as _;
use std::time::Instant;

use crate::config::{BinarizeRule, MeshSpec, RunConfig};
use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::physics::ModelParams;
use crate::precond::eigen_bounds_check;
use crate::simulation::{eoc_study, loglog_slope, EocResult, Simulation, StepReport};

/// How a timed run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The model blew up.
    Diverged(String),
    /// Setup or linear solver failure.
    Failed(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "ok",
            RunStatus::Diverged(_) => "diverged",
            RunStatus::Failed(_) => "failed",
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged(_))
    }
}

/// Statistics of one timed run.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub mesh: Vec<usize>,
    pub eps: f64,
    pub tau: f64,
    pub nodes: usize,
    /// Size of one species' block system.
    pub unknowns: usize,
    pub setup_seconds: f64,
    /// Timed steps that completed.
    pub steps: usize,
    /// Larger MINRES count of the two species, maximised over timed steps.
    pub worst_iterations: usize,
    pub mean_seconds: f64,
    pub max_seconds: f64,
    /// Mean MINRES wall time per step, both species.
    pub mean_solve_seconds: f64,
    pub status: RunStatus,
}

impl SweepRun {
    fn new(mesh: &MeshSpec, params: &ModelParams) -> Self {
        Self {
            mesh: mesh.counts.clone(),
            eps: params.eps_p,
            tau: params.tau,
            nodes: mesh.counts.iter().product(),
            unknowns: 2 * mesh.counts.iter().product::<usize>(),
            setup_seconds: 0.0,
            steps: 0,
            worst_iterations: 0,
            mean_seconds: 0.0,
            max_seconds: 0.0,
            mean_solve_seconds: 0.0,
            status: RunStatus::Completed,
        }
    }

    pub fn label(&self) -> String {
        self.mesh.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x")
    }
}

/// Sets up a simulation and advances `warmup + steps` steps, timing the
/// last `steps`. Failures are recorded in the returned status.
pub fn timed_run(config: &RunConfig, mesh: &MeshSpec, params: &ModelParams, steps: usize, warmup: usize) -> SweepRun {
    let mut run = SweepRun::new(mesh, params);
    let start = Instant::now();
    let sim = match mesh
        .build()
        .and_then(|m| Simulation::new(m, params.clone(), config.solver.clone()))
    {
        Ok(sim) => sim,
        Err(e) => {
            run.status = RunStatus::Failed(e.to_string());
            return run;
        }
    };
    run.setup_seconds = start.elapsed().as_secs_f64();
    let mut timed: Vec<StepReport> = Vec::with_capacity(steps);
    let result = sim.advance_each(sim.initial_state(), warmup + steps, |r| {
        if r.step > warmup {
            timed.push(r);
        }
    });
    run.status = match result {
        Ok(_) => RunStatus::Completed,
        Err(e @ Error::Diverged { .. }) => RunStatus::Diverged(e.to_string()),
        Err(e) => RunStatus::Failed(e.to_string()),
    };
    if !timed.is_empty() {
        let k = timed.len() as f64;
        run.steps = timed.len();
        run.worst_iterations = timed.iter().map(StepReport::worst_iterations).max().unwrap_or(0);
        run.mean_seconds = timed.iter().map(|r| r.seconds).sum::<f64>() / k;
        run.max_seconds = timed.iter().map(|r| r.seconds).fold(0.0, f64::max);
        run.mean_solve_seconds = timed.iter().map(StepReport::solve_seconds).sum::<f64>() / k;
    }
    run
}

/// Every mesh of `bench.meshes` with the configured model, `bench.steps`
/// timed steps each.
pub fn bench_mesh_sweep(config: &RunConfig) -> Vec<SweepRun> {
    config
        .bench
        .meshes
        .iter()
        .map(|counts| {
            let mesh = config.mesh.with_counts(counts);
            timed_run(config, &mesh, &config.model, config.bench.steps, config.bench.warmup_steps)
        })
        .collect()
}

/// Worst-iteration spread and runtime scaling of a mesh sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSweepSummary {
    pub worst_iterations: usize,
    pub spread: usize,
    /// Log-log slope of mean solve time against unknowns.
    pub time_slope: Option<f64>,
}

pub fn summarize_mesh_sweep(runs: &[SweepRun]) -> MeshSweepSummary {
    let done: Vec<&SweepRun> = runs.iter().filter(|r| r.steps > 0).collect();
    let worst = done.iter().map(|r| r.worst_iterations).max().unwrap_or(0);
    let best = done.iter().map(|r| r.worst_iterations).min().unwrap_or(0);
    let x: Vec<f64> = done.iter().map(|r| r.unknowns as f64).collect();
    let y: Vec<f64> = done.iter().map(|r| r.mean_solve_seconds).collect();
    MeshSweepSummary {
        worst_iterations: worst,
        spread: worst - best,
        time_slope: loglog_slope(&x, &y).ok(),
    }
}

/// Results of the interface-parameter and time-step sweeps.
#[derive(Debug, Clone)]
pub struct ParamSweep {
    /// One run per `bench.eps_list` entry at the configured time step.
    pub eps_runs: Vec<SweepRun>,
    /// One run per `bench.tau_list` entry at the configured interface width.
    pub tau_runs: Vec<SweepRun>,
}

impl ParamSweep {
    pub fn runs(&self) -> impl Iterator<Item = &SweepRun> {
        self.eps_runs.iter().chain(&self.tau_runs)
    }
}

/// Runs `bench.param_steps` steps on `bench.param_mesh` for each value.
/// Both species share the interface width.
pub fn bench_param_sweep(config: &RunConfig) -> ParamSweep {
    let bench = &config.bench;
    let mesh = config.mesh.with_counts(&bench.param_mesh);
    let run = |params: ModelParams| timed_run(config, &mesh, &params, bench.param_steps, 0);
    let eps_runs = bench
        .eps_list
        .iter()
        .map(|&eps| {
            run(ModelParams {
                eps_p: eps,
                eps_nfa: eps,
                ..config.model.clone()
            })
        })
        .collect();
    let tau_runs = bench
        .tau_list
        .iter()
        .map(|&tau| ModelParams { tau, ..config.model.clone() })
        .map(run)
        .collect();
    ParamSweep { eps_runs, tau_runs }
}

pub const SWEEP_HEADER: &str =
    "mesh,nodes,unknowns,eps,tau,steps,worst_iterations,setup_seconds,mean_seconds,max_seconds,mean_solve_seconds,status";

pub fn sweep_csv<'a>(runs: impl IntoIterator<Item = &'a SweepRun>) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in runs {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{}",
            r.label(),
            r.nodes,
            r.unknowns,
            r.eps,
            r.tau,
            r.steps,
            r.worst_iterations,
            r.setup_seconds,
            r.mean_seconds,
            r.max_seconds,
            r.mean_solve_seconds,
            r.status.label()
        );
    }
    s
}

/// Extreme eigenvalues of the preconditioned Schur complement for one
/// mesh and parameter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EigEntry {
    pub mesh: Vec<usize>,
    pub tau: f64,
    pub eps: f64,
    pub min: f64,
    pub max: f64,
}

impl EigEntry {
    pub fn within(&self, lower: f64, upper: f64) -> bool {
        self.min >= lower && self.max <= upper
    }
}

/// Dense eigenvalue check over `bench.eig_meshes x eig_taus x eig_eps`.
pub fn eig_sweep(config: &RunConfig) -> Result<Vec<EigEntry>> {
    let bench = &config.bench;
    let mut out = Vec::new();
    for counts in &bench.eig_meshes {
        let mesh = config.mesh.with_counts(counts).build()?;
        let fem = FemMatrices::assemble(&mesh);
        for &tau in &bench.eig_taus {
            for &eps in &bench.eig_eps {
                let (min, max) = eigen_bounds_check(&fem.mass, &fem.stiffness, tau, eps, bench.eig_cap)?;
                out.push(EigEntry {
                    mesh: counts.clone(),
                    tau,
                    eps,
                    min,
                    max,
                });
            }
        }
    }
    Ok(out)
}

pub const EIG_HEADER: &str = "mesh,tau,eps,min,max";

pub fn eig_csv(entries: &[EigEntry]) -> String {
    let mut s = String::from(EIG_HEADER);
    s.push('\n');
    for e in entries {
        let label = e.mesh.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x");
        let _ = writeln!(s, "{label},{:e},{:e},{:.16e},{:.16e}", e.tau, e.eps, e.min, e.max);
    }
    s
}

/// Convergence study with the configured mesh, model and ladder.
pub fn eoc_from_config(config: &RunConfig) -> Result<EocResult> {
    let mesh = config.mesh.build()?;
    eoc_study(
        &mesh,
        &config.model,
        &config.solver,
        &config.bench.eoc_taus,
        config.bench.eoc_tau_ref,
        config.bench.eoc_final_time,
    )
}

pub const EOC_HEADER: &str = "tau,error_p,error_nfa";

/// Error table followed by the fitted orders as comment lines.
pub fn eoc_csv(result: &EocResult) -> String {
    let mut s = String::from(EOC_HEADER);
    s.push('\n');
    for ((t, ep), en) in result.taus.iter().zip(&result.errors_p).zip(&result.errors_nfa) {
        let _ = writeln!(s, "{t:e},{ep:.16e},{en:.16e}");
    }
    let _ = writeln!(s, "# order_p {:.6}", result.order_p);
    let _ = writeln!(s, "# order_nfa {:.6}", result.order_nfa);
    s
}

/// Binary nodal mask of the polymer phase.
pub fn binarize_morphology(phi_p: &[f64], phi_nfa: &[f64], rule: BinarizeRule, threshold: f64) -> Result<Vec<u8>> {
    if phi_p.len() != phi_nfa.len() {
        return Err(Error::DimensionMismatch(format!(
            "phi_p has {} values, phi_nfa {}",
            phi_p.len(),
            phi_nfa.len()
        )));
    }
    Ok(phi_p
        .iter()
        .zip(phi_nfa)
        .map(|(&p, &n)| match rule {
            BinarizeRule::Compare => u8::from(p > n),
            BinarizeRule::Absolute => u8::from(p > threshold),
        })
        .collect())
}

/// Population standard deviation; zero for an empty slice.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}
