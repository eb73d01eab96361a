//! Command-line front end: simulation runs, benchmark sweeps, convergence
//! and eigenvalue studies, and morphology binarization.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chmorph::config::{emit_config, load_config, BenchMode, RunConfig};
use chmorph::io::{self, read_vtk, write_stats, write_text};
use chmorph::studies::{
    bench_mesh_sweep, bench_param_sweep, binarize_morphology, eig_csv, eig_sweep, eoc_csv, eoc_from_config,
    std_dev, summarize_mesh_sweep, sweep_csv,
};
use chmorph::{Error, PhaseState, Result, Simulation, Species};

#[derive(Debug, Parser)]
#[command(name = "chmorph", version, about = "Ternary Cahn-Hilliard morphology solver")]
struct Cli {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the initial perturbation, overriding `model.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Solve the two species one after the other for bit-reproducible output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-step the model, writing snapshots and per-step statistics. A
    /// `bench.mode` other than "none" runs that study instead.
    Run,
    /// Iteration counts and runtimes over a list of meshes.
    BenchMesh,
    /// Iteration counts over interface widths and time steps.
    BenchParams,
    /// Experimental order of convergence in time.
    Eoc,
    /// Dense eigenvalue bounds of the preconditioned Schur complement.
    EigCheck,
    /// Binary polymer mask of a snapshot.
    Binarize {
        /// VTK snapshot holding `phi_p` and `phi_nfa`.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_text(&out.join("config.toml"), &emit_config(&config))?;
    match &cli.command {
        Command::Run => match config.bench.mode {
            BenchMode::None => run(&config, &out),
            BenchMode::Mesh => bench_mesh(&config, &out),
            BenchMode::Params => bench_params(&config, &out),
            BenchMode::Eoc => eoc(&config, &out),
            BenchMode::Eig => eig_check(&config, &out),
        },
        Command::BenchMesh => bench_mesh(&config, &out),
        Command::BenchParams => bench_params(&config, &out),
        Command::Eoc => eoc(&config, &out),
        Command::EigCheck => eig_check(&config, &out),
        Command::Binarize { input } => binarize(&config, input, &out),
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.model.seed = seed;
    }
    if cli.deterministic {
        config.solver.deterministic = true;
    }
    Ok(config)
}

fn snapshot_fields(config: &RunConfig, state: &PhaseState) -> Result<(Vec<f64>, Vec<u8>)> {
    let rule = config.output.binarize_rule;
    let mask = binarize_morphology(&state.phi_p, &state.phi_nfa, rule, config.output.binarize_threshold)?;
    Ok((state.solvent(), mask))
}

fn run(config: &RunConfig, out: &Path) -> Result<()> {
    let mesh = config.mesh.build()?;
    let dim = mesh.dim();
    let sim = Simulation::new(mesh, config.model.clone(), config.solver.clone())?;
    let mut times = config.output.snapshot_times.clone();
    if times.is_empty() {
        times = vec![0.0, config.model.final_time];
    }
    let initial = sim.initial_state();
    let std0 = std_dev(&initial.phi_p);
    let total = chmorph::simulation::num_steps(config.model.final_time, config.model.tau);
    let every = (total / 20).max(1);
    let mut reports = Vec::with_capacity(total);

    let on_snapshot = |step: usize, t: f64, state: &PhaseState| -> Result<()> {
        let (solvent, mask) = snapshot_fields(config, state)?;
        if config.output.write_vtk {
            let mask_f: Vec<f64> = mask.iter().map(|&m| f64::from(m)).collect();
            let fields: [(&str, &[f64]); 6] = [
                ("phi_p", &state.phi_p),
                ("phi_nfa", &state.phi_nfa),
                ("phi_s", &solvent),
                ("mu_p", &state.mu_p),
                ("mu_nfa", &state.mu_nfa),
                ("mask", &mask_f),
            ];
            io::write_fields_vtk(sim.mesh(), &fields, &io::snapshot_path(out, "state", step))?;
        }
        if dim == 2 {
            io::write_pgm(sim.mesh(), &mask, &out.join(format!("mask_{step:06}.pgm")))?;
        }
        println!("snapshot step {step} t {t:.6} std(phi_p) {:.6e}", std_dev(&state.phi_p));
        Ok(())
    };
    let on_step = |r: chmorph::StepReport| {
        if r.step % every == 0 || r.step == total {
            eprintln!(
                "step {}/{} t {:.6} iterations {}/{} {:.3}s",
                r.step, total, r.time, r.reports[0].iterations, r.reports[1].iterations, r.seconds
            );
        }
        reports.push(r);
    };
    let result = sim.run_observed(initial, &times, on_snapshot, on_step);
    write_stats(&reports, &out.join("stats.csv"))?;
    let state = result?;
    let worst = reports.iter().map(|r| r.worst_iterations()).max().unwrap_or(0);
    println!(
        "completed {} steps to t {:.6}; worst MINRES iterations {worst}; std(phi_p) {:.6e} -> {:.6e}",
        state.step,
        state.t,
        std0,
        std_dev(state.phi(Species::Polymer))
    );
    Ok(())
}

fn bench_mesh(config: &RunConfig, out: &Path) -> Result<()> {
    let runs = bench_mesh_sweep(config);
    let csv = sweep_csv(&runs);
    write_text(&out.join("bench_mesh.csv"), &csv)?;
    print!("{csv}");
    let summary = summarize_mesh_sweep(&runs);
    println!(
        "worst iterations {}, spread {}, time slope {}",
        summary.worst_iterations,
        summary.spread,
        summary.time_slope.map_or("n/a".to_string(), |s| format!("{s:.3}"))
    );
    Ok(())
}

fn bench_params(config: &RunConfig, out: &Path) -> Result<()> {
    let sweep = bench_param_sweep(config);
    write_text(&out.join("bench_eps.csv"), &sweep_csv(&sweep.eps_runs))?;
    write_text(&out.join("bench_tau.csv"), &sweep_csv(&sweep.tau_runs))?;
    print!("{}", sweep_csv(sweep.runs()));
    Ok(())
}

fn eoc(config: &RunConfig, out: &Path) -> Result<()> {
    let result = eoc_from_config(config)?;
    let csv = eoc_csv(&result);
    write_text(&out.join("eoc.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn eig_check(config: &RunConfig, out: &Path) -> Result<()> {
    let entries = eig_sweep(config)?;
    let csv = eig_csv(&entries);
    write_text(&out.join("eig.csv"), &csv)?;
    print!("{csv}");
    let bad = entries.iter().filter(|e| !e.within(0.5 - 1e-10, 1.0 + 1e-10)).count();
    if bad > 0 {
        return Err(Error::Check(format!("{bad} of {} cases leave [0.5, 1]", entries.len())));
    }
    println!("all {} cases within [0.5, 1]", entries.len());
    Ok(())
}

fn binarize(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let data = read_vtk(input)?;
    let field = |name: &str| {
        data.field(name).ok_or_else(|| Error::Parse {
            path: input.to_path_buf(),
            message: format!("missing field {name}"),
        })
    };
    let (phi_p, phi_nfa) = (field("phi_p")?, field("phi_nfa")?);
    let mask = binarize_morphology(
        phi_p,
        phi_nfa,
        config.output.binarize_rule,
        config.output.binarize_threshold,
    )?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    let mask_f: Vec<f64> = mask.iter().map(|&m| f64::from(m)).collect();
    let vtk = data.to_vtk_string(&[("mask", &mask_f)], "chmorph mask")?;
    write_text(&out.join(format!("{stem}_mask.vtk")), &vtk)?;
    if let Some((nx, ny)) = data.grid_shape() {
        write_text(&out.join(format!("{stem}_mask.pgm")), &io::pgm_from_grid(nx, ny, &mask)?)?;
    }
    let ones = mask.iter().filter(|&&m| m == 1).count();
    println!("{ones} of {} nodes in the polymer phase", mask.len());
    Ok(())
}
