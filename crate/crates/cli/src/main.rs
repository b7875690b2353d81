use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use topopt_core::experiments::{certify_at, projected_moments, stress_study, sweep_n};
use topopt_core::optimize::{run_bifidelity, run_single_resolution, OptOutcome, PhaseTimings};
use topopt_core::output::{write_certificate_csv, write_density_pgm, write_history_csv, write_stress_csv, write_sweep_csv};
use topopt_core::sampling::sparse_grid;
use topopt_core::{parse_config, Problem, RunConfig};

const VERSION: &str = env!("TOPOPT_VERSION");

#[derive(Parser)]
#[command(name = "topopt", version = VERSION, about = "Bi-fidelity robust topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization.
    Run {
        #[command(flatten)]
        common: Common,
        /// Solve every sample on the fine mesh instead of the bi-fidelity loop.
        #[arg(long)]
        single: bool,
    },
    /// Lifting errors against n at a fixed design.
    SweepN {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: usize,
    },
    /// Error certificate at a chosen bi-fidelity iterate.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Iterate to certify; 1 is the uniform initial design.
        #[arg(long)]
        iter: usize,
    },
    /// Von-Mises stress moments, bi-fidelity against Monte Carlo.
    StressStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mc_samples: usize,
        /// Monte Carlo batch size; the error is the RMS over batches.
        #[arg(long, default_value_t = 100)]
        mc_batch: usize,
        /// Fine solves of the bi-fidelity estimate.
        #[arg(long, default_value_t = 10)]
        n_hi: usize,
        /// Sparse-grid level of the reference rule.
        #[arg(long, default_value_t = 6)]
        reference_level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate at the uniform initial design instead of an optimized one.
        #[arg(long)]
        uniform: bool,
    },
}

#[derive(Serialize)]
struct RunInfo<'a> {
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    timings: Option<&'a PhaseTimings>,
    iterations: Option<usize>,
    objective: Option<f64>,
}

fn load(common: &Common) -> Result<(Problem, PathBuf)> {
    let cfg = parse_config(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let problem = cfg.build()?;
    Ok((problem, out))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_info(dir: &Path, command: &str, problem: &Problem, outcome: Option<&OptOutcome>) -> Result<()> {
    let info = RunInfo {
        version: VERSION,
        command,
        config: &problem.config,
        timings: outcome.map(|o| &o.timings),
        iterations: outcome.map(|o| o.state.iteration),
        objective: outcome.map(|o| o.state.q),
    };
    serde_json::to_writer_pretty(create(dir, "run_info.json")?, &info)?;
    Ok(())
}

fn optimize(problem: &Problem, single: bool) -> Result<OptOutcome> {
    let cfg = &problem.config;
    let settings = cfg.opt_settings();
    Ok(if single {
        run_single_resolution(&problem.fine, &problem.samples, &settings)?
    } else {
        run_bifidelity(&problem.fine, &problem.coarse, &problem.samples, &settings, &cfg.bifi_settings())?
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { common, single } => {
            let (problem, out) = load(&common)?;
            let outcome = optimize(&problem, single)?;
            let (mean, _) = projected_moments(&problem.fine, &outcome.state.rho, problem.config.beta, &problem.samples)?;
            write_density_pgm(create(&out, "density.pgm")?, &problem.fine.mesh, &mean)?;
            write_history_csv(create(&out, "history.csv")?, &outcome.state.history)?;
            if !outcome.certificates.is_empty() {
                write_certificate_csv(create(&out, "certificates.csv")?, &outcome.certificates)?;
            }
            write_info(&out, "run", &problem, Some(&outcome))?;
            log::info!("Q = {:.6e} after {} iterations", outcome.state.q, outcome.state.iteration);
        }
        Command::SweepN { common, n_max } => {
            let (problem, out) = load(&common)?;
            let rho = problem.fine.initial_design(problem.config.vbar);
            let rows = sweep_n(&problem, &rho, n_max)?;
            write_sweep_csv(create(&out, "sweep_n.csv")?, &rows)?;
            write_info(&out, "sweep-n", &problem, None)?;
        }
        Command::Certify { common, iter } => {
            let (problem, out) = load(&common)?;
            let (_, cert) = certify_at(&problem, iter)?;
            write_certificate_csv(create(&out, "certificates.csv")?, &[(iter, cert)])?;
            write_info(&out, "certify", &problem, None)?;
        }
        Command::StressStudy { common, mc_samples, mc_batch, n_hi, reference_level, seed, uniform } => {
            let (problem, out) = load(&common)?;
            let outcome = if uniform { None } else { Some(optimize(&problem, false)?) };
            let rho = match &outcome {
                Some(o) => o.state.rho.clone(),
                None => problem.fine.initial_design(problem.config.vbar),
            };
            let reference = sparse_grid(problem.config.parameter_dim(), reference_level)?;
            let study = stress_study(&problem, &rho, &reference, n_hi, mc_samples, mc_batch, seed)?;
            write_stress_csv(create(&out, "stress.csv")?, &study.rows)?;
            write_info(&out, "stress-study", &problem, outcome.as_ref())?;
            log::info!(
                "reference mean {:.6e}, std {:.6e} over {} points",
                study.reference_mean,
                study.reference_std,
                study.reference_points
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<topopt_core::Error>()) {
        Some(e) if e.is_config() => 2,
        Some(topopt_core::Error::Io(_)) | None => 1,
        Some(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
