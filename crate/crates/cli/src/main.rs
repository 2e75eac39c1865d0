use std::fs::File;
use std::io::BufWriter;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyadic_core::dynamics::write_trajectory_csv;
use dyadic_core::harness::data::generate_dataset;
use dyadic_core::harness::experiments::{run_check, run_relax, run_sweep};
use dyadic_core::harness::train::run_training;
use dyadic_core::harness::{ExperimentConfig, GradientMethod, Overrides};
use dyadic_core::{Error, Precision};

#[derive(Parser, Debug)]
#[command(
    name = "dyadic",
    version,
    about = "Gradient relaxation experiments",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    kmax: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// bp, dyadic, mean_stress, two_l, split or finite_diff.
    #[arg(long, global = true)]
    method: Option<GradientMethod>,
    /// f32 or f64.
    #[arg(long, global = true)]
    precision: Option<Precision>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 if any relaxation hits the iteration cap.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare the configured method against BP on random instances (check.csv).
    Check {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Repeat the check over several step sizes (sweep.csv).
    Sweep {
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Dump one relaxation trajectory (trajectory.csv).
    Relax,
    /// Train on the configured dataset (train.csv).
    Train,
    /// Write the configured dataset (data.csv).
    GenData,
}

enum Failure {
    Config(String),
    Numeric(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) => Failure::Numeric(e.to_string()),
            Error::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        eta: common.eta,
        k_max: common.kmax,
        tol: common.tol,
        seed: common.seed,
        method: common.method,
        precision: common.precision,
        output: common.out.clone(),
    });
    cfg.strict |= common.strict;
    cfg.validate()?;
    cfg.prepare_output()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", path.display())))?;
    Ok((path, BufWriter::new(file)))
}

fn strict_check(cfg: &ExperimentConfig, nonconverged: usize) -> Result<(), Failure> {
    if nonconverged > 0 {
        let msg = format!("{nonconverged} relaxation(s) reached k_max = {}", cfg.relax.k_max);
        if cfg.strict {
            return Err(Failure::NotConverged(msg));
        }
        log::warn!("{msg}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common)?;
    let provenance = cfg.provenance();
    match cli.command {
        Command::Check { trials } => {
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let provenance = cfg.provenance();
            let report = run_check(&cfg)?;
            let (path, mut w) = create(&cfg.output, "check.csv")?;
            report.write_csv(&mut w, &provenance)?;
            w.flush()?;
            let worst = report
                .rows
                .iter()
                .filter_map(|r| r.report.relative_error)
                .fold(0.0, f64::max);
            println!(
                "{} trials, method {}, max rel_err {worst:e} -> {}",
                report.rows.len(),
                cfg.method,
                path.display()
            );
            strict_check(&cfg, report.nonconverged())
        }
        Command::Sweep { etas, trials } => {
            if let Some(e) = etas {
                cfg.etas = e;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            let provenance = cfg.provenance();
            let report = run_sweep(&cfg, &cfg.etas)?;
            let (path, mut w) = create(&cfg.output, "sweep.csv")?;
            report.write_csv(&mut w, &provenance)?;
            w.flush()?;
            for row in &report.rows {
                println!(
                    "eta {}: mean iterations {}",
                    row.eta,
                    row.mean_iterations().map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
                );
            }
            println!("-> {}", path.display());
            strict_check(&cfg, report.nonconverged())
        }
        Command::Relax => {
            let trace = run_relax(&cfg)?;
            let (path, mut w) = create(&cfg.output, "trajectory.csv")?;
            write_trajectory_csv(&mut w, &trace, &provenance)?;
            w.flush()?;
            println!(
                "{} iterations, converged {} -> {}",
                trace.iterations_used,
                trace.converged,
                path.display()
            );
            strict_check(&cfg, usize::from(!trace.converged))
        }
        Command::Train => {
            let log = run_training(&cfg)?;
            let (path, mut w) = create(&cfg.output, "train.csv")?;
            log.write_csv(&mut w, &provenance)?;
            w.flush()?;
            if let Some(msg) = &log.diverged {
                return Err(Failure::Numeric(format!(
                    "training diverged ({msg}); partial log in {}",
                    path.display()
                )));
            }
            let last = log.final_row();
            println!(
                "epoch {}: train loss {:.6}, train acc {:.4}, test acc {:.4} -> {}",
                last.epoch,
                last.train_loss,
                last.train_acc,
                last.test_acc,
                path.display()
            );
            strict_check(&cfg, log.total_nonconverged())
        }
        Command::GenData => {
            let data = generate_dataset(&cfg.dataset, cfg.seed)?;
            let (path, mut w) = create(&cfg.output, "data.csv")?;
            data.write_csv(&mut w, &provenance)?;
            w.flush()?;
            println!("{} samples -> {}", data.len(), path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("not converged: {msg}");
            ExitCode::from(3)
        }
    }
}
