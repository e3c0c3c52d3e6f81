//! Command-line front end. Subcommands cover the full experiment loop:
//! `run` executes configured methods and emits traces, `mc-cov` estimates
//! the error covariance, `featurize` caches engineered features, and
//! `grid-sgd` sweeps the baseline schedule grid.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 data errors,
//! 4 numerical failures, 1 anything else.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ksgd::baselines::default_schedule_grid;
use ksgd::error::ErrorCategory;
use ksgd::{KsgdError, Result};
use ksgd_bench::config::{RawConfig, ResolvedConfig};
use ksgd_bench::featurize::featurize;
use ksgd_bench::grid::{best_entry, sgd_grid_search};
use ksgd_bench::mc_cov::monte_carlo_covariance;
use ksgd_bench::output::{write_manifest, Manifest};
use ksgd_bench::run_and_emit;

// Progress lines are best effort: a closed stdout (e.g. piped into `head`)
// must not abort a run whose real outputs are files.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "ksgd-bench",
    about = "Streaming least-squares solver benchmarks",
    version
)]
struct Cli {
    /// Flat TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config `out` key (output directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Override the config `eps` key (stop once tr(M) falls to this).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Override the config `max_obs` key (observation budget).
    #[arg(long = "max-obs", global = true, value_name = "INT")]
    max_obs: Option<u64>,
    /// Override any config key, e.g. --set gamma2=0.5 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods; write traces, summary, and manifest.
    Run,
    /// Monte-Carlo error covariance over a shared feature stream.
    McCov {
        /// Number of noise-independent replications.
        #[arg(long)]
        replications: Option<u64>,
    },
    /// Cache wavelet or one-hot features from a CSV file.
    Featurize,
    /// Sweep the default SGD schedule grid and report the best schedule.
    GridSgd,
}

fn build_config(cli: &Cli) -> Result<ResolvedConfig> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    for pair in &cli.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            KsgdError::Schema(format!("--set expects KEY=VALUE, got {pair:?}"))
        })?;
        raw.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        raw.set("out", out)?;
    }
    if let Some(eps) = cli.eps {
        raw.set("eps", &eps.to_string())?;
    }
    if let Some(max_obs) = cli.max_obs {
        raw.set("max_obs", &max_obs.to_string())?;
    }
    raw.resolve()
}

fn cmd_run(cfg: &ResolvedConfig) -> Result<()> {
    let output = run_and_emit(cfg)?;
    for row in &output.summary {
        let objective = row
            .final_objective
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".into());
        say!(
            "{} r{}: objective {} adp {} converged {}{}",
            row.method,
            row.replication,
            objective,
            row.adp,
            row.converged,
            if row.note.is_empty() {
                String::new()
            } else {
                format!(" [{}]", row.note)
            }
        );
    }
    say!("wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_mc_cov(cfg: &ResolvedConfig, replications: Option<u64>) -> Result<()> {
    let replications = replications.unwrap_or(cfg.replications);
    let snapshots = monte_carlo_covariance(cfg, replications)?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("mc_cov.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "k,trace_M,trace_Mhat")?;
    for snap in &snapshots {
        writeln!(out, "{},{},{}", snap.k, snap.m.trace(), snap.mhat.trace())?;
    }
    out.flush()?;
    let manifest = Manifest::new(
        &cfg.echo,
        &cfg.hash,
        vec!["mc_cov.csv".into(), "manifest.json".into()],
    );
    write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    if let Some(last) = snapshots.last() {
        say!(
            "k = {}: tr(M) = {}, tr(Mhat) = {} over {} replications",
            last.k,
            last.m.trace(),
            last.mhat.trace(),
            replications
        );
    }
    say!("wrote {}", path.display());
    Ok(())
}

fn cmd_featurize(cfg: &ResolvedConfig) -> Result<()> {
    let report = featurize(cfg)?;
    let manifest = Manifest::new(
        &cfg.echo,
        &cfg.hash,
        vec!["features.csv".into(), "manifest.json".into()],
    );
    write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    say!(
        "wrote {} ({} rows, {} skipped)",
        report.out_path.display(),
        report.rows,
        report.skipped
    );
    Ok(())
}

fn cmd_grid_sgd(cfg: &ResolvedConfig) -> Result<()> {
    let grid = default_schedule_grid();
    let entries = sgd_grid_search(cfg, &grid);
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("grid_sgd.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "p,c1,c2,c3,final_objective,adp,wall_seconds,note")?;
    for e in &entries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.schedule.p,
            e.schedule.c1,
            e.schedule.c2,
            e.schedule.c3,
            e.final_objective.map(|v| v.to_string()).unwrap_or_default(),
            e.adp,
            e.wall_seconds,
            e.note.replace(',', ";"),
        )?;
    }
    out.flush()?;
    let manifest = Manifest::new(
        &cfg.echo,
        &cfg.hash,
        vec!["grid_sgd.csv".into(), "manifest.json".into()],
    );
    write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    match best_entry(&entries) {
        Some(i) => {
            let e = &entries[i];
            say!(
                "best schedule: p = {}, c1 = {}, c2 = {}, c3 = {} with objective {}",
                e.schedule.p,
                e.schedule.c1,
                e.schedule.c2,
                e.schedule.c3,
                e.final_objective.unwrap()
            );
        }
        None => say!("no schedule in the grid finished"),
    }
    say!("wrote {}", path.display());
    Ok(())
}

fn run_cli() -> Result<()> {
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    match &cli.command {
        Command::Run => cmd_run(&cfg),
        Command::McCov { replications } => cmd_mc_cov(&cfg, *replications),
        Command::Featurize => cmd_featurize(&cfg),
        Command::GridSgd => cmd_grid_sgd(&cfg),
    }
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let _ = writeln!(std::io::stderr(), "error: {err}");
            ExitCode::from(match err.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            })
        }
    }
}
