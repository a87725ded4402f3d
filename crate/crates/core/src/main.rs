use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ergochron::runner::{self, config::parse_seed, RunConfig, Target};
use ergochron::Result;

#[derive(Parser)]
#[command(name = "ergochron", version, about = "Loschmidt-echo ergodization time for DGPE lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (key = value lines) overlaid on the defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, decimal or 0x-prefixed hex
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Worker threads; overrides ERGOCHRON_WORKERS and the config
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an echo ensemble (plus the direct pipeline unless disabled) and analyze it
    Echo(Common),
    /// Run only the direct Lyapunov pipeline
    Lyapunov(Common),
    /// Recompute curves, fits and summary from the CSVs in a run directory
    Analyze {
        /// Run directory (same as --out)
        dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the data behind table1, fig2, fig3 or fig4
    Reproduce {
        target: String,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(path) => RunConfig::default().overlay_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        c.master_seed = seed;
    }
    if let Some(out) = &common.out {
        c.output_dir = out.clone();
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Echo(common) => {
            let c = load(&common)?;
            let workers = runner::resolve_workers(common.workers, c.workers)?;
            let m = runner::run_ensemble(&c, workers)?;
            println!("wrote {} files to {} in {:.1}s", m.files.len(), c.output_dir.display(), m.elapsed_seconds);
        }
        Command::Lyapunov(common) => {
            let c = load(&common)?;
            let workers = runner::resolve_workers(common.workers, c.workers)?;
            let (_, s) = runner::run_lyapunov(&c, workers)?;
            println!(
                "lambda_max={:.5}+-{:.5} var_dlambda={:.5}+-{:.5} tau_erg={:.4}+-{:.4}",
                s.lambda_max, s.lambda_max_stderr, s.var_dlambda, s.var_dlambda_stderr, s.tau_erg_eq4, s.tau_erg_eq4_stderr
            );
        }
        Command::Analyze { dir, out } => {
            let dir = out.or(dir).unwrap_or_else(|| PathBuf::from("out"));
            let a = runner::analyze_dir(&dir)?;
            println!(
                "G slope={:.4} W slope={:.4} verdict={}",
                a.g_fit.slope,
                a.w_fit.slope,
                a.report.verdict.name()
            );
        }
        Command::Reproduce { target, common } => {
            let target = Target::parse(&target)?;
            let workers = runner::resolve_workers(common.workers, 0)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            runner::reproduce(target, &out, common.config.as_deref(), common.seed, workers)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
