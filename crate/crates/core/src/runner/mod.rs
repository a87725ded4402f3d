//! Configuration, seeding, parallel ensembles, artifacts and reproduction
//! presets.

pub mod config;
pub mod files;
pub mod seed;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::analysis::{
    aggregate, fit_growth_bootstrap, variance_ratio_curve, Curve, EnsembleStats, ErgodizationReport, FitResult,
    VarianceRatio,
};
use crate::dynamics::Hopping;
use crate::echo::{run_echo_with, EchoProtocol, EchoRecord};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, NeighborTable};
use crate::lyapunov::{stretching_rates_with, LyapunovSummary, StretchSeries};

pub use config::{AnalysisConfig, LyapunovConfig, RunConfig};
pub use files::RunManifest;
pub use seed::derive_seed;

use files::*;
use seed::{BOOTSTRAP_STREAM, LYAPUNOV_STREAM, SWEEP_STREAM};

/// Environment variable supplying the default worker count.
pub const WORKERS_ENV: &str = "ERGOCHRON_WORKERS";

/// Worker count from flag, environment and config, in that order; 0 means
/// the machine default.
pub fn resolve_workers(flag: Option<usize>, config: usize) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{WORKERS_ENV}={v} is not a worker count"))),
        _ => Ok(config),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))
}

/// Realization seeds of a run.
pub fn realization_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.ensemble_size as u64)
        .map(|i| derive_seed(config.master_seed, i))
        .collect()
}

pub fn lyapunov_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.lyapunov.chains as u64)
        .map(|c| derive_seed(config.master_seed, LYAPUNOV_STREAM + c))
        .collect()
}

/// Runs all echo realizations; results are in index order whatever the
/// scheduling.
pub fn run_realizations(config: &RunConfig, workers: usize) -> Result<Vec<EchoRecord>> {
    config.validate()?;
    let spec = &config.lattice;
    let table = NeighborTable::build(spec);
    let hopping = Hopping::shared(spec);
    let seeds = realization_seeds(config);
    let results: Vec<Result<EchoRecord>> = pool(workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let protocol = EchoProtocol {
                    seed,
                    ..config.protocol.clone()
                };
                run_echo_with(spec, &table, &hopping, config.params, &protocol)
            })
            .collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::RealizationFailed {
                index,
                seed: seeds[index],
                message: e.to_string(),
            })
        })
        .collect()
}

/// Direct-pipeline chains and their pooled summary.
pub fn run_direct(config: &RunConfig, workers: usize) -> Result<(Vec<StretchSeries>, LyapunovSummary)> {
    config.validate()?;
    let spec = &config.lattice;
    let hopping = Hopping::shared(spec);
    let settings = config.lyapunov_settings();
    let seeds = lyapunov_seeds(config);
    let chains: Vec<Result<StretchSeries>> = pool(workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| stretching_rates_with(spec, &hopping, config.params, &settings, seed))
            .collect()
    });
    let chains: Vec<StretchSeries> = chains.into_iter().collect::<Result<_>>()?;
    let summary = LyapunovSummary::from_chains(&chains, config.lyapunov.max_lag)?;
    Ok((chains, summary))
}

/// Everything derived from an echo ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoAnalysis {
    pub stats: EnsembleStats,
    pub g_fit: FitResult,
    pub w_fit: FitResult,
    pub ratio: VarianceRatio,
    pub report: ErgodizationReport,
}

/// Ensemble statistics, bootstrap fits, the ratio test and the report.
pub fn analyze_records(
    records: &[EchoRecord],
    n_nn: usize,
    analysis: &AnalysisConfig,
    master_seed: u64,
    direct: Option<&LyapunovSummary>,
) -> Result<EchoAnalysis> {
    let stats = aggregate(records)?;
    let g_fit = fit_growth_bootstrap(
        records,
        &stats,
        Curve::G,
        &analysis.window,
        analysis.bootstrap,
        derive_seed(master_seed, BOOTSTRAP_STREAM),
    )?;
    let w_fit = fit_growth_bootstrap(
        records,
        &stats,
        Curve::W,
        &analysis.window,
        analysis.bootstrap,
        derive_seed(master_seed, BOOTSTRAP_STREAM + 1),
    )?;
    let ratio = variance_ratio_curve(&stats, (g_fit.lo, g_fit.hi), w_fit.slope - g_fit.slope, &analysis.verdict)?;
    let report = ErgodizationReport::assemble(n_nn, &g_fit, &w_fit, &ratio, direct)?;
    Ok(EchoAnalysis {
        stats,
        g_fit,
        w_fit,
        ratio,
        report,
    })
}

fn write_analysis(dir: &Path, label: &str, a: &EchoAnalysis) -> Result<()> {
    write_gw_curves(&dir.join(GW_CURVES), &a.stats)?;
    write_fits(&dir.join(FITS), &[("G", &a.g_fit), ("W", &a.w_fit)])?;
    write_summary(&dir.join(SUMMARY), vec![summary_row(label, &a.report)])
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn finish_manifest(
    dir: &Path,
    config: &RunConfig,
    workers: usize,
    started: (u64, Instant),
    names: &[&str],
    with_seeds: (bool, bool),
) -> Result<RunManifest> {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let manifest = RunManifest {
        config: config.serialize(),
        master_seed: config.master_seed,
        seeds: if with_seeds.0 { realization_seeds(config) } else { vec![] },
        lyapunov_seeds: if with_seeds.1 { lyapunov_seeds(config) } else { vec![] },
        workers,
        started_unix: started.0,
        elapsed_seconds: started.1.elapsed().as_secs_f64(),
        files: RunManifest::hash_files(dir, &names)?,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

fn write_direct(dir: &Path, config: &RunConfig, chains: &[StretchSeries], summary: &LyapunovSummary) -> Result<()> {
    write_phi(&dir.join(PHI), &summary.phi)?;
    let burn = chains.iter().map(|c| c.burn_in_dropped).max().unwrap_or(0);
    write_stretch_summary(&dir.join(STRETCH_SUMMARY), summary, config.lyapunov.chains, burn)
}

/// Full run: echo ensemble, optional direct pipeline, analysis, artifacts and
/// manifest in `config.output_dir`.
pub fn run_ensemble(config: &RunConfig, workers: usize) -> Result<RunManifest> {
    let started = (unix_now(), Instant::now());
    config.validate()?;
    let dir = config.output_dir.clone();
    write_text(&dir.join(RUN_CFG), &config.serialize())?;
    let records = run_realizations(config, workers)?;
    write_echo_series(&dir.join(ECHO_SERIES), &records)?;
    let mut names = vec![RUN_CFG, ECHO_SERIES, GW_CURVES, FITS, SUMMARY];
    let direct = if config.lyapunov.enabled {
        let (chains, summary) = run_direct(config, workers)?;
        write_direct(&dir, config, &chains, &summary)?;
        names.extend([PHI, STRETCH_SUMMARY]);
        // reread so a later `analyze` sees exactly the same inputs
        Some(read_lyapunov_summary(&dir.join(PHI), &dir.join(STRETCH_SUMMARY))?)
    } else {
        None
    };
    let analysis = analyze_records(
        &records,
        config.lattice.coordination(),
        &config.analysis,
        config.master_seed,
        direct.as_ref(),
    )?;
    write_analysis(&dir, &config.lattice.label(), &analysis)?;
    finish_manifest(&dir, config, workers, started, &names, (true, config.lyapunov.enabled))
}

/// Direct pipeline only.
pub fn run_lyapunov(config: &RunConfig, workers: usize) -> Result<(RunManifest, LyapunovSummary)> {
    let started = (unix_now(), Instant::now());
    config.validate()?;
    let dir = config.output_dir.clone();
    write_text(&dir.join(RUN_CFG), &config.serialize())?;
    let (chains, summary) = run_direct(config, workers)?;
    write_direct(&dir, config, &chains, &summary)?;
    let manifest = finish_manifest(&dir, config, workers, started, &[RUN_CFG, PHI, STRETCH_SUMMARY], (false, true))?;
    Ok((manifest, summary))
}

/// Recomputes curves, fits and summary from the CSVs stored in `dir`.
pub fn analyze_dir(dir: &Path) -> Result<EchoAnalysis> {
    let started = (unix_now(), Instant::now());
    let config = RunConfig::load(&dir.join(RUN_CFG))?;
    let records = read_echo_series(&dir.join(ECHO_SERIES))?;
    let phi = dir.join(PHI);
    let stretch = dir.join(STRETCH_SUMMARY);
    let direct = if phi.exists() && stretch.exists() {
        Some(read_lyapunov_summary(&phi, &stretch)?)
    } else {
        None
    };
    let analysis = analyze_records(
        &records,
        config.lattice.coordination(),
        &config.analysis,
        config.master_seed,
        direct.as_ref(),
    )?;
    write_analysis(dir, &config.lattice.label(), &analysis)?;
    let mut names = vec![RUN_CFG, ECHO_SERIES, GW_CURVES, FITS, SUMMARY];
    if direct.is_some() {
        names.extend([PHI, STRETCH_SUMMARY]);
    }
    let config = RunConfig {
        output_dir: dir.to_path_buf(),
        ..config
    };
    finish_manifest(dir, &config, 0, started, &names, (true, direct.is_some()))?;
    Ok(analysis)
}

/// The three reference lattices with their subdirectory names.
pub fn reference_lattices() -> Vec<(&'static str, LatticeSpec)> {
    vec![
        ("1d", LatticeSpec::chain_100()),
        ("2d", LatticeSpec::square_10x10()),
        ("3d", LatticeSpec::cube_4x4x4()),
    ]
}

/// Lattice sizes of the fluctuation-variance sweep.
pub fn sweep_lattices() -> Vec<LatticeSpec> {
    let p = |e: &[usize]| LatticeSpec::periodic(e).expect("valid sweep lattice");
    vec![
        p(&[25]),
        p(&[50]),
        p(&[100]),
        p(&[200]),
        p(&[5, 5]),
        p(&[7, 7]),
        p(&[10, 10]),
        p(&[3, 3, 3]),
        p(&[4, 4, 4]),
    ]
}

/// Reproduction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Table1,
    Fig2,
    Fig3,
    Fig4,
}

impl Target {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Target::Table1),
            "fig2" => Ok(Target::Fig2),
            "fig3" => Ok(Target::Fig3),
            "fig4" => Ok(Target::Fig4),
            other => Err(Error::InvalidParameter(format!("unknown target `{other}`"))),
        }
    }
}

/// Runs a reproduction target into `out`. `overlay` is applied to every
/// preset config; `seed` replaces the master seed.
pub fn reproduce(target: Target, out: &Path, overlay: Option<&Path>, seed: Option<u64>, workers: usize) -> Result<()> {
    let started = (unix_now(), Instant::now());
    let configure = |lattice: LatticeSpec, sub: PathBuf| -> Result<RunConfig> {
        let mut c = RunConfig::preset(lattice);
        if let Some(path) = overlay {
            c = c.overlay_file(path)?;
        }
        if let Some(s) = seed {
            c.master_seed = s;
        }
        c.output_dir = sub;
        Ok(c)
    };
    match target {
        Target::Table1 | Target::Fig2 | Target::Fig4 => {
            let mut rows = Vec::new();
            let mut names = vec![SUMMARY.to_string()];
            for (sub, lattice) in reference_lattices() {
                let mut c = configure(lattice, out.join(sub))?;
                if target != Target::Table1 {
                    c.lyapunov.enabled = false;
                }
                run_ensemble(&c, workers)?;
                rows.extend(read_summary(&c.output_dir.join(SUMMARY))?.iter().map(|r| summary_row(&r.lattice, &r.report)));
                names.push(format!("{sub}/{MANIFEST}"));
            }
            write_summary(&out.join(SUMMARY), rows)?;
            write_top_manifest(out, seed, started, &names)
        }
        Target::Fig3 => {
            let mut rows = Vec::new();
            for (i, lattice) in sweep_lattices().into_iter().enumerate() {
                let mut c = configure(lattice.clone(), out.to_path_buf())?;
                c.lyapunov.chains = 1;
                let stream = derive_seed(c.master_seed, SWEEP_STREAM + i as u64);
                let hopping: Arc<Hopping> = Hopping::shared(&lattice);
                let settings = c.lyapunov_settings();
                c.validate()?;
                let series = pool(workers)?.install(|| stretching_rates_with(&lattice, &hopping, c.params, &settings, stream))?;
                let s = LyapunovSummary::from_chains(&[series], c.lyapunov.max_lag)?;
                let ext: Vec<String> = lattice.extents().iter().map(|e| e.to_string()).collect();
                let n_nn = lattice.coordination();
                rows.push(vec![
                    lattice.dims().to_string(),
                    ext.join("x"),
                    lattice.num_sites().to_string(),
                    n_nn.to_string(),
                    fmt_f64(s.lambda_max),
                    fmt_f64(s.lambda_max_stderr),
                    fmt_f64(s.var_dlambda),
                    fmt_f64(s.var_dlambda_stderr),
                    fmt_f64(s.var_dlambda.sqrt() / s.lambda_max),
                    fmt_f64(2.0 / n_nn as f64),
                ]);
            }
            write_sweep(&out.join(SWEEP), rows)?;
            write_top_manifest(out, seed, started, &[SWEEP.to_string()])
        }
    }
}

fn write_top_manifest(out: &Path, seed: Option<u64>, started: (u64, Instant), names: &[String]) -> Result<()> {
    let manifest = RunManifest {
        config: String::new(),
        master_seed: seed.unwrap_or(0),
        seeds: vec![],
        lyapunov_seeds: vec![],
        workers: 0,
        started_unix: started.0,
        elapsed_seconds: started.1.elapsed().as_secs_f64(),
        files: RunManifest::hash_files(out, names)?,
    };
    manifest.write(out)
}
