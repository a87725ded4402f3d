//! CSV artifacts and the run manifest.
//!
//! CSVs are comma-separated with one header row, LF line endings and floats
//! in shortest round-trip form, so reading a file back reproduces the values
//! bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::analysis::{EnsembleStats, ErgodizationReport, FitResult, Verdict};
use crate::echo::EchoRecord;
use crate::error::{Error, Result};
use crate::lyapunov::{LyapunovSummary, PhiGrid};

pub const RUN_CFG: &str = "run.cfg";
pub const ECHO_SERIES: &str = "echo_series.csv";
pub const GW_CURVES: &str = "gw_curves.csv";
pub const FITS: &str = "fits.csv";
pub const PHI: &str = "phi.csv";
pub const STRETCH_SUMMARY: &str = "stretch_summary.csv";
pub const SUMMARY: &str = "summary.csv";
pub const SWEEP: &str = "fig3.csv";
pub const MANIFEST: &str = "manifest.txt";

/// Shortest round-trip float.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parsed CSV body: header and rows of fields.
struct Table {
    path: PathBuf,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path, header: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let got = lines.next().unwrap_or("");
        if got != header.join(",") {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header `{}`, got `{got}`", header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.len() != header.len() {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("expected {} fields, got {}", header.len(), fields.len()),
                });
            }
            rows.push(fields);
        }
        Ok(Self {
            path: path.to_path_buf(),
            rows,
        })
    }

    fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let v = &self.rows[row][col];
        v.parse().map_err(|_| self.bad(row, format!("not a number: `{v}`")))
    }

    fn usize(&self, row: usize, col: usize) -> Result<usize> {
        let v = &self.rows[row][col];
        v.parse().map_err(|_| self.bad(row, format!("not a count: `{v}`")))
    }

    fn bad(&self, row: usize, message: String) -> Error {
        Error::Csv {
            path: self.path.clone(),
            line: row + 2,
            message,
        }
    }
}

const ECHO_HEADER: [&str; 3] = ["realization_id", "dt", "log_deviation"];

pub fn write_echo_series(path: &Path, records: &[EchoRecord]) -> Result<()> {
    let mut out = ECHO_HEADER.join(",");
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        for (t, v) in r.dt_grid.iter().zip(&r.log_deviation) {
            let _ = writeln!(out, "{i},{t:?},{v:?}");
        }
    }
    write_text(path, &out)
}

/// Records in file order; seeds and energies are not stored in the series.
pub fn read_echo_series(path: &Path) -> Result<Vec<EchoRecord>> {
    let table = Table::read(path, &ECHO_HEADER)?;
    let mut records: Vec<EchoRecord> = Vec::new();
    for row in 0..table.rows.len() {
        let id = table.usize(row, 0)?;
        let t = table.f64(row, 1)?;
        let v = table.f64(row, 2)?;
        if id == records.len() {
            records.push(EchoRecord {
                dt_grid: Vec::new(),
                log_deviation: Vec::new(),
                realized_energy: f64::NAN,
                seed: id as u64,
            });
        } else if id + 1 != records.len() {
            return Err(table.bad(row, format!("realization ids must be contiguous, got {id}")));
        }
        let r = records.last_mut().expect("pushed above");
        r.dt_grid.push(t);
        r.log_deviation.push(v);
    }
    if records.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "no rows".into(),
        });
    }
    Ok(records)
}

pub fn write_gw_curves(path: &Path, s: &EnsembleStats) -> Result<()> {
    let rows = (0..s.len()).map(|i| {
        vec![
            fmt_f64(s.dt_grid[i]),
            fmt_f64(s.g[i]),
            fmt_f64(s.w[i]),
            fmt_f64(s.sigma_g2[i]),
            fmt_f64(s.g_stderr[i]),
            fmt_f64(s.w_stderr[i]),
            fmt_f64(s.sigma_g2_stderr[i]),
            fmt_f64(s.sigma_g2[i] / (2.0 * s.dt_grid[i])),
            s.count.to_string(),
        ]
    });
    write_text(
        path,
        &csv_text(
            &[
                "dt",
                "G",
                "W",
                "sigma_G2",
                "G_stderr",
                "W_stderr",
                "sigma_G2_stderr",
                "sigma_G2_over_2dt",
                "count",
            ],
            rows,
        ),
    )
}

pub fn write_fits(path: &Path, fits: &[(&str, &FitResult)]) -> Result<()> {
    let rows = fits.iter().map(|(name, f)| {
        vec![
            name.to_string(),
            fmt_f64(f.slope),
            fmt_f64(f.intercept),
            fmt_f64(f.t_lo),
            fmt_f64(f.t_hi),
            fmt_f64(f.residual_rms),
            fmt_f64(f.slope_stderr),
        ]
    });
    write_text(
        path,
        &csv_text(
            &["curve", "slope", "intercept", "t_lo", "t_hi", "residual_rms", "slope_stderr"],
            rows,
        ),
    )
}

const PHI_HEADER: [&str; 3] = ["lag", "phi", "stderr"];

pub fn write_phi(path: &Path, grid: &PhiGrid) -> Result<()> {
    let rows = grid
        .lags()
        .into_iter()
        .zip(grid.phi.iter().zip(&grid.stderr))
        .map(|(t, (p, e))| vec![fmt_f64(t), fmt_f64(*p), fmt_f64(*e)]);
    write_text(path, &csv_text(&PHI_HEADER, rows))
}

const STRETCH_HEADER: [&str; 13] = [
    "lambda_max",
    "lambda_max_stderr",
    "var_dlambda",
    "var_dlambda_stderr",
    "tau_eq4",
    "tau_eq4_stderr",
    "phi_integral",
    "phi_integral_stderr",
    "cutoff_lag",
    "dt_r",
    "samples",
    "chains",
    "burn_in_dropped",
];

pub fn write_stretch_summary(path: &Path, s: &LyapunovSummary, chains: usize, burn_in: usize) -> Result<()> {
    let row = vec![
        fmt_f64(s.lambda_max),
        fmt_f64(s.lambda_max_stderr),
        fmt_f64(s.var_dlambda),
        fmt_f64(s.var_dlambda_stderr),
        fmt_f64(s.tau_erg_eq4),
        fmt_f64(s.tau_erg_eq4_stderr),
        fmt_f64(s.phi_integral),
        fmt_f64(s.phi_integral_stderr),
        s.cutoff_lag.to_string(),
        fmt_f64(s.phi.dt_r),
        s.samples.to_string(),
        chains.to_string(),
        burn_in.to_string(),
    ];
    write_text(path, &csv_text(&STRETCH_HEADER, [row]))
}

/// Rebuilds the direct-pipeline summary from `phi.csv` and
/// `stretch_summary.csv`.
pub fn read_lyapunov_summary(phi_path: &Path, summary_path: &Path) -> Result<LyapunovSummary> {
    let s = Table::read(summary_path, &STRETCH_HEADER)?;
    if s.rows.len() != 1 {
        return Err(Error::Csv {
            path: summary_path.to_path_buf(),
            line: 2,
            message: format!("expected one row, got {}", s.rows.len()),
        });
    }
    let p = Table::read(phi_path, &PHI_HEADER)?;
    let dt_r = s.f64(0, 9)?;
    let samples = s.usize(0, 10)?;
    let mut phi = Vec::with_capacity(p.rows.len());
    let mut stderr = Vec::with_capacity(p.rows.len());
    for row in 0..p.rows.len() {
        phi.push(p.f64(row, 1)?);
        stderr.push(p.f64(row, 2)?);
    }
    Ok(LyapunovSummary {
        lambda_max: s.f64(0, 0)?,
        lambda_max_stderr: s.f64(0, 1)?,
        var_dlambda: s.f64(0, 2)?,
        var_dlambda_stderr: s.f64(0, 3)?,
        tau_erg_eq4: s.f64(0, 4)?,
        tau_erg_eq4_stderr: s.f64(0, 5)?,
        phi_integral: s.f64(0, 6)?,
        phi_integral_stderr: s.f64(0, 7)?,
        cutoff_lag: s.usize(0, 8)?,
        samples,
        phi: PhiGrid {
            dt_r,
            phi,
            stderr,
            samples,
        },
    })
}

pub const SUMMARY_HEADER: [&str; 19] = [
    "lattice",
    "N_nn",
    "lambda_max",
    "Lambda",
    "var_direct",
    "var_eq10",
    "tau_eq4",
    "tau_eq9",
    "tau_eq11",
    "verdict",
    "lambda_max_stderr",
    "Lambda_stderr",
    "lambda_max_direct",
    "lambda_max_direct_stderr",
    "var_direct_stderr",
    "tau_eq4_stderr",
    "tau_eq9_stderr",
    "plateau",
    "plateau_expected",
];

pub fn summary_row(label: &str, r: &ErgodizationReport) -> Vec<String> {
    vec![
        label.to_string(),
        r.n_nn.to_string(),
        fmt_f64(r.lambda_max_echo),
        fmt_f64(r.lambda_upper),
        fmt_f64(r.var_dlambda_direct),
        fmt_f64(r.var_dlambda_empirical),
        fmt_f64(r.tau_erg_eq4),
        fmt_f64(r.tau_erg_eq9),
        fmt_f64(r.tau_erg_eq11),
        r.verdict.name().to_string(),
        fmt_f64(r.lambda_max_echo_stderr),
        fmt_f64(r.lambda_upper_stderr),
        fmt_f64(r.lambda_max_direct),
        fmt_f64(r.lambda_max_direct_stderr),
        fmt_f64(r.var_dlambda_direct_stderr),
        fmt_f64(r.tau_erg_eq4_stderr),
        fmt_f64(r.tau_erg_eq9_stderr),
        fmt_f64(r.plateau_level),
        fmt_f64(r.plateau_expected),
    ]
}

pub fn write_summary(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    write_text(path, &csv_text(&SUMMARY_HEADER, rows))
}

/// One summary row, keyed by lattice label.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub lattice: String,
    pub report: ErgodizationReport,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let t = Table::read(path, &SUMMARY_HEADER)?;
    (0..t.rows.len())
        .map(|i| {
            let verdict = Verdict::parse(&t.rows[i][9]).map_err(|e| t.bad(i, e.to_string()))?;
            Ok(SummaryRow {
                lattice: t.rows[i][0].clone(),
                report: ErgodizationReport {
                    n_nn: t.usize(i, 1)?,
                    lambda_max_echo: t.f64(i, 2)?,
                    lambda_upper: t.f64(i, 3)?,
                    var_dlambda_direct: t.f64(i, 4)?,
                    var_dlambda_empirical: t.f64(i, 5)?,
                    tau_erg_eq4: t.f64(i, 6)?,
                    tau_erg_eq9: t.f64(i, 7)?,
                    tau_erg_eq11: t.f64(i, 8)?,
                    verdict,
                    lambda_max_echo_stderr: t.f64(i, 10)?,
                    lambda_upper_stderr: t.f64(i, 11)?,
                    lambda_max_direct: t.f64(i, 12)?,
                    lambda_max_direct_stderr: t.f64(i, 13)?,
                    var_dlambda_direct_stderr: t.f64(i, 14)?,
                    tau_erg_eq4_stderr: t.f64(i, 15)?,
                    tau_erg_eq9_stderr: t.f64(i, 16)?,
                    plateau_level: t.f64(i, 17)?,
                    plateau_expected: t.f64(i, 18)?,
                },
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 10] = [
    "dims",
    "extents",
    "N",
    "N_nn",
    "lambda_max",
    "lambda_max_stderr",
    "var_dlambda",
    "var_dlambda_stderr",
    "ratio",
    "expected",
];

pub fn write_sweep(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    write_text(path, &csv_text(&SWEEP_HEADER, rows))
}

/// Provenance of one output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub lyapunov_seeds: Vec<u64>,
    pub workers: usize,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    /// `(file name, sha256 hex, bytes)`, sorted by name.
    pub files: Vec<(String, String, u64)>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    /// Hashes the named files inside `dir`.
    pub fn hash_files(dir: &Path, names: &[String]) -> Result<Vec<(String, String, u64)>> {
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            let (h, n) = sha256_file(&dir.join(name))?;
            files.push((name.clone(), h, n));
        }
        files.sort();
        Ok(files)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "started_unix = {}", self.started_unix);
        let _ = writeln!(out, "elapsed_seconds = {:.3}", self.elapsed_seconds);
        let seeds: Vec<String> = self.seeds.iter().map(|s| format!("{s:#018x}")).collect();
        let _ = writeln!(out, "realization_seeds = {}", seeds.join(","));
        let ly: Vec<String> = self.lyapunov_seeds.iter().map(|s| format!("{s:#018x}")).collect();
        let _ = writeln!(out, "lyapunov_seeds = {}", ly.join(","));
        for (name, hash, bytes) in &self.files {
            let _ = writeln!(out, "file = {name} sha256:{hash} bytes:{bytes}");
        }
        out.push_str("[config]\n");
        out.push_str(&self.config);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST), &self.render())
    }
}

/// File entries `(name, sha256)` listed in a manifest.
pub fn read_manifest_files(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line == "[config]" {
            break;
        }
        if let Some(rest) = line.strip_prefix("file = ") {
            let mut parts = rest.split(' ');
            let name = parts.next().unwrap_or_default();
            let hash = parts.next().and_then(|h| h.strip_prefix("sha256:")).ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                line: i + 1,
                message: "file entry without sha256".into(),
            })?;
            out.push((name.to_string(), hash.to_string()));
        }
    }
    Ok(out)
}
