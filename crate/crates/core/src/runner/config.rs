//! Run configuration and its flat `key = value` file format.
//!
//! Lines are `section.key = value`; `#` starts a comment line. Every key has a
//! default, so a file only lists what it changes. Floats are written in
//! shortest round-trip form, so `parse(serialize(c)) == c`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{VerdictPolicy, WindowPolicy, BOOTSTRAP_RESAMPLES};
use crate::dynamics::{ModelParams, Scheme};
use crate::echo::EchoProtocol;
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeSpec};
use crate::lyapunov::LyapunovSettings;

/// Direct-pipeline knobs; the initial ensemble is shared with the echo.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    pub enabled: bool,
    pub total_time: f64,
    pub dt: f64,
    pub dt_r: f64,
    pub pre_run: f64,
    pub burn_in_lyapunov_times: f64,
    pub burn_in: Option<f64>,
    /// Independent chains pooled into one estimate.
    pub chains: usize,
    /// Largest autocorrelation lag, in units of `dt_r`.
    pub max_lag: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        let s = LyapunovSettings::default();
        Self {
            enabled: true,
            total_time: s.total_time,
            dt: s.dt,
            dt_r: s.dt_r,
            pre_run: s.pre_run,
            burn_in_lyapunov_times: s.burn_in_lyapunov_times,
            burn_in: s.burn_in,
            chains: 1,
            max_lag: 100,
        }
    }
}

/// Fit and verdict knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub window: WindowPolicy,
    pub verdict: VerdictPolicy,
    pub bootstrap: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: WindowPolicy::default(),
            verdict: VerdictPolicy::default(),
            bootstrap: BOOTSTRAP_RESAMPLES,
        }
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub params: ModelParams,
    /// The protocol's own seed is ignored; realizations use derived seeds.
    pub protocol: EchoProtocol,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub lyapunov: LyapunovConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 picks the machine default.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSpec::square_10x10(),
            params: ModelParams::default(),
            protocol: EchoProtocol::default(),
            ensemble_size: 200,
            master_seed: 0,
            lyapunov: LyapunovConfig::default(),
            analysis: AnalysisConfig::default(),
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

fn fmt_opt(v: Option<f64>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |x| format!("{x:?}"))
}

impl RunConfig {
    /// Preset for one of the three reference lattices.
    pub fn preset(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
        }
        self.protocol.validate()?;
        let l = &self.lyapunov;
        if l.enabled {
            self.lyapunov_settings().steps_per_interval()?;
            if l.chains == 0 {
                return Err(Error::InvalidParameter("lyapunov.chains must be at least 1".into()));
            }
            if l.max_lag < 2 * crate::lyapunov::QUIET_LAGS {
                return Err(Error::InvalidParameter(format!(
                    "lyapunov.max_lag must be at least {}",
                    2 * crate::lyapunov::QUIET_LAGS
                )));
            }
        }
        Ok(())
    }

    /// Direct-pipeline settings, sharing the echo's initial ensemble.
    pub fn lyapunov_settings(&self) -> LyapunovSettings {
        let l = &self.lyapunov;
        LyapunovSettings {
            total_time: l.total_time,
            dt: l.dt,
            dt_r: l.dt_r,
            n0: self.protocol.n0,
            energy_per_site: self.protocol.energy_per_site,
            pre_run: l.pre_run,
            burn_in_lyapunov_times: l.burn_in_lyapunov_times,
            burn_in: l.burn_in,
            scheme: self.protocol.scheme,
        }
    }

    /// Ordered `(key, value)` pairs covering every field.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.protocol;
        let l = &self.lyapunov;
        let a = &self.analysis;
        let ext: Vec<String> = self.lattice.extents().iter().map(|e| e.to_string()).collect();
        vec![
            ("lattice.extents", ext.join(",")),
            ("lattice.boundary", self.lattice.boundary().to_string()),
            ("model.hopping", format!("{:?}", self.params.hopping)),
            ("model.nonlinearity", format!("{:?}", self.params.nonlinearity)),
            ("echo.tau", format!("{:?}", p.tau)),
            ("echo.dt", format!("{:?}", p.dt)),
            ("echo.sample_every", p.sample_every.to_string()),
            ("echo.epsilon", format!("{:?}", p.epsilon)),
            ("echo.n0", format!("{:?}", p.n0)),
            ("echo.energy_per_site", fmt_opt(p.energy_per_site, "none")),
            ("echo.scheme", p.scheme.name().to_string()),
            ("ensemble.size", self.ensemble_size.to_string()),
            ("ensemble.master_seed", self.master_seed.to_string()),
            ("lyapunov.enabled", l.enabled.to_string()),
            ("lyapunov.total_time", format!("{:?}", l.total_time)),
            ("lyapunov.dt", format!("{:?}", l.dt)),
            ("lyapunov.dt_r", format!("{:?}", l.dt_r)),
            ("lyapunov.pre_run", format!("{:?}", l.pre_run)),
            ("lyapunov.burn_in_lyapunov_times", format!("{:?}", l.burn_in_lyapunov_times)),
            ("lyapunov.burn_in", fmt_opt(l.burn_in, "auto")),
            ("lyapunov.chains", l.chains.to_string()),
            ("lyapunov.max_lag", l.max_lag.to_string()),
            ("analysis.rise", format!("{:?}", a.window.rise)),
            ("analysis.margin", format!("{:?}", a.window.margin)),
            ("analysis.plateau_fraction", format!("{:?}", a.window.plateau_fraction)),
            ("analysis.min_points", a.window.min_points.to_string()),
            (
                "analysis.window",
                a.window
                    .manual
                    .map_or_else(|| "auto".to_string(), |(lo, hi)| format!("{lo:?},{hi:?}")),
            ),
            ("analysis.bootstrap", a.bootstrap.to_string()),
            ("analysis.plateau_tolerance", format!("{:?}", a.verdict.plateau_tolerance)),
            ("analysis.drift_tolerance", format!("{:?}", a.verdict.drift_tolerance)),
            ("analysis.trend_segments", a.verdict.trend_segments.to_string()),
            ("analysis.trend_concordance", format!("{:?}", a.verdict.trend_concordance)),
            ("output.dir", self.output_dir.display().to_string()),
            ("run.workers", self.workers.to_string()),
        ]
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Parses a config text on top of the defaults.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        Self::default().overlay(text, origin)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::default().overlay_file(path)
    }

    pub fn overlay_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.overlay(&text, &path.display().to_string())
    }

    /// Applies the keys in `text` on top of `self`.
    pub fn overlay(mut self, text: &str, origin: &str) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut extents: Option<Vec<usize>> = None;
        let mut boundary: Option<Boundary> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config {
                path: origin.to_string(),
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let f = |v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}`: not a number: `{v}`")));
            let u = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{key}`: not a count: `{v}`")));
            let opt = |v: &str, none: &str| -> Result<Option<f64>> {
                if v == none {
                    Ok(None)
                } else {
                    f(v).map(Some)
                }
            };
            match key {
                "lattice.extents" => {
                    let parts: Result<Vec<usize>> = value.split(',').map(|s| u(s.trim())).collect();
                    extents = Some(parts?);
                }
                "lattice.boundary" => {
                    boundary = Some(value.parse().map_err(|e: Error| err(e.to_string()))?);
                }
                "model.hopping" => self.params.hopping = f(value)?,
                "model.nonlinearity" => self.params.nonlinearity = f(value)?,
                "echo.tau" => self.protocol.tau = f(value)?,
                "echo.dt" => self.protocol.dt = f(value)?,
                "echo.sample_every" => self.protocol.sample_every = u(value)?,
                "echo.epsilon" => self.protocol.epsilon = f(value)?,
                "echo.n0" => self.protocol.n0 = f(value)?,
                "echo.energy_per_site" => self.protocol.energy_per_site = opt(value, "none")?,
                "echo.scheme" => self.protocol.scheme = Scheme::parse(value).map_err(|e| err(e.to_string()))?,
                "ensemble.size" => self.ensemble_size = u(value)?,
                "ensemble.master_seed" => self.master_seed = parse_seed(value).map_err(err)?,
                "lyapunov.enabled" => {
                    self.lyapunov.enabled = value
                        .parse()
                        .map_err(|_| err(format!("`{key}`: expected true or false, got `{value}`")))?
                }
                "lyapunov.total_time" => self.lyapunov.total_time = f(value)?,
                "lyapunov.dt" => self.lyapunov.dt = f(value)?,
                "lyapunov.dt_r" => self.lyapunov.dt_r = f(value)?,
                "lyapunov.pre_run" => self.lyapunov.pre_run = f(value)?,
                "lyapunov.burn_in_lyapunov_times" => self.lyapunov.burn_in_lyapunov_times = f(value)?,
                "lyapunov.burn_in" => self.lyapunov.burn_in = opt(value, "auto")?,
                "lyapunov.chains" => self.lyapunov.chains = u(value)?,
                "lyapunov.max_lag" => self.lyapunov.max_lag = u(value)?,
                "analysis.rise" => self.analysis.window.rise = f(value)?,
                "analysis.margin" => self.analysis.window.margin = f(value)?,
                "analysis.plateau_fraction" => self.analysis.window.plateau_fraction = f(value)?,
                "analysis.min_points" => self.analysis.window.min_points = u(value)?,
                "analysis.window" => {
                    self.analysis.window.manual = if value == "auto" {
                        None
                    } else {
                        let (lo, hi) = value
                            .split_once(',')
                            .ok_or_else(|| err(format!("`{key}`: expected `auto` or `lo,hi`")))?;
                        Some((f(lo.trim())?, f(hi.trim())?))
                    }
                }
                "analysis.bootstrap" => self.analysis.bootstrap = u(value)?,
                "analysis.plateau_tolerance" => self.analysis.verdict.plateau_tolerance = f(value)?,
                "analysis.drift_tolerance" => self.analysis.verdict.drift_tolerance = f(value)?,
                "analysis.trend_segments" => self.analysis.verdict.trend_segments = u(value)?,
                "analysis.trend_concordance" => self.analysis.verdict.trend_concordance = f(value)?,
                "output.dir" => self.output_dir = PathBuf::from(value),
                "run.workers" => self.workers = u(value)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if extents.is_some() || boundary.is_some() {
            let e = extents.unwrap_or_else(|| self.lattice.extents().to_vec());
            let b = boundary.unwrap_or(self.lattice.boundary());
            self.lattice = LatticeSpec::new(e, b).map_err(|e| Error::Config {
                path: origin.to_string(),
                line: 0,
                message: e.to_string(),
            })?;
        }
        self.params = ModelParams::new(self.params.hopping, self.params.nonlinearity).map_err(|e| Error::Config {
            path: origin.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(self)
    }
}

/// Decimal or `0x`-prefixed hexadecimal seed.
pub fn parse_seed(value: &str) -> std::result::Result<u64, String> {
    let v = value.trim();
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| format!("not a 64-bit seed: `{v}`"))
}
