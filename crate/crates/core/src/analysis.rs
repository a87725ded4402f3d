//! Ensemble statistics of echo records: the averages `G` and `W`, their
//! growth rates, the variance-ratio ergodicity test, Gaussianity checks and
//! the ergodization-time estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::echo::EchoRecord;
use crate::error::{Error, Result};
use crate::lyapunov::{autocorrelation, mean, tau_erg_eq4, LyapunovSummary, StretchSeries};

/// Per-`Δt` ensemble statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub dt_grid: Vec<f64>,
    /// Mean of the log deviations.
    pub g: Vec<f64>,
    /// Log of the mean deviation.
    pub w: Vec<f64>,
    /// Unbiased variance of the log deviations.
    pub sigma_g2: Vec<f64>,
    /// Mean of the upper tenth of the log deviations.
    pub top_decile: Vec<f64>,
    pub count: usize,
    pub g_stderr: Vec<f64>,
    pub w_stderr: Vec<f64>,
    pub sigma_g2_stderr: Vec<f64>,
}

impl EnsembleStats {
    pub fn len(&self) -> usize {
        self.dt_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt_grid.is_empty()
    }

    pub fn curve(&self, which: Curve) -> &[f64] {
        match which {
            Curve::G => &self.g,
            Curve::W => &self.w,
        }
    }
}

/// Which ensemble average a fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    G,
    W,
}

impl Curve {
    pub fn name(self) -> &'static str {
        match self {
            Curve::G => "G",
            Curve::W => "W",
        }
    }
}

/// `ln(mean(exp(x)))` with the maximum factored out.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = x.iter().map(|v| (v - max).exp()).sum();
    max + (s / x.len() as f64).ln()
}

fn check_grids(records: &[EchoRecord]) -> Result<&[f64]> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("no echo records".into()))?;
    for (i, r) in records.iter().enumerate() {
        if r.dt_grid != first.dt_grid || r.log_deviation.len() != r.dt_grid.len() {
            return Err(Error::GridMismatch(format!(
                "record {i} (seed {}) does not share the grid of record 0",
                r.seed
            )));
        }
    }
    Ok(&first.dt_grid)
}

/// Per-`Δt` statistics. Each column is sorted before summation, so the result
/// does not depend on record order.
pub fn aggregate(records: &[EchoRecord]) -> Result<EnsembleStats> {
    let grid = check_grids(records)?.to_vec();
    let m = records.len();
    let k = grid.len();
    let mut stats = EnsembleStats {
        dt_grid: grid,
        g: Vec::with_capacity(k),
        w: Vec::with_capacity(k),
        sigma_g2: Vec::with_capacity(k),
        top_decile: Vec::with_capacity(k),
        count: m,
        g_stderr: Vec::with_capacity(k),
        w_stderr: Vec::with_capacity(k),
        sigma_g2_stderr: Vec::with_capacity(k),
    };
    let top = (m / 10).max(1);
    let mut col = vec![0.0; m];
    for i in 0..k {
        for (c, r) in col.iter_mut().zip(records) {
            *c = r.log_deviation[i];
        }
        col.sort_by(f64::total_cmp);
        let g = col.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            col.iter().map(|x| (x - g) * (x - g)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        let max = col[m - 1];
        let shifted: Vec<f64> = col.iter().map(|x| (x - max).exp()).collect();
        let s_mean = shifted.iter().sum::<f64>() / m as f64;
        let w = max + s_mean.ln();
        let s_var = if m > 1 {
            shifted.iter().map(|x| (x - s_mean) * (x - s_mean)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        stats.g.push(g);
        stats.w.push(w.max(g));
        stats.sigma_g2.push(var);
        stats.top_decile.push(col[m - top..].iter().sum::<f64>() / top as f64);
        stats.g_stderr.push((var / m as f64).sqrt());
        stats.w_stderr.push((s_var / m as f64).sqrt() / s_mean);
        stats
            .sigma_g2_stderr
            .push(if m > 1 { var * (2.0 / (m - 1) as f64).sqrt() } else { 0.0 });
    }
    Ok(stats)
}

/// Fit-window rule for growth curves.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPolicy {
    /// The window opens once the curve has risen this far above its first
    /// value (natural-log units).
    pub rise: f64,
    /// The window closes this far below the saturation plateau.
    pub margin: f64,
    /// Trailing fraction of the curve averaged for the plateau.
    pub plateau_fraction: f64,
    pub min_points: usize,
    /// Explicit `[t_lo, t_hi]`, bypassing the rule.
    pub manual: Option<(f64, f64)>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            rise: 5.0,
            margin: 3.0,
            plateau_fraction: 0.1,
            min_points: 10,
            manual: None,
        }
    }
}

/// Linear fit of a growth curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Inclusive index range of the window.
    pub lo: usize,
    pub hi: usize,
    pub residual_rms: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `(slope, intercept, residual rms, naive slope
/// stderr)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let rms = (ss / n).sqrt();
    let se = if n > 2.0 { (ss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, rms, se)
}

fn plateau(curve: &[f64], fraction: f64) -> f64 {
    let tail = ((curve.len() as f64 * fraction).ceil() as usize).clamp(1, curve.len());
    mean(&curve[curve.len() - tail..])
}

/// Last index at which `curve` is still `margin` below its plateau.
fn growth_end(curve: &[f64], policy: &WindowPolicy) -> Option<usize> {
    let level = plateau(curve, policy.plateau_fraction) - policy.margin;
    curve.iter().rposition(|&v| v <= level)
}

/// Index window selected by `policy` for one curve.
pub fn fit_window(stats: &EnsembleStats, which: Curve, policy: &WindowPolicy) -> Result<(usize, usize)> {
    let grid = &stats.dt_grid;
    let curve = stats.curve(which);
    if curve.is_empty() {
        return Err(Error::EmptyFitWindow("empty curve".into()));
    }
    let (lo, hi) = if let Some((a, b)) = policy.manual {
        let lo = grid.iter().position(|&t| t >= a);
        let hi = grid.iter().rposition(|&t| t <= b);
        match (lo, hi) {
            (Some(lo), Some(hi)) if hi >= lo => (lo, hi),
            _ => {
                return Err(Error::EmptyFitWindow(format!(
                    "manual window [{a}, {b}] selects no grid points of {}",
                    which.name()
                )))
            }
        }
    } else {
        let start = curve[0] + policy.rise;
        let lo = curve.iter().position(|&v| v >= start);
        let mut hi = growth_end(curve, policy);
        if which == Curve::W {
            // fast samples dominate W and saturate first
            if let (Some(h), Some(top)) = (hi, growth_end(&stats.top_decile, policy)) {
                hi = Some(h.min(top));
            }
        }
        match (lo, hi) {
            (Some(lo), Some(hi)) if hi >= lo => (lo, hi),
            _ => {
                return Err(Error::EmptyFitWindow(format!(
                    "{} never rises {} above its start before coming within {} of its plateau \
                     (plateau = mean of last {}%)",
                    which.name(),
                    policy.rise,
                    policy.margin,
                    policy.plateau_fraction * 100.0
                )))
            }
        }
    };
    if hi + 1 - lo < policy.min_points {
        return Err(Error::EmptyFitWindow(format!(
            "{} window [{}, {}] has {} points, need {}",
            which.name(),
            grid[lo],
            grid[hi],
            hi + 1 - lo,
            policy.min_points
        )));
    }
    Ok((lo, hi))
}

/// Least-squares fit of `G` or `W` over the policy window; the slope error is
/// the naive OLS value.
pub fn fit_growth(stats: &EnsembleStats, which: Curve, policy: &WindowPolicy) -> Result<FitResult> {
    let (lo, hi) = fit_window(stats, which, policy)?;
    let x = &stats.dt_grid[lo..=hi];
    let y = &stats.curve(which)[lo..=hi];
    let (slope, intercept, residual_rms, slope_stderr) = ols(x, y);
    Ok(FitResult {
        slope,
        intercept,
        t_lo: x[0],
        t_hi: x[x.len() - 1],
        lo,
        hi,
        residual_rms,
        slope_stderr,
    })
}

/// Default number of bootstrap resamples.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Fit with the slope error replaced by the spread over ensemble bootstrap
/// resamples, the window held fixed.
pub fn fit_growth_bootstrap(
    records: &[EchoRecord],
    stats: &EnsembleStats,
    which: Curve,
    policy: &WindowPolicy,
    resamples: usize,
    seed: u64,
) -> Result<FitResult> {
    let mut fit = fit_growth(stats, which, policy)?;
    if records.len() != stats.count {
        return Err(Error::InvalidParameter("records do not match the statistics".into()));
    }
    if resamples < 2 || records.len() < 2 {
        return Ok(fit);
    }
    let m = records.len();
    let x = &stats.dt_grid[fit.lo..=fit.hi];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let mut col = vec![0.0; m];
    let mut y = vec![0.0; x.len()];
    let mut pick = vec![0usize; m];
    for _ in 0..resamples {
        pick.iter_mut().for_each(|p| *p = rng.random_range(0..m));
        for (j, yj) in y.iter_mut().enumerate() {
            let i = fit.lo + j;
            for (c, &p) in col.iter_mut().zip(&pick) {
                *c = records[p].log_deviation[i];
            }
            *yj = match which {
                Curve::G => mean(&col),
                Curve::W => log_mean_exp(&col),
            };
        }
        slopes.push(ols(x, &y).0);
    }
    let ms = mean(&slopes);
    fit.slope_stderr = (slopes.iter().map(|s| (s - ms).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt();
    Ok(fit)
}

/// Outcome of the variance-ratio ergodicity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ergodic,
    NotErgodized,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Ergodic => "ergodic",
            Verdict::NotErgodized => "not-ergodized",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ergodic" => Ok(Verdict::Ergodic),
            "not-ergodized" => Ok(Verdict::NotErgodized),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(Error::InvalidParameter(format!("unknown verdict `{other}`"))),
        }
    }
}

/// Thresholds of the variance-ratio test.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictPolicy {
    /// Allowed relative distance of the plateau from `Λ - λ_max`.
    pub plateau_tolerance: f64,
    /// Allowed drift across the window relative to the plateau.
    pub drift_tolerance: f64,
    /// Segments whose medians enter the monotone-trend test.
    pub trend_segments: usize,
    /// Minimum |Kendall τ| of the segment medians for a trend.
    pub trend_concordance: f64,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        Self {
            plateau_tolerance: 0.5,
            drift_tolerance: 0.3,
            trend_segments: 8,
            trend_concordance: 0.6,
        }
    }
}

/// `σ_G²(Δt)/(2Δt)` and its summary over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRatio {
    pub dt_grid: Vec<f64>,
    pub ratio: Vec<f64>,
    pub lo: usize,
    pub hi: usize,
    /// Median of the ratio over the window.
    pub plateau: f64,
    /// Change of the fitted line across the window, relative to the plateau.
    pub drift: f64,
    /// Segment medians concordantly ordered in time with total change above
    /// the drift tolerance.
    pub trending: bool,
    pub expected: f64,
    pub verdict: Verdict,
}

/// Kendall rank correlation of `x` against its index.
pub fn kendall_tau(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += match x[j].partial_cmp(&x[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ratio curve over the window `[lo, hi]`, judged against `expected = Λ - λ_max`.
pub fn variance_ratio_curve(
    stats: &EnsembleStats,
    window: (usize, usize),
    expected: f64,
    policy: &VerdictPolicy,
) -> Result<VarianceRatio> {
    let (lo, hi) = window;
    if hi >= stats.len() || lo > hi {
        return Err(Error::EmptyFitWindow(format!("window [{lo}, {hi}] outside grid of {}", stats.len())));
    }
    let ratio: Vec<f64> = stats
        .sigma_g2
        .iter()
        .zip(&stats.dt_grid)
        .map(|(s, t)| s / (2.0 * t))
        .collect();
    let x = &stats.dt_grid[lo..=hi];
    let y = &ratio[lo..=hi];
    let plateau = median(y);
    let (slope, _, _, _) = if y.len() >= 2 { ols(x, y) } else { (0.0, 0.0, 0.0, 0.0) };
    let span = x[x.len() - 1] - x[0];
    let drift = (slope * span / plateau).abs();

    let segs = policy.trend_segments.max(2).min(y.len());
    let seg_len = y.len() / segs;
    let medians: Vec<f64> = (0..segs).map(|s| median(&y[s * seg_len..(s + 1) * seg_len])).collect();
    let tau = kendall_tau(&medians);
    let change = ((medians[segs - 1] - medians[0]) / plateau).abs();
    let trending = tau.abs() >= policy.trend_concordance && change > policy.drift_tolerance;

    let close = (plateau - expected).abs() <= policy.plateau_tolerance * expected.abs();
    let verdict = if close && drift < policy.drift_tolerance {
        Verdict::Ergodic
    } else if trending {
        Verdict::NotErgodized
    } else {
        Verdict::Inconclusive
    };
    Ok(VarianceRatio {
        dt_grid: stats.dt_grid.clone(),
        ratio,
        lo,
        hi,
        plateau,
        drift,
        trending,
        expected,
        verdict,
    })
}

/// `(Λ - λ_max)/⟨δλ²⟩` with first-order error propagation from independent
/// input errors.
pub fn tau_erg_eq9(
    lambda_max: (f64, f64),
    lambda_upper: (f64, f64),
    var_dlambda: (f64, f64),
) -> Result<(f64, f64)> {
    let (v, v_se) = var_dlambda;
    if !(v > 0.0) {
        return Err(Error::InvalidParameter(format!("⟨δλ²⟩ must be positive, got {v}")));
    }
    let d = lambda_upper.0 - lambda_max.0;
    let d_se = lambda_max.1.hypot(lambda_upper.1);
    let value = d / v;
    let se = (d_se / v).hypot(d * v_se / (v * v));
    Ok((value, se))
}

/// Empirical fluctuation variance `4 λ_max² / N_nn²`.
pub fn var_empirical_eq10(lambda_max: f64, n_nn: usize) -> Result<f64> {
    if n_nn == 0 {
        return Err(Error::InvalidParameter("coordination number must be positive".into()));
    }
    Ok(4.0 * lambda_max * lambda_max / (n_nn * n_nn) as f64)
}

/// `(Λ - λ_max) N_nn² / (4 λ_max²)`.
pub fn tau_erg_eq11(lambda_max: f64, lambda_upper: f64, n_nn: usize) -> Result<f64> {
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidParameter(format!("λ_max must be positive, got {lambda_max}")));
    }
    Ok((lambda_upper - lambda_max) / var_empirical_eq10(lambda_max, n_nn)?)
}

/// Windowed check of the Gaussian identity for the stretching-rate
/// fluctuations.
#[derive(Debug, Clone, PartialEq)]
pub struct AndersonWeiss {
    /// `(1/t) ln ⟨exp(Σ δλ dt_r)⟩` over non-overlapping windows.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `∫₀^∞ φ`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `exp(-∫ t φ(t) dt)`.
    pub constant_c: f64,
    /// `rhs + ln C / t`, the finite-window prediction.
    pub finite_t: f64,
    pub windows: usize,
    /// Fewer than the recommended 100 windows.
    pub few_windows: bool,
}

/// Recommended minimum number of windows.
pub const MIN_WINDOWS: usize = 100;

pub fn anderson_weiss_check(series: &StretchSeries, t: f64) -> Result<AndersonWeiss> {
    let per = (t / series.dt_r).round() as usize;
    if per == 0 {
        return Err(Error::InvalidParameter(format!("window {t} shorter than dt_r")));
    }
    let windows = series.len() / per;
    if windows < 2 {
        return Err(Error::InvalidParameter(format!(
            "series of {} samples holds fewer than two windows of {per}",
            series.len()
        )));
    }
    let t_eff = per as f64 * series.dt_r;
    let d = series.fluctuations();
    let y: Vec<f64> = (0..windows)
        .map(|w| d[w * per..(w + 1) * per].iter().sum::<f64>() * series.dt_r)
        .collect();
    let lme = log_mean_exp(&y);
    let lhs = lme / t_eff;
    let shifted: Vec<f64> = y.iter().map(|v| (v - lme).exp()).collect();
    let sm = mean(&shifted);
    let sv = shifted.iter().map(|x| (x - sm).powi(2)).sum::<f64>() / (windows - 1) as f64;
    let lhs_stderr = (sv / windows as f64).sqrt() / sm / t_eff;

    let var0 = d.iter().map(|x| x * x).sum::<f64>();
    let (rhs, rhs_stderr, moment) = if var0 == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let max_lag = per.min(series.len() / 10 - 1).max(QUIET_MIN);
        let grid = autocorrelation(series, max_lag)?;
        let tau = tau_erg_eq4(&grid)?;
        (tau.integral, tau.integral_stderr, tau.first_moment)
    };
    let constant_c = (-moment).exp();
    Ok(AndersonWeiss {
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        constant_c,
        finite_t: rhs - moment / t_eff,
        windows,
        few_windows: windows < MIN_WINDOWS,
    })
}

/// Smallest autocorrelation grid used by the windowed check.
const QUIET_MIN: usize = 2 * crate::lyapunov::QUIET_LAGS;

/// Sample skewness and excess kurtosis of the log deviations at one `Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub dt: f64,
    pub skewness: f64,
    pub skewness_stderr: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_stderr: f64,
    pub non_gaussian: bool,
}

/// Minimum ensemble size for moment checks.
pub const MIN_GAUSSIANITY_RECORDS: usize = 50;

pub fn gaussianity_check(records: &[EchoRecord], dt_values: &[f64]) -> Result<Vec<Moments>> {
    let grid = check_grids(records)?;
    let n = records.len();
    if n < MIN_GAUSSIANITY_RECORDS {
        return Err(Error::InvalidParameter(format!(
            "{n} records, need at least {MIN_GAUSSIANITY_RECORDS}"
        )));
    }
    let nf = n as f64;
    let skew_se = (6.0 * nf * (nf - 1.0) / ((nf - 2.0) * (nf + 1.0) * (nf + 3.0))).sqrt();
    let kurt_se = 2.0 * skew_se * ((nf * nf - 1.0) / ((nf - 3.0) * (nf + 5.0))).sqrt();
    let spacing = if grid.len() > 1 { grid[1] - grid[0] } else { f64::INFINITY };
    dt_values
        .iter()
        .map(|&dt| {
            let i = grid
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - dt).abs().total_cmp(&(b.1 - dt).abs()))
                .map(|(i, _)| i)
                .unwrap();
            if (grid[i] - dt).abs() > 0.5 * spacing {
                return Err(Error::GridMismatch(format!("Δt={dt} is not on the record grid")));
            }
            let x: Vec<f64> = records.iter().map(|r| r.log_deviation[i]).collect();
            let m = mean(&x);
            let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
            let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / nf;
            let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / nf;
            let skewness = m3 / m2.powf(1.5);
            let excess_kurtosis = m4 / (m2 * m2) - 3.0;
            Ok(Moments {
                dt: grid[i],
                skewness,
                skewness_stderr: skew_se,
                excess_kurtosis,
                kurtosis_stderr: kurt_se,
                non_gaussian: skewness.abs() > 3.0 * skew_se,
            })
        })
        .collect()
}

/// All ergodization-time estimates for one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodizationReport {
    pub n_nn: usize,
    pub lambda_max_echo: f64,
    pub lambda_max_echo_stderr: f64,
    /// Growth rate of `W`.
    pub lambda_upper: f64,
    pub lambda_upper_stderr: f64,
    pub lambda_max_direct: f64,
    pub lambda_max_direct_stderr: f64,
    pub var_dlambda_direct: f64,
    pub var_dlambda_direct_stderr: f64,
    pub var_dlambda_empirical: f64,
    pub tau_erg_eq4: f64,
    pub tau_erg_eq4_stderr: f64,
    pub tau_erg_eq9: f64,
    pub tau_erg_eq9_stderr: f64,
    pub tau_erg_eq11: f64,
    pub plateau_level: f64,
    pub plateau_expected: f64,
    pub verdict: Verdict,
}

impl ErgodizationReport {
    /// Combines the echo fits, the ratio test and, when available, the direct
    /// pipeline. Direct-only quantities are NaN without it.
    pub fn assemble(
        n_nn: usize,
        g_fit: &FitResult,
        w_fit: &FitResult,
        ratio: &VarianceRatio,
        direct: Option<&LyapunovSummary>,
    ) -> Result<Self> {
        let nan = f64::NAN;
        let (ld, ld_se, var, var_se, t4, t4_se) = match direct {
            Some(d) => (
                d.lambda_max,
                d.lambda_max_stderr,
                d.var_dlambda,
                d.var_dlambda_stderr,
                d.tau_erg_eq4,
                d.tau_erg_eq4_stderr,
            ),
            None => (nan, nan, nan, nan, nan, nan),
        };
        let (t9, t9_se) = if direct.is_some() {
            tau_erg_eq9(
                (g_fit.slope, g_fit.slope_stderr),
                (w_fit.slope, w_fit.slope_stderr),
                (var, var_se),
            )?
        } else {
            (nan, nan)
        };
        Ok(Self {
            n_nn,
            lambda_max_echo: g_fit.slope,
            lambda_max_echo_stderr: g_fit.slope_stderr,
            lambda_upper: w_fit.slope,
            lambda_upper_stderr: w_fit.slope_stderr,
            lambda_max_direct: ld,
            lambda_max_direct_stderr: ld_se,
            var_dlambda_direct: var,
            var_dlambda_direct_stderr: var_se,
            var_dlambda_empirical: var_empirical_eq10(g_fit.slope, n_nn)?,
            tau_erg_eq4: t4,
            tau_erg_eq4_stderr: t4_se,
            tau_erg_eq9: t9,
            tau_erg_eq9_stderr: t9_se,
            tau_erg_eq11: tau_erg_eq11(g_fit.slope, w_fit.slope, n_nn)?,
            plateau_level: ratio.plateau,
            plateau_expected: ratio.expected,
            verdict: ratio.verdict,
        })
    }
}
