//! Direct stretching-rate pipeline: tangent dynamics with periodic
//! renormalization, the largest Lyapunov exponent, the autocorrelation of
//! rate fluctuations and the correlation-time estimate of the ergodization
//! time.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::dynamics::{FieldState, Hopping, ModelParams, Scheme, SplitStep};
use crate::echo::{prepare_initial, random_direction, realization_rng, DEFAULT_ENERGY_PER_SITE};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, NeighborTable};

/// Coarse-grained local stretching rates after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchSeries {
    pub dt_r: f64,
    pub rates: Vec<f64>,
    pub burn_in_dropped: usize,
}

impl StretchSeries {
    pub fn new(dt_r: f64, rates: Vec<f64>, burn_in_dropped: usize) -> Result<Self> {
        if !(dt_r > 0.0) {
            return Err(Error::InvalidParameter(format!("dt_r must be positive, got {dt_r}")));
        }
        if rates.is_empty() {
            return Err(Error::InvalidParameter("stretch series is empty".into()));
        }
        Ok(Self {
            dt_r,
            rates,
            burn_in_dropped,
        })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.rates)
    }

    /// Fluctuations `δλ_i = λ_i - mean`.
    pub fn fluctuations(&self) -> Vec<f64> {
        let m = self.mean();
        self.rates.iter().map(|x| x - m).collect()
    }

    /// Total duration covered by the kept samples.
    pub fn duration(&self) -> f64 {
        self.dt_r * self.rates.len() as f64
    }
}

/// Settings of the direct pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSettings {
    /// Total integration time, burn-in included.
    pub total_time: f64,
    pub dt: f64,
    /// Renormalization and coarse-graining interval.
    pub dt_r: f64,
    pub n0: f64,
    /// Target energy per site of the initial state.
    pub energy_per_site: Option<f64>,
    /// Length of the pre-run whose mean rate sets the burn-in.
    pub pre_run: f64,
    /// Burn-in in units of `1/λ` estimated from the pre-run.
    pub burn_in_lyapunov_times: f64,
    /// Fixed burn-in time; overrides the estimate when set.
    pub burn_in: Option<f64>,
    pub scheme: Scheme,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            total_time: 2e4,
            dt: 1e-3,
            dt_r: 0.1,
            n0: 100.0,
            energy_per_site: Some(DEFAULT_ENERGY_PER_SITE),
            pre_run: 10.0,
            burn_in_lyapunov_times: 50.0,
            burn_in: None,
            scheme: Scheme::default(),
        }
    }
}

impl LyapunovSettings {
    /// Integration steps per renormalization interval.
    pub fn steps_per_interval(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.dt_r > 0.0) {
            return Err(Error::InvalidParameter("dt and dt_r must be positive".into()));
        }
        let k = (self.dt_r / self.dt).round();
        if k < 1.0 || (k * self.dt - self.dt_r).abs() > 1e-9 * self.dt_r {
            return Err(Error::InvalidParameter(format!(
                "dt_r={} must be an integer multiple of dt={}",
                self.dt_r, self.dt
            )));
        }
        Ok(k as usize)
    }

    /// Total number of renormalization intervals.
    pub fn intervals(&self) -> Result<usize> {
        if !(self.total_time > 0.0) {
            return Err(Error::InvalidParameter("total_time must be positive".into()));
        }
        Ok((self.total_time / self.dt_r).round() as usize)
    }

    /// Burn-in interval count for a pre-run rate estimate.
    fn burn_in_intervals(&self, estimate: f64, total: usize, pre: usize) -> usize {
        let time = match self.burn_in {
            Some(t) => t,
            None if estimate > 0.0 => self.burn_in_lyapunov_times / estimate,
            None => 0.0,
        };
        let mut k = (time / self.dt_r).ceil() as usize;
        if self.burn_in.is_none() {
            k = k.max(pre);
        }
        // keep at least half the run
        k.min(total / 2)
    }
}

/// Advances a field and a tangent vector by one step of the default kernel.
pub fn tangent_step(
    hopping: &Arc<Hopping>,
    state: &FieldState,
    delta: &[Complex64],
    params: ModelParams,
    dt: f64,
) -> Result<(FieldState, Vec<Complex64>)> {
    let n = hopping.num_sites();
    if state.len() != n || delta.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: if state.len() != n { state.len() } else { delta.len() },
        });
    }
    let mut kernel = SplitStep::new(Arc::clone(hopping), params, dt)?;
    let mut psi = state.amplitudes.clone();
    let mut d = delta.to_vec();
    kernel.advance_tangent(&mut psi, &mut d, 1);
    Ok((
        FieldState {
            amplitudes: psi,
            time: state.time + dt,
        },
        d,
    ))
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Stretching rates from the tangent method.
pub fn stretching_rates(
    spec: &LatticeSpec,
    params: ModelParams,
    settings: &LyapunovSettings,
    seed: u64,
) -> Result<StretchSeries> {
    stretching_rates_with(spec, &Hopping::shared(spec), params, settings, seed)
}

/// As [`stretching_rates`] with a shared eigenbasis.
pub fn stretching_rates_with(
    spec: &LatticeSpec,
    hopping: &Arc<Hopping>,
    params: ModelParams,
    settings: &LyapunovSettings,
    seed: u64,
) -> Result<StretchSeries> {
    let per = settings.steps_per_interval()?;
    let total = settings.intervals()?;
    let mut rng = realization_rng(seed);
    let table = NeighborTable::build(spec);
    let mut psi = prepare_initial(spec, &table, &params, settings.n0, settings.energy_per_site, &mut rng)?.amplitudes;
    let mut delta = random_direction(psi.len(), 1.0, &mut rng);
    let mut kernel = SplitStep::with_scheme(Arc::clone(hopping), params, settings.dt, settings.scheme)?;

    let mut rates = Vec::with_capacity(total);
    let mut record = |psi: &mut Vec<Complex64>, delta: &mut Vec<Complex64>, rates: &mut Vec<f64>| {
        kernel.advance_tangent(psi, delta, per);
        let d = norm(delta);
        let inv = 1.0 / d;
        delta.iter_mut().for_each(|z| *z *= inv);
        rates.push(d.ln() / settings.dt_r);
    };
    let pre = ((settings.pre_run / settings.dt_r).round() as usize).min(total / 2);
    for _ in 0..pre {
        record(&mut psi, &mut delta, &mut rates);
    }
    let estimate = if pre > 0 { mean(&rates) } else { 0.0 };
    let burn = settings.burn_in_intervals(estimate, total, pre);
    for _ in pre..total {
        record(&mut psi, &mut delta, &mut rates);
    }
    if rates.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite stretching rate".into()));
    }
    StretchSeries::new(settings.dt_r, rates.split_off(burn), burn)
}

/// Two-trajectory variant: a companion trajectory at distance `offset` is
/// pulled back to that distance along the separation every `dt_r`.
pub fn stretching_rates_two_trajectory(
    spec: &LatticeSpec,
    params: ModelParams,
    settings: &LyapunovSettings,
    seed: u64,
    offset: f64,
) -> Result<StretchSeries> {
    if !(offset > 0.0) {
        return Err(Error::InvalidParameter(format!("offset must be positive, got {offset}")));
    }
    let per = settings.steps_per_interval()?;
    let total = settings.intervals()?;
    let hopping = Hopping::shared(spec);
    let mut rng = realization_rng(seed);
    let table = NeighborTable::build(spec);
    let mut psi = prepare_initial(spec, &table, &params, settings.n0, settings.energy_per_site, &mut rng)?.amplitudes;
    let dir = random_direction(psi.len(), offset, &mut rng);
    let mut other: Vec<Complex64> = psi.iter().zip(&dir).map(|(a, b)| a + b).collect();
    let mut ka = SplitStep::with_scheme(Arc::clone(&hopping), params, settings.dt, settings.scheme)?;
    let mut kb = ka.clone();

    let mut rates = Vec::with_capacity(total);
    let pre = ((settings.pre_run / settings.dt_r).round() as usize).min(total / 2);
    for _ in 0..total {
        ka.advance(&mut psi, per);
        kb.advance(&mut other, per);
        let d = psi.iter().zip(&other).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>().sqrt();
        rates.push((d / offset).ln() / settings.dt_r);
        let scale = offset / d;
        for (b, a) in other.iter_mut().zip(&psi) {
            *b = a + (*b - a) * scale;
        }
    }
    let estimate = if pre > 0 { mean(&rates[..pre]) } else { 0.0 };
    let burn = settings.burn_in_intervals(estimate, total, pre);
    StretchSeries::new(settings.dt_r, rates.split_off(burn), burn)
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Batch means of `x` over `batches` contiguous blocks.
fn batch_means(x: &[f64], batches: usize) -> Vec<f64> {
    let len = x.len() / batches;
    (0..batches).map(|b| mean(&x[b * len..(b + 1) * len])).collect()
}

/// Number of batches used for standard errors of means.
const BATCHES: usize = 32;

fn batch_count(len: usize) -> usize {
    (len / 10).min(BATCHES)
}

fn sd_of_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mean rate with a batch-means standard error.
pub fn lambda_max(series: &StretchSeries) -> (f64, f64) {
    lambda_max_pooled(std::slice::from_ref(series))
}

/// Mean over several chains, weighted by length; batch means are pooled.
pub fn lambda_max_pooled(chains: &[StretchSeries]) -> (f64, f64) {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let value = chains.iter().map(|c| c.rates.iter().sum::<f64>()).sum::<f64>() / total as f64;
    let mut means = Vec::new();
    for c in chains {
        let b = batch_count(c.len());
        if b >= 2 {
            means.extend(batch_means(&c.rates, b));
        } else {
            means.extend(c.rates.iter().copied());
        }
    }
    (value, sd_of_mean(&means))
}

/// Autocorrelation `φ(k·dt_r)` for `k = 0..=max_lag` with Bartlett errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiGrid {
    pub dt_r: f64,
    pub phi: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Samples the estimate is based on.
    pub samples: usize,
}

impl PhiGrid {
    pub fn lags(&self) -> Vec<f64> {
        (0..self.phi.len()).map(|k| k as f64 * self.dt_r).collect()
    }

    pub fn max_lag(&self) -> usize {
        self.phi.len().saturating_sub(1)
    }
}

fn raw_autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..=max_lag)
        .map(|k| {
            let s: f64 = d[..d.len() - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum();
            s / (d.len() - k) as f64
        })
        .collect()
}

fn bartlett(phi: &[f64], weights: &[usize]) -> Vec<f64> {
    let p0 = phi[0];
    let mut acc = 1.0;
    let mut out = Vec::with_capacity(phi.len());
    for k in 0..phi.len() {
        if k == 0 {
            // variance of the sample variance for a Gaussian-like series
            out.push(p0 * (2.0 / weights[0] as f64).sqrt());
            continue;
        }
        out.push(p0.abs() * (acc / weights[k] as f64).sqrt());
        let r = if p0 != 0.0 { phi[k] / p0 } else { 0.0 };
        acc += 2.0 * r * r;
    }
    out
}

/// Autocorrelation of a single series.
pub fn autocorrelation(series: &StretchSeries, max_lag: usize) -> Result<PhiGrid> {
    autocorrelation_pooled(std::slice::from_ref(series), max_lag)
}

/// Per-chain autocorrelations pooled with weights `M_c - k`.
pub fn autocorrelation_pooled(chains: &[StretchSeries], max_lag: usize) -> Result<PhiGrid> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidParameter("no stretch series".into()))?;
    let dt_r = first.dt_r;
    if chains.iter().any(|c| (c.dt_r - dt_r).abs() > 1e-12 * dt_r) {
        return Err(Error::GridMismatch("chains have different dt_r".into()));
    }
    if chains.iter().any(|c| c.len() <= max_lag) {
        return Err(Error::InvalidParameter(format!(
            "max_lag {max_lag} not below series length"
        )));
    }
    let mut sums = vec![0.0; max_lag + 1];
    let mut weights = vec![0usize; max_lag + 1];
    for c in chains {
        let phi = raw_autocorrelation(&c.rates, max_lag);
        for k in 0..=max_lag {
            let w = c.len() - k;
            sums[k] += phi[k] * w as f64;
            weights[k] += w;
        }
    }
    let phi: Vec<f64> = sums.iter().zip(&weights).map(|(s, &w)| s / w as f64).collect();
    let stderr = bartlett(&phi, &weights);
    Ok(PhiGrid {
        dt_r,
        phi,
        stderr,
        samples: weights[0],
    })
}

/// Correlation-time estimate and the pieces it is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTime {
    /// `∫φ / φ(0)`.
    pub value: f64,
    pub stderr: f64,
    /// `∫₀^{t_c} φ` by trapezoid rule.
    pub integral: f64,
    pub integral_stderr: f64,
    /// `∫₀^{t_c} t φ(t) dt`.
    pub first_moment: f64,
    pub cutoff_lag: usize,
    pub noise_floor: f64,
}

/// Lags that must stay inside the noise band before the integral is cut.
pub const QUIET_LAGS: usize = 10;

/// Noise floor: mean standard error over the last quarter of the grid.
fn noise_floor(grid: &PhiGrid) -> f64 {
    let n = grid.phi.len();
    mean(&grid.stderr[n - (n / 4).max(1)..])
}

/// `∫φ/φ(0)` with the integral cut where `φ` has settled into the noise.
pub fn tau_erg_eq4(grid: &PhiGrid) -> Result<CorrelationTime> {
    let phi = &grid.phi;
    if phi.is_empty() || !(phi[0] > 0.0) {
        return Err(Error::InvalidParameter("φ(0) must be positive".into()));
    }
    let floor = noise_floor(grid);
    let band = 2.0 * floor;
    let mut cutoff = None;
    let mut run = 0usize;
    for k in 1..phi.len() {
        if phi[k].abs() <= band {
            run += 1;
            if run == QUIET_LAGS {
                cutoff = Some(k + 1 - QUIET_LAGS);
                break;
            }
        } else {
            run = 0;
        }
    }
    let kc = cutoff.ok_or_else(|| {
        Error::NonConvergence(format!(
            "φ does not settle within ±{band:.3e} for {QUIET_LAGS} lags up to lag {}",
            phi.len() - 1
        ))
    })?;
    let h = grid.dt_r;
    let weight = |k: usize| if k == 0 || k == kc { 0.5 * h } else { h };
    let mut integral = 0.0;
    let mut var = 0.0;
    let mut moment = 0.0;
    for k in 0..=kc {
        integral += weight(k) * phi[k];
        var += (weight(k) * grid.stderr[k]).powi(2);
        moment += weight(k) * k as f64 * h * phi[k];
    }
    let value = integral / phi[0];
    let rel0 = grid.stderr[0] / phi[0];
    let stderr = value.abs() * ((var.sqrt() / integral.abs().max(f64::MIN_POSITIVE)).powi(2) + rel0 * rel0).sqrt();
    Ok(CorrelationTime {
        value,
        stderr,
        integral,
        integral_stderr: var.sqrt(),
        first_moment: moment,
        cutoff_lag: kc,
        noise_floor: floor,
    })
}

/// Everything the direct pipeline reports for one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSummary {
    pub lambda_max: f64,
    pub lambda_max_stderr: f64,
    /// `⟨δλ²⟩ = φ(0)`.
    pub var_dlambda: f64,
    pub var_dlambda_stderr: f64,
    pub phi: PhiGrid,
    pub tau_erg_eq4: f64,
    pub tau_erg_eq4_stderr: f64,
    /// `∫φ`, the direct estimate of `Λ - λ_max`.
    pub phi_integral: f64,
    pub phi_integral_stderr: f64,
    pub cutoff_lag: usize,
    pub samples: usize,
}

impl LyapunovSummary {
    pub fn from_chains(chains: &[StretchSeries], max_lag: usize) -> Result<Self> {
        let (lambda_max, lambda_max_stderr) = lambda_max_pooled(chains);
        let phi = autocorrelation_pooled(chains, max_lag)?;
        let tau = tau_erg_eq4(&phi)?;
        // batch errors of the variance, consistent with the mean's treatment
        let mut vars = Vec::new();
        for c in chains {
            let d = c.fluctuations();
            let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
            let b = batch_count(sq.len());
            if b >= 2 {
                vars.extend(batch_means(&sq, b));
            }
        }
        let var_dlambda_stderr = if vars.len() >= 2 { sd_of_mean(&vars) } else { phi.stderr[0] };
        Ok(Self {
            lambda_max,
            lambda_max_stderr,
            var_dlambda: phi.phi[0],
            var_dlambda_stderr,
            tau_erg_eq4: tau.value,
            tau_erg_eq4_stderr: tau.stderr,
            phi_integral: tau.integral,
            phi_integral_stderr: tau.integral_stderr,
            cutoff_lag: tau.cutoff_lag,
            samples: phi.samples,
            phi,
        })
    }
}

/// Ornstein–Uhlenbeck series with stationary variance `sigma2`, correlation
/// time `tau_c`, sampled every `dt_r` by the exact AR(1) update.
pub fn ornstein_uhlenbeck<R: Rng + ?Sized>(
    mean_level: f64,
    sigma2: f64,
    tau_c: f64,
    dt_r: f64,
    len: usize,
    rng: &mut R,
) -> Vec<f64> {
    let a = (-dt_r / tau_c).exp();
    let sd = sigma2.sqrt();
    let kick = sd * (1.0 - a * a).sqrt();
    let mut x = sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(mean_level + x);
        x = a * x + kick * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_split;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::from_polar(10.0, rng.random::<f64>() * std::f64::consts::TAU))
            .collect()
    }

    #[test]
    fn linear_tangent_keeps_norm() {
        let spec = LatticeSpec::periodic(&[10, 10]).unwrap();
        let hop = Hopping::shared(&spec);
        let params = ModelParams::new(1.0, 0.0).unwrap();
        let mut k = SplitStep::new(hop, params, 1e-2).unwrap();
        let mut psi = random_state(100, 1);
        let mut d = random_direction(100, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        k.advance_tangent(&mut psi, &mut d, 1000);
        assert!((norm(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let spec = LatticeSpec::periodic(&[16]).unwrap();
        let hop = Hopping::shared(&spec);
        let params = ModelParams::default();
        let psi0 = random_state(16, 3);
        let d0 = random_direction(16, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        let mut k = SplitStep::new(Arc::clone(&hop), params, 1e-3).unwrap();
        let (mut a, mut d) = (psi0.clone(), d0.clone());
        k.advance_tangent(&mut a, &mut d, 1000);
        let h = 1e-7;
        let mut b: Vec<Complex64> = psi0.iter().zip(&d0).map(|(x, y)| x + y * h).collect();
        let mut c = psi0.clone();
        let mut k2 = SplitStep::new(hop, params, 1e-3).unwrap();
        k2.advance(&mut b, 1000);
        k2.advance(&mut c, 1000);
        let fd: Vec<Complex64> = b.iter().zip(&c).map(|(x, y)| (x - y) / h).collect();
        let err = fd.iter().zip(&d).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err / norm(&d) < 1e-4, "{}", err / norm(&d));
        // the tangent path leaves the field untouched
        assert_eq!(a, c);
    }

    #[test]
    fn single_site_phase_direction_grows_linearly() {
        let spec = LatticeSpec::new(vec![1], crate::lattice::Boundary::Open).unwrap();
        let hop = Hopping::shared(&spec);
        let params = ModelParams::default();
        let state = FieldState::new(vec![Complex64::new(10.0, 0.0)]);
        let (_, d) = tangent_step(&hop, &state, &[Complex64::new(0.0, 1e-8)], params, 1e-3).unwrap();
        // a pure phase direction is not stretched at all
        assert!((d[0].norm() - 1e-8).abs() < 1e-20);
        // an amplitude direction shears into phase linearly in time
        let mut k = SplitStep::new(hop, params, 1e-2).unwrap();
        let mut growth = Vec::new();
        for _ in 0..3 {
            let mut psi = vec![Complex64::new(10.0, 0.0)];
            let mut d = vec![Complex64::new(1e-8, 0.0)];
            k.advance_tangent(&mut psi, &mut d, 100 * (growth.len() + 1));
            growth.push(d[0].norm() / 1e-8);
        }
        // |δ|² = 1 + (2 β n t)² with n = 100
        for (i, g) in growth.iter().enumerate() {
            let t = (i + 1) as f64;
            let exact = (1.0 + (2.0 * 0.01 * 100.0 * t).powi(2)).sqrt();
            assert!((g - exact).abs() < 1e-9 * exact, "{g} vs {exact}");
        }
    }

    #[test]
    fn tangent_step_checks_sizes() {
        let spec = LatticeSpec::periodic(&[5]).unwrap();
        let hop = Hopping::shared(&spec);
        let s = FieldState::new(random_state(5, 1));
        assert!(tangent_step(&hop, &s, &[Complex64::new(1.0, 0.0); 4], ModelParams::default(), 1e-3).is_err());
        let (next, _) = tangent_step(&hop, &s, &[Complex64::new(1.0, 0.0); 5], ModelParams::default(), 1e-3).unwrap();
        let plain = step_split(&hop, &s, ModelParams::default(), 1e-3).unwrap();
        assert_eq!(next, plain);
    }

    #[test]
    fn linear_lattice_has_zero_rate() {
        let spec = LatticeSpec::chain_100();
        let settings = LyapunovSettings {
            total_time: 50.0,
            dt: 1e-2,
            burn_in: Some(0.0),
            ..LyapunovSettings::default()
        };
        let s = stretching_rates(&spec, ModelParams::new(1.0, 0.0).unwrap(), &settings, 1).unwrap();
        assert!(s.mean().abs() < 1e-6);
    }

    #[test]
    fn constant_series_mean() {
        let s = StretchSeries::new(0.1, vec![0.7; 1000], 0).unwrap();
        let (v, e) = lambda_max(&s);
        assert!((v - 0.7).abs() < 1e-13);
        assert!(e < 1e-13);
        assert!(StretchSeries::new(0.1, vec![], 0).is_err());
        assert!(StretchSeries::new(0.0, vec![1.0], 0).is_err());
    }

    #[test]
    fn white_noise_correlation_time_is_half_step() {
        let mut phi = vec![0.0; 101];
        phi[0] = 2.0;
        let grid = PhiGrid {
            dt_r: 0.1,
            phi,
            stderr: vec![0.0; 101],
            samples: 1000,
        };
        let t = tau_erg_eq4(&grid).unwrap();
        assert!((t.value - 0.05).abs() < 1e-15);
        assert_eq!(t.cutoff_lag, 1);
    }

    #[test]
    fn never_settling_phi_is_reported() {
        let phi: Vec<f64> = (0..50).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let grid = PhiGrid {
            dt_r: 0.1,
            stderr: vec![1e-3; phi.len()],
            phi,
            samples: 100,
        };
        assert!(matches!(tau_erg_eq4(&grid), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn ou_series_statistics() {
        // oracle: exponential autocorrelation σ² e^{-t/τ_c}
        let (sigma2, tau_c, dt_r) = (0.3, 0.5, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = ornstein_uhlenbeck(0.6, sigma2, tau_c, dt_r, 400_000, &mut rng);
        let s = StretchSeries::new(dt_r, x, 0).unwrap();
        let g = autocorrelation(&s, 60).unwrap();
        for k in 0..=20 {
            let exact = sigma2 * (-(k as f64) * dt_r / tau_c).exp();
            assert!((g.phi[k] - exact).abs() < 4.0 * g.stderr[k] + 1e-3, "lag {k}: {} vs {exact}", g.phi[k]);
        }
        let t = tau_erg_eq4(&g).unwrap();
        // trapezoid of the sampled exponential, with the truncated tail
        let a = (-dt_r / tau_c).exp();
        let trap = dt_r * (0.5 + a / (1.0 - a));
        assert!((t.value - trap).abs() < 3.0 * t.stderr + 0.02, "{} vs {trap} ± {}", t.value, t.stderr);
        let (m, e) = lambda_max(&s);
        assert!((m - 0.6).abs() < 4.0 * e);
    }

    #[test]
    fn white_noise_phi_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let s = StretchSeries::new(0.1, x, 0).unwrap();
        let g = autocorrelation(&s, 50).unwrap();
        let outside = (1..=50).filter(|&k| g.phi[k].abs() > 3.0 * g.stderr[k]).count();
        assert!(outside <= 1, "{outside}");
        let var = {
            let m = s.mean();
            s.rates.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
        };
        assert!((g.phi[0] - var).abs() < 1e-12 * var);
    }

    #[test]
    fn pooled_equals_single_for_one_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = ornstein_uhlenbeck(0.0, 1.0, 0.3, 0.1, 5000, &mut rng);
        let s = StretchSeries::new(0.1, x, 0).unwrap();
        assert_eq!(
            autocorrelation(&s, 20).unwrap(),
            autocorrelation_pooled(&[s.clone()], 20).unwrap()
        );
        let two = autocorrelation_pooled(&[s.clone(), s.clone()], 20).unwrap();
        let one = autocorrelation(&s, 20).unwrap();
        for k in 0..=20 {
            assert!((two.phi[k] - one.phi[k]).abs() < 1e-14);
        }
    }
}
