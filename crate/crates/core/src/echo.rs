//! One Loschmidt-echo realization.
//!
//! Forward evolution to the reversal time `τ` while recording occupations,
//! then a sign flip of the Hamiltonian together with a small random kick
//! `δψ`, then evolution over another `τ`. At every sample time `Δt` after the
//! reversal the deviation `Δn_i(Δt) = n_i(τ+Δt) - n_i(τ-Δt)` is formed and
//! `ln √(Σ_i Δn_i²)` is stored.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{energy, FieldState, Hopping, ModelParams, Scheme, SplitStep};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, NeighborTable};

/// Random stream used by one realization.
pub fn realization_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Equal occupations `n0` with independent uniform phases.
pub fn initial_state<R: Rng + ?Sized>(spec: &LatticeSpec, n0: f64, rng: &mut R) -> Result<FieldState> {
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::InvalidParameter(format!("initial occupation must be positive, got {n0}")));
    }
    let amp = n0.sqrt();
    let amplitudes = (0..spec.num_sites())
        .map(|_| Complex64::from_polar(amp, 2.0 * PI * rng.random::<f64>()))
        .collect();
    Ok(FieldState::new(amplitudes))
}

/// Equal occupations `n0` with random phases constrained to total energy
/// `energy_per_site · N`.
///
/// Phases start uniform; single-site redraws that move the hopping energy
/// toward its target are accepted until one site can absorb the remainder
/// exactly. Sweeps of energy-preserving reflections `φ_j -> 2 arg S_j - φ_j`,
/// `S_j = Σ_NN e^{iφ_k}`, then decorrelate the phases along the shell.
pub fn initial_state_on_shell<R: Rng + ?Sized>(
    table: &NeighborTable,
    params: &ModelParams,
    n0: f64,
    energy_per_site: f64,
    rng: &mut R,
) -> Result<FieldState> {
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::InvalidParameter(format!("initial occupation must be positive, got {n0}")));
    }
    let n = table.num_sites();
    let j = params.hopping;
    let target = (energy_per_site - 0.5 * params.nonlinearity * n0 * n0) * n as f64;
    let reach: f64 = (0..n).map(|s| table.degree(s) as f64).sum::<f64>() * (j * n0).abs();
    if !target.is_finite() || target.abs() >= reach {
        return Err(Error::InvalidParameter(format!(
            "energy per site {energy_per_site} is not reachable with equal occupations {n0}"
        )));
    }
    let mut phase: Vec<f64> = (0..n).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
    let sum_of = |phase: &[f64], site: usize| -> Complex64 {
        table.neighbors(site).iter().map(|&k| Complex64::from_polar(1.0, phase[k])).sum()
    };
    // energy of all bonds touching `site`
    let local = |phase: &[f64], site: usize, s: Complex64| -> f64 {
        -2.0 * j * n0 * (Complex64::from_polar(1.0, -phase[site]) * s).re
    };
    let mut hop: f64 = (0..n).map(|site| 0.5 * local(&phase, site, sum_of(&phase, site))).sum();

    let budget = 10_000 * n.max(10);
    let mut landed = false;
    for _ in 0..budget {
        let site = rng.random_range(0..n);
        let s = sum_of(&phase, site);
        let old = local(&phase, site, s);
        let amp = 2.0 * (j * n0).abs() * s.norm();
        let wanted = old + (target - hop);
        if amp > 0.0 && wanted.abs() <= amp {
            // -2 J n0 |S| cos(arg S - φ) = wanted
            let c = (-wanted / (2.0 * j * n0 * s.norm())).clamp(-1.0, 1.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            phase[site] = s.arg() - sign * c.acos();
            landed = true;
            break;
        }
        let trial = 2.0 * PI * rng.random::<f64>();
        let keep = phase[site];
        phase[site] = trial;
        let new = local(&phase, site, s);
        if (hop + new - old - target).abs() < (hop - target).abs() {
            hop += new - old;
        } else {
            phase[site] = keep;
        }
    }
    if !landed {
        return Err(Error::NonConvergence(format!(
            "could not reach energy per site {energy_per_site}"
        )));
    }
    for _ in 0..SHELL_SWEEPS {
        for site in 0..n {
            if rng.random::<bool>() {
                let s = sum_of(&phase, site);
                phase[site] = (2.0 * s.arg() - phase[site]).rem_euclid(2.0 * PI);
            }
        }
    }
    let amp = n0.sqrt();
    Ok(FieldState::new(phase.into_iter().map(|p| Complex64::from_polar(amp, p)).collect()))
}

/// Reflection sweeps after the shell is reached.
const SHELL_SWEEPS: usize = 20;

/// Initial state for a protocol: on the energy shell when a target is set,
/// otherwise unconstrained random phases.
pub fn prepare_initial<R: Rng + ?Sized>(
    spec: &LatticeSpec,
    table: &NeighborTable,
    params: &ModelParams,
    n0: f64,
    energy_per_site: Option<f64>,
    rng: &mut R,
) -> Result<FieldState> {
    match energy_per_site {
        Some(e) => initial_state_on_shell(table, params, n0, e, rng),
        None => initial_state(spec, n0, rng),
    }
}

/// Isotropic random vector in the `2N`-dimensional real embedding, scaled to
/// Euclidean norm `epsilon`.
pub fn random_direction<R: Rng + ?Sized>(n: usize, epsilon: f64, rng: &mut R) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        let scale = epsilon / norm;
        v.iter_mut().for_each(|z| *z *= scale);
    }
    v
}

/// Adds a random kick of norm exactly `epsilon`.
pub fn perturb<R: Rng + ?Sized>(state: &FieldState, epsilon: f64, rng: &mut R) -> Result<FieldState> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let mut out = state.clone();
    if epsilon == 0.0 {
        return Ok(out);
    }
    let kick = random_direction(state.len(), epsilon, rng);
    for (z, d) in out.amplitudes.iter_mut().zip(kick) {
        *z += d;
    }
    Ok(out)
}

/// Default energy per site of the initial state, in units of `J`·occupation.
pub const DEFAULT_ENERGY_PER_SITE: f64 = 100.0;

/// Parameters of one echo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProtocol {
    /// Reversal time `τ`; the backward segment has the same length.
    pub tau: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Norm of the kick applied at reversal.
    pub epsilon: f64,
    /// Initial per-site occupation.
    pub n0: f64,
    /// Target energy per site of the initial state; `None` leaves the phases
    /// unconstrained.
    pub energy_per_site: Option<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for EchoProtocol {
    fn default() -> Self {
        Self {
            tau: 60.0,
            dt: 1e-3,
            sample_every: 10,
            epsilon: 1e-8,
            n0: 100.0,
            energy_per_site: Some(DEFAULT_ENERGY_PER_SITE),
            seed: 0,
            scheme: Scheme::default(),
        }
    }
}

impl EchoProtocol {
    /// Time between stored samples.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    /// Number of sample intervals in `τ`.
    pub fn samples(&self) -> Result<usize> {
        let interval = self.sample_interval();
        let k = (self.tau / interval).round();
        if k < 1.0 || (k * interval - self.tau).abs() > 1e-9 * self.tau {
            return Err(Error::InvalidParameter(format!(
                "tau={} must be a positive multiple of dt*sample_every={interval}",
                self.tau
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tau > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("tau and dt must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be positive".into()));
        }
        if !(self.n0 > 0.0) {
            return Err(Error::InvalidParameter(format!("n0 must be positive, got {}", self.n0)));
        }
        self.samples().map(|_| ())
    }

    /// `Δt` values of the stored samples: `interval, 2·interval, …, τ`.
    pub fn dt_grid(&self) -> Result<Vec<f64>> {
        let k = self.samples()?;
        let interval = self.sample_interval();
        Ok((1..=k).map(|i| i as f64 * interval).collect())
    }
}

/// Deviation record of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoRecord {
    pub dt_grid: Vec<f64>,
    /// `ln √(Σ_i Δn_i(Δt)²)` per grid point.
    pub log_deviation: Vec<f64>,
    /// Energy of the initial state.
    pub realized_energy: f64,
    pub seed: u64,
}

impl EchoRecord {
    pub fn len(&self) -> usize {
        self.dt_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt_grid.is_empty()
    }
}

/// Runs one echo realization with a freshly built eigenbasis.
pub fn run_echo(spec: &LatticeSpec, params: ModelParams, protocol: &EchoProtocol) -> Result<EchoRecord> {
    let hopping = Hopping::shared(spec);
    let table = NeighborTable::build(spec);
    run_echo_with(spec, &table, &hopping, params, protocol)
}

/// Runs one echo realization reusing a shared eigenbasis.
pub fn run_echo_with(
    spec: &LatticeSpec,
    table: &NeighborTable,
    hopping: &Arc<Hopping>,
    params: ModelParams,
    protocol: &EchoProtocol,
) -> Result<EchoRecord> {
    protocol.validate()?;
    let samples = protocol.samples()?;
    let n = spec.num_sites();
    if hopping.num_sites() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: hopping.num_sites(),
        });
    }
    let mut rng = realization_rng(protocol.seed);
    let start = prepare_initial(spec, table, &params, protocol.n0, protocol.energy_per_site, &mut rng)?;
    let realized_energy = energy(&start, &params, table)?;

    let mut kernel = SplitStep::with_scheme(Arc::clone(hopping), params, protocol.dt, protocol.scheme)?;
    let mut psi = start.amplitudes;

    // forward occupations at t = 0, interval, …, τ
    let mut forward = Vec::with_capacity((samples + 1) * n);
    forward.extend(psi.iter().map(|z| z.norm_sqr()));
    for _ in 0..samples {
        kernel.advance(&mut psi, protocol.sample_every);
        forward.extend(psi.iter().map(|z| z.norm_sqr()));
    }
    if forward.len() != (samples + 1) * n {
        return Err(Error::GridMismatch("forward buffer length does not match sample count".into()));
    }

    let kicked = perturb(&FieldState::new(psi), protocol.epsilon, &mut rng)?;
    let mut psi = kicked.amplitudes;
    kernel.set_params(params.reversed());

    let mut log_deviation = Vec::with_capacity(samples);
    for i in 1..=samples {
        kernel.advance(&mut psi, protocol.sample_every);
        // n(τ + Δt) against n(τ - Δt), i.e. forward sample samples - i
        let past = &forward[(samples - i) * n..(samples - i + 1) * n];
        let sum_sq: f64 = psi
            .iter()
            .zip(past)
            .map(|(z, &p)| {
                let d = z.norm_sqr() - p;
                d * d
            })
            .sum();
        log_deviation.push(0.5 * sum_sq.ln());
    }

    Ok(EchoRecord {
        dt_grid: protocol.dt_grid()?,
        log_deviation,
        realized_energy,
        seed: protocol.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn initial_state_has_equal_occupations() {
        let spec = LatticeSpec::chain_100();
        let mut rng = realization_rng(3);
        let s = initial_state(&spec, 100.0, &mut rng).unwrap();
        assert!((s.particle_number() - 1e4).abs() < 1e-9);
        assert!(s.occupations().iter().all(|&n| (n - 100.0).abs() < 1e-12));
    }

    #[test]
    fn initial_state_is_deterministic() {
        let spec = LatticeSpec::square_10x10();
        let a = initial_state(&spec, 100.0, &mut realization_rng(42)).unwrap();
        let b = initial_state(&spec, 100.0, &mut realization_rng(42)).unwrap();
        assert_eq!(a, b);
        let c = initial_state(&spec, 100.0, &mut realization_rng(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn initial_state_rejects_bad_occupation() {
        let spec = LatticeSpec::chain_100();
        assert!(initial_state(&spec, 0.0, &mut realization_rng(1)).is_err());
        assert!(initial_state(&spec, f64::NAN, &mut realization_rng(1)).is_err());
    }

    #[test]
    fn shell_state_hits_energy() {
        let params = ModelParams::default();
        for spec in [LatticeSpec::chain_100(), LatticeSpec::square_10x10(), LatticeSpec::cube_4x4x4()] {
            let table = NeighborTable::build(&spec);
            for seed in 0..3 {
                let s = initial_state_on_shell(&table, &params, 100.0, 100.0, &mut realization_rng(seed)).unwrap();
                let e = energy(&s, &params, &table).unwrap() / spec.num_sites() as f64;
                assert!((e - 100.0).abs() < 1e-10, "{e}");
                assert!(s.occupations().iter().all(|&n| (n - 100.0).abs() < 1e-11));
            }
        }
    }

    #[test]
    fn shell_state_rejects_unreachable_energy() {
        let spec = LatticeSpec::chain_100();
        let table = NeighborTable::build(&spec);
        let params = ModelParams::default();
        // hopping energy per site is bounded by J n0 N_nn = 200
        assert!(initial_state_on_shell(&table, &params, 100.0, 260.0, &mut realization_rng(0)).is_err());
        assert!(initial_state_on_shell(&table, &params, 100.0, -160.0, &mut realization_rng(0)).is_err());
        assert!(initial_state_on_shell(&table, &params, 100.0, 200.0, &mut realization_rng(0)).is_ok());
    }

    #[test]
    fn zero_kick_leaves_state() {
        let spec = LatticeSpec::cube_4x4x4();
        let s = initial_state(&spec, 100.0, &mut realization_rng(1)).unwrap();
        assert_eq!(perturb(&s, 0.0, &mut realization_rng(2)).unwrap(), s);
        assert!(perturb(&s, -1.0, &mut realization_rng(2)).is_err());
    }

    #[test]
    fn kick_has_exact_norm() {
        let spec = LatticeSpec::chain_100();
        let s = initial_state(&spec, 100.0, &mut realization_rng(1)).unwrap();
        let mut rng = realization_rng(9);
        for eps in [1e-8, 1.0, 3.5e-3] {
            let p = perturb(&s, eps, &mut rng).unwrap();
            let norm: f64 = p
                .amplitudes
                .iter()
                .zip(&s.amplitudes)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            // the subtraction above loses digits at |ψ| = 10, so check the kick itself
            let kick = random_direction(100, eps, &mut realization_rng(5));
            let k: f64 = kick.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((k / eps - 1.0).abs() < 1e-14);
            assert!((norm / eps - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn protocol_grid() {
        let p = EchoProtocol {
            tau: 1.0,
            dt: 1e-3,
            sample_every: 10,
            ..EchoProtocol::default()
        };
        let g = p.dt_grid().unwrap();
        assert_eq!(g.len(), 100);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[99] - 1.0).abs() < 1e-12);
        let bad = EchoProtocol {
            tau: 1.005,
            ..p.clone()
        };
        assert!(bad.validate().is_err());
        let neg = EchoProtocol { epsilon: -1.0, ..p };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn perfect_reversal_retraces() {
        let spec = LatticeSpec::square_10x10();
        let protocol = EchoProtocol {
            tau: 2.0,
            epsilon: 0.0,
            seed: 17,
            ..EchoProtocol::default()
        };
        let rec = run_echo(&spec, ModelParams::default(), &protocol).unwrap();
        let bound = (1e-18f64 * 100.0 * 100.0 * 100.0).sqrt().ln();
        assert!(rec.log_deviation.iter().all(|&x| x < bound), "{:?}", rec.log_deviation.iter().cloned().fold(f64::MIN, f64::max));
    }

    #[test]
    fn echo_is_deterministic() {
        let spec = LatticeSpec::cube_4x4x4();
        let protocol = EchoProtocol {
            tau: 1.0,
            seed: 5,
            ..EchoProtocol::default()
        };
        let a = run_echo(&spec, ModelParams::default(), &protocol).unwrap();
        let b = run_echo(&spec, ModelParams::default(), &protocol).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.log_deviation.iter().all(|x| x.is_finite()));
    }

    // Kolmogorov distribution tail, P(K > x)
    fn kolmogorov_tail(x: f64) -> f64 {
        (1..100)
            .map(|k| {
                let k = k as f64;
                2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp()
            })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    #[test]
    fn phases_are_uniform() {
        let spec = LatticeSpec::periodic(&[10_000]).unwrap();
        let s = initial_state(&spec, 100.0, &mut realization_rng(5)).unwrap();
        let mut u: Vec<f64> = s.amplitudes.iter().map(|z| z.arg().rem_euclid(2.0 * PI) / (2.0 * PI)).collect();
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
            .fold(0.0, f64::max);
        let p = kolmogorov_tail(d * n.sqrt());
        assert!(p > 1e-3, "KS p = {p}");
    }

    #[test]
    fn kicks_average_to_zero() {
        let (n, draws) = (4, 10_000);
        let mut rng = realization_rng(6);
        let mut sum = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..draws {
            for (a, b) in sum.iter_mut().zip(random_direction(n, 1.0, &mut rng)) {
                *a += b;
            }
        }
        // each real component has variance 1/(2N)
        let sigma = (1.0 / (2.0 * n as f64) / draws as f64).sqrt();
        for z in sum.iter().map(|z| z / draws as f64) {
            assert!(z.re.abs() < 3.0 * sigma && z.im.abs() < 3.0 * sigma, "{z}");
        }
    }

    #[test]
    fn doubling_epsilon_shifts_by_ln2() {
        let spec = LatticeSpec::square_10x10();
        let base = EchoProtocol {
            tau: 12.0,
            seed: 8,
            ..EchoProtocol::default()
        };
        let a = run_echo(&spec, ModelParams::default(), &base).unwrap();
        let doubled = EchoProtocol {
            epsilon: 2.0 * base.epsilon,
            ..base
        };
        let b = run_echo(&spec, ModelParams::default(), &doubled).unwrap();
        for i in 0..a.len() {
            let shift = b.log_deviation[i] - a.log_deviation[i];
            assert!((shift - LN_2).abs() < 1e-3, "Δt={} shift={shift}", a.dt_grid[i]);
        }
    }

    #[test]
    fn single_realization_slope_tracks_lyapunov() {
        use crate::analysis::{aggregate, fit_growth, Curve, WindowPolicy};
        use crate::lyapunov::{lambda_max, stretching_rates, LyapunovSettings};
        let spec = LatticeSpec::square_10x10();
        let settings = LyapunovSettings {
            total_time: 300.0,
            ..LyapunovSettings::default()
        };
        let series = stretching_rates(&spec, ModelParams::default(), &settings, 1).unwrap();
        let (lambda, _) = lambda_max(&series);
        let mut plateaus = Vec::new();
        for seed in 0..4 {
            let protocol = EchoProtocol {
                tau: 45.0,
                seed,
                ..EchoProtocol::default()
            };
            let r = run_echo(&spec, ModelParams::default(), &protocol).unwrap();
            let stats = aggregate(std::slice::from_ref(&r)).unwrap();
            let fit = fit_growth(&stats, Curve::G, &WindowPolicy::default()).unwrap();
            assert!(fit.slope > 0.0);
            assert!((fit.slope / lambda - 1.0).abs() < 0.1, "seed {seed}: {} vs {lambda}", fit.slope);
            let tail = &r.log_deviation[r.len() * 8 / 9..];
            plateaus.push(tail.iter().sum::<f64>() / tail.len() as f64);
        }
        let level = plateaus.iter().sum::<f64>() / plateaus.len() as f64;
        for p in plateaus {
            assert!((p / level - 1.0).abs() < 0.1, "plateau {p} vs {level}");
        }
    }
}
