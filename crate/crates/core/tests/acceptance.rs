//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs the full Table-1 workloads (M = 200 echoes and a T = 10⁴ direct run
//! per lattice); expect roughly twenty minutes on a single core.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ergochron::analysis::{anderson_weiss_check, Verdict};
use ergochron::dynamics::{energy, particle_number, FieldState, Hopping, ModelParams, SplitStep};
use ergochron::echo::{prepare_initial, random_direction, realization_rng, run_echo, EchoProtocol, EchoRecord};
use ergochron::lattice::{LatticeSpec, NeighborTable};
use ergochron::lyapunov::{ornstein_uhlenbeck, tangent_step, LyapunovSummary, StretchSeries};
use ergochron::runner::{analyze_records, reference_lattices, run_direct, run_ensemble, run_realizations, EchoAnalysis, RunConfig};

/// Reference values per lattice: λ_max, Λ, τ from the correlation integral,
/// τ from the echo slopes, τ from the empirical variance law.
struct Reference {
    lambda: f64,
    upper: f64,
    tau4: f64,
    tau9: f64,
    tau11: f64,
}

const REFERENCE: [Reference; 3] = [
    Reference { lambda: 0.643, upper: 0.927, tau4: 0.66, tau9: 0.78, tau11: 0.69 },
    Reference { lambda: 0.698, upper: 0.731, tau4: 0.32, tau9: 0.32, tau11: 0.27 },
    Reference { lambda: 0.650, upper: 0.670, tau4: 0.26, tau9: 0.25, tau11: 0.43 },
];

/// Tolerance on Λ per lattice.
const UPPER_TOL: [f64; 3] = [0.10, 0.05, 0.05];

struct Outcome {
    results: Vec<(bool, String)>,
}

impl Outcome {
    fn report(&mut self, name: &str, ok: bool, details: Vec<String>) {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        for d in details {
            println!("    {d}");
        }
        self.results.push((ok, name.to_string()));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

struct LatticeRun {
    label: &'static str,
    spec: LatticeSpec,
    records: Vec<EchoRecord>,
    direct: LyapunovSummary,
    chains: Vec<StretchSeries>,
    analysis: EchoAnalysis,
}

fn table1_run(label: &'static str, spec: LatticeSpec) -> LatticeRun {
    let mut config = RunConfig::preset(spec.clone());
    config.lyapunov.total_time = 1e4;
    let started = Instant::now();
    let (chains, direct) = run_direct(&config, 0).expect("direct run");
    let records = run_realizations(&config, 0).expect("echo ensemble");
    let analysis = analyze_records(
        &records,
        spec.coordination(),
        &config.analysis,
        config.master_seed,
        Some(&direct),
    )
    .expect("analysis");
    eprintln!("    [{label}: {:.0}s]", started.elapsed().as_secs_f64());
    LatticeRun {
        label,
        spec,
        records,
        direct,
        chains,
        analysis,
    }
}

fn conservation(out: &mut Outcome) {
    let params = ModelParams::default();
    let mut ok = true;
    let mut details = Vec::new();
    for (label, spec) in reference_lattices() {
        let table = NeighborTable::build(&spec);
        let hop = Hopping::shared(&spec);
        let s0 = prepare_initial(&spec, &table, &params, 100.0, Some(100.0), &mut realization_rng(1)).unwrap();
        let mut kernel = SplitStep::new(Arc::clone(&hop), params, 1e-3).unwrap();
        let mut psi = s0.amplitudes.clone();
        kernel.advance(&mut psi, 100_000);
        let s1 = FieldState::new(psi);
        let dn = rel(particle_number(&s1), particle_number(&s0));
        let (e0, e1) = (energy(&s0, &params, &table).unwrap(), energy(&s1, &params, &table).unwrap());
        let de = rel(e1, e0);
        let pass = dn <= 1e-12 && de <= 1e-6;
        ok &= pass;
        details.push(format!("{label}: T=100 N_p drift {dn:.2e} (≤1e-12), energy drift {de:.2e} (≤1e-6)"));

        let n = spec.num_sites() as f64;
        let bound = 1e-18 * 1e4 * n;
        for tau in [EchoProtocol::default().tau, 10.0] {
            let protocol = EchoProtocol {
                tau,
                epsilon: 0.0,
                seed: 1,
                ..EchoProtocol::default()
            };
            let r = run_echo(&spec, params, &protocol).unwrap();
            let worst = r.log_deviation.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let worst_sq = (2.0 * worst).exp();
            let pass = worst_sq < bound;
            if tau == EchoProtocol::default().tau {
                ok &= pass;
            }
            let horizon = r
                .dt_grid
                .iter()
                .zip(&r.log_deviation)
                .find(|(_, &l)| (2.0 * l).exp() >= bound)
                .map_or("none".to_string(), |(t, _)| format!("{t:.2}"));
            details.push(format!(
                "{label}: eps=0 echo tau={tau}: max ΣΔn² {worst_sq:.2e} vs bound {bound:.2e} ({}); first Δt over bound: {horizon}",
                if pass { "ok" } else { "over" }
            ));
        }
    }
    out.report("conservation & reversibility", ok, details);
}

fn direct_lambda(out: &mut Outcome, runs: &[LatticeRun]) {
    let mut ok = true;
    let mut details = Vec::new();
    for (run, r) in runs.iter().zip(&REFERENCE) {
        let d = &run.direct;
        let pass = rel(d.lambda_max, r.lambda) <= 0.05;
        ok &= pass;
        details.push(format!(
            "{}: lambda_max {:.4} ± {:.4} vs {:.3} (dev {:.1}%, ≤5%)",
            run.label,
            d.lambda_max,
            d.lambda_max_stderr,
            r.lambda,
            100.0 * rel(d.lambda_max, r.lambda)
        ));
    }
    out.report("direct lambda_max (T=1e4)", ok, details);
}

fn echo_slopes(out: &mut Outcome, runs: &[LatticeRun]) {
    let mut ok = true;
    let mut details = Vec::new();
    for ((run, r), tol) in runs.iter().zip(&REFERENCE).zip(UPPER_TOL) {
        let g = &run.analysis.g_fit;
        let w = &run.analysis.w_fit;
        let g_ok = rel(g.slope, run.direct.lambda_max) <= 0.07;
        let w_ok = rel(w.slope, r.upper) <= tol;
        ok &= g_ok && w_ok;
        details.push(format!(
            "{}: G slope {:.4} ± {:.4} vs direct {:.4} (dev {:.1}%, ≤7%) [{:.1},{:.1}]; W slope {:.4} ± {:.4} vs {:.3} (dev {:.1}%, ≤{:.0}%) [{:.1},{:.1}]",
            run.label,
            g.slope,
            g.slope_stderr,
            run.direct.lambda_max,
            100.0 * rel(g.slope, run.direct.lambda_max),
            g.t_lo,
            g.t_hi,
            w.slope,
            w.slope_stderr,
            r.upper,
            100.0 * rel(w.slope, r.upper),
            100.0 * tol,
            w.t_lo,
            w.t_hi
        ));
    }
    out.report("echo slopes G -> lambda_max, W -> Lambda (M=200)", ok, details);
}

fn variance_law(out: &mut Outcome, runs: &[LatticeRun]) {
    let mut ok = true;
    let mut details = Vec::new();
    for run in runs {
        let n_nn = run.spec.coordination();
        let ratio = run.direct.var_dlambda.sqrt() / run.direct.lambda_max;
        let expected = 2.0 / n_nn as f64;
        let pass = rel(ratio, expected) <= 0.3;
        ok &= pass;
        details.push(format!(
            "{}: var {:.4} ± {:.4}, sqrt(var)/lambda {:.4} vs 2/N_nn {:.4} (dev {:.1}%, ≤30%)",
            run.label,
            run.direct.var_dlambda,
            run.direct.var_dlambda_stderr,
            ratio,
            expected,
            100.0 * rel(ratio, expected)
        ));
    }
    out.report("fluctuation variance vs 2/N_nn", ok, details);
}

fn tau_consistency(out: &mut Outcome, runs: &[LatticeRun]) {
    let mut ok = true;
    let mut details = Vec::new();
    for (i, (run, r)) in runs.iter().zip(&REFERENCE).enumerate() {
        let rep = &run.analysis.report;
        let (t4, t9, t11) = (rep.tau_erg_eq4, rep.tau_erg_eq9, rep.tau_erg_eq11);
        let (s4, s9) = (rep.tau_erg_eq4_stderr, rep.tau_erg_eq9_stderr);
        let mut checks = vec![("eq11 within 40% of eq4", rel(t11, t4) <= 0.4)];
        if i == 0 {
            checks.push(("eq9 > eq4 beyond errors", t9 - t4 > (s4 * s4 + s9 * s9).sqrt()));
            checks.push(("verdict not-ergodized", rep.verdict == Verdict::NotErgodized));
        } else {
            checks.push(("eq9 within 25% of eq4", rel(t9, t4) <= 0.25));
        }
        let verdicts: Vec<String> = checks
            .iter()
            .map(|(name, pass)| format!("{name}: {}", if *pass { "ok" } else { "no" }))
            .collect();
        ok &= checks.iter().all(|c| c.1);
        details.push(format!(
            "{}: eq4 {t4:.3} ± {s4:.3} (ref {:.2}), eq9 {t9:.3} ± {s9:.3} (ref {:.2}), eq11 {t11:.3} (ref {:.2}), verdict {}; {}",
            run.label,
            r.tau4,
            r.tau9,
            r.tau11,
            rep.verdict.name(),
            verdicts.join(", ")
        ));
    }
    out.report("ergodization time consistency", ok, details);
}

fn ergodicity(out: &mut Outcome, runs: &[LatticeRun]) {
    let mut ok = true;
    let mut details = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let ratio = &run.analysis.ratio;
        let pass = if i == 0 {
            ratio.verdict == Verdict::NotErgodized
        } else {
            ratio.verdict == Verdict::Ergodic && rel(ratio.plateau, ratio.expected) <= 0.5
        };
        ok &= pass;
        details.push(format!(
            "{}: plateau {:.4} vs Lambda-lambda {:.4}, drift {:.2}, trending {}, verdict {} (want {})",
            run.label,
            ratio.plateau,
            ratio.expected,
            ratio.drift,
            ratio.trending,
            ratio.verdict.name(),
            if i == 0 { "not-ergodized" } else { "ergodic" }
        ));
    }
    out.report("ergodicity criterion", ok, details);
}

fn jensen(records: &[Vec<EchoRecord>]) -> (bool, usize) {
    let mut points = 0;
    for rs in records {
        let stats = ergochron::analysis::aggregate(rs).unwrap();
        for (g, w) in stats.g.iter().zip(&stats.w) {
            if w < g {
                return (false, points);
            }
            points += 1;
        }
    }
    (true, points)
}

fn tangent_vs_difference(spec: &LatticeSpec) -> f64 {
    let params = ModelParams::default();
    let table = NeighborTable::build(spec);
    let hop = Hopping::shared(spec);
    let mut rng = realization_rng(4);
    let s0 = prepare_initial(spec, &table, &params, 100.0, Some(100.0), &mut rng).unwrap();
    let delta = random_direction(spec.num_sites(), 1.0, &mut rng);
    let (dt, steps, h) = (1e-3, 1000, 1e-6);
    let (mut s, mut d) = (s0.clone(), delta.clone());
    for _ in 0..steps {
        (s, d) = tangent_step(&hop, &s, &d, params, dt).unwrap();
    }
    let shifted = |sign: f64| {
        let psi: Vec<Complex64> = s0.amplitudes.iter().zip(&delta).map(|(a, b)| a + sign * h * b).collect();
        let mut kernel = SplitStep::new(Arc::clone(&hop), params, dt).unwrap();
        let mut psi = psi;
        kernel.advance(&mut psi, steps);
        psi
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    let diff: f64 = plus
        .iter()
        .zip(&minus)
        .zip(&d)
        .map(|((p, m), t)| ((p - m) / (2.0 * h) - t).norm_sqr())
        .sum();
    let norm: f64 = d.iter().map(|t| t.norm_sqr()).sum();
    (diff / norm).sqrt()
}

fn same_bytes(a: &Path, b: &Path) -> Result<(), String> {
    let mut names: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for name in names {
        let (x, y) = (fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).map_err(|e| format!("{name}: {e}"))?);
        if name == "manifest.txt" {
            // timing lines differ; the hashed file list must not
            let files = |v: &[u8]| -> Vec<String> {
                String::from_utf8_lossy(v).lines().filter(|l| l.starts_with("file ")).map(String::from).collect()
            };
            if files(&x) != files(&y) {
                return Err("manifest file hashes differ".into());
            }
        } else if x != y {
            return Err(format!("{name} differs"));
        }
    }
    Ok(())
}

fn determinism() -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::preset(LatticeSpec::cube_4x4x4());
    config.ensemble_size = 8;
    config.protocol.tau = 8.0;
    config.analysis.window.manual = Some((0.5, 7.5));
    config.analysis.bootstrap = 20;
    config.lyapunov.total_time = 100.0;
    config.lyapunov.max_lag = 40;
    let runs = [("a", 1), ("b", 1), ("c", 2), ("d", 4)];
    // same output path each time (it is part of run.cfg), then set aside
    config.output_dir = dir.path().join("run");
    for (name, workers) in runs {
        run_ensemble(&config, workers).map_err(|e| e.to_string())?;
        fs::rename(&config.output_dir, dir.path().join(name)).unwrap();
    }
    for (name, _) in &runs[1..] {
        same_bytes(&dir.path().join("a"), &dir.path().join(name))?;
    }
    Ok(fs::read_dir(dir.path().join("a")).unwrap().count())
}

fn anderson_weiss(out: &mut Outcome, runs: &[LatticeRun], records: &[Vec<EchoRecord>]) {
    let mut ok = true;
    let mut details = Vec::new();

    // OU oracle: ln⟨exp ∫δλ⟩ / t → σ² τ_c for t ≫ τ_c
    let (sigma2, tau_c, dt_r, t, windows) = (0.1, 0.2, 0.05, 100.0, 1000);
    let len = (t / dt_r) as usize * windows;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rates = ornstein_uhlenbeck(0.0, sigma2, tau_c, dt_r, len, &mut rng);
    let series = StretchSeries::new(dt_r, rates, 0).unwrap();
    let aw = anderson_weiss_check(&series, t).unwrap();
    let expected = sigma2 * tau_c;
    let ou_ok = (aw.lhs - expected).abs() <= 3.0 * aw.lhs_stderr;
    ok &= ou_ok;
    details.push(format!(
        "OU: lhs {:.5} ± {:.5} vs sigma^2 tau_c {expected:.5} ({:.1} sigma, ≤3); rhs {:.5} ± {:.5}; {} windows",
        aw.lhs,
        aw.lhs_stderr,
        (aw.lhs - expected).abs() / aw.lhs_stderr,
        aw.rhs,
        aw.rhs_stderr,
        aw.windows
    ));

    let (jensen_ok, points) = jensen(records);
    ok &= jensen_ok;
    details.push(format!("Jensen W ≥ G: {} over {points} grid points", if jensen_ok { "holds" } else { "violated" }));

    for run in runs {
        let err = tangent_vs_difference(&run.spec);
        ok &= err <= 1e-4;
        details.push(format!("{}: tangent vs central difference over T=1: {err:.2e} (≤1e-4)", run.label));
        if let Ok(aw) = anderson_weiss_check(&run.chains[0], 10.0) {
            details.push(format!(
                "{}: measured series, t=10: lhs {:.4} ± {:.4}, rhs {:.4} ± {:.4}, finite-t {:.4}",
                run.label, aw.lhs, aw.lhs_stderr, aw.rhs, aw.rhs_stderr, aw.finite_t
            ));
        }
    }

    match determinism() {
        Ok(files) => details.push(format!("determinism: {files} artifacts byte-identical across reruns and 1/2/4 workers")),
        Err(e) => {
            ok = false;
            details.push(format!("determinism: {e}"));
        }
    }
    out.report("Anderson-Weiss property suite", ok, details);
}

fn main() {
    let started = Instant::now();
    let mut out = Outcome { results: Vec::new() };
    conservation(&mut out);
    let runs: Vec<LatticeRun> = reference_lattices()
        .into_iter()
        .map(|(label, spec)| table1_run(label, spec))
        .collect();
    direct_lambda(&mut out, &runs);
    echo_slopes(&mut out, &runs);
    variance_law(&mut out, &runs);
    tau_consistency(&mut out, &runs);
    ergodicity(&mut out, &runs);
    let records: Vec<Vec<EchoRecord>> = runs.iter().map(|r| r.records.clone()).collect();
    anderson_weiss(&mut out, &runs, &records);

    let passed = out.results.iter().filter(|r| r.0).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0}s",
        out.results.len(),
        started.elapsed().as_secs_f64()
    );
    for (_, name) in out.results.iter().filter(|r| !r.0) {
        println!("    failing: {name}");
    }
}
