//! Time-symmetric split-step kernels.
//!
//! A step is a symmetric composition of Strang substeps
//! `N(w h/2) L(w h) N(w h/2)`, where `N` is the exact on-site phase rotation
//! and `L` the exact hopping propagator. Consecutive half rotations are fused.

use std::sync::Arc;

use num_complex::Complex64;

use super::hopping::{Hopping, LinearScratch};
use super::ModelParams;
use crate::error::{Error, Result};

/// Composition scheme of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Plain Strang splitting, second order.
    Strang,
    /// Triple-jump composition of three Strang substeps, fourth order.
    #[default]
    TripleJump,
}

impl Scheme {
    pub fn weights(self) -> Vec<f64> {
        match self {
            Scheme::Strang => vec![1.0],
            Scheme::TripleJump => {
                let w1 = 1.0 / (2.0 - 2f64.cbrt());
                vec![w1, 1.0 - 2.0 * w1, w1]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Strang => "strang",
            Scheme::TripleJump => "triple-jump",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "strang" => Ok(Scheme::Strang),
            "triple-jump" => Ok(Scheme::TripleJump),
            other => Err(Error::InvalidParameter(format!("unknown integrator scheme `{other}`"))),
        }
    }
}

/// Split-step kernel for fixed `(params, dt, scheme)` with its own scratch
/// buffers. Clone one per worker; the eigenbasis is shared.
#[derive(Debug, Clone)]
pub struct SplitStep {
    hopping: Arc<Hopping>,
    params: ModelParams,
    dt: f64,
    scheme: Scheme,
    weights: Vec<f64>,
    /// Per-stage hopping mode factors.
    factors: Vec<Vec<Complex64>>,
    scratch: LinearScratch,
    theta: Vec<f64>,
}

impl SplitStep {
    pub fn new(hopping: Arc<Hopping>, params: ModelParams, dt: f64) -> Result<Self> {
        Self::with_scheme(hopping, params, dt, Scheme::default())
    }

    pub fn with_scheme(hopping: Arc<Hopping>, params: ModelParams, dt: f64, scheme: Scheme) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be finite and nonzero, got {dt}"
            )));
        }
        let n = hopping.num_sites();
        let scratch = hopping.scratch();
        let mut kernel = Self {
            hopping,
            params,
            dt,
            scheme,
            weights: scheme.weights(),
            factors: Vec::new(),
            scratch,
            theta: vec![0.0; n],
        };
        kernel.set_params(params);
        Ok(kernel)
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn num_sites(&self) -> usize {
        self.hopping.num_sites()
    }

    pub fn hopping(&self) -> &Arc<Hopping> {
        &self.hopping
    }

    /// Switches the model parameters, e.g. to the reversed Hamiltonian.
    pub fn set_params(&mut self, params: ModelParams) {
        self.params = params;
        self.factors = self
            .weights
            .iter()
            .map(|w| self.hopping.mode_factors(params.hopping * w * self.dt))
            .collect();
    }

    /// Rotation length, in units of dt, following linear stage `stage`.
    fn rotation_after(&self, stage: usize, last_step: bool) -> f64 {
        let w = &self.weights;
        if stage + 1 < w.len() {
            0.5 * (w[stage] + w[stage + 1])
        } else if last_step {
            0.5 * w[stage]
        } else {
            0.5 * (w[stage] + w[0])
        }
    }

    /// `steps` steps in place.
    pub fn advance(&mut self, psi: &mut [Complex64], steps: usize) {
        if steps == 0 {
            return;
        }
        debug_assert_eq!(psi.len(), self.num_sites());
        let beta_dt = self.params.nonlinearity * self.dt;
        rotate(psi, &mut self.theta, beta_dt * 0.5 * self.weights[0]);
        for s in 0..steps {
            for stage in 0..self.weights.len() {
                self.hopping.apply(&self.factors[stage], psi, &mut self.scratch);
                let h = self.rotation_after(stage, s + 1 == steps);
                rotate(psi, &mut self.theta, beta_dt * h);
            }
        }
    }

    pub fn step(&mut self, psi: &mut [Complex64]) {
        self.advance(psi, 1);
    }

    /// `steps` steps of the field together with a tangent vector `delta`,
    /// which is mapped by the exact derivative of the discrete step.
    pub fn advance_tangent(&mut self, psi: &mut [Complex64], delta: &mut [Complex64], steps: usize) {
        if steps == 0 {
            return;
        }
        debug_assert_eq!(psi.len(), delta.len());
        let beta_dt = self.params.nonlinearity * self.dt;
        rotate_tangent(psi, delta, &mut self.theta, beta_dt * 0.5 * self.weights[0]);
        for s in 0..steps {
            for stage in 0..self.weights.len() {
                self.hopping.apply(&self.factors[stage], psi, &mut self.scratch);
                self.hopping.apply(&self.factors[stage], delta, &mut self.scratch);
                let h = self.rotation_after(stage, s + 1 == steps);
                rotate_tangent(psi, delta, &mut self.theta, beta_dt * h);
            }
        }
    }
}

/// Largest `|θ|` handled by the polynomial sine/cosine.
const POLY_LIMIT: f64 = 0.1;

/// `(sin θ, cos θ - 1)` by Taylor polynomials; relative truncation below
/// 1e-18 for `|θ| ≤ 0.1`.
#[inline(always)]
fn small_sin_cosm1(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let s = x * (1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0)))));
    let cm1 = -x2 / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0 * (1.0 - x2 / 90.0))));
    (s, cm1)
}

#[inline(always)]
fn sin_cosm1(x: f64) -> (f64, f64) {
    let h = (0.5 * x).sin();
    (x.sin(), -2.0 * h * h)
}

/// `ψ_j <- ψ_j exp(-i b |ψ_j|²)`, applied as `ψ + ψ (e^{-iθ} - 1)` so the
/// rounding of the near-unit rotation factor does not bias `|ψ|`.
fn rotate(psi: &mut [Complex64], theta: &mut [f64], b: f64) {
    let mut max = 0.0f64;
    for (t, z) in theta.iter_mut().zip(psi.iter()) {
        *t = -b * z.norm_sqr();
        max = max.max(t.abs());
    }
    if max <= POLY_LIMIT {
        for (z, &t) in psi.iter_mut().zip(theta.iter()) {
            let (s, cm1) = small_sin_cosm1(t);
            *z += Complex64::new(z.re * cm1 - z.im * s, z.re * s + z.im * cm1);
        }
    } else {
        for (z, &t) in psi.iter_mut().zip(theta.iter()) {
            let (s, cm1) = sin_cosm1(t);
            *z += Complex64::new(z.re * cm1 - z.im * s, z.re * s + z.im * cm1);
        }
    }
}

/// Rotation and its derivative:
/// `δ' = e^{-iθ} (δ - i b ψ · 2 Re(ψ* δ))` with `θ = b |ψ|²`.
fn rotate_tangent(psi: &mut [Complex64], delta: &mut [Complex64], theta: &mut [f64], b: f64) {
    let mut max = 0.0f64;
    for (t, z) in theta.iter_mut().zip(psi.iter()) {
        *t = -b * z.norm_sqr();
        max = max.max(t.abs());
    }
    let small = max <= POLY_LIMIT;
    for ((z, d), &t) in psi.iter_mut().zip(delta.iter_mut()).zip(theta.iter()) {
        let (s, cm1) = if small { small_sin_cosm1(t) } else { sin_cosm1(t) };
        let rot_m1 = Complex64::new(cm1, s);
        let dn = 2.0 * (z.re * d.re + z.im * d.im);
        let shifted = *d - Complex64::new(0.0, b * dn) * *z;
        *d = shifted + rot_m1 * shifted;
        *z += rot_m1 * *z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_sin_cos_is_accurate() {
        for i in -100..=100 {
            let x = i as f64 * POLY_LIMIT / 100.0;
            let (s, cm1) = small_sin_cosm1(x);
            let (s2, cm12) = sin_cosm1(x);
            assert!((s - s2).abs() <= 1e-15 * s2.abs(), "{x}");
            assert!((cm1 - cm12).abs() <= 1e-15 * cm12.abs(), "{x}");
            assert!((1.0 + cm1 - x.cos()).abs() < 2e-16, "{x}");
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for scheme in [Scheme::Strang, Scheme::TripleJump] {
            let s: f64 = scheme.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for scheme in [Scheme::Strang, Scheme::TripleJump] {
            assert_eq!(Scheme::parse(scheme.name()).unwrap(), scheme);
        }
        assert!(Scheme::parse("euler").is_err());
    }
}
