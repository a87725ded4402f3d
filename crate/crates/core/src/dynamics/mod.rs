//! Discrete Gross-Pitaevskii dynamics on a lattice.
//!
//! The equation of motion is
//!
//! ```text
//! i dψ_j/dt = -J Σ_{k ∈ NN(j)} ψ_k + β |ψ_j|² ψ_j
//! ```
//!
//! with Hamiltonian `H = -J Σ_j Σ_{k∈NN(j)} ψ_j* ψ_k + (β/2) Σ_j |ψ_j|⁴`, where the
//! hopping sum runs over ordered neighbour pairs (each bond counted twice).
//!
//! The production integrator is a Strang split-step: half a nonlinear phase
//! rotation, a full linear step `exp(i J A dt)` applied in the eigenbasis of the
//! adjacency matrix `A`, and another half rotation. Both substeps are exact, so
//! the particle number is conserved to roundoff and the step with `-dt` is the
//! inverse of the step with `dt`. A classical RK4 integrator is kept as an
//! independent reference.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::NeighborTable;

mod hopping;
mod split;

pub use hopping::{DenseHopping, FourierHopping, Hopping};
pub use split::{Scheme, SplitStep};

/// Hopping amplitude `J` and on-site nonlinearity `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub hopping: f64,
    pub nonlinearity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            hopping: 1.0,
            nonlinearity: 0.01,
        }
    }
}

impl ModelParams {
    pub fn new(hopping: f64, nonlinearity: f64) -> Result<Self> {
        if !hopping.is_finite() || !nonlinearity.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "model parameters must be finite (J={hopping}, beta={nonlinearity})"
            )));
        }
        Ok(Self {
            hopping,
            nonlinearity,
        })
    }

    /// Parameters of the sign-reversed Hamiltonian.
    pub fn reversed(self) -> Self {
        Self {
            hopping: -self.hopping,
            nonlinearity: -self.nonlinearity,
        }
    }
}

/// `{J, β} -> {-J, -β}`.
pub fn reverse_params(params: ModelParams) -> ModelParams {
    params.reversed()
}

/// Site amplitudes `ψ_j` at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl FieldState {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// On-site occupations `n_j = |ψ_j|²`.
    pub fn occupations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn particle_number(&self) -> f64 {
        particle_number(self)
    }

    pub fn conj(&self) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|z| z.conj()).collect(),
            time: self.time,
        }
    }
}

/// `N_p = Σ_j |ψ_j|²`.
pub fn particle_number(state: &FieldState) -> f64 {
    state.amplitudes.iter().map(|z| z.norm_sqr()).sum()
}

fn check_size(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::SizeMismatch { expected, got });
    }
    Ok(())
}

/// Total energy of `state`.
pub fn energy(state: &FieldState, params: &ModelParams, table: &NeighborTable) -> Result<f64> {
    check_size(table.num_sites(), state.len())?;
    let psi = &state.amplitudes;
    let mut hop = Complex64::new(0.0, 0.0);
    let mut interaction = 0.0;
    for (j, neighbors) in table.iter().enumerate() {
        let local: Complex64 = neighbors.iter().map(|&k| psi[k]).sum();
        hop += psi[j].conj() * local;
        let n = psi[j].norm_sqr();
        interaction += n * n;
    }
    Ok(-params.hopping * hop.re + 0.5 * params.nonlinearity * interaction)
}

/// Both conserved quantities at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedReport {
    pub energy: f64,
    pub particle_number: f64,
}

pub fn conserved(
    state: &FieldState,
    params: &ModelParams,
    table: &NeighborTable,
) -> Result<ConservedReport> {
    Ok(ConservedReport {
        energy: energy(state, params, table)?,
        particle_number: particle_number(state),
    })
}

/// A single split step `state -> state(t + dt)`; negative `dt` steps backward.
pub fn step_split(
    hopping: &Arc<Hopping>,
    state: &FieldState,
    params: ModelParams,
    dt: f64,
) -> Result<FieldState> {
    check_size(hopping.num_sites(), state.len())?;
    let mut kernel = SplitStep::new(Arc::clone(hopping), params, dt)?;
    let mut out = state.clone();
    kernel.step(&mut out.amplitudes);
    out.time += dt;
    Ok(out)
}

fn rhs(table: &NeighborTable, params: &ModelParams, psi: &[Complex64], out: &mut [Complex64]) {
    for (j, neighbors) in table.iter().enumerate() {
        let local: Complex64 = neighbors.iter().map(|&k| psi[k]).sum();
        let z = psi[j];
        // dψ/dt = i (J Σ ψ_k - β |ψ|² ψ)
        let w = params.hopping * local - params.nonlinearity * z.norm_sqr() * z;
        out[j] = Complex64::new(-w.im, w.re);
    }
}

/// Classical fourth-order Runge-Kutta step, used as an independent reference.
pub fn step_rk4(
    table: &NeighborTable,
    state: &FieldState,
    params: ModelParams,
    dt: f64,
) -> Result<FieldState> {
    check_size(table.num_sites(), state.len())?;
    let mut rk = Rk4::new(table.num_sites());
    let mut out = state.clone();
    rk.step(table, &params, &mut out.amplitudes, dt);
    out.time += dt;
    Ok(out)
}

/// RK4 stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    pub fn step(&mut self, table: &NeighborTable, params: &ModelParams, psi: &mut [Complex64], dt: f64) {
        rhs(table, params, psi, &mut self.k1);
        for ((t, &p), &k) in self.tmp.iter_mut().zip(psi.iter()).zip(&self.k1) {
            *t = p + 0.5 * dt * k;
        }
        rhs(table, params, &self.tmp, &mut self.k2);
        for ((t, &p), &k) in self.tmp.iter_mut().zip(psi.iter()).zip(&self.k2) {
            *t = p + 0.5 * dt * k;
        }
        rhs(table, params, &self.tmp, &mut self.k3);
        for ((t, &p), &k) in self.tmp.iter_mut().zip(psi.iter()).zip(&self.k3) {
            *t = p + dt * k;
        }
        rhs(table, params, &self.tmp, &mut self.k4);
        for (j, p) in psi.iter_mut().enumerate() {
            *p += dt / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
    }
}

/// Number of whole steps in `total`, rejecting totals that are not a multiple
/// of `dt` within roundoff.
pub fn step_count(total: f64, dt: f64) -> Result<usize> {
    if !(total >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need total time >= 0 and dt > 0 (got T={total}, dt={dt})"
        )));
    }
    let steps = (total / dt).round();
    if (steps * dt - total).abs() > 1e-9 * total.max(dt) {
        return Err(Error::InvalidParameter(format!(
            "T={total} is not an integer number of steps of dt={dt}"
        )));
    }
    Ok(steps as usize)
}

/// Evolves `state` for time `total` with the split-step integrator, calling
/// `observer(t, occupations)` every `sample_every` steps, including the
/// initial and final times.
#[allow(clippy::too_many_arguments)]
pub fn evolve<F>(
    hopping: &Arc<Hopping>,
    state: &FieldState,
    params: ModelParams,
    total: f64,
    dt: f64,
    sample_every: usize,
    mut observer: F,
) -> Result<FieldState>
where
    F: FnMut(f64, &[f64]),
{
    check_size(hopping.num_sites(), state.len())?;
    if sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be positive".into()));
    }
    let steps = step_count(total, dt)?;
    let mut kernel = SplitStep::new(Arc::clone(hopping), params, dt)?;
    let mut psi = state.amplitudes.clone();
    let mut occ = vec![0.0; psi.len()];
    let fill = |psi: &[Complex64], occ: &mut [f64]| {
        for (o, z) in occ.iter_mut().zip(psi) {
            *o = z.norm_sqr();
        }
    };
    fill(&psi, &mut occ);
    observer(state.time, &occ);
    let mut done = 0;
    while done < steps {
        let chunk = (sample_every - done % sample_every).min(steps - done);
        kernel.advance(&mut psi, chunk);
        done += chunk;
        if done % sample_every == 0 || done == steps {
            fill(&psi, &mut occ);
            observer(state.time + done as f64 * dt, &occ);
        }
    }
    Ok(FieldState {
        amplitudes: psi,
        time: state.time + steps as f64 * dt,
    })
}

/// Sampled occupations from [`evolve`].
pub fn evolve_recording(
    hopping: &Arc<Hopping>,
    state: &FieldState,
    params: ModelParams,
    total: f64,
    dt: f64,
    sample_every: usize,
) -> Result<(FieldState, Vec<(f64, Vec<f64>)>)> {
    let mut series = Vec::new();
    let end = evolve(hopping, state, params, total, dt, sample_every, |t, n| {
        series.push((t, n.to_vec()))
    })?;
    Ok((end, series))
}
