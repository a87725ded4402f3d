//! Exact linear (hopping) propagator `exp(i J A dt)`.
//!
//! Two equivalent routes to the eigenbasis of the adjacency matrix `A`:
//! a dense symmetric eigendecomposition, valid for any lattice, and a
//! multi-dimensional FFT, valid for periodic rectangular lattices where the
//! plane waves diagonalise `A`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{Boundary, LatticeSpec, NeighborTable};

/// Eigenbasis of the hopping matrix.
#[derive(Clone)]
pub enum Hopping {
    Dense(DenseHopping),
    Fourier(FourierHopping),
}

impl fmt::Debug for Hopping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hopping::Dense(d) => f.debug_struct("Dense").field("n", &d.n).finish(),
            Hopping::Fourier(h) => f.debug_struct("Fourier").field("extents", &h.extents).finish(),
        }
    }
}

impl Hopping {
    /// FFT route for periodic lattices, dense eigendecomposition otherwise.
    pub fn for_lattice(spec: &LatticeSpec) -> Self {
        match spec.boundary() {
            Boundary::Periodic => Hopping::Fourier(FourierHopping::new(spec.extents())),
            Boundary::Open => Hopping::Dense(DenseHopping::new(&NeighborTable::build(spec))),
        }
    }

    pub fn shared(spec: &LatticeSpec) -> Arc<Self> {
        Arc::new(Self::for_lattice(spec))
    }

    /// Dense route regardless of boundary.
    pub fn dense(table: &NeighborTable) -> Self {
        Hopping::Dense(DenseHopping::new(table))
    }

    pub fn num_sites(&self) -> usize {
        match self {
            Hopping::Dense(d) => d.n,
            Hopping::Fourier(f) => f.n,
        }
    }

    /// Adjacency eigenvalues, in the order of this route's mode index.
    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            Hopping::Dense(d) => &d.eigenvalues,
            Hopping::Fourier(f) => &f.eigenvalues,
        }
    }

    /// Per-mode factors `(exp(i scale a_k) - 1)`, including the transform
    /// normalisation.
    pub(crate) fn mode_factors(&self, scale: f64) -> Vec<Complex64> {
        let norm = match self {
            Hopping::Dense(_) => 1.0,
            Hopping::Fourier(f) => 1.0 / f.n as f64,
        };
        self.eigenvalues()
            .iter()
            .map(|&a| expm1_i(scale * a) * norm)
            .collect()
    }

    pub(crate) fn scratch(&self) -> LinearScratch {
        let n = self.num_sites();
        let fft_len = match self {
            Hopping::Dense(_) => 0,
            Hopping::Fourier(f) => f.scratch_len(),
        };
        LinearScratch {
            re: vec![0.0; n],
            im: vec![0.0; n],
            out_re: vec![0.0; n],
            out_im: vec![0.0; n],
            line: vec![Complex64::new(0.0, 0.0); n],
            work: vec![Complex64::new(0.0, 0.0); n],
            fft: vec![Complex64::new(0.0, 0.0); fft_len],
        }
    }

    /// `psi <- psi + U diag(factors) U⁻¹ psi`.
    ///
    /// The propagator is applied as identity plus increment: roundoff in the
    /// transforms then scales with `|exp(i φ) - 1|` instead of with `|ψ|`,
    /// which keeps the particle number free of systematic drift.
    pub(crate) fn apply(&self, factors: &[Complex64], psi: &mut [Complex64], scratch: &mut LinearScratch) {
        match self {
            Hopping::Dense(d) => d.apply(factors, psi, scratch),
            Hopping::Fourier(f) => f.apply(factors, psi, scratch),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LinearScratch {
    re: Vec<f64>,
    im: Vec<f64>,
    out_re: Vec<f64>,
    out_im: Vec<f64>,
    line: Vec<Complex64>,
    work: Vec<Complex64>,
    fft: Vec<Complex64>,
}

/// `A = V diag(a) Vᵀ`.
#[derive(Debug, Clone)]
pub struct DenseHopping {
    n: usize,
    eigenvalues: Vec<f64>,
    /// `V[j][k]` row-major: component of eigenvector `k` on site `j`.
    v: Vec<f64>,
    /// `Vᵀ` row-major.
    vt: Vec<f64>,
}

impl DenseHopping {
    pub fn new(table: &NeighborTable) -> Self {
        let n = table.num_sites();
        let mut adj = DMatrix::<f64>::zeros(n, n);
        for (j, neighbors) in table.iter().enumerate() {
            for &k in neighbors {
                adj[(j, k)] = 1.0;
            }
        }
        let eig = adj.symmetric_eigen();
        let vecs = orthonormalize(eig.eigenvectors);
        let mut v = vec![0.0; n * n];
        let mut vt = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let x = vecs[(j, k)];
                v[j * n + k] = x;
                vt[k * n + j] = x;
            }
        }
        Self {
            n,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            v,
            vt,
        }
    }

    fn apply(&self, factors: &[Complex64], psi: &mut [Complex64], s: &mut LinearScratch) {
        let n = self.n;
        s.re.fill(0.0);
        s.im.fill(0.0);
        // coefficients c = Vᵀ ψ, accumulated as axpys over rows of V
        for (row, z) in self.v.chunks_exact(n).zip(psi.iter()) {
            let (zr, zi) = (z.re, z.im);
            for ((cr, ci), &x) in s.re.iter_mut().zip(s.im.iter_mut()).zip(row) {
                *cr += x * zr;
                *ci += x * zi;
            }
        }
        for ((cr, ci), f) in s.re.iter_mut().zip(s.im.iter_mut()).zip(factors) {
            let c = Complex64::new(*cr, *ci) * f;
            *cr = c.re;
            *ci = c.im;
        }
        s.out_re.fill(0.0);
        s.out_im.fill(0.0);
        for ((row, &cr), &ci) in self.vt.chunks_exact(n).zip(&s.re).zip(&s.im) {
            for ((or, oi), &x) in s.out_re.iter_mut().zip(s.out_im.iter_mut()).zip(row) {
                *or += x * cr;
                *oi += x * ci;
            }
        }
        for ((z, &re), &im) in psi.iter_mut().zip(&s.out_re).zip(&s.out_im) {
            *z += Complex64::new(re, im);
        }
    }
}

/// Two passes of modified Gram-Schmidt over the columns.
fn orthonormalize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    for _ in 0..2 {
        for k in 0..n {
            for i in 0..k {
                let proj = m.column(i).dot(&m.column(k));
                let ci = m.column(i).clone_owned();
                m.column_mut(k).axpy(-proj, &ci, 1.0);
            }
            let norm = m.column(k).norm();
            m.column_mut(k).unscale_mut(norm);
        }
    }
    m
}

/// Plane-wave basis of a periodic rectangular lattice.
#[derive(Clone)]
pub struct FourierHopping {
    n: usize,
    extents: Vec<usize>,
    eigenvalues: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FourierHopping {
    pub fn new(extents: &[usize]) -> Self {
        let n: usize = extents.iter().product();
        let mut planner = FftPlanner::<f64>::new();
        let forward = extents.iter().map(|&l| planner.plan_fft_forward(l)).collect();
        let inverse = extents.iter().map(|&l| planner.plan_fft_inverse(l)).collect();
        // row-major mode index, same layout as the site index
        let mut eigenvalues = vec![0.0; n];
        for (idx, e) in eigenvalues.iter_mut().enumerate() {
            let mut rem = idx;
            for &l in extents.iter().rev() {
                let k = rem % l;
                rem /= l;
                *e += 2.0 * (2.0 * PI * k as f64 / l as f64).cos();
            }
        }
        Self {
            n,
            extents: extents.to_vec(),
            eigenvalues,
            forward,
            inverse,
        }
    }

    fn scratch_len(&self) -> usize {
        self.forward
            .iter()
            .chain(&self.inverse)
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0)
    }

    fn transform(&self, plans: &[Arc<dyn Fft<f64>>], psi: &mut [Complex64], line: &mut [Complex64], fft: &mut [Complex64]) {
        let dims = self.extents.len();
        for axis in 0..dims {
            let len = self.extents[axis];
            let stride: usize = self.extents[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process_with_scratch(psi, fft);
                continue;
            }
            let outer = self.n / (len * stride);
            // gather lines along `axis` into contiguous storage
            let mut pos = 0;
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * len * stride + i;
                    for k in 0..len {
                        line[pos] = psi[base + k * stride];
                        pos += 1;
                    }
                }
            }
            plan.process_with_scratch(line, fft);
            let mut pos = 0;
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * len * stride + i;
                    for k in 0..len {
                        psi[base + k * stride] = line[pos];
                        pos += 1;
                    }
                }
            }
        }
    }

    fn apply(&self, factors: &[Complex64], psi: &mut [Complex64], s: &mut LinearScratch) {
        s.work.copy_from_slice(psi);
        self.transform(&self.forward, &mut s.work, &mut s.line, &mut s.fft);
        for (z, f) in s.work.iter_mut().zip(factors) {
            *z *= f;
        }
        self.transform(&self.inverse, &mut s.work, &mut s.line, &mut s.fft);
        for (z, w) in psi.iter_mut().zip(&s.work) {
            *z += w;
        }
    }
}

/// `exp(i φ) - 1` without cancellation.
pub(crate) fn expm1_i(phi: f64) -> Complex64 {
    let h = (0.5 * phi).sin();
    Complex64::new(-2.0 * h * h, phi.sin())
}
