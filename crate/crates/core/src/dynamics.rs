//! Deterministic propagation of density matrices and the observables derived
//! from them.
//!
//! Three engines are provided: fixed-step RK4 with step halving until the
//! samples converge, the matrix exponential of the generator, and the
//! spectral expansion ρ(t) = Σ c_i e^{λ_i t} ρ_i. States are kept
//! unnormalized; normalized quantities are computed on demand.

use num_complex::Complex64;

use crate::model::{
    build_heff, build_liouvillian_pair_with, build_three_level_generator, unvectorize2, LiouvillianPair, SystemParams,
};
use crate::smallmat::{eigendecompose, expm, CMatrix, LinalgError};
use crate::spectral::{eigenmatrix_normalizer, spectrum_of, SpectralError, Spectrum};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("trace {0:e} too small to normalize")]
    VanishingTrace(f64),
    #[error("leading eigenvalue is degenerate (gap {gap:e})")]
    Degenerate { gap: f64 },
    #[error("state is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPhysical { min_eig: f64 },
    #[error("generator is defective at this working point; use the expm engine")]
    Defective,
    #[error("RK4 did not converge to {tol:e} after {halvings} halvings (last change {change:e})")]
    NoConvergence { tol: f64, halvings: usize, change: f64 },
}

/// Hermiticity and trace tolerance for initial states.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a density matrix.
pub const PSD_TOL: f64 = 1e-9;
/// Traces below this cannot be normalized.
pub const MIN_TRACE: f64 = 1e-12;

/// Sampled density matrices on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    /// Unnormalized ρ(t) at each sample.
    pub rho: Vec<CMatrix>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&CMatrix> {
        self.rho.last()
    }

    /// Observables of the (e, f) block at every sample.
    pub fn observables(&self) -> Result<Vec<Observables>, DynamicsError> {
        self.rho
            .iter()
            .map(|r| if r.rows() == 3 { observables(&crate::model::submanifold_of(r)) } else { observables(r) })
            .collect()
    }

    /// Largest entrywise deviation between two series on the same grid.
    pub fn max_abs_diff(&self, other: &TimeSeries) -> f64 {
        self.rho.iter().zip(&other.rho).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

/// Populations, Bloch vector and entropy of a 2×2 (e, f) density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub pe: f64,
    pub pf: f64,
    pub trace: f64,
    pub pe_n: f64,
    pub pf_n: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// von Neumann entropy of the normalized state, bits.
    pub entropy: f64,
}

fn binary_entropy_bits(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    h(p) + h(1.0 - p)
}

pub fn observables(rho: &CMatrix) -> Result<Observables, DynamicsError> {
    if rho.rows() != 2 || rho.cols() != 2 {
        return Err(DynamicsError::InvalidState(format!("expected 2x2, got {}x{}", rho.rows(), rho.cols())));
    }
    let pe = rho[(0, 0)].re;
    let pf = rho[(1, 1)].re;
    let trace = pe + pf;
    if !(trace > MIN_TRACE) {
        return Err(DynamicsError::VanishingTrace(trace));
    }
    let coh = 0.5 * (rho[(0, 1)] + rho[(1, 0)].conj()) / trace;
    let x = 2.0 * coh.re;
    let y = -2.0 * coh.im;
    let z = (pe - pf) / trace;
    let r = (x * x + y * y + z * z).sqrt().min(1.0);
    Ok(Observables {
        pe,
        pf,
        trace,
        pe_n: pe / trace,
        pf_n: pf / trace,
        x,
        y,
        z,
        entropy: binary_entropy_bits(0.5 * (1.0 + r)),
    })
}

/// Tr[ρ H_eff] for a unit-trace 2×2 ρ.
pub fn energy_expectation(rho: &CMatrix, p: &SystemParams) -> Complex64 {
    let h = build_heff(p);
    (&h * rho).trace()
}

/// Smallest eigenvalue of the Hermitian part of `rho`.
pub fn min_eigenvalue(rho: &CMatrix) -> Result<f64, DynamicsError> {
    let herm = (rho + &rho.adjoint()).scale_real(0.5);
    if herm.rows() == 2 {
        let a = herm[(0, 0)].re;
        let d = herm[(1, 1)].re;
        let b = herm[(0, 1)].norm();
        return Ok(0.5 * (a + d) - ((0.5 * (a - d)).powi(2) + b * b).sqrt());
    }
    let eig = eigendecompose(&herm)?;
    Ok(eig.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
}

/// Checks Hermiticity and positivity; `unit_trace` demands tr ρ = 1, otherwise 0 < tr ρ ≤ 1.
pub fn validate_density(rho: &CMatrix, dim: usize, unit_trace: bool) -> Result<(), DynamicsError> {
    if rho.rows() != dim || rho.cols() != dim {
        return Err(DynamicsError::InvalidState(format!("expected {dim}x{dim}, got {}x{}", rho.rows(), rho.cols())));
    }
    if rho.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DynamicsError::InvalidState("non-finite entries".into()));
    }
    if rho.hermiticity_defect() > STATE_TOL {
        return Err(DynamicsError::InvalidState(format!("not Hermitian (defect {:e})", rho.hermiticity_defect())));
    }
    let tr = rho.trace().re;
    if unit_trace && (tr - 1.0).abs() > STATE_TOL {
        return Err(DynamicsError::InvalidState(format!("trace {tr} != 1")));
    }
    if !unit_trace && !(tr > MIN_TRACE && tr <= 1.0 + STATE_TOL) {
        return Err(DynamicsError::InvalidState(format!("trace {tr} outside (0, 1]")));
    }
    let m = min_eigenvalue(rho)?;
    if m < -PSD_TOL {
        return Err(DynamicsError::InvalidState(format!("negative eigenvalue {m:e}")));
    }
    Ok(())
}

/// ½‖a − b‖₁ for Hermitian a, b.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64, DynamicsError> {
    let d = a - b;
    let herm = (&d + &d.adjoint()).scale_real(0.5);
    let eig = eigendecompose(&herm)?;
    Ok(0.5 * eig.eigenvalues.iter().map(|z| z.re.abs()).sum::<f64>())
}

/// Normalized eigenmatrix of the leading Liouvillian eigenvalue.
pub fn steady_state(l: &CMatrix) -> Result<CMatrix, DynamicsError> {
    steady_state_of(&spectrum_of(l)?)
}

pub fn steady_state_of(s: &Spectrum) -> Result<CMatrix, DynamicsError> {
    let gap = (s.eigenvalues[0] - s.eigenvalues[1]).norm();
    if gap <= 1e-8 {
        return Err(DynamicsError::Degenerate { gap });
    }
    let rho = s.eigenmatrices[0].clone();
    if (rho.trace() - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(DynamicsError::NotPhysical { min_eig: f64::NAN });
    }
    let rho = (&rho + &rho.adjoint()).scale_real(0.5);
    let m = min_eigenvalue(&rho)?;
    if m < -PSD_TOL {
        return Err(DynamicsError::NotPhysical { min_eig: m });
    }
    Ok(rho)
}

fn validate_grid(times: &[f64]) -> Result<(), DynamicsError> {
    if times.is_empty() {
        return Err(DynamicsError::BadGrid("empty".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::BadGrid("non-finite time".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::BadGrid("times must be non-decreasing".into()));
    }
    Ok(())
}

/// Evenly spaced grid of `n` samples on [0, t_max].
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Rk4Options {
    pub initial_step: f64,
    /// Halving stops once no sample changes by more than this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for Rk4Options {
    fn default() -> Self {
        Self { initial_step: 1e-3, tol: 1e-8, max_halvings: 12 }
    }
}

/// Linear generator for dv/dt = G(t)·v.
pub enum Generator<'a> {
    Fixed(&'a CMatrix),
    TimeDependent(&'a (dyn Fn(f64) -> CMatrix + Sync)),
}

impl Generator<'_> {
    fn dim(&self, t0: f64) -> usize {
        match self {
            Generator::Fixed(m) => m.rows(),
            Generator::TimeDependent(f) => f(t0).rows(),
        }
    }
}

fn axpy(out: &mut [Complex64], a: &[Complex64], s: f64, b: &[Complex64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x + y * s;
    }
}

/// Classic RK4 with `h` as the maximum step; each grid interval is split into equal substeps.
pub fn rk4_fixed(gen: &Generator<'_>, v0: &[Complex64], times: &[f64], h: f64) -> Vec<Vec<Complex64>> {
    let n = v0.len();
    let mut v = v0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    out.push(v.clone());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
    );
    let deriv = |t: f64, x: &[Complex64], k: &mut [Complex64]| match gen {
        Generator::Fixed(m) => m.matvec_into(x, k),
        Generator::TimeDependent(f) => f(t).matvec_into(x, k),
    };
    for w in times.windows(2) {
        let span = w[1] - w[0];
        if span <= 0.0 {
            out.push(v.clone());
            continue;
        }
        let steps = (span / h - 1e-9).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * dt;
            deriv(t, &v, &mut k1);
            axpy(&mut tmp, &v, 0.5 * dt, &k1);
            deriv(t + 0.5 * dt, &tmp, &mut k2);
            axpy(&mut tmp, &v, 0.5 * dt, &k2);
            deriv(t + 0.5 * dt, &tmp, &mut k3);
            axpy(&mut tmp, &v, dt, &k3);
            deriv(t + dt, &tmp, &mut k4);
            for i in 0..n {
                v[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        out.push(v.clone());
    }
    out
}

/// RK4 with the step halved until successive runs agree to `opts.tol` at every sample.
pub fn rk4_converged(
    gen: &Generator<'_>,
    v0: &[Complex64],
    times: &[f64],
    opts: &Rk4Options,
) -> Result<Vec<Vec<Complex64>>, DynamicsError> {
    validate_grid(times)?;
    if gen.dim(times[0]) != v0.len() {
        return Err(LinalgError::Shape(format!("state length {} vs generator {}", v0.len(), gen.dim(times[0]))).into());
    }
    let mut h = opts.initial_step;
    let mut coarse = rk4_fixed(gen, v0, times, h);
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_halvings {
        h *= 0.5;
        let fine = rk4_fixed(gen, v0, times, h);
        change = coarse
            .iter()
            .zip(&fine)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        if change < opts.tol {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(DynamicsError::NoConvergence { tol: opts.tol, halvings: opts.max_halvings, change })
}

fn to_series(times: &[f64], vs: Vec<Vec<Complex64>>, dim: usize) -> TimeSeries {
    TimeSeries {
        times: times.to_vec(),
        rho: vs.into_iter().map(|v| CMatrix::unvectorize(&v, dim).expect("square")).collect(),
    }
}

/// Full three-level master equation by RK4.
pub fn propagate_lindblad3(rho0: &CMatrix, p: &SystemParams, times: &[f64]) -> Result<TimeSeries, DynamicsError> {
    propagate_lindblad3_with(rho0, p, times, &Rk4Options::default())
}

pub fn propagate_lindblad3_with(
    rho0: &CMatrix,
    p: &SystemParams,
    times: &[f64],
    opts: &Rk4Options,
) -> Result<TimeSeries, DynamicsError> {
    validate_density(rho0, 3, true)?;
    let g = build_three_level_generator(p);
    let vs = rk4_converged(&Generator::Fixed(&g), &rho0.vectorize(), times, opts)?;
    Ok(to_series(times, vs, 3))
}

/// Submanifold evolution under `L0` or `L0 + L1` by RK4.
pub fn propagate_hybrid(
    rho0: &CMatrix,
    p: &SystemParams,
    times: &[f64],
    include_l1: bool,
) -> Result<TimeSeries, DynamicsError> {
    let pair = build_liouvillian_pair_with(p, true);
    propagate_pair(rho0, &pair, times, include_l1, &Rk4Options::default())
}

pub fn propagate_pair(
    rho0: &CMatrix,
    pair: &LiouvillianPair,
    times: &[f64],
    include_l1: bool,
    opts: &Rk4Options,
) -> Result<TimeSeries, DynamicsError> {
    validate_density(rho0, 2, false)?;
    let g = pair.generator(include_l1);
    let vs = rk4_converged(&Generator::Fixed(&g), &rho0.vectorize(), times, opts)?;
    Ok(to_series(times, vs, 2))
}

/// RK4 under a time-dependent generator, stages evaluated at their own times.
pub fn propagate_time_dependent(
    rho0: &CMatrix,
    generator: &(dyn Fn(f64) -> CMatrix + Sync),
    times: &[f64],
    opts: &Rk4Options,
) -> Result<TimeSeries, DynamicsError> {
    let dim = rho0.rows();
    validate_density(rho0, dim, dim == 3)?;
    let vs = rk4_converged(&Generator::TimeDependent(generator), &rho0.vectorize(), times, opts)?;
    Ok(to_series(times, vs, dim))
}

/// exp(L·(t − t0))·vec ρ0 at every sample, each from the initial state.
pub fn propagate_expm(rho0: &CMatrix, l: &CMatrix, times: &[f64]) -> Result<TimeSeries, DynamicsError> {
    validate_grid(times)?;
    let dim = rho0.rows();
    if l.rows() != dim * dim {
        return Err(LinalgError::Shape(format!("{}x{} generator for {dim}x{dim} state", l.rows(), l.cols())).into());
    }
    let v0 = rho0.vectorize();
    let mut vs = Vec::with_capacity(times.len());
    for &t in times {
        vs.push(expm(&l.scale_real(t - times[0]))?.matvec(&v0)?);
    }
    Ok(to_series(times, vs, dim))
}

/// Coefficients c_i with vec ρ0 = Σ c_i vec ρ_i over the spectrum's eigenmatrices.
pub fn spectral_coefficients(rho0: &CMatrix, s: &Spectrum) -> Result<Vec<Complex64>, DynamicsError> {
    if s.defective() {
        return Err(DynamicsError::Defective);
    }
    let dual = s.eig.dual_basis()?;
    let raw = dual.matvec(&rho0.vectorize())?;
    Ok(raw.iter().enumerate().map(|(i, r)| r * eigenmatrix_normalizer(&s.eig.eigenvector(i))).collect())
}

/// ρ(t) = Σ c_i e^{λ_i t} ρ_i.
pub fn spectral_propagate(rho0: &CMatrix, l: &CMatrix, t: f64) -> Result<CMatrix, DynamicsError> {
    let s = spectrum_of(l)?;
    spectral_propagate_with(rho0, &s, t)
}

pub fn spectral_propagate_with(rho0: &CMatrix, s: &Spectrum, t: f64) -> Result<CMatrix, DynamicsError> {
    let c = spectral_coefficients(rho0, s)?;
    let mut out = CMatrix::zeros(2, 2);
    for (i, ci) in c.iter().enumerate() {
        out = &out + &s.eigenmatrices[i].scale(ci * (s.eigenvalues[i] * t).exp());
    }
    Ok(out)
}

pub fn spectral_series(rho0: &CMatrix, l: &CMatrix, times: &[f64]) -> Result<TimeSeries, DynamicsError> {
    validate_grid(times)?;
    validate_density(rho0, 2, false)?;
    let s = spectrum_of(l)?;
    let rho = times.iter().map(|&t| spectral_propagate_with(rho0, &s, t - times[0])).collect::<Result<_, _>>()?;
    Ok(TimeSeries { times: times.to_vec(), rho })
}

/// Normalizes a 2×2 vector state to a projector.
pub fn pure_state(psi: &[Complex64]) -> CMatrix {
    let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<Complex64> = psi.iter().map(|z| z / n).collect();
    CMatrix::outer(&v, &v)
}

/// Normalized 2×2 ρ from an unnormalized vectorized state.
pub fn normalized(rho: &CMatrix) -> Result<CMatrix, DynamicsError> {
    let tr = rho.trace().re;
    if !(tr > MIN_TRACE) {
        return Err(DynamicsError::VanishingTrace(tr));
    }
    Ok(rho.scale_real(1.0 / tr))
}

/// Unvectorizes a 4-vector and reports its observables.
pub fn observables_of_vec(v: &[Complex64]) -> Result<Observables, DynamicsError> {
    observables(&unvectorize2(v))
}
