//! Drivers for the spectroscopy sweep, broken-regime relaxation, adiabatic
//! loop, spectrum tables and trajectory ensembles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::fit::{fit_damped_sine, DampedSineFit, FitError};
use crate::dynamics::{
    observables, propagate_expm, propagate_time_dependent, steady_state_of, uniform_grid, DynamicsError, Observables,
    Rk4Options, TimeSeries,
};
use crate::model::{build_heff, build_liouvillian_pair_with, ket_f, ket_plus_x, projector2, ModelError, SystemParams};
use crate::smallmat::{eigendecompose, CMatrix, LinalgError};
use crate::spectral::{
    default_ep_bracket, eigenstates_of_heff, hamiltonian_ep, liouvillian_spectrum_with, locate_liouvillian_ep,
    spectrum_of, track_branches, EpOptions, EpTarget, SpectralError, Spectrum,
};
use crate::trajectory::{ensemble_average, lift, postselect_average, simulate_trajectories, TrajectoryError};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(
        "J = {j} is not below the Hamiltonian EP J_EP = {j_ep}; the relaxation experiment needs the broken regime"
    )]
    RegimeViolation { j: f64, j_ep: f64 },
    #[error("{0}")]
    Invalid(String),
}

fn check_grid(grid: &[f64]) -> Result<(), AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::Invalid("empty J grid".into()));
    }
    if grid.iter().any(|j| !j.is_finite() || *j < 0.0) {
        return Err(AnalysisError::Invalid("J grid values must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::Invalid("J grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Evenly spaced grid from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Samples per fitted record.
    pub samples: usize,
    /// Record length in predicted lifetimes 1/Re[λ0 − λ2].
    pub lifetimes: f64,
    /// Lower bound on the record length in predicted periods.
    pub min_periods: f64,
    /// Record length when the predicted decay rate vanishes (μs).
    pub undamped_t_max: f64,
    pub dephasing_recycle: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { samples: 200, lifetimes: 3.0, min_periods: 2.0, undamped_t_max: 10.0, dephasing_recycle: true }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub j: f64,
    /// NaN when the fit failed.
    pub freq_fit: f64,
    pub rate_fit: f64,
    /// |Im λ2| of L0 + L1.
    pub freq_spec: f64,
    /// Re[λ0 − λ2] of L0 + L1.
    pub rate_spec: f64,
    pub fit: Option<DampedSineFit>,
    pub error: Option<String>,
    /// Fit failed, has a large residual, or covers less than one period.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Onset of complex eigenvalues of L0 + L1, when a bracket search finds one.
    pub j_lep2: Option<f64>,
}

impl SweepTable {
    /// Grid point with the largest fitted decay rate.
    pub fn peak_rate_fit(&self) -> Option<&SweepRow> {
        self.rows.iter().filter(|r| r.rate_fit.is_finite()).max_by(|a, b| a.rate_fit.total_cmp(&b.rate_fit))
    }
}

/// Spectral prediction (frequency, decay rate) of the oscillating mode.
pub fn predicted_oscillation(s: &Spectrum) -> (f64, f64) {
    let l0 = s.eigenvalues[0];
    let l2 = s.oscillation_pair().map(|(_, l)| l).unwrap_or(s.eigenvalues[2]);
    (l2.im.abs(), (l0 - l2).re)
}

fn sweep_row(base: &SystemParams, j: f64, opts: &SweepOptions) -> SweepRow {
    let p = base.with_j(j);
    let mut row = SweepRow {
        j,
        freq_fit: f64::NAN,
        rate_fit: f64::NAN,
        freq_spec: f64::NAN,
        rate_spec: f64::NAN,
        fit: None,
        error: None,
        flagged: true,
    };
    let result = (|| -> Result<DampedSineFit, AnalysisError> {
        let l = build_liouvillian_pair_with(&p, opts.dephasing_recycle).total();
        let (freq, rate) = predicted_oscillation(&spectrum_of(&l)?);
        row.freq_spec = freq;
        row.rate_spec = rate;
        let mut t_max = if rate > 1e-9 { opts.lifetimes / rate } else { opts.undamped_t_max };
        if freq > 1e-9 {
            t_max = t_max.max(opts.min_periods * 2.0 * PI / freq);
        }
        let times = uniform_grid(t_max, opts.samples);
        let series = propagate_expm(&projector2(&ket_f()), &l, &times)?;
        let pf_n: Vec<f64> = series.observables()?.iter().map(|o| o.pf_n).collect();
        Ok(fit_damped_sine(&times, &pf_n)?)
    })();
    match result {
        Ok(fit) => {
            row.freq_fit = fit.frequency;
            row.rate_fit = fit.decay_rate;
            row.flagged = fit.flagged || fit.under_determined;
            row.fit = Some(fit);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Propagates |f⟩ under L0 + L1 at each J, fits Pf^n to a damped sine and
/// tabulates the fit next to the spectral prediction. Rows run in parallel.
pub fn run_spectroscopy_sweep(
    base: &SystemParams,
    grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepTable, AnalysisError> {
    base.validate()?;
    check_grid(grid)?;
    if opts.samples < 2 || !(opts.lifetimes > 0.0) || !(opts.min_periods >= 0.0) || !(opts.undamped_t_max > 0.0) {
        return Err(AnalysisError::Invalid("sweep needs samples ≥ 2 and positive record lengths".into()));
    }
    let rows = grid.par_iter().map(|&j| sweep_row(base, j, opts)).collect();
    let j_lep2 = locate_liouvillian_ep(
        &base.with_delta(0.0),
        EpTarget::WithJumps,
        default_ep_bracket(base),
        &EpOptions::default(),
    )
    .ok()
    .map(|loc| loc.j);
    Ok(SweepTable { rows, j_lep2 })
}

#[derive(Debug, Clone)]
pub struct RelaxationOptions {
    pub t_max: f64,
    pub samples: usize,
    /// Defaults to the lossier H_eff eigenstate |−⟩.
    pub initial_state: Option<[Complex64; 2]>,
    pub dephasing_recycle: bool,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self { t_max: 5.0, samples: 1001, initial_state: None, dephasing_recycle: true }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxationRun {
    pub series: TimeSeries,
    pub observables: Vec<Observables>,
    /// `None` when the leading eigenvalue is degenerate or its eigenmatrix is unphysical.
    pub steady_state: Option<CMatrix>,
    pub initial: [Complex64; 2],
}

/// Evolution of |−⟩ (or a given state) under L0 + L1 in the broken regime.
pub fn run_relaxation_experiment(p: &SystemParams, opts: &RelaxationOptions) -> Result<RelaxationRun, AnalysisError> {
    p.validate()?;
    let j_ep = hamiltonian_ep(p)?;
    if p.j >= j_ep {
        return Err(AnalysisError::RegimeViolation { j: p.j, j_ep });
    }
    if !(opts.t_max > 0.0) || opts.samples < 2 {
        return Err(AnalysisError::Invalid("relaxation needs t_max > 0 and at least 2 samples".into()));
    }
    let initial = match opts.initial_state {
        Some(psi) => {
            let n = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(AnalysisError::Invalid("initial state must be a non-zero finite vector".into()));
            }
            [psi[0] / n, psi[1] / n]
        }
        None => eigenstates_of_heff(p)?.minus,
    };
    let l = build_liouvillian_pair_with(p, opts.dephasing_recycle).total();
    let series = propagate_expm(&projector2(&initial), &l, &uniform_grid(opts.t_max, opts.samples))?;
    let observables = series.observables()?;
    let steady_state = steady_state_of(&spectrum_of(&l)?).ok();
    Ok(RelaxationRun { series, observables, steady_state, initial })
}

#[derive(Debug, Clone, Copy)]
pub struct LoopOptions {
    /// Loop period T (μs).
    pub period: f64,
    /// Peak detuning (rad·μs⁻¹).
    pub amplitude: f64,
    /// +1 for Δ(t) = −A·sin(2πt/T), −1 for the reversed path.
    pub sign: f64,
    pub include_l1: bool,
    pub samples_per_period: usize,
    pub dephasing_recycle: bool,
    pub rk4: Rk4Options,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            period: 4.0,
            amplitude: 30.0 * PI,
            sign: 1.0,
            include_l1: true,
            samples_per_period: 2000,
            dephasing_recycle: true,
            rk4: Rk4Options::default(),
        }
    }
}

impl LoopOptions {
    pub fn detuning(&self, t: f64) -> f64 {
        -self.sign * self.amplitude * (2.0 * PI * t / self.period).sin()
    }
}

#[derive(Debug, Clone)]
pub struct LoopSeries {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Tr[ρ_n H_eff(t)].
    pub energy: Vec<Complex64>,
    pub delta: Vec<f64>,
    /// min over the sampled path of T·|λ+ − λ−| for H_eff.
    pub slow_driving_metric: f64,
    pub series: TimeSeries,
}

impl LoopSeries {
    /// Largest forward-difference entropy rate dS/dt and the midpoint time where it occurs.
    pub fn max_entropy_rate(&self, from: f64, to: f64) -> Option<(f64, f64)> {
        self.t
            .windows(2)
            .zip(self.entropy.windows(2))
            .filter(|(t, _)| t[0] >= from && t[1] <= to)
            .map(|(t, s)| (0.5 * (t[0] + t[1]), (s[1] - s[0]) / (t[1] - t[0])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn heff_splitting(p: &SystemParams) -> Result<f64, AnalysisError> {
    let ev = eigendecompose(&build_heff(p))?.eigenvalues;
    Ok((ev[0] - ev[1]).norm())
}

/// Drives Δ(t) over one period from |+x⟩ and records Bloch components,
/// entropy and the instantaneous energy Tr[ρ_n H_eff(t)].
pub fn run_adiabatic_loop(base: &SystemParams, opts: &LoopOptions) -> Result<LoopSeries, AnalysisError> {
    base.validate()?;
    if !(opts.period > 0.0) || !opts.amplitude.is_finite() || opts.sign.abs() != 1.0 || opts.samples_per_period < 2 {
        return Err(AnalysisError::Invalid("loop needs period > 0, finite amplitude, sign ±1, ≥ 2 samples".into()));
    }
    let times = uniform_grid(opts.period, opts.samples_per_period + 1);
    // The unnormalized state decays roughly at the mean loss rate; removing it
    // keeps the RK4 tolerance meaningful relative to the state.
    let shift = 0.5 * (base.gamma_e + base.gamma_f);
    let generator = |t: f64| {
        let l = build_liouvillian_pair_with(&base.with_delta(opts.detuning(t)), opts.dephasing_recycle)
            .generator(opts.include_l1);
        &l + &CMatrix::identity(4).scale_real(shift)
    };
    let mut series = propagate_time_dependent(&projector2(&ket_plus_x()), &generator, &times, &opts.rk4)?;
    for (rho, &t) in series.rho.iter_mut().zip(&times) {
        *rho = rho.scale_real((-shift * t).exp());
    }

    let n = times.len();
    let mut out = LoopSeries {
        t: times.clone(),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        slow_driving_metric: f64::INFINITY,
        series: TimeSeries { times: Vec::new(), rho: Vec::new() },
    };
    for (rho, &t) in series.rho.iter().zip(&times) {
        let o = observables(rho)?;
        let delta = opts.detuning(t);
        let p = base.with_delta(delta);
        let rho_n = rho.scale_real(1.0 / o.trace);
        out.x.push(o.x);
        out.y.push(o.y);
        out.z.push(o.z);
        out.entropy.push(o.entropy);
        out.energy.push(rho_n.matmul(&build_heff(&p))?.trace());
        out.delta.push(delta);
        out.slow_driving_metric = out.slow_driving_metric.min(opts.period * heff_splitting(&p)?);
    }
    out.series = series;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SpectrumRow {
    pub j: f64,
    /// Liouvillian eigenvalues, columns following continuous branches along the sweep.
    pub eigenvalues: [Complex64; 4],
    /// H_eff eigenvalues (λ+, λ−).
    pub heff: [Complex64; 2],
    pub defective: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    pub include_l1: bool,
    pub dephasing_recycle: bool,
    /// Relative rank tolerance for the defective flag.
    pub defect_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { include_l1: true, dephasing_recycle: true, defect_tol: crate::smallmat::DEFAULT_DEFECT_TOL }
    }
}

/// Liouvillian and H_eff spectra along a J grid, branch-tracked.
pub fn spectrum_table(
    base: &SystemParams,
    grid: &[f64],
    opts: &SpectrumOptions,
) -> Result<Vec<SpectrumRow>, AnalysisError> {
    base.validate()?;
    check_grid(grid)?;
    let spectra = grid
        .par_iter()
        .map(|&j| liouvillian_spectrum_with(&base.with_j(j), opts.include_l1, opts.dephasing_recycle, opts.defect_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let branches = track_branches(&spectra);
    grid.iter()
        .zip(&spectra)
        .zip(&branches)
        .map(|((&j, s), idx)| {
            let st = eigenstates_of_heff(&base.with_j(j))?;
            Ok(SpectrumRow {
                j,
                eigenvalues: std::array::from_fn(|k| s.eigenvalues[idx[k]]),
                heff: [st.lambda_plus, st.lambda_minus],
                defective: s.defective(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub times: Vec<f64>,
    /// Fraction without an e→g jump up to each time.
    pub survival: Vec<f64>,
    /// Post-selected normalized populations; NaN once no trajectory survives.
    pub pe_n_post: Vec<f64>,
    pub pf_n_post: Vec<f64>,
    /// Unconditioned ensemble populations.
    pub pg: Vec<f64>,
    pub pe: Vec<f64>,
    pub pf: Vec<f64>,
}

/// Ensemble of `n` trajectories from a pure (e, f) state with unconditioned
/// and post-selected averages.
pub fn run_trajectory_experiment(
    p: &SystemParams,
    psi0: &[Complex64; 2],
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<TrajectoryRun, AnalysisError> {
    p.validate()?;
    let ens = simulate_trajectories(&lift(psi0), p, times, n, seed)?;
    let avg = ensemble_average(&ens)?;
    let post = postselect_average(&ens)?;
    let obs = post.series.observables()?;
    let m = times.len();
    let pad = |v: Vec<f64>| {
        let mut v = v;
        v.resize(m, f64::NAN);
        v
    };
    let mut survival = post.survival.clone();
    survival.resize(m, 0.0);
    Ok(TrajectoryRun {
        times: times.to_vec(),
        survival,
        pe_n_post: pad(obs.iter().map(|o| o.pe_n).collect()),
        pf_n_post: pad(obs.iter().map(|o| o.pf_n).collect()),
        pg: avg.rho.iter().map(|r| r[(0, 0)].re).collect(),
        pe: avg.rho.iter().map(|r| r[(1, 1)].re).collect(),
        pf: avg.rho.iter().map(|r| r[(2, 2)].re).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::trace_distance;

    fn sweep_params() -> SystemParams {
        SystemParams::new(2.0, 0.0, 4.5, 0.3, 0.5).unwrap()
    }

    fn relax_params() -> SystemParams {
        SystemParams::new(0.8, 0.0, 6.25, 0.25, 0.9).unwrap()
    }

    fn loop_params() -> SystemParams {
        SystemParams::new(30.0, 0.0, 6.25, 0.25, 0.7).unwrap()
    }

    #[test]
    fn sweep_matches_spectrum_far_above_ep() {
        let t = run_spectroscopy_sweep(&sweep_params(), &[3.0, 3.5, 4.0], &SweepOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 3);
        for r in &t.rows {
            assert!(r.error.is_none() && !r.flagged, "{r:?}");
            assert!((r.freq_fit / r.freq_spec - 1.0).abs() < 0.05, "{r:?}");
            assert!((r.rate_fit / r.rate_spec - 1.0).abs() < 0.10, "{r:?}");
        }
        let lep2 = t.j_lep2.unwrap();
        assert!(lep2 > 0.0 && lep2 < 1.0, "{lep2}");
    }

    #[test]
    fn sweep_without_submanifold_decoherence_is_flat() {
        let base = sweep_params().without_submanifold_jumps();
        let t = run_spectroscopy_sweep(&base, &[2.0, 2.5, 3.0], &SweepOptions::default()).unwrap();
        for r in &t.rows {
            // normalized non-Hermitian oscillation is periodic but not sinusoidal
            assert!(r.rate_spec.abs() < 1e-9, "{r:?}");
            assert!(r.rate_fit.abs() < 0.02, "{r:?}");
            assert!((r.freq_fit / r.freq_spec - 1.0).abs() < 0.01, "{r:?}");
        }
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let o = SweepOptions::default();
        assert!(run_spectroscopy_sweep(&sweep_params(), &[], &o).is_err());
        assert!(run_spectroscopy_sweep(&sweep_params(), &[2.0, 1.0], &o).is_err());
    }

    #[test]
    fn relaxation_reaches_steady_state() {
        let run = run_relaxation_experiment(&relax_params(), &RelaxationOptions { t_max: 20.0, ..Default::default() })
            .unwrap();
        let last = run.series.last().unwrap();
        let rho_n = last.scale_real(1.0 / last.trace().re);
        assert!(trace_distance(&rho_n, run.steady_state.as_ref().unwrap()).unwrap() < 1e-4);
        let early = run.series.times.iter().zip(&run.observables).take_while(|(t, _)| **t < 0.5);
        assert!(early.clone().any(|(_, o)| o.entropy > 0.01));
        assert!(run.observables[0].entropy < 1e-9);
    }

    #[test]
    fn relaxation_requires_broken_regime() {
        let p = relax_params().with_j(2.0);
        assert!(matches!(
            run_relaxation_experiment(&p, &RelaxationOptions::default()),
            Err(AnalysisError::RegimeViolation { .. })
        ));
    }

    #[test]
    fn relaxation_accepts_custom_initial_state() {
        let psi = [Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)];
        let run = run_relaxation_experiment(
            &relax_params(),
            &RelaxationOptions { initial_state: Some(psi), ..Default::default() },
        )
        .unwrap();
        assert!((run.observables[0].pe_n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loop_without_jumps_returns_adiabatically() {
        let base = loop_params().without_submanifold_jumps();
        let out = run_adiabatic_loop(&base, &LoopOptions { include_l1: false, ..Default::default() }).unwrap();
        assert!(out.slow_driving_metric > 20.0);
        assert!(*out.x.last().unwrap() > 0.99, "{}", out.x.last().unwrap());
    }

    #[test]
    fn loop_with_jumps_switches() {
        let out = run_adiabatic_loop(&loop_params(), &LoopOptions::default()).unwrap();
        assert_eq!(out.t.len(), 2001);
        assert!(*out.x.last().unwrap() < 0.0);
        assert!((out.delta[500] + 30.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn loss_switch_at_half_period() {
        // follow one H_eff branch through Δ = 0 and check its Im part changes sides
        let opts = LoopOptions::default();
        let base = loop_params();
        let ev = |t: f64| eigendecompose(&build_heff(&base.with_delta(opts.detuning(t)))).unwrap().eigenvalues;
        let mut branch = ev(0.25 * opts.period)[0];
        let mut other_side = Vec::new();
        for k in 1..=1000 {
            let t = opts.period * (0.25 + 0.5 * k as f64 / 1000.0);
            let e = ev(t);
            let (near, far) = if (e[0] - branch).norm() < (e[1] - branch).norm() { (e[0], e[1]) } else { (e[1], e[0]) };
            branch = near;
            other_side.push(near.im - far.im);
        }
        let before = other_side[100];
        let after = other_side[900];
        assert!(before * after < 0.0, "{before} {after}");
    }

    #[test]
    fn spectrum_table_tracks_branches() {
        let grid = linear_grid(0.5, 3.0, 26);
        let rows = spectrum_table(&sweep_params(), &grid, &SpectrumOptions::default()).unwrap();
        assert_eq!(rows.len(), 26);
        for w in rows.windows(2) {
            for k in 0..4 {
                assert!((w[1].eigenvalues[k] - w[0].eigenvalues[k]).norm() < 1.0);
            }
        }
        assert!(rows.iter().all(|r| r.eigenvalues[0].norm() < 1e-9 || r.eigenvalues[0].re <= 1e-9));
    }

    #[test]
    fn trajectory_experiment_shapes() {
        let times = uniform_grid(0.5, 11);
        let run = run_trajectory_experiment(&sweep_params(), &ket_f(), &times, 200, 3).unwrap();
        assert_eq!(run.survival.len(), 11);
        assert_eq!(run.survival[0], 1.0);
        for k in 0..11 {
            assert!((run.pg[k] + run.pe[k] + run.pf[k] - 1.0).abs() < 1e-12);
        }
    }
}
