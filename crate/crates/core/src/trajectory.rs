//! Quantum-jump unraveling of the three-level master equation with
//! post-selection on the absence of |e⟩ → |g⟩ jumps.
//!
//! Each trajectory evolves under exp(−i·H_nj·s), where H_nj carries every
//! anti-Hermitian damping term, and jumps when the squared norm falls to a
//! uniform random threshold. The jump channel is drawn with weights
//! ⟨ψ|L_k†L_k|ψ⟩. Trajectory `i` uses stream `i` of a ChaCha8 generator seeded
//! with the master seed, so results do not depend on scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::TimeSeries;
use crate::model::{build_heff3, jump_operators_3, JumpChannel, SystemParams};
use crate::smallmat::{expm, CMatrix, LinalgError, I};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("ensemble is empty")]
    Empty,
    #[error("trajectory {index} collapsed to zero norm at t = {time}")]
    ZeroNorm { index: usize, time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Master seed; the trajectory used ChaCha stream `index`.
    pub seed: u64,
    pub index: usize,
    pub jump_events: Vec<JumpEvent>,
    /// False exactly when an e→g event occurred inside the window.
    pub survived: bool,
    /// Normalized state (g, e, f) at each grid time.
    pub state_path: Vec<[Complex64; 3]>,
}

impl TrajectoryRecord {
    /// Time of the e→g jump, if any.
    pub fn decay_time(&self) -> Option<f64> {
        self.jump_events.iter().find(|e| e.channel == JumpChannel::EToG).map(|e| e.time)
    }

    pub fn survived_until(&self, t: f64) -> bool {
        self.decay_time().is_none_or(|td| td > t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
}

struct Unraveling {
    h: CMatrix,
    jumps: Vec<(JumpChannel, CMatrix)>,
    /// Σ L_k†L_k, the norm-loss rate operator.
    decay: CMatrix,
    /// exp(−iH·Δt) for each grid interval.
    steps: Vec<CMatrix>,
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn normalized(v: &[Complex64]) -> [Complex64; 3] {
    let n = norm_sqr(v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Unraveling {
    fn new(p: &SystemParams, times: &[f64]) -> Result<Self, TrajectoryError> {
        let h = build_heff3(p);
        let jumps = jump_operators_3(p);
        let mut decay = CMatrix::zeros(3, 3);
        for (_, l) in &jumps {
            decay = &decay + &(&l.adjoint() * l);
        }
        let steps = times.windows(2).map(|w| expm(&h.scale(-I * (w[1] - w[0])))).collect::<Result<_, _>>()?;
        Ok(Self { h, jumps, decay, steps })
    }

    fn evolve(&self, v: &[Complex64], s: f64) -> Result<Vec<Complex64>, TrajectoryError> {
        Ok(expm(&self.h.scale(-I * s))?.matvec_unchecked(v))
    }

    /// Solves ‖exp(−iHs)φ‖² = r for s in (0, s_max] by safeguarded Newton.
    fn jump_time(&self, phi: &[Complex64], r: f64, s_max: f64) -> Result<(f64, Vec<Complex64>), TrajectoryError> {
        let (mut lo, mut hi) = (0.0, s_max);
        let mut s = 0.5 * s_max;
        let mut best = (s_max, self.evolve(phi, s_max)?);
        for _ in 0..100 {
            let v = self.evolve(phi, s)?;
            let f = norm_sqr(&v) - r;
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
                best = (s, v.clone());
            }
            if f.abs() <= 1e-14 || hi - lo <= 1e-15 * s_max.max(1.0) {
                return Ok((s, v));
            }
            let df = -self.decay.expectation(&v, &v).re;
            let newton = if df < 0.0 { s - f / df } else { f64::NAN };
            s = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(best)
    }

    fn run(
        &self,
        psi0: &[Complex64; 3],
        times: &[f64],
        seed: u64,
        index: usize,
    ) -> Result<TrajectoryRecord, TrajectoryError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut events = Vec::new();
        let mut path = Vec::with_capacity(times.len());
        let mut phi: Vec<Complex64> = psi0.to_vec();
        let mut threshold: f64 = rng.random();
        path.push(normalized(&phi));
        for (k, w) in times.windows(2).enumerate() {
            let mut t = w[0];
            let mut next = self.steps[k].matvec_unchecked(&phi);
            while norm_sqr(&next) <= threshold {
                let (s, at_jump) = self.jump_time(&phi, threshold, w[1] - t)?;
                t += s;
                let weights: Vec<f64> =
                    self.jumps.iter().map(|(_, l)| norm_sqr(&l.matvec_unchecked(&at_jump))).collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(TrajectoryError::ZeroNorm { index, time: t });
                }
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = weights.iter().rposition(|&w| w > 0.0).expect("positive total");
                for (c, &wt) in weights.iter().enumerate() {
                    acc += wt;
                    if wt > 0.0 && u < acc {
                        chosen = c;
                        break;
                    }
                }
                let (channel, l) = &self.jumps[chosen];
                let jumped = l.matvec_unchecked(&at_jump);
                if norm_sqr(&jumped) <= 0.0 {
                    return Err(TrajectoryError::ZeroNorm { index, time: t });
                }
                events.push(JumpEvent { time: t, channel: *channel });
                phi = normalized(&jumped).to_vec();
                threshold = rng.random();
                next = if w[1] > t { self.evolve(&phi, w[1] - t)? } else { phi.clone() };
            }
            phi = next;
            if !(norm_sqr(&phi) > 0.0) {
                return Err(TrajectoryError::ZeroNorm { index, time: w[1] });
            }
            path.push(normalized(&phi));
        }
        let survived = !events.iter().any(|e| e.channel == JumpChannel::EToG);
        Ok(TrajectoryRecord { seed, index, jump_events: events, survived, state_path: path })
    }
}

fn check_inputs(psi0: &[Complex64; 3], times: &[f64]) -> Result<(), TrajectoryError> {
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(TrajectoryError::BadGrid("times must be finite, non-empty and non-decreasing".into()));
    }
    if psi0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || (norm_sqr(psi0) - 1.0).abs() > 1e-10 {
        return Err(TrajectoryError::InvalidState(format!("squared norm {} != 1", norm_sqr(psi0))));
    }
    Ok(())
}

/// Runs `n` trajectories in parallel; the result is independent of thread count.
pub fn simulate_trajectories(
    psi0: &[Complex64; 3],
    p: &SystemParams,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<Ensemble, TrajectoryError> {
    check_inputs(psi0, times)?;
    if n == 0 {
        return Err(TrajectoryError::Empty);
    }
    let unr = Unraveling::new(p, times)?;
    let records = (0..n).into_par_iter().map(|i| unr.run(psi0, times, seed, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble { times: times.to_vec(), seed, records })
}

/// Single trajectory `index` of the ensemble with master `seed`.
pub fn simulate_one(
    psi0: &[Complex64; 3],
    p: &SystemParams,
    times: &[f64],
    seed: u64,
    index: usize,
) -> Result<TrajectoryRecord, TrajectoryError> {
    check_inputs(psi0, times)?;
    Unraveling::new(p, times)?.run(psi0, times, seed, index)
}

/// Unconditioned ensemble mean of |ψ⟩⟨ψ| (3×3).
pub fn ensemble_average(ens: &Ensemble) -> Result<TimeSeries, TrajectoryError> {
    if ens.records.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    let n = ens.records.len() as f64;
    let rho = (0..ens.times.len())
        .map(|k| {
            let mut acc = CMatrix::zeros(3, 3);
            for r in &ens.records {
                let psi = &r.state_path[k];
                for a in 0..3 {
                    for b in 0..3 {
                        acc[(a, b)] += psi[a] * psi[b].conj();
                    }
                }
            }
            acc.scale_real(1.0 / n)
        })
        .collect();
    Ok(TimeSeries { times: ens.times.clone(), rho })
}

#[derive(Debug, Clone)]
pub struct PostSelected {
    /// Mean normalized (e, f) density matrix over survivors at each kept time.
    pub series: TimeSeries,
    /// Fraction of trajectories with no e→g jump up to each kept time.
    pub survival: Vec<f64>,
    pub survivors: Vec<usize>,
    /// Index of the first grid time without survivors, if the series was cut there.
    pub truncated_at: Option<usize>,
}

pub fn postselect_average(ens: &Ensemble) -> Result<PostSelected, TrajectoryError> {
    if ens.records.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    let n = ens.records.len();
    let mut series = TimeSeries { times: Vec::new(), rho: Vec::new() };
    let mut survival = Vec::new();
    let mut survivors = Vec::new();
    let mut truncated_at = None;
    for (k, &t) in ens.times.iter().enumerate() {
        let mut acc = CMatrix::zeros(2, 2);
        let mut count = 0usize;
        for r in ens.records.iter().filter(|r| r.survived_until(t)) {
            let psi = &r.state_path[k];
            for a in 0..2 {
                for b in 0..2 {
                    acc[(a, b)] += psi[a + 1] * psi[b + 1].conj();
                }
            }
            count += 1;
        }
        if count == 0 {
            truncated_at = Some(k);
            break;
        }
        series.times.push(t);
        series.rho.push(acc.scale_real(1.0 / count as f64));
        survival.push(count as f64 / n as f64);
        survivors.push(count);
    }
    Ok(PostSelected { series, survival, survivors, truncated_at })
}

/// Embeds a 2-level (e, f) state into (g, e, f).
pub fn lift(psi: &[Complex64; 2]) -> [Complex64; 3] {
    [Complex64::new(0.0, 0.0), psi[0], psi[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{normalized as norm_rho, propagate_hybrid, pure_state, uniform_grid};
    use crate::model::{ket_e, ket_f, ket_plus_x};
    use crate::stats::ks_test;

    fn params(j: f64, delta: f64, ge: f64, gf: f64, gp: f64) -> SystemParams {
        SystemParams::new(j, delta, ge, gf, gp).unwrap()
    }

    #[test]
    fn closed_system_never_jumps() {
        let p = params(1.3, 0.5, 0.0, 0.0, 0.0);
        let ens = simulate_trajectories(&lift(&ket_plus_x()), &p, &uniform_grid(5.0, 11), 50, 3).unwrap();
        assert!(ens.records.iter().all(|r| r.survived && r.jump_events.is_empty()));
        for r in &ens.records {
            for s in &r.state_path {
                assert!((norm_sqr(s) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_ensemble() {
        let p = params(1.5, 0.0, 4.5, 0.3, 0.5);
        let grid = uniform_grid(2.0, 21);
        let a = simulate_trajectories(&lift(&ket_f()), &p, &grid, 64, 11).unwrap();
        let b = simulate_trajectories(&lift(&ket_f()), &p, &grid, 64, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectories(&lift(&ket_f()), &p, &grid, 64, 12).unwrap();
        assert_ne!(a, c);
        assert_eq!(simulate_one(&lift(&ket_f()), &p, &grid, 11, 17).unwrap(), a.records[17]);
    }

    #[test]
    fn survival_flag_matches_events_and_is_monotone() {
        let p = params(1.0, 0.0, 4.5, 0.3, 0.5);
        let ens = simulate_trajectories(&lift(&ket_f()), &p, &uniform_grid(3.0, 31), 400, 5).unwrap();
        for r in &ens.records {
            assert_eq!(r.survived, r.decay_time().is_none());
            for e in &r.jump_events {
                assert!(e.time >= 0.0 && e.time <= 3.0);
            }
        }
        let post = postselect_average(&ens).unwrap();
        for w in post.survival.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_path_conditioning_without_submanifold_jumps() {
        let p = params(1.2, 0.0, 3.0, 0.0, 0.0);
        let grid = uniform_grid(2.0, 21);
        let ens = simulate_trajectories(&lift(&ket_f()), &p, &grid, 200, 9).unwrap();
        let post = postselect_average(&ens).unwrap();
        let exact = propagate_hybrid(&pure_state(&ket_f()), &p, &grid, false).unwrap();
        for (a, b) in post.series.rho.iter().zip(&exact.rho) {
            assert!(a.max_abs_diff(&norm_rho(b).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn decay_times_are_exponential() {
        let ge = 2.0;
        let p = params(0.0, 0.0, ge, 0.0, 0.0);
        let t_max = 4.0;
        let ens = simulate_trajectories(&lift(&ket_e()), &p, &[0.0, t_max], 4000, 21).unwrap();
        let times: Vec<f64> = ens.records.iter().filter_map(|r| r.decay_time()).collect();
        let norm = 1.0 - (-ge * t_max).exp();
        let ks = ks_test(&times, |t| (1.0 - (-ge * t).exp()) / norm);
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn recycled_state_approaches_gain_eigenstate() {
        // after an f→e jump the state is |e⟩; the loss-eigenstate weight in the
        // |±⟩ expansion then shrinks monotonically and the state converges to |+⟩
        let p = params(0.8, 0.0, 6.25, 0.25, 0.0);
        let st = crate::spectral::eigenstates_of_heff(&p).unwrap();
        let basis = CMatrix::from_rows(&[[st.plus[0], st.minus[0]], [st.plus[1], st.minus[1]]]).unwrap();
        let unr = Unraveling::new(&p, &[0.0]).unwrap();
        let mut prev_ratio = f64::INFINITY;
        let mut overlap = 0.0;
        for k in 0..200 {
            let v = normalized(&unr.evolve(&lift(&ket_e()), 0.02 * k as f64).unwrap());
            let c = crate::smallmat::solve(&basis, &CMatrix::from_vec(2, 1, vec![v[1], v[2]]).unwrap()).unwrap();
            let ratio = c[(1, 0)].norm() / c[(0, 0)].norm();
            assert!(ratio <= prev_ratio * (1.0 + 1e-12), "step {k}");
            prev_ratio = ratio;
            overlap = (st.plus[0].conj() * v[1] + st.plus[1].conj() * v[2]).norm_sqr();
        }
        assert!(overlap > 0.999);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1.0, 0.0, 1.0, 0.0, 0.0);
        let bad = [Complex64::new(1.0, 0.0); 3];
        assert!(simulate_trajectories(&bad, &p, &[0.0, 1.0], 1, 0).is_err());
        assert!(matches!(simulate_trajectories(&lift(&ket_e()), &p, &[0.0, 1.0], 0, 0), Err(TrajectoryError::Empty)));
    }
}
