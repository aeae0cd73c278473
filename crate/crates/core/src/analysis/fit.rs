//! Least-squares fit of y = A·e^{−Γt}·sin(ωt + φ) + C.
//!
//! Starting values: ω from the peak of the discrete spectrum, Γ from the slope
//! of the log envelope (refined with a short scan), A, φ and C from the linear
//! problem at fixed (Γ, ω). Refinement is Levenberg–Marquardt with the
//! analytic Jacobian.

use std::f64::consts::PI;

/// Fits with an RMS residual above this are flagged.
pub const RESIDUAL_FLAG: f64 = 0.05;
pub const MIN_SAMPLES: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("t and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite or unsorted input")]
    BadInput,
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedSineFit {
    /// ω ≥ 0, rad·μs⁻¹.
    pub frequency: f64,
    /// Γ, μs⁻¹.
    pub decay_rate: f64,
    /// A ≥ 0.
    pub amplitude: f64,
    /// φ in (−π, π].
    pub phase: f64,
    pub offset: f64,
    pub residual_rms: f64,
    /// residual_rms > [`RESIDUAL_FLAG`].
    pub flagged: bool,
    /// Record shorter than one fitted period.
    pub under_determined: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl DampedSineFit {
    pub fn eval(&self, t: f64) -> f64 {
        model(&[self.amplitude, self.decay_rate, self.frequency, self.phase, self.offset], t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub gradient_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, gradient_tol: 1e-10 }
    }
}

fn model(p: &[f64; 5], t: f64) -> f64 {
    p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).sin() + p[4]
}

fn sse(p: &[f64; 5], t: &[f64], y: &[f64]) -> f64 {
    t.iter().zip(y).map(|(&ti, &yi)| (model(p, ti) - yi).powi(2)).sum()
}

/// Solves the small dense system `a x = b` by Gaussian elimination with partial pivoting.
fn solve_real<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..N {
            let f = a[r][col] / a[col][col];
            for c in col..N {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for r in (0..N).rev() {
        let s: f64 = ((r + 1)..N).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Best A, φ, C at fixed (Γ, ω), and the resulting SSE.
fn linear_part(t: &[f64], y: &[f64], gamma: f64, omega: f64) -> Option<([f64; 5], f64)> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let e = (-gamma * ti).exp();
        let row = [e * (omega * ti).sin(), e * (omega * ti).cos(), 1.0];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve_real(ata, aty)?;
    let p = [(a * a + b * b).sqrt(), gamma, omega, b.atan2(a), c];
    let s = sse(&p, t, y);
    s.is_finite().then_some((p, s))
}

fn spectral_peak(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    let span = t[n - 1] - t[0];
    let mean = y.iter().sum::<f64>() / n as f64;
    let dt_min = t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let w_max = PI / dt_min;
    let w_step = 2.0 * PI / span / 8.0;
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            re += (yi - mean) * (w * ti).cos();
            im += (yi - mean) * (w * ti).sin();
        }
        re * re + im * im
    };
    let mut best = (0.0, w_step);
    let mut w = w_step;
    while w <= w_max {
        let pw = power(w);
        if pw > best.0 {
            best = (pw, w);
        }
        w += w_step;
    }
    best.1
}

fn envelope_rate(t: &[f64], y: &[f64], omega: f64) -> f64 {
    let n = t.len();
    let tail = &y[n - n / 4..];
    let c = tail.iter().sum::<f64>() / tail.len() as f64;
    let period = 2.0 * PI / omega;
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    let mut start = 0;
    while start < n {
        let end = (start..n).find(|&k| t[k] - t[start] >= period).unwrap_or(n);
        if end - start >= 2 && t[end - 1] - t[start] >= 0.5 * period {
            let peak = y[start..end].iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
            if peak > 0.0 {
                xs.push(0.5 * (t[start] + t[end - 1]));
                ls.push(peak.ln());
            }
        }
        start = end;
    }
    if xs.len() < 2 {
        return 1.0 / (t[n - 1] - t[0]);
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let ml = ls.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxl: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - mx) * (l - ml)).sum();
    (-sxl / sxx).max(0.0)
}

fn wrap_phase(mut phi: f64) -> f64 {
    phi = phi.rem_euclid(2.0 * PI);
    if phi > PI {
        phi -= 2.0 * PI;
    }
    phi
}

pub fn fit_damped_sine(t: &[f64], y: &[f64]) -> Result<DampedSineFit, FitError> {
    fit_damped_sine_with(t, y, &FitOptions::default())
}

pub fn fit_damped_sine_with(t: &[f64], y: &[f64], opts: &FitOptions) -> Result<DampedSineFit, FitError> {
    if t.len() != y.len() {
        return Err(FitError::LengthMismatch(t.len(), y.len()));
    }
    if t.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples(t.len()));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::BadInput);
    }

    let omega0 = spectral_peak(t, y);
    let gamma0 = envelope_rate(t, y, omega0);
    let span = t[t.len() - 1] - t[0];
    let mut start: Option<([f64; 5], f64)> = None;
    for gm in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        for wm in [0.9, 1.0, 1.1] {
            let g = if gm == 0.0 { 0.0 } else { gamma0.max(0.1 / span) * gm };
            if let Some(cand) = linear_part(t, y, g, omega0 * wm) {
                if start.as_ref().is_none_or(|s| cand.1 < s.1) {
                    start = Some(cand);
                }
            }
        }
    }
    let (mut p, mut cost) = start.ok_or(FitError::BadInput)?;

    let mut mu = 1e-3;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut jtj = [[0.0; 5]; 5];
        let mut g = [0.0; 5];
        for (&ti, &yi) in t.iter().zip(y) {
            let e = (-p[1] * ti).exp();
            let (s, c) = (p[2] * ti + p[3]).sin_cos();
            let row = [e * s, -ti * p[0] * e * s, ti * p[0] * e * c, p[0] * e * c, 1.0];
            let r = p[0] * e * s + p[4] - yi;
            for i in 0..5 {
                g[i] += row[i] * r;
                for j in 0..5 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm < opts.gradient_tol {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += mu * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve_real(a, g.map(|v| -v)) else {
                mu *= 4.0;
                continue;
            };
            let trial = std::array::from_fn(|i| p[i] + step[i]);
            let c = sse(&trial, t, y);
            if c.is_finite() && c < cost {
                let rel_step = (0..5).map(|i| step[i].abs() / (p[i].abs() + 1e-12)).fold(0.0, f64::max);
                let rel_drop = (cost - c) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = c;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                if rel_step < 1e-13 || rel_drop < 1e-15 {
                    converged = true;
                }
                break;
            }
            mu *= 2.0;
        }
        if !improved {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence { iterations, gradient_norm: grad_norm });
    }

    let [mut amp, gamma, mut omega, mut phi, offset] = p;
    if amp < 0.0 {
        amp = -amp;
        phi += PI;
    }
    if omega < 0.0 {
        omega = -omega;
        phi = PI - phi;
    }
    let residual_rms = (cost / t.len() as f64).sqrt();
    Ok(DampedSineFit {
        frequency: omega,
        decay_rate: gamma,
        amplitude: amp,
        phase: wrap_phase(phi),
        offset,
        residual_rms,
        flagged: residual_rms > RESIDUAL_FLAG,
        under_determined: omega <= 0.0 || span < 2.0 * PI / omega,
        iterations,
        gradient_norm: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synth(a: f64, g: f64, w: f64, phi: f64, c: f64, n: usize, span: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect();
        let y = t.iter().map(|&ti| a * (-g * ti).exp() * (w * ti + phi).sin() + c).collect();
        (t, y)
    }

    #[test]
    fn recovers_exact_model() {
        let (t, y) = synth(1.0, 0.5, 3.0, 0.0, 0.5, 200, 8.0);
        let f = fit_damped_sine(&t, &y).unwrap();
        assert!((f.amplitude - 1.0).abs() < 1e-6);
        assert!((f.decay_rate - 0.5).abs() < 1e-6);
        assert!((f.frequency - 3.0).abs() < 1e-6);
        assert!(f.phase.abs() < 1e-6);
        assert!((f.offset - 0.5).abs() < 1e-6);
        assert!(!f.flagged && !f.under_determined);
    }

    #[test]
    fn normalizes_sign_conventions() {
        // −sin(ωt + 0.3) is sin(ωt + 0.3 + π)
        let (t, y) = synth(-0.7, 0.2, 2.0, 0.3, 0.0, 150, 10.0);
        let f = fit_damped_sine(&t, &y).unwrap();
        assert!(f.amplitude > 0.0 && f.frequency > 0.0);
        assert!((f.amplitude - 0.7).abs() < 1e-6);
        assert!((wrap_phase(f.phase - (0.3 + PI))).abs() < 1e-6);
    }

    #[test]
    fn noisy_fit_accuracy() {
        let normal = Normal::new(0.0, 0.01).unwrap();
        let (mut w_err, mut g_err) = (0.0f64, 0.0f64);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (t, y) = synth(1.0, 0.5, 3.0, 0.0, 0.5, 200, 8.0);
            let y: Vec<f64> = y.iter().map(|v| v + normal.sample(&mut rng)).collect();
            let f = fit_damped_sine(&t, &y).unwrap();
            w_err = w_err.max((f.frequency / 3.0 - 1.0).abs());
            g_err = g_err.max((f.decay_rate / 0.5 - 1.0).abs());
        }
        assert!(w_err < 0.01, "worst frequency error {w_err}");
        assert!(g_err < 0.05, "worst rate error {g_err}");
    }

    #[test]
    fn short_records() {
        let (t, y) = synth(1.0, 0.1, 1.0, 0.4, 0.0, 11, 2.0);
        assert_eq!(fit_damped_sine(&t, &y), Err(FitError::TooFewSamples(11)));
        let (t, y) = synth(1.0, 0.1, 1.0, 0.4, 0.0, 40, 3.0);
        let f = fit_damped_sine(&t, &y).unwrap();
        assert!(f.under_determined);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(fit_damped_sine(&[0.0; 12], &[0.0; 13]), Err(FitError::LengthMismatch(12, 13))));
        let t: Vec<f64> = (0..12).map(|k| k as f64).rev().collect();
        assert_eq!(fit_damped_sine(&t, &[0.0; 12]), Err(FitError::BadInput));
    }

    #[test]
    fn residual_flag() {
        let (t, mut y) = synth(1.0, 0.3, 2.0, 0.0, 0.0, 100, 10.0);
        for (k, v) in y.iter_mut().enumerate() {
            *v += if k % 2 == 0 { 0.2 } else { -0.2 };
        }
        let f = fit_damped_sine(&t, &y).unwrap();
        assert!(f.flagged);
    }
}
