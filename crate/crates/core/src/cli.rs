//! Runs a configuration and writes `<out>/<command>.csv` plus a
//! `<out>/<command>.json` metadata sidecar.
//!
//! CSV columns by command:
//!
//! | command        | columns |
//! |----------------|---------|
//! | `spectrum`     | `J, re_l0, im_l0, re_l1, im_l1, re_l2, im_l2, re_l3, im_l3, re_heff_plus, im_heff_plus, re_heff_minus, im_heff_minus, defective` |
//! | `ep`           | `j_ep, j_lep3, order_lep3, residual_lep3, j_lep2, order_lep2, residual_lep2` |
//! | `sweep`        | `J, freq_fit, rate_fit, freq_spec, rate_spec` |
//! | `relax`        | `t, x, y, z, S, pe_n, pf_n, trace` |
//! | `loop`         | `t, x, y, z, S, ReE, ImE, Delta` |
//! | `trajectories` | `t, survival, pe_n_post, pf_n_post, pg, pe, pf` |
//!
//! Liouvillian eigenvalue columns in `spectrum` follow continuous branches
//! along the J grid. Values that could not be computed are written as `NaN`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::analysis::experiments::{
    linear_grid, run_adiabatic_loop, run_relaxation_experiment, run_spectroscopy_sweep, run_trajectory_experiment,
    spectrum_table, AnalysisError, LoopOptions, RelaxationOptions, SpectrumOptions, SweepOptions,
};
use crate::config::{to_table, CommandSpec, RunConfig};
use crate::dynamics::uniform_grid;
use crate::spectral::{default_ep_bracket, ep_report, EpOptions, SpectralError};

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "NHQUBIT_JOBS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub rows: usize,
    pub seed: u64,
    pub elapsed_seconds: f64,
}

struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<f64>>,
    diagnostics: Value,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_csv(t: &Table) -> String {
    let mut s = t.header.join(",");
    s.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn compute(cfg: &RunConfig, seed: u64) -> Result<Table, CliError> {
    let p = cfg.params;
    let recycle = cfg.dephasing_recycle;
    Ok(match &cfg.spec {
        CommandSpec::Spectrum(s) => {
            let opts =
                SpectrumOptions { include_l1: s.include_l1, dephasing_recycle: recycle, defect_tol: s.defect_tol };
            let rows = spectrum_table(&p, &linear_grid(s.j_start, s.j_stop, s.j_points), &opts)?;
            Table {
                header: &[
                    "J",
                    "re_l0",
                    "im_l0",
                    "re_l1",
                    "im_l1",
                    "re_l2",
                    "im_l2",
                    "re_l3",
                    "im_l3",
                    "re_heff_plus",
                    "im_heff_plus",
                    "re_heff_minus",
                    "im_heff_minus",
                    "defective",
                ],
                rows: rows
                    .iter()
                    .map(|r| {
                        let mut v = vec![r.j];
                        for z in r.eigenvalues.iter().chain(&r.heff) {
                            v.push(z.re);
                            v.push(z.im);
                        }
                        v.push(if r.defective { 1.0 } else { 0.0 });
                        v
                    })
                    .collect(),
                diagnostics: json!({ "defect_tol": s.defect_tol, "include_l1": s.include_l1 }),
            }
        }
        CommandSpec::Ep(s) => {
            let (lo, hi) = default_ep_bracket(&p);
            let bracket = (s.j_min.unwrap_or(lo), s.j_max.unwrap_or(hi));
            let rep = ep_report(&p, bracket, &EpOptions { j_tol: s.j_tol, ..EpOptions::default() })?;
            let cols = |r: &Result<crate::spectral::EpLocation, SpectralError>| match r {
                Ok(l) => [l.j, l.order as f64, l.residual],
                Err(_) => [f64::NAN; 3],
            };
            let note = |r: &Result<crate::spectral::EpLocation, SpectralError>| match r {
                Ok(_) => Value::Null,
                Err(e) => json!(e.to_string()),
            };
            let mut row = vec![rep.j_ep];
            row.extend(cols(&rep.lep3));
            row.extend(cols(&rep.lep2));
            Table {
                header: &["j_ep", "j_lep3", "order_lep3", "residual_lep3", "j_lep2", "order_lep2", "residual_lep2"],
                rows: vec![row],
                diagnostics: json!({
                    "bracket": [bracket.0, bracket.1],
                    "lep3_error": note(&rep.lep3),
                    "lep2_error": note(&rep.lep2),
                }),
            }
        }
        CommandSpec::Sweep(s) => {
            let opts = SweepOptions {
                samples: s.samples,
                lifetimes: s.lifetimes,
                min_periods: s.min_periods,
                undamped_t_max: s.undamped_t_max,
                dephasing_recycle: recycle,
            };
            let table = run_spectroscopy_sweep(&p, &linear_grid(s.j_start, s.j_stop, s.j_points), &opts)?;
            let flagged: Vec<Value> = table
                .rows
                .iter()
                .filter(|r| r.flagged)
                .map(|r| {
                    json!({
                        "J": r.j,
                        "error": r.error,
                        "residual_rms": r.fit.map(|f| f.residual_rms),
                        "under_determined": r.fit.map(|f| f.under_determined),
                    })
                })
                .collect();
            Table {
                header: &["J", "freq_fit", "rate_fit", "freq_spec", "rate_spec"],
                rows: table.rows.iter().map(|r| vec![r.j, r.freq_fit, r.rate_fit, r.freq_spec, r.rate_spec]).collect(),
                diagnostics: json!({ "j_lep2": table.j_lep2, "flagged_rows": flagged }),
            }
        }
        CommandSpec::Relax(s) => {
            let opts = RelaxationOptions {
                t_max: s.t_max,
                samples: s.samples,
                initial_state: s.initial_state,
                dephasing_recycle: recycle,
            };
            let run = run_relaxation_experiment(&p, &opts)?;
            let steady = run.steady_state.as_ref().map(|r| {
                json!({
                    "pe": r[(0, 0)].re,
                    "pf": r[(1, 1)].re,
                    "rho_ef_re": r[(0, 1)].re,
                    "rho_ef_im": r[(0, 1)].im,
                })
            });
            Table {
                header: &["t", "x", "y", "z", "S", "pe_n", "pf_n", "trace"],
                rows: run
                    .series
                    .times
                    .iter()
                    .zip(&run.observables)
                    .map(|(&t, o)| vec![t, o.x, o.y, o.z, o.entropy, o.pe_n, o.pf_n, o.trace])
                    .collect(),
                diagnostics: json!({
                    "initial_state": [run.initial[0].re, run.initial[0].im, run.initial[1].re, run.initial[1].im],
                    "steady_state": steady,
                }),
            }
        }
        CommandSpec::Loop(s) => {
            let opts = LoopOptions {
                period: s.period,
                amplitude: s.amplitude,
                sign: s.sign as f64,
                include_l1: s.include_l1,
                samples_per_period: s.samples_per_period,
                dephasing_recycle: recycle,
                ..LoopOptions::default()
            };
            let out = run_adiabatic_loop(&p, &opts)?;
            Table {
                header: &["t", "x", "y", "z", "S", "ReE", "ImE", "Delta"],
                rows: (0..out.t.len())
                    .map(|k| {
                        vec![
                            out.t[k],
                            out.x[k],
                            out.y[k],
                            out.z[k],
                            out.entropy[k],
                            out.energy[k].re,
                            out.energy[k].im,
                            out.delta[k],
                        ]
                    })
                    .collect(),
                diagnostics: json!({ "slow_driving_metric": json_num(out.slow_driving_metric) }),
            }
        }
        CommandSpec::Trajectories(s) => {
            let times = uniform_grid(s.t_max, s.samples);
            let run = run_trajectory_experiment(&p, &s.initial.ket(), &times, s.n_trajectories, seed)?;
            Table {
                header: &["t", "survival", "pe_n_post", "pf_n_post", "pg", "pe", "pf"],
                rows: (0..times.len())
                    .map(|k| {
                        vec![
                            times[k],
                            run.survival[k],
                            run.pe_n_post[k],
                            run.pf_n_post[k],
                            run.pg[k],
                            run.pe[k],
                            run.pf[k],
                        ]
                    })
                    .collect(),
                diagnostics: json!({ "n_trajectories": s.n_trajectories, "initial": s.initial.name() }),
            }
        }
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Runs `cfg`, writing into `out`. `seed` overrides the configured seed.
pub fn run(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let table = compute(cfg, seed)?;
    let elapsed_seconds = start.elapsed().as_secs_f64();

    fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.to_path_buf(), source })?;
    let name = cfg.command().name();
    let csv = out.join(format!("{name}.csv"));
    let json_path = out.join(format!("{name}.json"));
    write(&csv, &render_csv(&table))?;
    let meta = json!({
        "config": serde_json::to_value(to_table(cfg)).unwrap_or(Value::Null),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "elapsed_seconds": elapsed_seconds,
        "columns": table.header,
        "diagnostics": table.diagnostics,
    });
    write(&json_path, &format!("{}\n", serde_json::to_string_pretty(&meta).unwrap_or_default()))?;
    Ok(RunSummary { csv, json: json_path, rows: table.rows.len(), seed, elapsed_seconds })
}

/// As [`run`] inside a pool of `jobs` workers (0 = one per core).
pub fn run_with_jobs(cfg: &RunConfig, out: &Path, seed: Option<u64>, jobs: usize) -> Result<RunSummary, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| run(cfg, out, seed))
}
