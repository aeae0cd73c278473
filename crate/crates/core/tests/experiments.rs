use proptest::prelude::*;

use nhqubit::analysis::experiments::{
    run_adiabatic_loop, run_relaxation_experiment, run_spectroscopy_sweep, LoopOptions, RelaxationOptions, SweepOptions,
};
use nhqubit::SystemParams;

fn loop_params() -> SystemParams {
    SystemParams::new(30.0, 0.0, 6.25, 0.25, 0.7).unwrap()
}

#[test]
fn reversed_loop_ends_on_the_mirrored_state() {
    let base = loop_params();
    let fwd = run_adiabatic_loop(&base, &LoopOptions::default()).unwrap();
    let rev = run_adiabatic_loop(&base, &LoopOptions { sign: -1.0, ..LoopOptions::default() }).unwrap();
    let (xf, xr) = (*fwd.x.last().unwrap(), *rev.x.last().unwrap());
    assert!(xf < 0.0 && xr > 0.0, "{xf} {xr}");
    assert!((xf + xr).abs() < 1e-3, "{xf} {xr}");
}

#[test]
fn adiabatic_return_is_robust_to_period() {
    let base = loop_params().without_submanifold_jumps();
    for period in [2.0, 4.0, 8.0] {
        let out =
            run_adiabatic_loop(&base, &LoopOptions { period, include_l1: false, ..LoopOptions::default() }).unwrap();
        assert!(out.slow_driving_metric > 20.0);
        assert!(*out.x.last().unwrap() > 0.99, "T = {period}: x(T) = {}", out.x.last().unwrap());
    }
}

#[test]
fn relaxation_mixes_before_the_decay_time() {
    let p = SystemParams::new(0.8, 0.0, 6.25, 0.25, 0.9).unwrap();
    let run =
        run_relaxation_experiment(&p, &RelaxationOptions { t_max: 1.0 / 6.25, samples: 201, ..Default::default() })
            .unwrap();
    assert!(run.observables.iter().any(|o| o.entropy > 1e-3));
    let x = run.observables.iter().map(|o| o.x.abs()).fold(0.0, f64::max);
    // with Δ = 0 the Bloch vector stays in the y–z plane
    assert!(x < 1e-12, "{x}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // the single damped-sine model only holds once the oscillation is well separated from the EP
    #[test]
    fn sweep_fit_matches_spectrum_well_above_lep2(j in 2.6..4.0f64) {
        let base = SystemParams::new(0.0, 0.0, 4.5, 0.3, 0.5).unwrap();
        let t = run_spectroscopy_sweep(&base, &[j], &SweepOptions::default()).unwrap();
        let r = &t.rows[0];
        prop_assert!(!r.flagged);
        prop_assert!((r.rate_fit / r.rate_spec - 1.0).abs() <= 0.10);
        prop_assert!((r.freq_fit / r.freq_spec - 1.0).abs() <= 0.05);
    }
}
