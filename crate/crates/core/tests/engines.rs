use num_complex::Complex64;
use proptest::prelude::*;

use nhqubit::dynamics::{
    propagate_expm, propagate_hybrid, propagate_lindblad3, propagate_pair, propagate_time_dependent, spectral_series,
    Rk4Options,
};
use nhqubit::model::{build_liouvillian_pair, embed_submanifold, submanifold_of};
use nhqubit::{CMatrix, SystemParams};

const TIMES: [f64; 4] = [0.0, 0.2, 0.7, 1.3];

fn any_params() -> impl Strategy<Value = SystemParams> {
    (0.0..5.0f64, -3.0..3.0f64, 0.5..8.0f64, 0.0..2.0f64, 0.0..2.0f64)
        .prop_map(|(j, d, ge, gf, gp)| SystemParams::new(j, d, ge, gf, gp).unwrap())
}

fn any_density() -> impl Strategy<Value = CMatrix> {
    prop::array::uniform4((-1.0..1.0f64, -1.0..1.0f64)).prop_filter_map("non-zero", |a| {
        let m = CMatrix::from_rows(&[
            [Complex64::new(a[0].0, a[0].1), Complex64::new(a[1].0, a[1].1)],
            [Complex64::new(a[2].0, a[2].1), Complex64::new(a[3].0, a[3].1)],
        ])
        .unwrap();
        let rho = m.matmul(&m.adjoint()).unwrap();
        let tr = rho.trace().re;
        (tr > 1e-3).then(|| rho.scale_real(1.0 / tr))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rk4_expm_and_spectral_agree(p in any_params(), rho0 in any_density()) {
        let pair = build_liouvillian_pair(&p);
        let l = pair.total();
        let ex = propagate_expm(&rho0, &l, &TIMES).unwrap();
        let rk = propagate_pair(&rho0, &pair, &TIMES, true, &Rk4Options::default()).unwrap();
        prop_assert!(rk.max_abs_diff(&ex) <= 1e-7);
        if let Ok(sp) = spectral_series(&rho0, &l, &TIMES) {
            prop_assert!(sp.max_abs_diff(&ex) <= 1e-7);
        }
    }

    #[test]
    fn three_level_trace_and_submanifold_block(p in any_params(), rho0 in any_density()) {
        let full = propagate_lindblad3(&embed_submanifold(&rho0), &p, &TIMES).unwrap();
        let hybrid = propagate_hybrid(&rho0, &p, &TIMES, true).unwrap();
        for (r3, r2) in full.rho.iter().zip(&hybrid.rho) {
            prop_assert!((r3.trace() - Complex64::new(1.0, 0.0)).norm() <= 1e-8);
            prop_assert!(submanifold_of(r3).max_abs_diff(r2) <= 1e-7);
        }
    }

    #[test]
    fn constant_time_dependent_generator_matches_fixed(p in any_params(), rho0 in any_density()) {
        let l = build_liouvillian_pair(&p).total();
        let gen = |_t: f64| l.clone();
        let td = propagate_time_dependent(&rho0, &gen, &TIMES, &Rk4Options::default()).unwrap();
        let ex = propagate_expm(&rho0, &l, &TIMES).unwrap();
        prop_assert!(td.max_abs_diff(&ex) <= 1e-7);
    }
}
