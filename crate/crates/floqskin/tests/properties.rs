use std::f64::consts::PI;

use floqskin::dynamics::{line_fit, InitialState};
use floqskin::floquet::{self, FloquetSettings};
use floqskin::harness::output::num;
use floqskin::linalg::C64;
use floqskin::{Boundary, ModelParams};
use proptest::prelude::*;

fn chain(gamma: Vec<f64>, omega: f64) -> ModelParams {
    ModelParams { gamma, omega, n_cells: 8, ..ModelParams::reference() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn folding_lands_in_the_zone(re in -50.0..50.0f64, im in -2.0..2.0f64, period in 0.5..40.0f64) {
        let f = floquet::fold_quasienergy(C64::new(re, im), period);
        prop_assert!(f.re > -PI / period - 1e-12 && f.re <= PI / period + 1e-12);
        prop_assert_eq!(f.im, im);
        let shift = (re - f.re) / (2.0 * PI / period);
        prop_assert!((shift - shift.round()).abs() < 1e-8);
    }

    #[test]
    fn imaginary_parts_sum_to_the_total_loss(
        g in prop::collection::vec(-1.5..0.5f64, 3),
        k in -PI..PI,
        omega in 0.2..1.5f64,
    ) {
        let total: f64 = g.iter().sum();
        let h = floquet::bloch_floquet(&chain(g, omega), k, &FloquetSettings::with_steps(80)).unwrap();
        let s: f64 = h.quasienergies.iter().map(|e| e.im).sum();
        prop_assert!((s - total).abs() < 1e-8, "{} vs {}", s, total);
    }

    #[test]
    fn loss_free_quasienergies_are_real(k in -PI..PI, omega in 0.2..1.5f64, v in 0.0..2.0f64) {
        let p = ModelParams { v, ..chain(vec![0.0; 3], omega) };
        let h = floquet::bloch_floquet(&p, k, &FloquetSettings::with_steps(60)).unwrap();
        for e in &h.quasienergies {
            prop_assert!(e.im.abs() < 1e-9, "{:?}", e);
        }
    }

    #[test]
    fn initial_states_are_normalized(x0 in 0usize..24, sigma in 0.3..6.0f64, open in any::<bool>()) {
        let p = ModelParams { boundary: if open { Boundary::Obc } else { Boundary::Pbc }, ..chain(vec![-1.2, 0.0, 0.0], 0.4) };
        for s in [InitialState::gaussian(x0, sigma), InitialState::Delta { x0 }] {
            let psi = s.build(&p).unwrap();
            let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn line_fit_is_exact_on_lines(a in -3.0..3.0f64, b in -10.0..10.0f64, n in 3usize..50) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = t.iter().map(|t| a * t + b).collect();
        let f = line_fit(&t, &y);
        prop_assert!((f.slope - a).abs() < 1e-9 && (f.intercept - b).abs() < 1e-8);
        prop_assert!(f.rms < 1e-8);
    }

    #[test]
    fn csv_numbers_keep_twelve_digits(m in 1.0..10.0f64, e in -20i32..20, neg in any::<bool>()) {
        let x = if neg { -m } else { m } * 10f64.powi(e);
        let y: f64 = num(x).parse().unwrap();
        prop_assert!(((y - x) / x).abs() < 1e-11, "{} -> {}", x, num(x));
    }
}
