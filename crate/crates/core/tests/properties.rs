//! Property tests over random plants, signals and data.

use std::f64::consts::PI;

use dssid::dss::StaticCurve;
use dssid::fit::{fit_linear_freq, fit_monotone_detailed, OddPolyFamily};
use dssid::harmonic::{
    eval_transfer, exact_response, harmonic_coefficient, log_space, measured_gain, settle_window,
    AnalysisWindow,
};
use dssid::model::{LinearParams, Nonlinearity, PlantModel};
use dssid::sim::{generate_signal, simulate, SignalSpec, SimOptions, TimeSeries};
use num_complex::Complex64;
use proptest::prelude::*;

fn linear(a: f64, b: f64, c: f64) -> PlantModel {
    PlantModel::second_order(a, b, Nonlinearity::linear(c, 1.0).unwrap()).unwrap()
}

fn max_diff(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Closed-form unit-step response of `A x'' + B x' + C x = 1` from rest.
fn step_response(a: f64, b: f64, c: f64, t: f64) -> f64 {
    let (p, q) = (b / (2.0 * a), c / a);
    let disc = p * p - q;
    let trans = if disc.abs() < 1e-12 {
        (1.0 + p * t) * (-p * t).exp()
    } else if disc > 0.0 {
        let r = disc.sqrt();
        let (l1, l2) = (-p + r, -p - r);
        (l2 * (l1 * t).exp() - l1 * (l2 * t).exp()) / (l2 - l1)
    } else {
        let wd = (-disc).sqrt();
        (-p * t).exp() * ((wd * t).cos() + p / wd * (wd * t).sin())
    };
    (1.0 - trans) / c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_plant_is_superposable(
        a in 0.2f64..3.0, b in 0.3f64..4.0, c in 0.5f64..3.0,
        s in -2.0f64..2.0, h in -1.0f64..1.0, freq in 0.05f64..1.0,
    ) {
        let plant = linear(a, b, c);
        let opts = SimOptions::for_plant(&plant, 0.01, 20.0);
        let u1 = SignalSpec::Step { amplitude: s };
        let u2 = SignalSpec::Harmonic { amplitude: h, frequency: freq };
        let x1 = simulate(&plant, &u1, &opts).unwrap();
        let x2 = simulate(&plant, &u2, &opts).unwrap();
        let x12 = simulate(&plant, &SignalSpec::Sum(vec![u1, u2]), &opts).unwrap();
        let sum: Vec<f64> = x1.values().iter().zip(x2.values()).map(|(p, q)| p + q).collect();
        prop_assert!(max_diff(x12.values(), &sum) < 1e-8);
    }

    #[test]
    fn linear_step_matches_closed_form(a in 0.2f64..3.0, b in 0.3f64..4.0, c in 0.5f64..3.0) {
        let plant = linear(a, b, c);
        let horizon = 10.0 / plant.slowest_decay().abs();
        let opts = SimOptions::for_plant(&plant, 0.01, horizon);
        let x = simulate(&plant, &SignalSpec::Step { amplitude: 1.0 }, &opts).unwrap();
        for (t, v) in x.times().zip(x.values()) {
            prop_assert!((v - step_response(a, b, c, t)).abs() < 1e-5, "t={t}");
        }
    }

    #[test]
    fn halving_rk_step_changes_little(
        a in 0.2f64..3.0, b in 0.3f64..4.0, c1 in 0.5f64..2.0, c3 in 0.0f64..0.3,
    ) {
        let f = Nonlinearity::odd_poly(&[c1, c3], 1.5).unwrap();
        let plant = PlantModel::second_order(a, b, f).unwrap();
        let spec = SignalSpec::Sum(vec![
            SignalSpec::Step { amplitude: 0.8 * c1 },
            SignalSpec::Harmonic { amplitude: 0.2 * c1, frequency: 0.1 },
        ]);
        let coarse = SimOptions::for_plant(&plant, 0.01, 30.0);
        let fine = SimOptions { rk_step: coarse.rk_step / 2.0, ..coarse };
        let xh = simulate(&plant, &spec, &coarse).unwrap();
        let xh2 = simulate(&plant, &spec, &fine).unwrap();
        prop_assert!(max_diff(xh.values(), xh2.values()) <= 1e-6);
    }

    #[test]
    fn harmonics_are_reconstructed(
        amps in prop::array::uniform3(0.0f64..2.0),
        phases in prop::array::uniform3(-PI..PI),
        omega in 0.5f64..3.0,
        settle in 0.0f64..5.0,
    ) {
        let dt = 2.0 * PI / omega / 256.0;
        let n = ((settle + 2.0 * 2.0 * PI / omega) / dt).ceil() as usize + 4;
        let x = TimeSeries::from_fn(0.0, dt, n, |t| {
            (0..3).map(|k| amps[k] * ((k + 1) as f64 * omega * t + phases[k]).sin()).sum()
        }).unwrap();
        let window = AnalysisWindow::new(settle, 2).unwrap();
        for k in 0..3 {
            let got = harmonic_coefficient(&x, omega, k as u32 + 1, &window).unwrap().value;
            let want = Complex64::from_polar(amps[k] / 2.0, phases[k] - PI / 2.0);
            prop_assert!((got - want).norm() < 1e-6, "k={}: {got} vs {want}", k + 1);
        }
    }

    #[test]
    fn transfer_is_conjugate_symmetric(
        a in 0.01f64..10.0, b in 0.01f64..10.0, c in 0.01f64..10.0, w in 0.0f64..100.0,
    ) {
        let p = LinearParams::new(a, b, c);
        prop_assert_eq!(eval_transfer(&p, -w).unwrap(), eval_transfer(&p, w).unwrap().conj());
    }

    #[test]
    fn freq_fit_is_exact_on_linear_data(
        a in 0.05f64..5.0, b in 0.05f64..5.0, c in 0.1f64..5.0,
        n in 2usize..12, lo in 0.05f64..1.0, span in 1.5f64..50.0,
    ) {
        let p = LinearParams::new(a, b, c);
        let pts = exact_response(&p, &log_space(lo, lo * span, n)).unwrap();
        let got = fit_linear_freq(&pts).unwrap();
        for (g, w) in got.as_array().iter().zip(p.as_array()) {
            prop_assert!((g - w).abs() <= 1e-6 * w, "{got:?} vs {p:?}");
        }
    }

    #[test]
    fn freq_fit_is_scale_equivariant(
        a in 0.05f64..5.0, b in 0.05f64..5.0, c in 0.1f64..5.0, s in 0.01f64..100.0,
    ) {
        let omegas = log_space(0.1, 10.0, 8);
        let p = LinearParams::new(a, b, c);
        let scaled = LinearParams::new(s * a, s * b, s * c);
        let base = exact_response(&p, &omegas).unwrap();
        let pts = exact_response(&scaled, &omegas).unwrap();
        for (q, r) in pts.iter().zip(&base) {
            prop_assert!((q.gain - r.gain / s).norm() <= 1e-12 * r.gain.norm() / s);
        }
        let got = fit_linear_freq(&pts).unwrap();
        for (g, w) in got.as_array().iter().zip(scaled.as_array()) {
            prop_assert!((g - w).abs() <= 1e-6 * w);
        }
    }

    #[test]
    fn monotone_fit_is_monotone_and_near_unconstrained(
        coeffs in prop::array::uniform4(-2.0f64..2.0),
        noise in prop::collection::vec(-0.05f64..0.05, 61),
    ) {
        let pairs: Vec<(f64, f64)> = (0..61)
            .map(|i| {
                let x = -1.0 + i as f64 / 30.0;
                let y = coeffs[0] * x + coeffs[1] * x.powi(3) + coeffs[2] * x.powi(5)
                    + coeffs[3] * x.powi(7) + noise[i];
                (x, y)
            })
            .collect();
        let family = OddPolyFamily::new(7, 1.0).unwrap();
        let Ok(fit) = fit_monotone_detailed(&pairs, &family) else {
            // Data falling overall has no monotone increasing fit.
            return Ok(());
        };
        prop_assert!(fit.f.is_monotone());
        prop_assert!(fit.residual >= fit.unconstrained_residual * (1.0 - 1e-12));
        if !fit.constrained {
            prop_assert!((fit.residual - fit.unconstrained_residual).abs()
                <= 1e-10 * fit.unconstrained_residual.max(1e-300));
        }
    }

    #[test]
    fn corrected_curve_is_monotone(c1 in 0.1f64..3.0, c3 in 0.0f64..1.0, c5 in 0.0f64..0.5, fs in 0.2f64..1.5) {
        let f = Nonlinearity::odd_poly(&[c1, c3, c5], 1.5).unwrap();
        let curve = StaticCurve::from_nonlinearity(&f, -fs, fs, 201);
        prop_assert!(curve.is_monotone(0.0));
        prop_assert!(curve.sup_error(&f, fs).unwrap() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn measured_gain_matches_transfer(
        a in 0.5f64..2.0, b in 0.8f64..3.0, c in 0.5f64..2.0, log_w in (0.1f64).ln()..(10.0f64).ln(),
    ) {
        let omega = log_w.exp();
        let plant = linear(a, b, c);
        let p = LinearParams::new(a, b, c);
        let w = settle_window(&p, omega).unwrap();
        let spec = SignalSpec::Harmonic { amplitude: 1.0, frequency: omega / (2.0 * PI) };
        let opts = SimOptions::for_plant(&plant, 0.005, w.end(omega) + 0.1);
        let u = generate_signal(&spec, &opts).unwrap();
        let x = simulate(&plant, &spec, &opts).unwrap();
        let got = measured_gain(&u, &x, omega, &w).unwrap().gain;
        let want = eval_transfer(&p, omega).unwrap();
        prop_assert!((got - want).norm() <= 1e-3 * want.norm(), "{got} vs {want}");
    }

    #[test]
    fn more_periods_never_hurt(a in 0.5f64..2.0, b in 0.8f64..3.0, c in 0.5f64..2.0, omega in 0.3f64..3.0) {
        let plant = linear(a, b, c);
        let p = LinearParams::new(a, b, c);
        let base = settle_window(&p, omega).unwrap();
        // A short settle leaves transient for the averaging to suppress.
        let settle = 0.25 * base.settle_time;
        let spec = SignalSpec::Harmonic { amplitude: 1.0, frequency: omega / (2.0 * PI) };
        let opts = SimOptions::for_plant(&plant, 0.005, settle + 8.0 * 2.0 * PI / omega + 0.1);
        let u = generate_signal(&spec, &opts).unwrap();
        let x = simulate(&plant, &spec, &opts).unwrap();
        let want = eval_transfer(&p, omega).unwrap();
        let errs: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&k| {
                let w = AnalysisWindow::new(settle, k).unwrap();
                (measured_gain(&u, &x, omega, &w).unwrap().gain - want).norm()
            })
            .collect();
        for e in errs.windows(2) {
            prop_assert!(e[1] <= e[0] * (1.0 + 1e-9) + 1e-12, "{errs:?}");
        }
    }
}
