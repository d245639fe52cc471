//! Worked examples that need a simulated experiment.

use std::f64::consts::PI;

use dssid::dss::{
    dss_init, dss_run_third_order, dss_step, dynamic_correction, lissajous_baseline,
    staircase_excitation, DssConfig, DssState, ThirdOrderInit,
};
use dssid::fit::{refit_ab, FitOptions, FitWindow};
use dssid::harmonic::{
    eval_transfer, measured_gain, settle_window, sweep_frequency_response, AnalysisWindow,
    SweepOptions,
};
use dssid::model::{LinearParams, Nonlinearity, Order, PlantModel};
use dssid::sim::{generate_signal, simulate, SignalSpec, SimOptions, TimeSeries};
use num_complex::Complex64;

fn cubic() -> Nonlinearity {
    Nonlinearity::odd_poly(&[1.0, 0.1], 1.5).unwrap()
}

fn linear_plant() -> PlantModel {
    PlantModel::second_order(1.0, 2.0, Nonlinearity::linear(1.0, 1.5).unwrap()).unwrap()
}

fn record(
    plant: &PlantModel,
    spec: &SignalSpec,
    dt: f64,
    duration: f64,
) -> (TimeSeries, TimeSeries) {
    let opts = SimOptions::for_plant(plant, dt, duration);
    (
        generate_signal(spec, &opts).unwrap(),
        simulate(plant, spec, &opts).unwrap(),
    )
}

fn harmonic(omega: f64, amplitude: f64) -> SignalSpec {
    SignalSpec::Harmonic {
        amplitude,
        frequency: omega / (2.0 * PI),
    }
}

fn staircase(plant: &PlantModel) -> SignalSpec {
    let f = plant.f;
    let levels: Vec<f64> = [0.5, 1.0, -0.5, -1.0, 0.0]
        .iter()
        .map(|&s| f.eval(s))
        .collect();
    staircase_excitation(
        &levels,
        15.0 * plant.slowest_time_constant(),
        0.2 * f.slope_at_origin(),
        0.2 * plant.natural_frequency(),
    )
}

#[test]
fn measured_gain_on_linear_plant() {
    let plant = linear_plant();
    let params = LinearParams::new(1.0, 2.0, 1.0);

    let w = settle_window(&params, 1.0).unwrap();
    let (u, x) = record(&plant, &harmonic(1.0, 1.0), 0.01, w.end(1.0) + 0.1);
    let p = measured_gain(&u, &x, 1.0, &w).unwrap();
    assert!((p.gain - Complex64::new(0.0, -0.5)).norm() < 1e-3, "{p:?}");
    assert!((p.amplitude - 0.5).abs() < 1e-3);
    assert!((p.phase + PI / 2.0).abs() < 1e-3);

    let w = settle_window(&params, 0.01).unwrap();
    let w = AnalysisWindow::new(w.settle_time, 1).unwrap();
    let (u, x) = record(&plant, &harmonic(0.01, 1.0), 0.1, w.end(0.01) + 1.0);
    let p = measured_gain(&u, &x, 0.01, &w).unwrap();
    assert!((p.amplitude - 1.0).abs() < 1e-2, "{p:?}");
}

#[test]
fn sweep_matches_transfer() {
    let plant = linear_plant();
    let opts = SimOptions::for_plant(&plant, 0.005, 1.0);
    let omegas = [0.5, 1.0, 2.0];
    let pts = sweep_frequency_response(&plant, &omegas, &opts, &SweepOptions::default()).unwrap();
    for (p, w) in pts.iter().zip(omegas) {
        assert_eq!(p.omega, w);
        let k = eval_transfer(&LinearParams::new(1.0, 2.0, 1.0), w).unwrap();
        assert!((p.gain - k).norm() < 1e-3, "{w}: {p:?}");
    }

    // Small amplitude sees only the linearization.
    let quasi = PlantModel::second_order(1.0, 2.0, cubic()).unwrap();
    let small = SweepOptions {
        amplitude: 0.01,
        ..Default::default()
    };
    let pts = sweep_frequency_response(&quasi, &omegas, &opts, &small).unwrap();
    for p in pts {
        let k = eval_transfer(&LinearParams::new(1.0, 2.0, 1.0), p.omega).unwrap();
        assert!((p.gain - k).norm() < 1e-2 * k.norm(), "{p:?}");
    }
}

#[test]
fn refit_started_at_truth_returns_start() {
    let plant = PlantModel::second_order(1.0, 2.0, cubic()).unwrap();
    let (u, x) = record(&plant, &SignalSpec::Step { amplitude: 1.1 }, 0.01, 20.0);
    let opts = FitOptions::new(SimOptions::for_plant(&plant, 0.01, 1.0).rk_step);
    let r = refit_ab(&u, &x, &cubic(), &FitWindow::full(&x), (1.0, 2.0), &opts).unwrap();
    assert_eq!(r.params, vec![1.0, 2.0]);
    assert!(r.objective <= 1e-12);
    assert!(r.converged);
}

#[test]
fn init_slope_from_small_amplitude_sweep() {
    let plant = PlantModel::second_order(1.0, 2.0, cubic()).unwrap();
    let (u, x) = record(
        &plant,
        &staircase(&plant),
        0.01,
        5.0 * 15.0 * plant.slowest_time_constant(),
    );
    let opts = SimOptions::for_plant(&plant, 0.005, 1.0);
    let small = SweepOptions {
        amplitude: 0.01,
        ..Default::default()
    };
    let pts = sweep_frequency_response(&plant, &[0.3, 0.6, 1.2, 2.4], &opts, &small).unwrap();
    let s = dss_init(&u, &x, &pts, &DssConfig::default()).unwrap();
    assert!(
        (s.f.slope_at_origin() - 1.0).abs() < 1e-2,
        "{}",
        s.f.slope_at_origin()
    );
}

#[test]
fn correction_on_linear_data_reproduces_line() {
    let plant =
        PlantModel::second_order(1.0, 2.0, Nonlinearity::linear(2.0, 1.5).unwrap()).unwrap();
    let (u, x) = record(&plant, &staircase(&plant), 0.01, 30.0);
    let state = DssState {
        n: 0,
        order: Order::Second,
        dynamic: vec![1.0, 2.0],
        f: plant.f,
        residual: 0.0,
        rk_step: SimOptions::for_plant(&plant, 0.01, 1.0).rk_step,
        history: vec![],
    };
    for (xm, fu) in dynamic_correction(&state, &u, &x).unwrap() {
        assert!((fu - 2.0 * xm).abs() < 1e-6);
    }
}

#[test]
fn first_step_halves_residual() {
    let plant = PlantModel::second_order(1.0, 2.0, cubic()).unwrap();
    let (u, x) = record(
        &plant,
        &staircase(&plant),
        0.01,
        5.0 * 15.0 * plant.slowest_time_constant(),
    );
    let wn = plant.natural_frequency();
    let opts = SimOptions::for_plant(&plant, 0.005, 1.0);
    let sweep = SweepOptions {
        amplitude: 0.2,
        ..Default::default()
    };
    let omegas: Vec<f64> = dssid::harmonic::log_space(0.2 * wn, 5.0 * wn, 8);
    let pts = sweep_frequency_response(&plant, &omegas, &opts, &sweep).unwrap();
    let cfg = DssConfig::default();
    let s0 = dss_init(&u, &x, &pts, &cfg).unwrap();
    let s1 = dss_step(&s0, &u, &x, &cfg).unwrap();
    assert!(
        s1.residual <= 0.5 * s0.residual,
        "{} -> {}",
        s0.residual,
        s1.residual
    );
}

#[test]
fn third_order_linear_truth_stays_linear() {
    let f = Nonlinearity::linear(2.0, 1.5).unwrap();
    let plant = PlantModel::third_order(0.1, 1.0, 2.0, f).unwrap();
    let (u, x) = record(
        &plant,
        &staircase(&plant),
        0.01,
        5.0 * 15.0 * plant.slowest_time_constant(),
    );
    let cfg = DssConfig {
        order: Order::Third,
        ..Default::default()
    };
    let init = ThirdOrderInit::Explicit {
        a: 0.12,
        b: 0.9,
        c: Some(2.2),
        stiffness: 1.8,
    };
    let out = dss_run_third_order(&u, &x, &init, &cfg).unwrap();
    let c = out.plant.f.coeffs();
    assert!(
        (c[0] - 2.0).abs() < 2e-3 && c[1..].iter().all(|v| v.abs() < 1e-3),
        "{c:?}"
    );
}

#[test]
fn quasi_static_lissajous_tracks_inverse() {
    let plant = PlantModel::second_order(1.0, 2.0, cubic()).unwrap();
    let omega = 1e-4 * plant.natural_frequency();
    let opts = SimOptions::for_plant(&plant, 0.5, 1.0);
    let curve = lissajous_baseline(&plant, omega, 1.1, 1.0, &opts).unwrap();
    assert!(curve.sup_error(&plant.f, 1.0).unwrap() < 1e-3);
}

#[test]
fn time_domain_fit_recovers_battery_from_offset_starts() {
    use dssid::fit::{fit_time_domain, OddPolyFamily};
    use rayon::prelude::*;

    let battery = [
        (1.0, 2.0, vec![1.0, 0.1]),
        (0.5, 1.0, vec![1.0, 0.2]),
        (1.0, 1.0, vec![2.0, 0.3]),
        (2.0, 3.0, vec![1.0, 0.05, 0.02]),
        (0.2, 0.8, vec![1.5, 0.1]),
    ];
    let failures: Vec<String> = battery
        .par_iter()
        .enumerate()
        .filter_map(|(i, (a, b, c))| {
            let f = Nonlinearity::odd_poly(c, 1.5).unwrap();
            let truth = PlantModel::second_order(*a, *b, f).unwrap();
            let dur = 5.0 * 15.0 * truth.slowest_time_constant();
            let (u, x) = record(&truth, &staircase(&truth), 0.01, dur);
            // Alternate +50% and -50% offsets across parameters and plants.
            let off = |k: usize| if (i + k).is_multiple_of(2) { 1.5 } else { 0.5 };
            let mut sc = [0.0; 4];
            for (k, v) in c.iter().enumerate() {
                sc[k] = v * off(k + 2);
            }
            let start_f = Nonlinearity::odd_poly(&sc, 1.5).unwrap();
            let start = PlantModel::second_order(a * off(0), b * off(1), start_f).unwrap();
            let family = OddPolyFamily::new(2 * c.len() as u32 - 1, 1.5).unwrap();
            let opts = FitOptions::new(SimOptions::for_plant(&truth, 0.01, 1.0).rk_step);
            let (got, _) =
                fit_time_domain(&u, &x, &family, &FitWindow::full(&x), &start, &opts).unwrap();
            let mut want = vec![*a, *b];
            want.extend(c);
            let mut have = got.dynamic_coeffs();
            have.extend(&got.f.coeffs()[..c.len()]);
            let bad = want
                .iter()
                .zip(&have)
                .any(|(w, h)| (w - h).abs() > 1e-2 * w.abs());
            bad.then(|| format!("plant {i}: {have:?} vs {want:?}"))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
}
