//! Parameter estimation: the time-domain least-squares fit over `(A, B, μ)`,
//! the frequency-domain linear fit, the dynamics-only refit used by DSS, and
//! the monotone scatter fit.

mod freq;
mod monotone;
mod simplex;

pub use freq::{
    fit_linear_freq, fit_third_order_freq, fit_transfer_poly, freq_objective, inverted_gain_lstsq,
};
pub use monotone::{fit_monotone, fit_monotone_detailed, MonotoneFit, OddPolyFamily};
pub use simplex::{minimize, FitResult, MinimizeOptions, Scale};

use crate::error::{Error, Result};
use crate::model::{Nonlinearity, Order, PlantModel};
use crate::sim::{integrate, TimeSeries};

/// Objective returned for candidates outside the model family (non-monotone
/// `f`, unstable linearization, diverging simulation).
const INFEASIBLE: f64 = 1e100;

/// Measurement window `(tau1, tau2)`; samples with `tau1 <= t <= tau2` count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub tau1: f64,
    pub tau2: f64,
}

impl FitWindow {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1.is_finite() && tau2.is_finite() && tau1 >= 0.0 && tau2 > tau1) {
            return Err(Error::invalid(
                "window",
                format!("need 0 <= tau1 < tau2, got ({tau1}, {tau2})"),
            ));
        }
        Ok(Self { tau1, tau2 })
    }

    /// The whole record.
    pub fn full(x: &TimeSeries) -> Self {
        Self {
            tau1: x.t0().max(0.0),
            tau2: x.end_time().max(x.t0() + x.dt()),
        }
    }
}

/// Settings shared by the time-domain fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Integration step for candidate simulations; must divide the sample interval.
    pub rk_step: f64,
    pub minimize: MinimizeOptions,
}

impl FitOptions {
    pub fn new(rk_step: f64) -> Self {
        Self {
            rk_step,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// Prepared measurement: the input, measured samples, and window indices.
struct Measurement<'a> {
    u: &'a TimeSeries,
    x: &'a TimeSeries,
    range: std::ops::Range<usize>,
}

impl<'a> Measurement<'a> {
    fn new(u: &'a TimeSeries, x: &'a TimeSeries, window: &FitWindow) -> Result<Self> {
        u.check_same_grid(x)?;
        let range = x.window_indices(window.tau1, window.tau2);
        if range.is_empty() {
            return Err(Error::InsufficientData(format!(
                "window ({}, {}) contains no samples",
                window.tau1, window.tau2
            )));
        }
        Ok(Self { u, x, range })
    }

    fn residual(&self, plant: &PlantModel, rk_step: f64) -> Result<f64> {
        let sim = integrate(plant, self.u, rk_step, self.range.end)?;
        Ok(self
            .range
            .clone()
            .map(|k| (self.x.values()[k] - sim[k]).powi(2))
            .sum())
    }

    /// Start-point acceptance threshold: far below any meaningful misfit.
    fn exact_threshold(&self) -> f64 {
        let energy: f64 = self.range.clone().map(|k| self.x.values()[k].powi(2)).sum();
        1e-15 * energy
    }
}

/// `Σ (x(t_k) − x_plant(t_k))²` over the window, simulating `plant` from rest.
pub fn time_domain_residual(
    plant: &PlantModel,
    u: &TimeSeries,
    x: &TimeSeries,
    window: &FitWindow,
    rk_step: f64,
) -> Result<f64> {
    Measurement::new(u, x, window)?.residual(plant, rk_step)
}

/// Full time-domain fit over the dynamic coefficients and the polynomial
/// coefficients of `family`, started from `start`.
///
/// Positive quantities (dynamic coefficients and `c1`) are searched in log
/// scale; `c3..c7` linearly.
pub fn fit_time_domain(
    u: &TimeSeries,
    x_measured: &TimeSeries,
    family: &OddPolyFamily,
    window: &FitWindow,
    start: &PlantModel,
    opts: &FitOptions,
) -> Result<(PlantModel, FitResult)> {
    family.validate()?;
    let meas = Measurement::new(u, x_measured, window)?;
    let order = start.order;
    let nd = order.dynamic_len();
    let terms = family.terms();

    let mut p0 = start.dynamic_coeffs();
    p0.extend_from_slice(&start.f.coeffs()[..terms]);
    let mut scales = vec![Scale::Log; nd + 1];
    scales.extend(std::iter::repeat_n(Scale::Linear, terms - 1));

    let build = |p: &[f64]| -> Option<PlantModel> {
        let f = Nonlinearity::from_coeffs(&p[nd..], family.x_max).ok()?;
        if !f.is_monotone() {
            return None;
        }
        PlantModel::from_dynamic(order, &p[..nd], f).ok()
    };
    let options = MinimizeOptions {
        scales: Some(scales),
        target: meas.exact_threshold(),
        ..opts.minimize.clone()
    };
    let result = minimize(
        |p| match build(p) {
            Some(plant) => meas.residual(&plant, opts.rk_step).unwrap_or(INFEASIBLE),
            None => INFEASIBLE,
        },
        &p0,
        &options,
    )?;
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            objective: result.objective,
            best: result.params,
        });
    }
    let plant = build(&result.params)
        .ok_or_else(|| Error::invalid("start", "time-domain fit did not find a feasible plant"))?;
    Ok((plant, result))
}

/// Refits only the dynamic coefficients (`[A, B]` or `[A, B, C]`) with `f` frozen.
pub fn refit_dynamics(
    u: &TimeSeries,
    x_measured: &TimeSeries,
    f_fixed: &Nonlinearity,
    order: Order,
    window: &FitWindow,
    start: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    f_fixed.validate()?;
    let meas = Measurement::new(u, x_measured, window)?;
    if start.len() != order.dynamic_len() {
        return Err(Error::Configuration(format!(
            "order {} refit needs {} starting coefficients, got {}",
            order.as_u8(),
            order.dynamic_len(),
            start.len()
        )));
    }
    let options = MinimizeOptions {
        scales: Some(vec![Scale::Log; start.len()]),
        target: meas.exact_threshold(),
        ..opts.minimize.clone()
    };
    let result = minimize(
        |p| match PlantModel::from_dynamic(order, p, *f_fixed) {
            Ok(plant) => meas.residual(&plant, opts.rk_step).unwrap_or(INFEASIBLE),
            Err(_) => INFEASIBLE,
        },
        start,
        &options,
    )?;
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            objective: result.objective,
            best: result.params,
        });
    }
    Ok(result)
}

/// Second-order refit of `(A, B)` with `f` frozen.
pub fn refit_ab(
    u: &TimeSeries,
    x_measured: &TimeSeries,
    f_fixed: &Nonlinearity,
    window: &FitWindow,
    start: (f64, f64),
    opts: &FitOptions,
) -> Result<FitResult> {
    refit_dynamics(
        u,
        x_measured,
        f_fixed,
        Order::Second,
        window,
        &[start.0, start.1],
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SignalSpec, SimOptions};

    fn truth() -> PlantModel {
        PlantModel::second_order(1.0, 2.0, Nonlinearity::odd_poly(&[1.0, 0.1], 1.5).unwrap())
            .unwrap()
    }

    fn step_data() -> (TimeSeries, TimeSeries) {
        let opts = SimOptions {
            rk_step: 0.02,
            sample_dt: 0.02,
            duration: 15.0,
            seed: 0,
            noise_sigma: 0.0,
        };
        let spec = SignalSpec::Step { amplitude: 1.1 };
        let u = crate::sim::generate_signal(&spec, &opts).unwrap();
        let x = simulate(&truth(), &spec, &opts).unwrap();
        (u, x)
    }

    #[test]
    fn time_domain_fit_recovers_step_plant() {
        let (u, x) = step_data();
        let start =
            PlantModel::second_order(1.5, 1.5, Nonlinearity::odd_poly(&[1.0, 0.0], 1.5).unwrap())
                .unwrap();
        let fam = OddPolyFamily::new(3, 1.5).unwrap();
        let (plant, res) = fit_time_domain(
            &u,
            &x,
            &fam,
            &FitWindow::full(&x),
            &start,
            &FitOptions::new(0.02),
        )
        .unwrap();
        assert!(res.converged);
        let got = [
            plant.linear.a,
            plant.linear.b,
            plant.f.coeffs()[0],
            plant.f.coeffs()[1],
        ];
        for (g, e) in got.iter().zip([1.0, 2.0, 1.0, 0.1]) {
            assert!((g - e).abs() / e < 0.01, "{got:?}");
        }
    }

    #[test]
    fn time_domain_fit_fixed_point() {
        let (u, x) = step_data();
        let fam = OddPolyFamily::new(3, 1.5).unwrap();
        let (_, res) = fit_time_domain(
            &u,
            &x,
            &fam,
            &FitWindow::full(&x),
            &truth(),
            &FitOptions::new(0.02),
        )
        .unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn empty_window_is_insufficient() {
        let (u, x) = step_data();
        let w = FitWindow::new(100.0, 200.0).unwrap();
        let r = refit_ab(&u, &x, &truth().f, &w, (1.0, 2.0), &FitOptions::new(0.02));
        assert!(matches!(r, Err(Error::InsufficientData(_))));
        assert!(FitWindow::new(2.0, 1.0).is_err());
    }

    #[test]
    fn refit_recovers_ab() {
        let (u, x) = step_data();
        let r = refit_ab(
            &u,
            &x,
            &truth().f,
            &FitWindow::full(&x),
            (2.0, 1.0),
            &FitOptions::new(0.02),
        )
        .unwrap();
        assert!(
            (r.params[0] - 1.0).abs() < 0.005 && (r.params[1] - 2.0).abs() < 0.01,
            "{:?}",
            r.params
        );
        let at = refit_ab(
            &u,
            &x,
            &truth().f,
            &FitWindow::full(&x),
            (1.0, 2.0),
            &FitOptions::new(0.02),
        )
        .unwrap();
        assert!(at.objective <= 1e-12);
        assert_eq!(at.params, vec![1.0, 2.0]);
    }

    #[test]
    fn refit_with_wrong_stiffness_reports_residual() {
        let (u, x) = step_data();
        let wrong = Nonlinearity::odd_poly(&[2.0, 0.1], 1.5).unwrap();
        let r = refit_ab(
            &u,
            &x,
            &wrong,
            &FitWindow::full(&x),
            (1.0, 2.0),
            &FitOptions::new(0.02),
        )
        .unwrap();
        assert!(r.converged);
        assert!(r.objective > 1e-3);
    }
}
